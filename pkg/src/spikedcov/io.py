"""File formats: CSV matrices, truth JSON, chain files, and reports.

Matrices are written in plain CSV with 17 significant digits, which
round-trips float64 exactly. Chain files carry one JSON header line
(n, p, r, hyper, config, seed, count, format) followed by the kept draws
as flattened row-major B plus sigma2, either as packed little-endian
float64 ("binary") or as CSV rows ("csv").
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .prior import MsslHyper
from .sampler import ChainSamples, McmcConfig, accumulate_from_draws
from .simulate import SpikedCovModel

_FMT = "%.17g"
_MAGIC = "spikedcov-chain-v1"


def write_matrix_csv(path: str | Path, A: np.ndarray, header: list[str] | None = None) -> None:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    with open(path, "w") as fh:
        if header is not None:
            fh.write(",".join(header) + "\n")
        for row in A:
            fh.write(",".join(_FMT % v for v in row) + "\n")


def read_matrix_csv(path: str | Path, has_header: bool = False) -> np.ndarray:
    rows = []
    with open(path) as fh:
        lines = fh.read().strip().splitlines()
    if has_header:
        lines = lines[1:]
    for line in lines:
        if line:
            rows.append([float(v) for v in line.split(",")])
    return np.asarray(rows, dtype=float)


def write_truth_json(path: str | Path, model: SpikedCovModel) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_truth_json(path: str | Path) -> SpikedCovModel:
    with open(path) as fh:
        return SpikedCovModel.from_dict(json.load(fh))


def write_chain(path: str | Path, samples: ChainSamples, binary: bool = True) -> None:
    """Persist kept draws. The body holds, per draw, the p*r loading
    entries in row-major order followed by sigma2."""
    if samples.b_draws is None:
        raise ValueError("samples carry no draws")
    header = {
        "magic": _MAGIC,
        "n": samples.n,
        "p": samples.p,
        "r": samples.r,
        "hyper": samples.hyper.to_dict(),
        "config": samples.config.to_dict(),
        "seed": samples.config.seed,
        "count": samples.n_kept,
        "format": "binary" if binary else "csv",
    }
    body = np.concatenate(
        [samples.b_draws.reshape(samples.n_kept, -1),
         samples.sigma2_draws[:, None]], axis=1)
    mode = "wb" if binary else "w"
    with open(path, mode) as fh:
        head = json.dumps(header, sort_keys=True) + "\n"
        fh.write(head.encode() if binary else head)
        if binary:
            fh.write(body.astype("<f8").tobytes())
        else:
            for row in body:
                fh.write(",".join(_FMT % v for v in row) + "\n")


def read_chain(path: str | Path) -> ChainSamples:
    """Read a chain file back into ChainSamples, recomputing the running
    sums from the stored draws. Indicator draws are not persisted, so
    xi-based summaries are unavailable from file."""
    with open(path, "rb") as fh:
        head_line = fh.readline().decode()
        header = json.loads(head_line)
        if header.get("magic") != _MAGIC:
            raise ValueError(f"{path} is not a chain file")
        count, p, r = header["count"], header["p"], header["r"]
        width = p * r + 1
        if header["format"] == "binary":
            body = np.frombuffer(fh.read(), dtype="<f8")
            if body.size != count * width:
                raise ValueError("chain body size does not match header")
            body = body.reshape(count, width)
        else:
            text = fh.read().decode().strip().splitlines()
            body = np.asarray([[float(v) for v in line.split(",")] for line in text])
            if body.shape != (count, width):
                raise ValueError("chain body size does not match header")
    samples = ChainSamples(
        n=header["n"], p=p, r=r,
        hyper=MsslHyper.from_dict(header["hyper"]),
        config=McmcConfig.from_dict(header["config"]),
        b_draws=np.ascontiguousarray(body[:, :-1]).reshape(count, p, r),
        sigma2_draws=body[:, -1].copy(),
    )
    return accumulate_from_draws(samples)


def write_json(path: str | Path, obj: dict) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_json(path: str | Path) -> dict:
    with open(path) as fh:
        return json.load(fh)
