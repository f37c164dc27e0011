"""Command-line harness.

Subcommands: simulate | fit | losses | replicate | motivating | keypixels.
Settings come from defaults, overridden by an optional JSON config file
(--config), overridden by explicit flags. Every command is deterministic
given its inputs and seed. Exit codes: 0 ok, 2 configuration error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict, fields
from pathlib import Path

import numpy as np

from . import io as sio
from .estimators import (
    SpikedCovarianceMSSL,
    aligned_subspace_draws,
    credible_intervals,
    estimate_rank,
    key_features,
    summarize,
)
from .linalg import frobenius_alignment, projection_distance, two_to_inf_loss
from .losses import LossReport, compute_losses
from .prior import MsslHyper
from .sampler import McmcConfig, run_chain
from .simulate import SpikedCovModel, generate_truth, motivating_pair, sample_data


class ConfigError(Exception):
    pass


class NumericError(Exception):
    pass


@dataclass
class ExperimentConfig:
    """Full settings of one synthetic experiment."""

    n: int = 100
    p: int = 200
    r: int = 1
    s: int = 8
    lam_min: float = 10.0
    lam_max: float = 20.0
    sigma0_sq: float = 1.0       # noise variance of the simulated truth
    slab_rate: float = 1.0       # prior slab (Laplace) rate
    kappa: float = 1.0
    a_sigma: float = 1.0
    b_sigma: float = 1.0
    n_burnin: int = 1000
    n_samples: int = 1000
    thin: int = 1
    proposal_sd: float = 0.05
    adapt: bool = True
    n_replicates: int = 50
    base_seed: int = 0
    jobs: int = 1
    output_dir: str = "."

    def __post_init__(self) -> None:
        for name in ("n", "p", "r", "s", "n_burnin", "n_samples", "thin",
                     "n_replicates", "jobs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive count")
        if not (self.r <= self.s <= self.p):
            raise ConfigError(f"need r <= s <= p, got r={self.r}, s={self.s}, p={self.p}")
        if self.sigma0_sq <= 0:
            raise ConfigError("sigma0_sq must be positive")

    def hyper(self) -> MsslHyper:
        return MsslHyper(lam=self.slab_rate, kappa=self.kappa,
                         a_sigma=self.a_sigma, b_sigma=self.b_sigma,
                         p=self.p, r=self.r)

    def mcmc(self, seed: int) -> McmcConfig:
        return McmcConfig(n_burnin=self.n_burnin, n_samples=self.n_samples,
                          thin=self.thin, proposal_sd=self.proposal_sd,
                          adapt=self.adapt, seed=seed)


def _build_config(args: argparse.Namespace) -> ExperimentConfig:
    settings: dict = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}")
        known = {f.name for f in fields(ExperimentConfig)}
        bad = set(loaded) - known
        if bad:
            raise ConfigError(f"unknown config keys: {sorted(bad)}")
        settings.update(loaded)
    for f in fields(ExperimentConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            settings[f.name] = v
    try:
        return ExperimentConfig(**settings)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc))


def _add_config_flags(sub: argparse.ArgumentParser, include=None) -> None:
    """Flags mirror the model symbols (--p, --r, --s, --lambda, --kappa)."""
    names = {f.name for f in fields(ExperimentConfig)} if include is None else set(include)
    sub.add_argument("--config", help="JSON file with ExperimentConfig keys")
    flag = {
        "n": ("--n", int), "p": ("--p", int), "r": ("--r", int), "s": ("--s", int),
        "lam_min": ("--lam-min", float), "lam_max": ("--lam-max", float),
        "sigma0_sq": ("--sigma0-sq", float),
        "slab_rate": ("--lambda", float), "kappa": ("--kappa", float),
        "a_sigma": ("--a-sigma", float), "b_sigma": ("--b-sigma", float),
        "n_burnin": ("--burnin", int), "n_samples": ("--samples", int),
        "thin": ("--thin", int), "proposal_sd": ("--proposal-sd", float),
        "n_replicates": ("--replicates", int), "base_seed": ("--seed", int),
        "jobs": ("--jobs", int), "output_dir": ("--out-dir", str),
    }
    for name in names:
        if name == "adapt":
            sub.add_argument("--no-adapt", dest="adapt", action="store_const",
                             const=False, default=None)
            continue
        opt, typ = flag[name]
        sub.add_argument(opt, dest=name, type=typ, default=None)


def _read_data(path: str, has_header: bool) -> np.ndarray:
    try:
        Y = sio.read_matrix_csv(path, has_header=has_header)
    except OSError as exc:
        raise ConfigError(f"cannot read data file {path}: {exc}")
    except ValueError as exc:
        raise ConfigError(f"malformed data file {path}: {exc}")
    if Y.ndim != 2 or Y.shape[0] < 2:
        raise ConfigError(f"data must have at least two observation rows, got shape {Y.shape}")
    if not np.all(np.isfinite(Y)):
        raise NumericError(f"data file {path} contains non-finite values")
    return Y


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng([cfg.base_seed, 0xDA7A])
    model = generate_truth(cfg.p, cfg.r, cfg.s, cfg.lam_min, cfg.lam_max,
                           cfg.sigma0_sq, rng)
    Y = sample_data(model, cfg.n, rng)
    sio.write_truth_json(out / "truth.json", model)
    header = [f"v{j}" for j in range(cfg.p)] if args.header else None
    sio.write_matrix_csv(out / "data.csv", Y, header=header)
    print(f"wrote {out / 'truth.json'} and {out / 'data.csv'} (n={cfg.n}, p={cfg.p})")
    return 0


def _fit_to_dir(Y: np.ndarray, r_arg: str, cfg: ExperimentConfig, out: Path,
                seed: int, csv_chain: bool) -> dict:
    n, p = Y.shape
    if r_arg == "auto":
        r = estimate_rank(Y, gamma=2.0)
    else:
        try:
            r = int(r_arg)
        except ValueError:
            raise ConfigError(f"--r must be an integer or 'auto', got {r_arg!r}")
    hyper = MsslHyper(lam=cfg.slab_rate, kappa=cfg.kappa, a_sigma=cfg.a_sigma,
                      b_sigma=cfg.b_sigma, p=p, r=r)
    samples = run_chain(Y, r, hyper, cfg.mcmc(seed))
    summary = summarize(samples)
    out.mkdir(parents=True, exist_ok=True)
    chain_path = out / ("chain.csv" if csv_chain else "chain.bin")
    sio.write_chain(chain_path, samples, binary=not csv_chain)
    sio.write_matrix_csv(out / "sigma_hat.csv", summary.sigma_hat)
    sio.write_matrix_csv(out / "u_hat.csv", summary.u_hat)
    sio.write_matrix_csv(out / "xi_freq.csv", summary.xi_freq[:, None])
    report = {
        "n": n, "p": p, "r": r, "seed": seed,
        "n_kept": samples.n_kept,
        "sigma2_mean": summary.sigma2_mean,
        "rank_deficient_draws": summary.rank_deficient_draws,
        "accept_rows_mean": float(np.mean(samples.accept_rows)),
        "accept_lambda0": samples.accept_lambda0,
    }
    sio.write_json(out / "summary.json", report)
    return report


def cmd_fit(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    Y = _read_data(args.data, args.header)
    out = Path(cfg.output_dir)
    report = _fit_to_dir(Y, args.rank, cfg, out, cfg.base_seed, args.csv)
    print(f"fitted r={report['r']} on (n={report['n']}, p={report['p']}); outputs in {out}")
    return 0


def _coverage(chain_path: Path, u0: np.ndarray, u_hat: np.ndarray, level: float) -> float:
    samples = sio.read_chain(chain_path)
    bands = credible_intervals(samples, level, reference=u_hat)
    aligned_truth = u0 @ frobenius_alignment(u_hat, u0)
    inside = (bands[:, :, 0] <= aligned_truth) & (aligned_truth <= bands[:, :, 1])
    return float(np.mean(inside))


def cmd_losses(args: argparse.Namespace) -> int:
    fit_dir = Path(args.fit_dir)
    try:
        model = sio.read_truth_json(args.truth)
        sigma_hat = sio.read_matrix_csv(fit_dir / "sigma_hat.csv")
        u_hat = sio.read_matrix_csv(fit_dir / "u_hat.csv")
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read estimate/truth files: {exc}")
    if u_hat.shape[1] != model.r:
        raise ConfigError(
            f"fitted rank {u_hat.shape[1]} does not match truth rank {model.r}; "
            "subspace losses are undefined across ranks")
    report = compute_losses(sigma_hat, u_hat, model.covariance(), model.U0)
    out = Path(args.out)
    sio.write_matrix_csv(out, np.asarray([[getattr(report, f) for f in LossReport.FIELDS]]),
                         header=list(LossReport.FIELDS))
    payload: dict = {"rank": model.r, "losses": report.to_dict()}
    chain_path = next((q for q in (fit_dir / "chain.bin", fit_dir / "chain.csv") if q.exists()), None)
    if chain_path is not None:
        payload["interval_level"] = args.level
        payload["interval_coverage"] = _coverage(chain_path, model.U0, u_hat, args.level)
    if args.report:
        sio.write_json(args.report, payload)
    print(json.dumps(payload["losses"], sort_keys=True))
    return 0


def _replicate_worker(payload: tuple) -> list[float]:
    cfg_dict, rep = payload
    cfg = ExperimentConfig(**cfg_dict)
    seed = cfg.base_seed + rep
    rng = np.random.default_rng([seed, 0xDA7A])
    model = generate_truth(cfg.p, cfg.r, cfg.s, cfg.lam_min, cfg.lam_max,
                           cfg.sigma0_sq, rng)
    Y = sample_data(model, cfg.n, rng)
    samples = run_chain(Y, cfg.r, cfg.hyper(), cfg.mcmc(seed))
    summary = summarize(samples)
    rep_loss = compute_losses(summary.sigma_hat, summary.u_hat,
                              model.covariance(), model.U0)
    naive = Y.T @ Y / cfg.n
    naive_op = float(np.linalg.norm(naive - model.covariance(), 2))
    return [float(seed)] + [getattr(rep_loss, f) for f in LossReport.FIELDS] + [naive_op]


def cmd_replicate(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    payloads = [(asdict(cfg), rep) for rep in range(cfg.n_replicates)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            rows = list(pool.map(_replicate_worker, payloads))
    else:
        rows = [_replicate_worker(p) for p in payloads]
    cols = ["seed"] + list(LossReport.FIELDS) + ["naive_op_loss"]
    table = np.asarray(rows)
    sio.write_matrix_csv(out / "replicate_losses.csv", table, header=cols)
    medians = np.median(table[:, 1:], axis=0)
    sio.write_matrix_csv(out / "medians.csv", medians[None, :], header=cols[1:])
    printable = dict(zip(cols[1:], medians.tolist()))
    print(json.dumps({"n_replicates": cfg.n_replicates, "medians": printable}, sort_keys=True))
    return 0


def cmd_motivating(args: argparse.Namespace) -> int:
    if args.grid < 2 or args.eps_min <= 0 or args.eps_max <= args.eps_min:
        raise ConfigError("need grid >= 2 and 0 < eps-min < eps-max")
    eps_grid = np.logspace(np.log10(args.eps_min), np.log10(args.eps_max), args.grid)
    rows = []
    for eps in eps_grid:
        try:
            u0, u1, u2 = motivating_pair(args.s, args.p, float(eps))
        except ValueError as exc:
            raise ConfigError(str(exc))
        rows.append([
            eps, -np.log(eps),
            projection_distance(u1, u0), projection_distance(u2, u0),
            two_to_inf_loss(u1, u0), two_to_inf_loss(u2, u0),
        ])
    header = ["eps", "neg_log_eps", "proj_loss_u1", "proj_loss_u2",
              "two_inf_loss_u1", "two_inf_loss_u2"]
    sio.write_matrix_csv(args.out, np.asarray(rows), header=header)
    print(f"wrote {args.out} ({args.grid} grid points, s={args.s})")
    return 0


def cmd_keypixels(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    if args.tau < 0:
        raise ConfigError("--tau must be nonnegative")
    Y = _read_data(args.data, args.header)
    out = Path(cfg.output_dir)
    report = _fit_to_dir(Y, args.rank, cfg, out, cfg.base_seed, csv_chain=False)
    u_hat = sio.read_matrix_csv(out / "u_hat.csv")
    idx = key_features(u_hat, args.tau)
    sio.write_matrix_csv(out / "keypixels.csv", idx.astype(float)[:, None], header=["index"])
    report.update({"tau": args.tau, "n_key_features": int(idx.size)})
    sio.write_json(out / "summary.json", report)
    print(f"{idx.size} key features at tau={args.tau}; outputs in {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spikedcov",
                                 description="Sparse spiked covariance estimation harness")
    sub = ap.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="draw a sparse spiked truth and a dataset")
    _add_config_flags(p_sim)
    p_sim.add_argument("--header", action="store_true", help="write a CSV header row")
    p_sim.set_defaults(func=cmd_simulate)

    p_fit = sub.add_parser("fit", help="run the posterior sampler on a data CSV")
    _add_config_flags(p_fit, include=["slab_rate", "kappa", "a_sigma", "b_sigma",
                                      "n_burnin", "n_samples", "thin", "proposal_sd",
                                      "adapt", "base_seed", "output_dir"])
    p_fit.add_argument("--data", required=True)
    p_fit.add_argument("--r", dest="rank", default="auto", help="spike count or 'auto'")
    p_fit.add_argument("--header", action="store_true", help="data CSV has a header row")
    p_fit.add_argument("--csv", action="store_true", help="write the chain as CSV instead of binary")
    p_fit.set_defaults(func=cmd_fit)

    p_loss = sub.add_parser("losses", help="compare a fit directory against a truth file")
    p_loss.add_argument("--fit-dir", required=True)
    p_loss.add_argument("--truth", required=True)
    p_loss.add_argument("--out", required=True, help="losses CSV path")
    p_loss.add_argument("--report", help="optional JSON report path")
    p_loss.add_argument("--level", type=float, default=0.95)
    p_loss.set_defaults(func=cmd_losses)

    p_rep = sub.add_parser("replicate", help="median losses across seeded replicates")
    _add_config_flags(p_rep)
    p_rep.set_defaults(func=cmd_replicate)

    p_mot = sub.add_parser("motivating", help="loss curves of the matched-projection pair")
    p_mot.add_argument("--s", type=int, required=True)
    p_mot.add_argument("--p", type=int, default=50)
    p_mot.add_argument("--eps-min", type=float, default=1e-3)
    p_mot.add_argument("--eps-max", type=float, default=1e-1)
    p_mot.add_argument("--grid", type=int, default=20)
    p_mot.add_argument("--out", required=True)
    p_mot.set_defaults(func=cmd_motivating)

    p_key = sub.add_parser("keypixels", help="threshold the fitted subspace rows")
    _add_config_flags(p_key, include=["slab_rate", "kappa", "a_sigma", "b_sigma",
                                      "n_burnin", "n_samples", "thin", "proposal_sd",
                                      "adapt", "base_seed", "output_dir"])
    p_key.add_argument("--data", required=True)
    p_key.add_argument("--r", dest="rank", default="auto")
    p_key.add_argument("--tau", type=float, required=True)
    p_key.add_argument("--header", action="store_true")
    p_key.set_defaults(func=cmd_keypixels)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
