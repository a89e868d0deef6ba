"""Command-line front end: ``advloss <command> [flags]``.

Exit codes: 0 success, 1 runtime or numeric failure (including OS errors
while writing outputs), 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .basis import BASIS_KINDS, FOURIER, enumerate_truncation, sup_norm
from .bounds import (
    UnsupportedExponentError,
    lower_bound,
    lower_bound_zeta,
    oracle_zeta,
    sobolev_classes,
    sobolev_rate,
    upper_bound_risk,
)
from .density import (
    ConditionFailedError,
    SeriesDensity,
    eval_density,
    gauss_legendre_grid,
    packing_densities,
    packing_divisor,
    pairwise_hamming,
)
from .estimator import Dataset, cv_scores, default_grid, series_estimate
from .loss import EllipseClass, KernelSpectrum, adversarial_distance, sobolev_ball
from .montecarlo import (
    ConfigError,
    ExperimentConfig,
    bundled_config,
    parametric_truth,
    rejection_sample_stats,
    run_risk_curve,
    sampling_equivalence_experiment,
)

SCHEMA_VERSION = 1


class UsageError(Exception):
    """Bad flags or unreadable input: exit code 2."""


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, bool) or v is None:
        return str(v).lower() if isinstance(v, bool) else "-"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _emit_table(header: list[str], rows: list[list], fmt: str, extra: dict | None = None) -> None:
    if fmt == "json":
        doc = {"schema_version": SCHEMA_VERSION, "rows": [dict(zip(header, r)) for r in rows]}
        if extra:
            doc.update(extra)
        print(json.dumps(doc, indent=2, default=_json_default))
        return
    if fmt == "csv":
        print(",".join(header))
        for r in rows:
            print(",".join(_fmt(v) for v in r))
        return
    print("| " + " | ".join(header) + " |")
    print("|" + "|".join("---" for _ in header) + "|")
    for r in rows:
        print("| " + " | ".join(_fmt(v) for v in r) + " |")
    for k, v in (extra or {}).items():
        print(f"{k}: {_fmt(v)}")


def _json_default(v):
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    raise TypeError(f"cannot serialise {type(v).__name__}")


def _existing(path: str, flag: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{flag}: file not found: {path}")
    return p


def _load_dataset(path: str) -> Dataset:
    try:
        return Dataset.from_csv(_existing(path, "--data"))
    except ValueError as exc:
        raise UsageError(f"--data: {exc}") from None


def _load_density(path: str, flag: str) -> SeriesDensity:
    p = _existing(path, flag)
    try:
        return SeriesDensity.load(p)
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"{flag}: {p}: invalid density document ({exc})") from None


def _int_list(text: str, flag: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{flag}: expected comma-separated integers, got {text!r}") from None


def _loss_class(args, d: int) -> EllipseClass:
    if args.mmd_base is not None:
        if args.mmd_base <= 1:
            raise UsageError("--mmd-base must exceed 1")
        return KernelSpectrum.geometric(args.mmd_base, args.mmd_cutoff, d).ball(args.LD)
    if args.exponent < 1:
        raise UsageError("--exponent must be >= 1")
    return sobolev_ball(args.s, args.LD, args.exponent)


def _default_workers() -> int:
    raw = os.environ.get("ADVLOSS_WORKERS")
    if raw is None:
        return 1
    try:
        val = int(raw)
    except ValueError:
        raise UsageError(f"ADVLOSS_WORKERS must be an integer, got {raw!r}") from None
    if val < 1:
        raise UsageError("ADVLOSS_WORKERS must be >= 1")
    return val


def _workers(args) -> int:
    if args.workers is None:
        return _default_workers()
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    return args.workers


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_estimate(args) -> int:
    data = _load_dataset(args.data)
    if args.basis != FOURIER and data.d != 1:
        raise UsageError("--basis haar needs one-dimensional data")
    if args.adaptive:
        grid = default_grid(data.n, data.d, args.grid_cap)
        scores = cv_scores(data, grid, args.basis)
        zeta = min(scores, key=lambda z: (scores[z], z))
        _emit_table(["zeta", "J"], [[z, s] for z, s in scores.items()], "md", {"selected zeta": zeta})
    else:
        if args.zeta < 0:
            raise UsageError("--zeta must be >= 0")
        zeta = args.zeta
    est = series_estimate(data, enumerate_truncation(args.basis, zeta, data.d, zero_mean=True))
    est.save(args.out)
    return 0


def cmd_loss(args) -> int:
    P = _load_density(args.truth, "--truth")
    Q = _load_density(args.estimate, "--estimate")
    if P.d != Q.d or P.basis != Q.basis:
        raise UsageError("--truth and --estimate must share dimension and basis")
    D = _loss_class(args, P.d)
    val = adversarial_distance(P, Q, D)
    if args.format == "json":
        print(json.dumps({"schema_version": SCHEMA_VERSION, "loss": val}))
    else:
        print(_fmt(val) if args.format == "md" else f"loss\n{_fmt(val)}")
    return 0


def cmd_bounds(args) -> int:
    for name in ("s", "t", "LD", "LG"):
        if getattr(args, name) < 0 or (name in ("LD", "LG") and getattr(args, name) == 0):
            raise UsageError(f"--{name} out of range: {getattr(args, name)}")
    if args.n < 1 or args.d < 1:
        raise UsageError("--n and --d must be >= 1")
    try:
        rate = sobolev_rate(args.s, args.t, args.d)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    D, G = sobolev_classes(args.s, args.t, args.LD, args.LG)
    zu = args.zeta_upper if args.zeta_upper is not None else oracle_zeta(args.t, args.d, args.n)
    zl = args.zeta_lower if args.zeta_lower is not None else lower_bound_zeta(args.t, args.d, args.n, args.LG)
    up = upper_bound_risk(D, G, enumerate_truncation(FOURIER, zu, args.d), args.n)
    lo = lower_bound(D, G, enumerate_truncation(FOURIER, zl, args.d), args.n)
    rows = [
        ["upper bound", up.total, zu],
        ["upper variance", up.variance, zu],
        ["upper bias", up.bias, zu],
        ["lower bound", lo.value, zl],
        ["lower candidate", lo.candidate, zl],
        ["rate exponent", rate.exponent, None],
    ]
    extra = {"regime": "parametric" if rate.parametric else "nonparametric"}
    if up.flags:
        extra["upper flags"] = ",".join(up.flags)
    if args.format == "json":
        doc = {
            "schema_version": SCHEMA_VERSION,
            "rate": rate.to_json(),
            "upper": up.to_json(),
            "lower": lo.to_json(),
            "regime": extra["regime"],
        }
        print(json.dumps(doc, indent=2, default=_json_default))
    else:
        _emit_table(["quantity", "value", "zeta"], rows, args.format, extra)
    for c in lo.conditions:
        status = "holds" if c.holds else "FAILS"
        print(f"condition {c.name}: {status} (lhs {c.lhs:.6g}, rhs {c.rhs:.6g})", file=sys.stderr if args.format == "json" else sys.stdout)
    return 0


def cmd_cv(args) -> int:
    data = _load_dataset(args.data)
    if args.grid:
        grid = _int_list(args.grid, "--grid")
    else:
        grid = default_grid(data.n, data.d, args.grid_cap)
    try:
        scores = cv_scores(data, grid, args.basis)
    except ValueError as exc:
        raise UsageError(f"--grid: {exc}") from None
    zeta = min(scores, key=lambda z: (scores[z], z))
    _emit_table(["zeta", "J"], [[z, s] for z, s in scores.items()], args.format, {"selected_zeta": zeta})
    return 0


def cmd_sample(args) -> int:
    p = _load_density(args.density, "--density")
    if args.m < 1:
        raise UsageError("--m must be >= 1")
    data, stats = rejection_sample_stats(p, args.m, args.seed, positive_part=args.positive_part)
    data.to_csv(args.out)
    print(f"envelope {stats.envelope:.6g}; acceptance rate {stats.acceptance_rate:.6g}; mass {stats.mass:.6g}")
    return 0


def cmd_pack(args) -> int:
    if args.zeta < 1:
        raise UsageError("--zeta must be >= 1")
    Z = enumerate_truncation(args.basis, args.zeta, args.d, zero_mean=True)
    idx = list(Z)
    if len(idx) < 8:
        raise UsageError(f"packing needs at least 8 indices, --zeta {args.zeta} gives {len(idx)}")
    L_G = args.LG
    if L_G is None:
        # largest radius for which the non-negativity condition holds
        unit = sobolev_ball(args.t, 1.0, args.q)
        L_G = packing_divisor(idx, unit) / (2.0 * sum(sup_norm(z) for z in idx))
    G = sobolev_ball(args.t, L_G, args.q)
    fam = packing_densities(Z, G, args.convention, seed=args.seed)
    ham = pairwise_hamming(fam.patterns)
    off = ham[~np.eye(len(ham), dtype=bool)]
    pts, _ = gauss_legendre_grid(256 if args.d == 1 else 64, args.d)
    lowest = min(float(np.min(eval_density(p, pts))) for p in fam.members)
    rows = [
        ["index count", len(fam.indices)],
        ["L_G", L_G],
        ["amplitude c_G", fam.amplitude],
        ["B_Z", fam.divisor],
        ["members", len(fam.members)],
        ["min pairwise Hamming", int(off.min()) if off.size else None],
        ["min density on grid", lowest],
    ]
    _emit_table(["quantity", "value"], rows, args.format)
    return 0


def _resolve_config(text: str) -> ExperimentConfig:
    p = Path(text)
    if p.is_file():
        return ExperimentConfig.load(p)
    name = p.name.removesuffix(".json")
    if name in ("parametric", "nonparametric") and p.parent == Path("."):
        return bundled_config(name)
    raise UsageError(f"--config: file not found: {text}")


def cmd_risk_curve(args) -> int:
    try:
        cfg = _resolve_config(args.config)
    except ConfigError as exc:
        raise UsageError(f"--config: {exc}") from None
    if args.replications is not None:
        if args.replications < 1:
            raise UsageError("--replications must be >= 1")
        cfg = ExperimentConfig.from_json({**cfg.to_json(), "replications": args.replications})
    workers = _workers(args)
    prefix = Path(args.out_prefix)
    curve = run_risk_curve(cfg, workers)
    theory = cfg.theoretical_exponent()
    curve.write_csv(f"{prefix}.csv")
    Path(f"{prefix}.json").write_text(json.dumps(curve.summary(theory), indent=2) + "\n")
    if not args.no_svg:
        curve.write_svg(f"{prefix}.svg", theory)
    print(f"fitted slope {curve.slope:.6g}   theoretical {-theory:.6g}")
    return 0


def cmd_equivalence(args) -> int:
    truth = _load_density(args.truth, "--truth") if args.truth else parametric_truth(args.seed)
    m_grid = _int_list(args.m_grid, "--m-grid")
    if not m_grid or any(m < 1 for m in m_grid):
        raise UsageError("--m-grid needs positive sizes")
    if args.n < 1 or args.R < 1 or args.zeta < 0:
        raise UsageError("--n and --R must be >= 1 and --zeta >= 0")
    D = _loss_class(args, truth.d)
    rows = sampling_equivalence_experiment(truth, D, args.n, m_grid, args.zeta, args.R, args.seed, _workers(args))
    header = ["m", "risk_estimate", "risk_resampled", "gap", "gap_stderr", "mass_deficit"]
    _emit_table(header, [[getattr(r, h) for h in header] for r in rows], args.format)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_loss_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--s", type=float, default=0.0, help="Sobolev smoothness of the discriminator class")
    p.add_argument("--exponent", type=float, default=2.0, help="ellipse exponent p of the discriminator class")
    p.add_argument("--LD", type=float, default=1.0, help="discriminator radius")
    p.add_argument("--mmd-base", type=float, default=None, help="use the MMD ball with spectrum base^-|z| instead")
    p.add_argument("--mmd-cutoff", type=int, default=30, help="spectrum cutoff for --mmd-base")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="advloss", description="Density estimation under adversarial losses.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    fmt = dict(choices=("md", "csv", "json"), default="md", help="output format")

    p = sub.add_parser("estimate", help="fit a truncated series estimate")
    p.add_argument("--data", required=True, help="CSV of points (header x1..xd)")
    p.add_argument("--basis", choices=BASIS_KINDS, default=FOURIER, help="orthonormal basis")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--zeta", type=int, help="fixed truncation cutoff")
    g.add_argument("--adaptive", action="store_true", help="choose the cutoff by leave-one-out CV")
    p.add_argument("--grid-cap", type=int, default=64, help="largest cutoff tried by --adaptive")
    p.add_argument("--out", required=True, help="output density JSON")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("loss", help="adversarial distance between two densities")
    p.add_argument("--truth", required=True, help="density JSON")
    p.add_argument("--estimate", required=True, help="density JSON")
    _add_loss_flags(p)
    p.add_argument("--format", **fmt)
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("bounds", help="upper and lower risk bounds for Sobolev classes")
    p.add_argument("--s", type=float, required=True, help="discriminator smoothness")
    p.add_argument("--t", type=float, required=True, help="generator smoothness")
    p.add_argument("--d", type=int, default=1, help="dimension")
    p.add_argument("--n", type=int, default=10**6, help="sample size")
    p.add_argument("--LD", type=float, default=1.0, help="discriminator radius")
    p.add_argument("--LG", type=float, default=1.0, help="generator radius")
    p.add_argument("--zeta-upper", type=int, default=None, help="cutoff for the upper bound (default: oracle)")
    p.add_argument("--zeta-lower", type=int, default=None, help="cutoff for the lower bound (default: smallest admissible)")
    p.add_argument("--format", **fmt)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("cv", help="leave-one-out CV scores over a cutoff grid")
    p.add_argument("--data", required=True, help="CSV of points (header x1..xd)")
    p.add_argument("--basis", choices=BASIS_KINDS, default=FOURIER, help="orthonormal basis")
    p.add_argument("--grid", default=None, help="comma-separated cutoffs (default 0..ceil(n^(1/d)))")
    p.add_argument("--grid-cap", type=int, default=64, help="cap on the default grid")
    p.add_argument("--format", **fmt)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("sample", help="rejection-sample from a density")
    p.add_argument("--density", required=True, help="density JSON")
    p.add_argument("--m", type=int, required=True, help="number of draws")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--positive-part", action="store_true", help="sample max(p, 0) renormalised")
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("pack", help="packing family diagnostics")
    p.add_argument("--zeta", type=int, required=True, help="cutoff of the packing index set")
    p.add_argument("--d", type=int, default=1, help="dimension")
    p.add_argument("--basis", choices=BASIS_KINDS, default=FOURIER, help="orthonormal basis")
    p.add_argument("--t", type=float, default=1.0, help="generator smoothness")
    p.add_argument("--q", type=float, default=2.0, help="generator ellipse exponent")
    p.add_argument("--LG", type=float, default=None, help="generator radius (default: condition boundary)")
    p.add_argument("--convention", choices=("sqrt", "lp"), default="sqrt", help="B_Z scaling: sqrt uses |Z|^(1/2), lp uses |Z|^(1/q)")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--format", **fmt)
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("risk-curve", help="Monte Carlo risk curve and rate fit")
    p.add_argument("--config", required=True, help="experiment JSON, or a bundled name (parametric, nonparametric)")
    p.add_argument("--out-prefix", required=True, help="writes PREFIX.csv, PREFIX.json, PREFIX.svg")
    p.add_argument("--replications", type=int, default=None, help="override the configured replication count")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default $ADVLOSS_WORKERS or 1)")
    p.add_argument("--no-svg", action="store_true", help="skip the plot")
    p.set_defaults(func=cmd_risk_curve)

    p = sub.add_parser("equivalence", help="density estimation versus sampling experiment")
    p.add_argument("--truth", default=None, help="density JSON (default: a seeded 6-mode truth)")
    p.add_argument("--n", type=int, default=1000, help="real sample size")
    p.add_argument("--m-grid", default="100,1000,10000", help="comma-separated fake sample sizes")
    p.add_argument("--zeta", type=int, default=8, help="estimator cutoff")
    p.add_argument("--R", type=int, default=50, help="replications")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    _add_loss_flags(p)
    p.add_argument("--workers", type=int, default=None, help="worker processes (default $ADVLOSS_WORKERS or 1)")
    p.add_argument("--format", **fmt)
    p.set_defaults(func=cmd_equivalence)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, ConditionFailedError, UnsupportedExponentError) as exc:
        print(f"advloss {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"advloss {args.command}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"advloss {args.command}: numeric error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
