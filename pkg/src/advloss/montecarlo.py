"""Sampling, simulated risk curves and rate fitting.

Seeding
-------
Every random draw comes from a :class:`numpy.random.SeedSequence` built from
the master seed and an integer key:

* ``(0,)`` -- the experiment's truth (mode choice, coefficients, signs);
* ``(1, i, r)`` -- replication ``r`` at the ``i``-th sample size;
* ``(2, r)`` / ``(3, r, j)`` -- real / fake draws of the sampling experiment.

A work unit therefore depends only on its own key, so replications can be
split across any number of workers without changing a single loss value.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .basis import FOURIER, CoefficientVector, SobolevWeights, enumerate_truncation, sup_norm
from .bounds import sobolev_rate
from .density import (
    NOT_NONNEGATIVE,
    SeriesDensity,
    eval_density,
    gauss_legendre_grid,
    nonneg_check,
)
from .estimator import Dataset, adaptive_zeta, default_grid, series_estimate
from .loss import EllipseClass, KernelSpectrum, adversarial_loss

SCHEMA_VERSION = 1

TRUTH_KEY = 0
REPLICATION_KEY = 1
REAL_KEY = 2
FAKE_KEY = 3


class ConfigError(ValueError):
    """An experiment configuration does not match the schema."""


def child_rng(master: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=master, spawn_key=tuple(key)))


# ---------------------------------------------------------------------------
# Rejection sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RejectionStats:
    envelope: float
    proposals: int
    accepted: int
    mass: float  # integral of the sampled (unnormalized) function; 1 unless positive_part

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposals if self.proposals else math.nan


def envelope(p: SeriesDensity) -> float:
    """``1 + sum |c_z| sup_norm(z)``, an upper bound on ``sup p``."""
    return 1.0 + p.spectral_l1


def _check_grid(d: int) -> int:
    return {1: 4096, 2: 256}.get(d, 32)


def positive_part_mass(p: SeriesDensity, nodes: int | None = None) -> float:
    """``int max(p, 0)`` by composite Gauss-Legendre quadrature."""
    if nodes is None:
        nodes = {1: 8192, 2: 512}.get(p.d, 64)
    pts, wts = gauss_legendre_grid(nodes, p.d)
    return float(np.dot(wts, np.maximum(eval_density(p, pts), 0.0)))


def rejection_sample_stats(
    p: SeriesDensity,
    m: int,
    seed=None,
    positive_part: bool = False,
    certified: bool = False,
) -> tuple[Dataset, RejectionStats]:
    """Rejection sampler returning the draws and acceptance statistics.

    Proposals ``(x, y)`` are uniform on ``[0, 1]^d x [0, M]`` with the
    analytic envelope ``M``; ``x`` is kept when ``y < p(x)``.  Unless
    ``certified`` is passed, ``p`` must pass :func:`nonneg_check`; with
    ``positive_part`` the target is ``max(p, 0)`` normalised, and its mass is
    reported in the stats.
    """
    if m < 1:
        raise ValueError("m must be positive")
    if not positive_part and not certified:
        cert = nonneg_check(p, _check_grid(p.d))
        if not cert.ok:
            raise ValueError(
                f"density is not certified non-negative (verdict {cert.verdict}); "
                "use positive_part=True to sample its positive part"
            )
    rng = np.random.default_rng(seed)
    M = envelope(p)
    mass = positive_part_mass(p) if positive_part else 1.0
    if positive_part and mass <= 0:
        raise ValueError("the positive part of the density has zero mass")
    out = []
    got = proposals = 0
    while got < m:
        batch = int(math.ceil((m - got) * M / max(mass, 1e-3) * 1.1)) + 16
        x = rng.random((batch, p.d))
        y = rng.random(batch) * M
        hit = np.flatnonzero(y < eval_density(p, x))
        need = m - got
        if hit.size >= need:
            # proposals after the m-th acceptance are discarded unseen
            proposals += int(hit[need - 1]) + 1
            out.append(x[hit[:need]])
            got = m
        else:
            proposals += batch
            out.append(x[hit])
            got += hit.size
    return Dataset(np.concatenate(out)), RejectionStats(M, proposals, m, mass)


def rejection_sample(p: SeriesDensity, m: int, seed=None, positive_part: bool = False) -> Dataset:
    """``m`` IID draws from ``p`` (or from its normalised positive part)."""
    return rejection_sample_stats(p, m, seed, positive_part)[0]


# ---------------------------------------------------------------------------
# Truths
# ---------------------------------------------------------------------------


def parametric_truth(
    seed: int = 0,
    modes: int = 6,
    max_frequency: int = 8,
    coef_range: tuple[float, float] = (0.05, 0.12),
    d: int = 1,
) -> SeriesDensity:
    """``modes`` random Fourier modes with coefficients ``+-U(coef_range)``."""
    rng = child_rng(seed, TRUTH_KEY)
    pool = enumerate_truncation(FOURIER, max_frequency, d, zero_mean=True).indices
    if modes > len(pool):
        raise ValueError(f"cannot pick {modes} modes from {len(pool)} candidates")
    chosen = sorted(rng.choice(len(pool), size=modes, replace=False))
    mags = rng.uniform(*coef_range, size=modes)
    signs = rng.choice([-1.0, 1.0], size=modes)
    return SeriesDensity(d, FOURIER, CoefficientVector(zip([pool[i] for i in chosen], signs * mags)))


def sobolev_truth(
    cutoff: int,
    t: float,
    d: int = 1,
    seed: int = 0,
    eps: float = 0.05,
    l1_budget: float = 0.9,
    budget_cutoff: int | None = None,
) -> SeriesDensity:
    """Truth supported on ``||z||_inf <= cutoff`` with ``|c_z| ~ ||z||^{-(t + d/2 + eps)}``.

    Signs are random.  Coefficients are scaled so ``sum |c_z| sup_norm(z)``
    equals ``l1_budget`` over the support of cutoff ``budget_cutoff``
    (default ``cutoff``); nested supports built with the same seed and budget
    cutoff share their coefficients.
    """
    top = cutoff if budget_cutoff is None else max(budget_cutoff, cutoff)
    Z = enumerate_truncation(FOURIER, top, d, zero_mean=True).indices
    rng = child_rng(seed, TRUTH_KEY)
    signs = rng.choice([-1.0, 1.0], size=len(Z))
    decay = np.array([z.level ** -(t + d / 2.0 + eps) for z in Z])
    scale = l1_budget / float(np.sum(decay * np.array([sup_norm(z) for z in Z])))
    coeffs = [(z, scale * s * w) for z, s, w in zip(Z, signs, decay) if z.level <= cutoff]
    return SeriesDensity(d, FOURIER, CoefficientVector(coeffs))


# ---------------------------------------------------------------------------
# Risk estimation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ZetaRule:
    """How the estimator picks its cutoff: ``fixed``, ``oracle`` (needs ``t``) or ``adaptive``."""

    kind: str = "fixed"
    zeta: int = 0
    t: float = 1.0
    cap: int | None = 64

    def __post_init__(self):
        if self.kind not in ("fixed", "oracle", "adaptive"):
            raise ConfigError(f"unknown zeta rule {self.kind!r}")

    def choose(self, data: Dataset) -> int:
        if self.kind == "fixed":
            return self.zeta
        if self.kind == "oracle":
            return oracle_cutoff(self.t, data.d, data.n)
        return adaptive_zeta(data, default_grid(data.n, data.d, self.cap))

    def to_json(self) -> dict:
        return asdict(self)


def oracle_cutoff(t: float, d: int, n: int) -> int:
    # local import keeps montecarlo importable from bounds tests without cycles
    from .bounds import oracle_zeta

    return oracle_zeta(t, d, n)


class RiskEstimate(tuple):
    """``(mean, stderr)`` with the per-replication losses attached."""

    def __new__(cls, mean: float, stderr: float, losses: np.ndarray):
        obj = super().__new__(cls, (mean, stderr))
        obj.losses = losses
        return obj

    @property
    def mean(self) -> float:
        return self[0]

    @property
    def stderr(self) -> float:
        return self[1]


def _summarize(losses: np.ndarray) -> RiskEstimate:
    ordered = np.sort(np.asarray(losses, dtype=float))
    mean = float(ordered.mean())
    se = float(ordered.std(ddof=1) / math.sqrt(ordered.size)) if ordered.size > 1 else 0.0
    return RiskEstimate(mean, se, ordered)


def replication_loss(truth: SeriesDensity, loss: EllipseClass, n: int, rule: ZetaRule, seed, kind: str = FOURIER) -> float:
    """One replication: sample, estimate, and the exact loss on the coefficient difference."""
    data = rejection_sample_stats(truth, n, seed, certified=True)[0]
    zeta = rule.choose(data)
    Z = enumerate_truncation(kind, zeta, truth.d, zero_mean=True)
    est = series_estimate(data, Z)
    return adversarial_loss(truth.coeffs - est.coeffs, loss)


def _run_unit(args) -> list[float]:
    truth, loss, n, rule, master, keys = args
    return [replication_loss(truth, loss, n, rule, np.random.SeedSequence(master, spawn_key=k)) for k in keys]


def _map_units(truth, loss, n, rule, master, keys: Sequence[tuple], workers: int) -> np.ndarray:
    keys = list(keys)
    if workers <= 1 or len(keys) < 2:
        return np.array(_run_unit((truth, loss, n, rule, master, keys)))
    parts = [keys[i::workers] for i in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(_run_unit, [(truth, loss, n, rule, master, part) for part in parts]))
    out = np.empty(len(keys))
    for i, vals in enumerate(results):
        out[i::workers] = vals
    return out


def _ensure_certified(truth: SeriesDensity) -> None:
    cert = nonneg_check(truth, _check_grid(truth.d))
    if not cert.ok:
        raise ValueError(f"truth is not certified non-negative (verdict {cert.verdict})")


def replicate_losses(
    truth: SeriesDensity,
    loss: EllipseClass,
    n: int,
    rule: ZetaRule,
    R: int,
    seed: int = 0,
    n_index: int = 0,
    workers: int = 1,
) -> np.ndarray:
    """Per-replication losses, in replication order."""
    if R < 1:
        raise ValueError("need at least one replication")
    _ensure_certified(truth)
    keys = [(REPLICATION_KEY, n_index, r) for r in range(R)]
    return _map_units(truth, loss, n, rule, seed, keys, workers)


def estimate_risk(
    truth: SeriesDensity,
    loss: EllipseClass,
    n: int,
    rule: ZetaRule,
    R: int,
    seed: int = 0,
    n_index: int = 0,
    workers: int = 1,
) -> RiskEstimate:
    """Monte Carlo mean and standard error of ``d_{F_D}(P, P_hat)``."""
    return _summarize(replicate_losses(truth, loss, n, rule, R, seed, n_index, workers))


# ---------------------------------------------------------------------------
# Rate fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    residual_rms: float


def fit_rate(points: Iterable[tuple[float, float]]) -> RateFit:
    """Least-squares line through ``(log n, log risk)``."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("need at least two (n, risk) points")
    if np.any(pts <= 0):
        raise ValueError("sample sizes and risks must be positive")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    return RateFit(float(slope), float(intercept), float(np.sqrt(np.mean(resid**2))))


# ---------------------------------------------------------------------------
# Experiment configuration and risk curves
# ---------------------------------------------------------------------------

REGIMES = ("parametric", "nonparametric", "custom")


@dataclass(frozen=True)
class LossSpec:
    """``sobolev`` (weights ``(1 + ||z||^2)^{s/2}``) or ``mmd`` (geometric kernel spectrum)."""

    kind: str = "sobolev"
    s: float = 0.0
    p: float = 2.0
    radius: float = 1.0
    base: float = 2.0
    cutoff: int = 30

    def build(self, d: int = 1) -> EllipseClass:
        if self.kind == "sobolev":
            return EllipseClass(self.p, self.radius, SobolevWeights(self.s))
        if self.kind == "mmd":
            return KernelSpectrum.geometric(self.base, self.cutoff, d).ball(self.radius)
        raise ConfigError(f"unknown loss kind {self.kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    regime: str = "parametric"
    n_grid: tuple[int, ...] = tuple(2**k for k in range(7, 15))
    replications: int = 200
    seed: int = 0
    d: int = 1
    # truth
    modes: int = 6
    max_frequency: int = 8
    coef_range: tuple[float, float] = (0.05, 0.12)
    t: float = 1.0
    eps: float = 0.05
    l1_budget: float = 0.9
    truth: dict | None = None
    # loss and estimator
    loss: LossSpec = field(default_factory=LossSpec)
    zeta_rule: ZetaRule = field(default_factory=lambda: ZetaRule("fixed", 8))

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if not self.n_grid or any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ConfigError("n_grid must be non-empty and strictly increasing")
        if any(n < 1 for n in self.n_grid):
            raise ConfigError("n_grid entries must be positive")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.regime == "custom" and self.truth is None:
            raise ConfigError("the custom regime needs a 'truth' density document")

    def truth_at(self, n: int) -> SeriesDensity:
        if self.regime == "parametric":
            return parametric_truth(self.seed, self.modes, self.max_frequency, self.coef_range, self.d)
        if self.regime == "nonparametric":
            top = oracle_cutoff(self.t, self.d, max(self.n_grid))
            return sobolev_truth(
                oracle_cutoff(self.t, self.d, n), self.t, self.d, self.seed, self.eps, self.l1_budget, top
            )
        return SeriesDensity.from_json(self.truth)

    def theoretical_exponent(self) -> float:
        if self.regime == "nonparametric":
            s = self.loss.s if self.loss.kind == "sobolev" else math.inf
            return 0.5 if math.isinf(s) else sobolev_rate(s, self.t, self.d).exponent
        return 0.5

    def to_json(self) -> dict:
        out = asdict(self)
        out["schema_version"] = SCHEMA_VERSION
        out["n_grid"] = list(self.n_grid)
        out["coef_range"] = list(self.coef_range)
        return out

    @classmethod
    def from_json(cls, doc: dict) -> ExperimentConfig:
        if not isinstance(doc, dict):
            raise ConfigError("configuration must be a JSON object")
        doc = dict(doc)
        version = doc.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version}")
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        try:
            if "loss" in doc:
                doc["loss"] = LossSpec(**doc["loss"])
            if "zeta_rule" in doc:
                doc["zeta_rule"] = ZetaRule(**doc["zeta_rule"])
            if "n_grid" in doc:
                doc["n_grid"] = tuple(int(n) for n in doc["n_grid"])
            if "coef_range" in doc:
                lo, hi = doc["coef_range"]
                doc["coef_range"] = (float(lo), float(hi))
            return cls(**doc)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_json(doc)


def bundled_config(name: str) -> ExperimentConfig:
    """One of the packaged configurations (``parametric`` or ``nonparametric``)."""
    from importlib import resources

    text = resources.files("advloss").joinpath("configs", f"{name}.json").read_text()
    return ExperimentConfig.from_json(json.loads(text))


@dataclass(frozen=True)
class RiskCurve:
    n: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    replications: int
    fit: RateFit

    @property
    def slope(self) -> float:
        return self.fit.slope

    def rows(self):
        for n, m, s in zip(self.n, self.mean, self.stderr):
            yield int(n), float(m), float(s), self.replications

    def write_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "mean_risk", "stderr", "replications"])
            for n, m, s, r in self.rows():
                w.writerow([n, repr(m), repr(s), r])

    def summary(self, theoretical_exponent: float | None = None) -> dict:
        out = {"schema_version": SCHEMA_VERSION, **asdict(self.fit)}
        if theoretical_exponent is not None:
            out["theoretical_exponent"] = theoretical_exponent
        return out

    def write_svg(self, path, theoretical_exponent: float | None = None) -> None:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        ax.errorbar(self.n, self.mean, yerr=self.stderr, fmt="o", ms=4, label="Monte Carlo risk")
        fitted = np.exp(self.fit.intercept) * self.n.astype(float) ** self.fit.slope
        ax.plot(self.n, fitted, "-", label=f"fit, slope {self.fit.slope:.3f}")
        if theoretical_exponent is not None:
            ref = fitted[0] * (self.n / self.n[0]) ** (-theoretical_exponent)
            ax.plot(self.n, ref, "--", label=f"n^-{theoretical_exponent:.3g}")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("n")
        ax.set_ylabel("risk")
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(path, format="svg")
        plt.close(fig)


def run_risk_curve(cfg: ExperimentConfig, workers: int = 1) -> RiskCurve:
    loss = cfg.loss.build(cfg.d)
    means, ses = [], []
    for i, n in enumerate(cfg.n_grid):
        est = estimate_risk(cfg.truth_at(n), loss, n, cfg.zeta_rule, cfg.replications, cfg.seed, i, workers)
        means.append(est.mean)
        ses.append(est.stderr)
    n_arr = np.array(cfg.n_grid)
    fit = fit_rate(zip(n_arr, means))
    return RiskCurve(n_arr, np.array(means), np.array(ses), cfg.replications, fit)


# ---------------------------------------------------------------------------
# Density estimation versus sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EquivalenceRow:
    m: int
    risk_estimate: float
    risk_resampled: float
    gap: float
    gap_stderr: float
    mass_deficit: float


def _equivalence_unit(args):
    truth, loss, n, Z, m_grid, master, r = args
    real = rejection_sample_stats(truth, n, np.random.SeedSequence(master, spawn_key=(REAL_KEY, r)), certified=True)[0]
    est = series_estimate(real, Z)
    d_est = adversarial_loss(truth.coeffs - est.coeffs, loss)
    cert = nonneg_check(est, _check_grid(est.d))
    clipped = cert.verdict == NOT_NONNEGATIVE or not cert.ok
    mass = positive_part_mass(est) if clipped else 1.0
    row = []
    for j, m in enumerate(m_grid):
        seed = np.random.SeedSequence(master, spawn_key=(FAKE_KEY, r, j))
        fake = rejection_sample_stats(est, m, seed, positive_part=clipped, certified=not clipped)[0]
        est2 = series_estimate(fake, Z)
        row.append((d_est, adversarial_loss(truth.coeffs - est2.coeffs, loss), 1.0 - mass))
    return row


def sampling_equivalence_experiment(
    truth: SeriesDensity,
    loss: EllipseClass,
    n: int,
    m_grid: Sequence[int],
    zeta: int,
    R: int = 50,
    seed: int = 0,
    workers: int = 1,
) -> list[EquivalenceRow]:
    """Estimate from ``n`` real points, resample ``m`` fake points, re-estimate.

    For each ``m`` reports the mean of ``d(P, P_hat)``, of ``d(P, P_hat')``,
    their gap (with standard error) and the mean mass removed when the
    estimate had to be clipped to its positive part before sampling.
    """
    _ensure_certified(truth)
    m_grid = list(m_grid)
    Z = enumerate_truncation(FOURIER if truth.basis == FOURIER else truth.basis, zeta, truth.d, zero_mean=True)
    tasks = [(truth, loss, n, Z, m_grid, seed, r) for r in range(R)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_equivalence_unit, tasks))
    else:
        results = [_equivalence_unit(t) for t in tasks]
    arr = np.array(results)  # (R, len(m_grid), 3)
    rows = []
    for j, m in enumerate(m_grid):
        d1, d2, deficit = arr[:, j, 0], arr[:, j, 1], arr[:, j, 2]
        gap = np.sort(d2 - d1)
        se = float(gap.std(ddof=1) / math.sqrt(R)) if R > 1 else 0.0
        rows.append(EquivalenceRow(m, float(np.sort(d1).mean()), float(np.sort(d2).mean()), float(gap.mean()), se, float(np.sort(deficit).mean())))
    return rows
