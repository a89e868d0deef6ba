"""Densities with finite spectral support and the objects built from them.

A :class:`SeriesDensity` is ``p = 1 + sum_z c_z phi_z`` with the constant
coefficient fixed at one, so every instance integrates to one.  This module
also holds the non-negativity certificate, the Varshamov-Gilbert sign-pattern
construction, the packing family used by the minimax lower bound, and the
quadrature oracles (KL divergence, mass, L^2).
"""

from __future__ import annotations

import json
import math
from collections.abc import Mapping
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .basis import (
    BASIS_KINDS,
    FOURIER,
    HAAR,
    CoefficientVector,
    DimensionMismatchError,
    TruncationSet,
    UnsupportedDimensionError,
    design_matrix,
    index_from_json,
    sup_norm,
)

SCHEMA_VERSION = 1


class ConditionFailedError(ValueError):
    """A precondition stated as an inequality does not hold."""


@dataclass(frozen=True)
class SeriesDensity:
    d: int
    basis: str
    coeffs: CoefficientVector

    def __post_init__(self):
        if self.basis not in BASIS_KINDS:
            raise ValueError(f"unknown basis kind {self.basis!r}")
        if self.basis == HAAR and self.d != 1:
            raise UnsupportedDimensionError("Haar densities are only available for d = 1")
        for z in self.coeffs:
            if z.is_constant:
                raise ValueError("the constant coefficient is fixed at 1 and cannot be supplied")
            if z.kind != self.basis:
                raise ValueError(f"index {z!r} does not belong to the {self.basis} basis")
            if z.dim != self.d:
                raise DimensionMismatchError(f"index {z!r} is not {self.d}-dimensional")

    @cached_property
    def _support(self):
        return self.coeffs.indices, self.coeffs.values

    def __call__(self, x) -> np.ndarray:
        return eval_density(self, x)

    @property
    def spectral_l1(self) -> float:
        """``sum_z |c_z| * sup_norm(z)``; bounds ``|p - 1|`` everywhere."""
        return float(sum(abs(c) * sup_norm(z) for z, c in self.coeffs.items()))

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "d": self.d,
            "basis": self.basis,
            "coeffs": [[z.to_json(), c] for z, c in self.coeffs.items()],
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> SeriesDensity:
        basis = doc["basis"]
        coeffs = CoefficientVector((index_from_json(basis, key), float(c)) for key, c in doc["coeffs"])
        return cls(int(doc["d"]), basis, coeffs)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> SeriesDensity:
        return cls.from_json(json.loads(Path(path).read_text()))


def make_density(d: int, basis: str, coefficients: Mapping | None = None) -> SeriesDensity:
    """Build ``1 + sum_z c_z phi_z``; non-negativity is not checked here."""
    return SeriesDensity(d, basis, CoefficientVector(coefficients))


def uniform(d: int = 1, basis: str = FOURIER) -> SeriesDensity:
    """The uniform density ``p_0``."""
    return SeriesDensity(d, basis, CoefficientVector())


def eval_density(p: SeriesDensity, x) -> np.ndarray | float:
    x_arr = np.asarray(x, dtype=float)
    single = x_arr.ndim == 0 or (x_arr.ndim == 1 and p.d > 1)
    if single and x_arr.ndim == 1 and x_arr.shape[0] != p.d:
        raise DimensionMismatchError(f"expected a {p.d}-dimensional point")
    pts = x_arr.reshape(-1, p.d) if x_arr.ndim < 2 else x_arr
    if pts.shape[1] != p.d:
        raise DimensionMismatchError(f"expected {p.d}-dimensional points, got shape {x_arr.shape}")
    idx, vals = p._support
    out = np.ones(pts.shape[0])
    if idx:
        out += design_matrix(idx, pts) @ vals
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


def gauss_legendre_grid(nodes: int, d: int, order: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre tensor rule on ``[0, 1]^d``.

    ``nodes`` per axis are split into ``nodes // order`` equal panels of
    ``order`` points each.  Returns points ``(nodes^d, d)`` and weights.
    """
    if nodes % order:
        raise ValueError(f"nodes ({nodes}) must be a multiple of the panel order ({order})")
    t, w = np.polynomial.legendre.leggauss(order)
    panels = nodes // order
    left = np.arange(panels) / panels
    x1 = (left[:, None] + (t[None, :] + 1.0) / (2 * panels)).ravel()
    w1 = np.tile(w / (2 * panels), panels)
    grids = np.meshgrid(*([x1] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wts = np.ones(1)
    for _ in range(d):
        wts = np.outer(wts, w1).ravel()
    return pts, wts


def integrate(f, d: int, nodes: int = 256) -> float:
    """Integrate a vectorized ``f(points)`` over ``[0, 1]^d``."""
    pts, wts = gauss_legendre_grid(nodes, d)
    return float(np.dot(wts, f(pts)))


def total_mass(p: SeriesDensity, nodes: int = 256) -> float:
    return integrate(p, p.d, nodes)


def kl_divergence(p: SeriesDensity, q: SeriesDensity, nodes: int = 256) -> float:
    """``int p log(p / q)`` by composite Gauss-Legendre quadrature (d <= 2)."""
    if p.d != q.d:
        raise DimensionMismatchError("densities differ in dimension")
    if p.d > 2:
        raise UnsupportedDimensionError("tensor quadrature is limited to d <= 2")
    pts, wts = gauss_legendre_grid(nodes, p.d)
    pv, qv = eval_density(p, pts), eval_density(q, pts)
    if np.any(qv <= 0):
        raise ValueError("q is not strictly positive at every quadrature node")
    if np.any(pv < 0):
        raise ValueError("p is negative at a quadrature node")
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = np.where(pv > 0, pv * np.log(pv / qv), 0.0)
    return float(np.dot(wts, integrand))


def l2_distance(p: SeriesDensity, q: SeriesDensity) -> float:
    """``||p - q||_{L^2}`` via Parseval over the union of the two spectra."""
    if p.basis != q.basis:
        raise ValueError(f"basis mismatch: {p.basis} vs {q.basis}")
    if p.d != q.d:
        raise DimensionMismatchError("densities differ in dimension")
    diff = p.coeffs - q.coeffs
    return float(np.sqrt(np.sum(diff.values**2))) if len(diff) else 0.0


# ---------------------------------------------------------------------------
# Non-negativity certificate
# ---------------------------------------------------------------------------

ANALYTIC = "analytic"
CERTIFIED = "certified"
NOT_NONNEGATIVE = "not-nonnegative"
UNKNOWN = "unknown"


@dataclass(frozen=True)
class NonnegCertificate:
    verdict: str
    min_value: float
    slack: float
    analytic_floor: float  # 1 - sum |c_z| sup_norm(z): a pointwise lower bound

    @property
    def ok(self) -> bool:
        return self.verdict in (ANALYTIC, CERTIFIED)


def _grid(m: int, d: int) -> np.ndarray:
    x1 = (np.arange(m) + 0.5) / m
    grids = np.meshgrid(*([x1] * d), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _grid_slack(p: SeriesDensity, m: int) -> float:
    if not p.coeffs:
        return 0.0
    if p.basis == HAAR:
        max_level = max(z.key[0] for z in p.coeffs)
        dyadic = m & (m - 1) == 0 and m >= 2 ** (max_level + 1)
        # every dyadic piece holds a grid point; otherwise fall back to the full range
        return 0.0 if dyadic else 2.0 * p.spectral_l1
    # |grad phi_z| <= 2 pi ||z||_2 sup_norm(z); cell-centred points lie within sqrt(d)/(2m)
    lip = sum(
        abs(c) * sup_norm(z) * 2.0 * math.pi * math.sqrt(sum(k * k for k in z.key))
        for z, c in p.coeffs.items()
    )
    return lip * math.sqrt(p.d) / (2.0 * m)


def nonneg_check(p: SeriesDensity, m: int = 512) -> NonnegCertificate:
    """Certify ``p >= 0`` on ``[0, 1]^d``.

    The verdict is ``analytic`` when ``sum |c_z| sup_norm(z) <= 1``;
    otherwise ``p`` is evaluated on a cell-centred grid with ``m`` points per
    axis and the verdict is ``certified`` if the grid minimum minus the
    Lipschitz slack is non-negative, ``not-nonnegative`` if some grid value is
    negative, and ``unknown`` in between.
    """
    if m < 2:
        raise ValueError("grid resolution must be at least 2")
    l1 = p.spectral_l1
    floor = 1.0 - l1
    if l1 <= 1.0:
        return NonnegCertificate(ANALYTIC, math.nan, 0.0, floor)
    vals = eval_density(p, _grid(m, p.d))
    lo = float(vals.min())
    slack = _grid_slack(p, m)
    if lo - slack >= 0:
        verdict = CERTIFIED
    elif lo < 0:
        verdict = NOT_NONNEGATIVE
    else:
        verdict = UNKNOWN
    return NonnegCertificate(verdict, lo, slack, floor)


# ---------------------------------------------------------------------------
# Varshamov-Gilbert sign patterns and the packing family
# ---------------------------------------------------------------------------


def pairwise_hamming(patterns: np.ndarray) -> np.ndarray:
    """All pairwise Hamming distances (brute force)."""
    patterns = np.asarray(patterns)
    return (patterns[:, None, :] != patterns[None, :, :]).sum(axis=2)


def varshamov_gilbert(m: int, seed=0, max_draws: int = 1_000_000) -> np.ndarray:
    """Sign patterns in ``{-1, +1}^m`` with pairwise Hamming distance >= m/8.

    Returns at least ``2^{m/8}`` patterns as an ``int8`` array of shape
    ``(count, m)``, found by seeded greedy random search.
    """
    if m < 8:
        raise ValueError(f"Varshamov-Gilbert needs m >= 8, got {m}")
    rng = np.random.default_rng(seed)
    need = math.ceil(2.0 ** (m / 8.0) - 1e-12)
    min_dist = math.ceil(m / 8.0)
    accepted = np.empty((0, m), dtype=np.int8)
    draws = 0
    while accepted.shape[0] < need:
        if draws >= max_draws:
            raise RuntimeError(f"could not find {need} patterns after {max_draws} draws")
        batch = rng.choice(np.array([-1, 1], dtype=np.int8), size=(256, m))
        draws += batch.shape[0]
        for cand in batch:
            if accepted.shape[0] == 0 or (accepted != cand).sum(axis=1).min() >= min_dist:
                accepted = np.vstack([accepted, cand])
                if accepted.shape[0] >= need:
                    break
    return accepted


@dataclass(frozen=True)
class PackingFamily:
    members: tuple[SeriesDensity, ...]
    patterns: np.ndarray
    amplitude: float
    indices: tuple
    divisor: float  # B_Z


def packing_divisor(Z, generator, convention: str = "sqrt") -> float:
    """``B_Z = |Z|^{1/2} sup_Z b_z`` (sqrt) or ``|Z|^{1/q} sup_Z b_z`` (lp)."""
    idx = [z for z in Z if not z.is_constant]
    bmax = max(generator.weights(z) for z in idx)
    if convention == "sqrt":
        expo = 0.5
    elif convention == "lp":
        expo = 0.0 if math.isinf(generator.p) else 1.0 / generator.p
    else:
        raise ValueError(f"unknown convention {convention!r}")
    return len(idx) ** expo * bmax


def packing_densities(Z: TruncationSet, generator, convention: str = "sqrt", seed=0) -> PackingFamily:
    """The worst-case family ``p_tau = p_0 + c_G sum_z tau_z phi_z``.

    ``generator`` is the :class:`~advloss.loss.EllipseClass` ``H_{q,b}(L_G)``;
    ``c_G = L_G / B_Z``.  The sign patterns come from
    :func:`varshamov_gilbert`.
    """
    from .loss import ellipse_membership

    idx = tuple(z for z in Z if not z.is_constant)
    if len(idx) < 8:
        raise ValueError(f"packing needs |Z| >= 8, got {len(idx)}")
    B = packing_divisor(idx, generator, convention)
    c_G = generator.radius / B
    lhs = 2.0 * c_G * sum(sup_norm(z) for z in idx)
    if lhs > 1.0 + 1e-12:
        raise ConditionFailedError(
            f"2 (L_G / B_Z) sum_z ||phi_z||_inf <= 1 fails: left side is {lhs:.6g}"
        )
    patterns = varshamov_gilbert(len(idx), seed=seed)
    members = []
    for tau in patterns:
        p = SeriesDensity(Z.d, Z.kind, CoefficientVector(zip(idx, c_G * tau.astype(float))))
        cert = nonneg_check(p)
        if cert.verdict != ANALYTIC:
            raise ConditionFailedError(f"packing member is not analytically non-negative: {cert}")
        if not ellipse_membership(p.coeffs, generator, rtol=1e-12).is_member:
            raise ConditionFailedError("packing member lies outside the generator class")
        members.append(p)
    return PackingFamily(tuple(members), patterns, c_G, idx, B)
