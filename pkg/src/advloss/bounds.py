"""Closed-form risk bounds and rate exponents.

``upper_bound_risk`` evaluates the variance + bias bound for the truncated
series estimator, ``lower_bound`` the packing (Fano) lower bound together with
its two admissibility conditions, and ``sobolev_rate`` the exponent
``min{1/2, (s + t) / (2t + d)}``.

Sobolev-weighted classes on canonical truncation sets are handled by shell
sums (all indices with the same ``||z||_inf`` share a weight), so the cutoff
can be large without enumerating the cube.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Mapping
from dataclasses import asdict, dataclass, field

import numpy as np

from .basis import (
    FOURIER,
    HAAR,
    SobolevWeights,
    TruncationSet,
    WeightUndefinedError,
    enumerate_truncation,
    sup_norm,
)
from .loss import EllipseClass, lp_norm

CONSTANT_UNSPECIFIED = "constant-unspecified"
TAIL_TRUNCATED = "tail-truncated"
BIAS_DIVERGES = "bias-diverges"


class UnsupportedExponentError(ValueError):
    """Raised when the bias Hoelder exponent ``1/(1 - 1/p - 1/q)`` is undefined."""


@dataclass(frozen=True)
class BoundReport:
    """Variance + bias upper bound on the expected adversarial risk."""

    variance: float
    bias: float
    n: int
    cutoff: int | None
    size: int
    flags: tuple[str, ...] = ()
    bias_remainder: float = 0.0

    @property
    def total(self) -> float:
        return self.variance + self.bias

    def to_json(self) -> dict:
        out = asdict(self)
        out["total"] = self.total
        out["flags"] = list(self.flags)
        return out


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    lhs: float
    rhs: float
    holds: bool


@dataclass(frozen=True)
class LowerBoundReport:
    """Packing lower bound; ``value`` is ``None`` unless every condition holds."""

    value: float | None
    candidate: float
    A_Z: float
    B_Z: float
    n: int
    cutoff: int | None
    size: int
    conditions: tuple[ConditionCheck, ...] = field(default=())

    @property
    def failed(self) -> list[str]:
        return [c.name for c in self.conditions if not c.holds]

    def to_json(self) -> dict:
        out = asdict(self)
        out["conditions"] = [asdict(c) for c in self.conditions]
        return out


@dataclass(frozen=True)
class RateSpec:
    s: float
    t: float
    d: int
    exponent: float

    @property
    def parametric(self) -> bool:
        return self.exponent == 0.5

    def to_json(self) -> dict:
        out = asdict(self)
        out["parametric"] = self.parametric
        return out


# ---------------------------------------------------------------------------
# Shell structure of canonical truncation sets
# ---------------------------------------------------------------------------


def _is_canonical(Z: TruncationSet) -> bool:
    return Z.explicit is None and Z.cutoff is not None


def _fourier_shell_counts(k: int, d: int) -> list[tuple[int, int]]:
    """``(j, count)``: indices with ``||z||_inf = k`` and ``j`` nonzero coordinates."""
    if k == 0:
        return []
    return [
        (j, math.comb(d, j) * ((2 * k) ** j - (2 * k - 2) ** j))
        for j in range(1, d + 1)
    ]


def _shell_terms(kind: str, d: int, levels: range, level_weight: Callable[[int], float], power: float):
    """Yield ``(count, sup_norm^power / weight^power)`` per (level, sup-class)."""
    for k in levels:
        w = level_weight(k)
        if kind == HAAR:
            yield 2**k, (2.0 ** (k / 2) / w) ** power
        else:
            for j, count in _fourier_shell_counts(k, d):
                yield count, (2.0 ** (j / 2) / w) ** power


def _sobolev_level_weight(rule: SobolevWeights, kind: str) -> Callable[[int], float]:
    if kind == HAAR:
        return lambda k: 2.0 ** (k * rule.s)
    return lambda k: (1.0 + k * k) ** (rule.s / 2.0)


def _resolve_sup(sup_norms) -> Callable:
    if sup_norms is None:
        return sup_norm
    if callable(sup_norms):
        return sup_norms
    if isinstance(sup_norms, Mapping):
        return lambda z: float(sup_norms[z])
    const = float(sup_norms)
    return lambda z: const


def _safe_weight(rule, z) -> float:
    # an index outside a tabulated class carries no discriminator/generator mass
    try:
        return float(rule(z))
    except WeightUndefinedError:
        return math.inf


# ---------------------------------------------------------------------------
# Upper bound
# ---------------------------------------------------------------------------


def bias_exponent(p: float, q: float) -> float:
    """``1 / (1 - 1/p - 1/q)``, infinite when ``1/p + 1/q = 1``."""
    inv = (0.0 if math.isinf(p) else 1.0 / p) + (0.0 if math.isinf(q) else 1.0 / q)
    if inv > 1.0 + 1e-15:
        raise UnsupportedExponentError(
            f"1 - 1/p - 1/q must be >= 0 for the bias norm; got p={p}, q={q}"
        )
    if abs(1.0 - inv) <= 1e-15:
        return math.inf
    return 1.0 / (1.0 - inv)


def _variance_norm(D: EllipseClass, Z: TruncationSet, sup_norms) -> float:
    pp = D.dual_exponent
    if sup_norms is None and _is_canonical(Z) and isinstance(D.weights, SobolevWeights):
        lw = _sobolev_level_weight(D.weights, Z.kind)
        levels = range(0, Z.cutoff + 1) if Z.kind == HAAR else range(1, Z.cutoff + 1)
        if math.isinf(pp):
            vals = [v for _, v in _shell_terms(Z.kind, Z.d, levels, lw, 1.0)]
            return max(vals, default=0.0)
        total = sum(c * v for c, v in _shell_terms(Z.kind, Z.d, levels, lw, pp))
        return total ** (1.0 / pp)
    sup = _resolve_sup(sup_norms)
    idx = [z for z in Z if not z.is_constant]
    ratios = np.array([sup(z) / _safe_weight(D.weights, z) for z in idx])
    return lp_norm(ratios, pp)


def _sobolev_fourier_tail(gamma: float, r: float, cutoff: int, d: int, terms: int = 100_000):
    """``||((1 + k^2)^{-gamma/2})_{||z||_inf > cutoff}||_r`` and a remainder bound (power r)."""
    if math.isinf(r):
        return (1.0 + (cutoff + 1) ** 2) ** (-gamma / 2.0), 0.0
    expo = r * gamma
    if expo <= d:
        return math.inf, math.inf
    k = np.arange(cutoff + 1, cutoff + 1 + terms, dtype=float)
    counts = (2 * k + 1) ** d - (2 * k - 1) ** d
    partial = float(np.sum(counts * (1.0 + k * k) ** (-expo / 2.0)))
    K = cutoff + terms
    # counts <= 2 d 3^{d-1} k^{d-1} and (1 + k^2)^{-e/2} <= k^{-e}
    remainder = 2 * d * 3 ** (d - 1) * K ** (d - expo) / (expo - d)
    return (partial + remainder) ** (1.0 / r), remainder


def _haar_tail(gamma: float, r: float, cutoff: int):
    if math.isinf(r):
        return 2.0 ** (-(cutoff + 1) * gamma), 0.0
    ratio = 2.0 ** (1.0 - r * gamma)
    if ratio >= 1.0:
        return math.inf, math.inf
    first = 2.0 ** ((cutoff + 1) * (1.0 - r * gamma))
    return (first / (1.0 - ratio)) ** (1.0 / r), 0.0


def _bias_norm(D: EllipseClass, G: EllipseClass, Z: TruncationSet, tail_cap: int | None):
    r = bias_exponent(D.p, G.p)
    sob = isinstance(D.weights, SobolevWeights) and isinstance(G.weights, SobolevWeights)
    if sob and _is_canonical(Z):
        gamma = D.weights.s + G.weights.s
        if gamma < 0:
            raise ValueError("smoothness orders must be non-negative")
        if Z.kind == HAAR:
            val, rem = _haar_tail(gamma, r, Z.cutoff)
        else:
            val, rem = _sobolev_fourier_tail(gamma, r, Z.cutoff, Z.d)
        return val, rem, ()
    # generic: enumerate the complement of Z inside a larger cube
    top = max((z.level for z in Z), default=0)
    cap = tail_cap if tail_cap is not None else top + (50 if Z.d == 1 else 8)
    outer = enumerate_truncation(Z.kind, cap, Z.d, zero_mean=True)
    inside = set(Z)
    tail = [z for z in outer if z not in inside]
    inv = np.array([1.0 / (_safe_weight(D.weights, z) * _safe_weight(G.weights, z)) for z in tail])
    flags = ()
    last = [v for z, v in zip(tail, inv) if z.level == cap]
    if any(v > 0 for v in last):
        flags = (TAIL_TRUNCATED,)
    return lp_norm(inv, r), (math.nan if flags else 0.0), flags


def upper_bound_risk(
    D: EllipseClass,
    G: EllipseClass,
    Z: TruncationSet,
    n: int,
    sup_norms=None,
    tail_cap: int | None = None,
) -> BoundReport:
    """Variance + bias bound on ``E d_{F_D}(P, P_hat_Z)`` over ``P`` in ``F_G``.

    variance = ``L_D / sqrt(n) * ||(sup_norm(z) / a_z)_{z in Z}||_{p'}``
    bias = ``L_D L_G ||(1 / (a_z b_z))_{z not in Z}||_{1/(1 - 1/p - 1/q)}``

    ``sup_norms`` overrides the basis sup-norms (a mapping, callable or
    constant).  The moment constant of the variance term is exactly one for
    ``p = 2``; for other ``p`` it is set to one and the report is flagged
    ``constant-unspecified``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    flags: list[str] = []
    if D.p != 2:
        flags.append(CONSTANT_UNSPECIFIED)
    variance = D.radius / math.sqrt(n) * _variance_norm(D, Z, sup_norms)
    bias_norm, remainder, extra = _bias_norm(D, G, Z, tail_cap)
    flags.extend(extra)
    bias = D.radius * G.radius * bias_norm
    if math.isinf(bias):
        flags.append(BIAS_DIVERGES)
    size = len(Z) - (1 if Z.include_constant else 0)
    return BoundReport(variance, bias, n, Z.cutoff, size, tuple(flags), remainder)


# ---------------------------------------------------------------------------
# Lower bound
# ---------------------------------------------------------------------------


def _z_summaries(Z: TruncationSet, D: EllipseClass, G: EllipseClass):
    """``(|Z|, sup a, sup b, sum sup_norm)`` over the non-constant part of ``Z``."""
    if _is_canonical(Z) and isinstance(D.weights, SobolevWeights) and isinstance(G.weights, SobolevWeights):
        zeta, d = Z.cutoff, Z.d
        if Z.kind == HAAR:
            size = 2 ** (zeta + 1) - 1
            sup_sum = sum(2**i * 2.0 ** (i / 2) for i in range(zeta + 1))
        else:
            size = (2 * zeta + 1) ** d - 1
            sup_sum = (1.0 + 2.0 * math.sqrt(2.0) * zeta) ** d - 1.0
        lo = 0 if Z.kind == HAAR else 1
        la = _sobolev_level_weight(D.weights, Z.kind)
        lb = _sobolev_level_weight(G.weights, Z.kind)
        levels = range(lo, zeta + 1)
        return size, max(map(la, levels), default=0.0), max(map(lb, levels), default=0.0), sup_sum
    idx = [z for z in Z if not z.is_constant]
    a = max((_safe_weight(D.weights, z) for z in idx), default=0.0)
    b = max((_safe_weight(G.weights, z) for z in idx), default=0.0)
    return len(idx), a, b, float(sum(sup_norm(z) for z in idx))


def lower_bound(D: EllipseClass, G: EllipseClass, Z: TruncationSet, n: int, convention: str = "sqrt") -> LowerBoundReport:
    """Packing lower bound ``L_G L_D |Z| / (64 A_Z B_Z)`` with its conditions.

    ``A_Z = |Z|^{1/2} sup_Z a_z`` and ``B_Z = |Z|^{1/2} sup_Z b_z`` by default;
    ``convention="lp"`` uses ``|Z|^{1/p}`` and ``|Z|^{1/q}`` instead.
    The bound is reported only if ``B_Z >= 16 L_G sqrt(n / log 2)``,
    ``2 (L_G / B_Z) sum_Z ||phi_z||_inf <= 1`` and ``p, q >= 2`` all hold.
    """
    size, amax, bmax, sup_sum = _z_summaries(Z, D, G)
    if size == 0:
        raise ValueError("the truncation set has no non-constant index")
    if convention == "sqrt":
        ea = eb = 0.5
    elif convention == "lp":
        ea = 0.0 if math.isinf(D.p) else 1.0 / D.p
        eb = 0.0 if math.isinf(G.p) else 1.0 / G.p
    else:
        raise ValueError(f"unknown convention {convention!r}")
    L_D, L_G = D.radius, G.radius
    A = size**ea * amax
    B = size**eb * bmax
    need = 16.0 * L_G * math.sqrt(n / math.log(2.0))
    dens = 2.0 * L_G / B * sup_sum
    checks = (
        ConditionCheck("B_Z >= 16 L_G sqrt(n/log 2)", B, need, B >= need),
        ConditionCheck("2 (L_G/B_Z) sum_z ||phi_z||_inf <= 1", dens, 1.0, dens <= 1.0),
        ConditionCheck("p, q >= 2", min(D.p, G.p), 2.0, min(D.p, G.p) >= 2.0),
    )
    candidate = L_G * L_D * size / (64.0 * A * B)
    value = candidate if all(c.holds for c in checks) else None
    return LowerBoundReport(value, candidate, A, B, n, Z.cutoff, size, checks)


def lower_bound_zeta(t: float, d: int, n: int, L_G: float = 1.0) -> int:
    """Smallest integer cutoff at least ``(256 L_G^2 n / log 2)^{1/(2t + d)}``."""
    return max(1, math.ceil((256.0 * L_G**2 * n / math.log(2.0)) ** (1.0 / (2.0 * t + d)) - 1e-9))


# ---------------------------------------------------------------------------
# Parametric constant
# ---------------------------------------------------------------------------

CONVERGED = "converged"
DIVERGES = "diverges"


@dataclass(frozen=True)
class ParametricConstant:
    """``A = sum sup_norm(z)^2 / a_z^2``: shells up to ``cap``, a tail bound, and a verdict."""

    A: float
    verdict: str
    shell_sums: np.ndarray
    cap: int
    tail: float = 0.0  # analytic bound on the shells past ``cap`` (Sobolev weights only)

    @property
    def converged(self) -> bool:
        return self.verdict == CONVERGED

    def bound(self, n: int, radius: float = 1.0) -> float:
        """``L_D sqrt(A / n)``; infinite when the series diverges."""
        if not self.converged:
            return math.inf
        return radius * math.sqrt(self.A / n)


def _numeric_verdict(shells: np.ndarray) -> str:
    tail = shells[len(shells) // 2:]
    if tail.size < 2 or not np.any(tail > 0):
        return CONVERGED
    if np.all(tail > 0):
        ratios = tail[1:] / tail[:-1]
        if np.all(ratios <= 0.9):
            return CONVERGED
        k = np.arange(len(shells) // 2, len(shells)) + 1.0
        slope = np.polyfit(np.log(k), np.log(tail), 1)[0]
        return CONVERGED if slope < -1.1 else DIVERGES
    return DIVERGES


def parametric_constant(weights, kind: str = FOURIER, d: int = 1, cap: int = 30, sup_norms=None) -> ParametricConstant:
    """Accumulate ``A`` shell by shell (shell ``k`` holds the indices of level ``k``).

    Sobolev weights get the analytic verdict (``2s > d`` for Fourier,
    ``s > 1`` for Haar with sup-norms); other rules use a ratio test on the
    last shells with a power-law fallback.  Indices without a tabulated
    weight lie outside the class and contribute nothing.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    if isinstance(weights, EllipseClass):
        weights = weights.weights
    if isinstance(weights, SobolevWeights) and sup_norms is None:
        lw = _sobolev_level_weight(weights, kind)
        levels = range(0, cap + 1) if kind == HAAR else range(1, cap + 1)
        shells = np.array([
            sum(c * v for c, v in _shell_terms(kind, d, range(k, k + 1), lw, 2.0)) for k in levels
        ])
        ok = weights.s > 1 if kind == HAAR else 2 * weights.s > d
        verdict = CONVERGED if ok else DIVERGES
        tail = _sobolev_a_tail(weights.s, kind, d, cap) if ok else math.inf
    else:
        sup = _resolve_sup(sup_norms)
        Z = enumerate_truncation(kind, cap, d, zero_mean=True)
        lo = 0 if kind == HAAR else 1
        shells = np.zeros(cap + 1 - lo)
        for z in Z:
            w = _safe_weight(weights, z)
            shells[z.level - lo] += (sup(z) / w) ** 2
        verdict = _numeric_verdict(shells)
        tail = 0.0
    return ParametricConstant(float(shells.sum()) + tail, verdict, shells, cap, tail)


def _sobolev_a_tail(s: float, kind: str, d: int, cap: int) -> float:
    """Upper bound on the shells beyond ``cap`` of ``A`` for Sobolev weights."""
    if kind == HAAR:
        # shell i is 2^i indices of sup-norm^2 2^i over weight^2 2^{2is}
        r = 2.0 ** (2.0 - 2.0 * s)
        return r ** (cap + 1) / (1.0 - r)
    # level-k shell: at most 2d (2k + 1)^{d-1} <= 2d (3k)^{d-1} indices,
    # sup-norm^2 <= 2^d and weight^2 >= k^{2s}; sum over k > cap by the integral
    e = 2.0 * s - d + 1.0
    return 2.0**d * 2.0 * d * 3.0 ** (d - 1) * cap ** (1.0 - e) / (e - 1.0)


# ---------------------------------------------------------------------------
# Sobolev rates
# ---------------------------------------------------------------------------


def sobolev_rate(s: float, t: float, d: int) -> RateSpec:
    """Exponent ``min{1/2, (s + t) / (2t + d)}`` of the Sobolev minimax rate."""
    if s < 0 or t < 0:
        raise ValueError("smoothness orders must be non-negative")
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if s == 0 and t == 0:
        raise ValueError("s = t = 0 gives rate exponent 0: no consistent estimation")
    return RateSpec(s, t, d, min(0.5, (s + t) / (2 * t + d)))


def oracle_zeta(t: float, d: int, n: int) -> int:
    """``round(n^{1/(2t + d)})``, at least one."""
    if n < 1:
        raise ValueError("n must be positive")
    return max(1, round(n ** (1.0 / (2.0 * t + d))))


def sobolev_classes(s: float, t: float, L_D: float = 1.0, L_G: float = 1.0) -> tuple[EllipseClass, EllipseClass]:
    """``(W^{s,2}(L_D), W^{t,2}(L_G))`` as ellipses."""
    return EllipseClass(2.0, L_D, SobolevWeights(s)), EllipseClass(2.0, L_G, SobolevWeights(t))


def sobolev_upper_constant(s: float, d: int, L_D: float = 1.0, L_G: float = 1.0) -> float:
    """``L_D (2 sqrt(c) + L_G)`` with ``c = 2^{d - 2s} d / (d - 2s)``; needs ``s < d/2``."""
    if not 2 * s < d:
        raise ValueError("the constant is defined for s < d/2")
    c = 2.0 ** (d - 2 * s) * d / (d - 2 * s)
    return L_D * (2.0 * math.sqrt(c) + L_G)


def sobolev_lower_constant(s: float, t: float, d: int, L_D: float = 1.0, L_G: float = 1.0) -> float:
    """``(L_G L_D / 64) (log 2 / (256 L_G^2))^{(t + s)/(2t + d)}``."""
    return L_G * L_D / 64.0 * (math.log(2.0) / (256.0 * L_G**2)) ** ((t + s) / (2 * t + d))
