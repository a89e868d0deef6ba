"""Adversarial losses over generalized ellipses.

For a discriminator class ``H_{p,a}(L) = {f : ||(a_z f_z)||_p <= L}`` and a
coefficient difference ``delta = P - Q``, Hoelder duality gives the closed form

    d(P, Q) = sup_f sum_z f_z delta_z = L * ||(delta_z / a_z)||_{p'}

with ``p' = p / (p - 1)``.  MMD with a translation-invariant kernel is the
``p = 2`` case with weights taken from the kernel spectrum.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass

import numpy as np

from .basis import (
    CoefficientVector,
    SobolevWeights,
    SpectrumWeights,
    WeightRule,
    WeightUndefinedError,
    design_matrix,
    enumerate_truncation,
    weight_values,
)


def holder_conjugate(p: float) -> float:
    if p < 1:
        raise ValueError(f"exponent must be >= 1, got {p}")
    if p == 1:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


def lp_norm(x: np.ndarray, p: float) -> float:
    x = np.abs(np.asarray(x, dtype=float))
    if x.size == 0:
        return 0.0
    if math.isinf(p):
        return float(x.max())
    top = x.max()
    if top == 0.0:
        return 0.0
    # rescale so large p does not overflow
    return float(top * np.sum((x / top) ** p) ** (1.0 / p))


@dataclass(frozen=True)
class EllipseClass:
    """The generalized ellipse ``H_{p,a}(L)``."""

    p: float
    radius: float
    weights: WeightRule

    def __post_init__(self):
        if not self.p >= 1:
            raise ValueError(f"ellipse exponent must be in [1, inf], got {self.p}")
        if not self.radius > 0:
            raise ValueError(f"ellipse radius must be positive, got {self.radius}")

    @property
    def dual_exponent(self) -> float:
        return holder_conjugate(self.p)

    def with_radius(self, radius: float) -> EllipseClass:
        return EllipseClass(self.p, radius, self.weights)


def sobolev_ball(s: float, radius: float = 1.0, p: float = 2.0) -> EllipseClass:
    return EllipseClass(p, radius, SobolevWeights(s))


def _weights_on(delta: CoefficientVector, rule: WeightRule) -> np.ndarray:
    a = weight_values(rule, delta.indices)
    bad = ~(a > 0)
    if np.any(bad):
        z = delta.indices[int(np.argmax(bad))]
        raise WeightUndefinedError(f"weight at {z!r} is not positive")
    return a


def adversarial_loss(delta: Mapping, D: EllipseClass) -> float:
    """``d_{F_D}`` for the coefficient difference ``delta`` (exact)."""
    delta = delta if isinstance(delta, CoefficientVector) else CoefficientVector(delta)
    if not len(delta):
        return 0.0
    a = _weights_on(delta, D.weights)
    return D.radius * lp_norm(delta.values / a, D.dual_exponent)


def adversarial_distance(P, Q, D: EllipseClass) -> float:
    """``d_{F_D}(P, Q)`` for two finite-spectrum densities."""
    return adversarial_loss(P.coeffs - Q.coeffs, D)


def optimal_discriminator(delta: Mapping, D: EllipseClass) -> CoefficientVector:
    """The maximiser ``f`` of ``sum_z f_z delta_z`` over the ellipse (``1 < p < inf``)."""
    delta = delta if isinstance(delta, CoefficientVector) else CoefficientVector(delta)
    if math.isinf(D.p) or D.p == 1:
        raise ValueError("the explicit maximiser is only provided for 1 < p < inf")
    vals = delta.values if len(delta) else np.zeros(0)
    if not np.any(vals != 0):
        raise ValueError("delta is zero; the maximiser is not unique")
    a = _weights_on(delta, D.weights)
    q = D.dual_exponent
    r = vals / a
    norm = lp_norm(r, q)
    f = D.radius * np.sign(r) * (np.abs(r) / norm) ** (q - 1.0) / a
    return CoefficientVector(zip(delta.indices, f))


@dataclass(frozen=True)
class Membership:
    norm: float
    is_member: bool


def ellipse_membership(c: Mapping, E: EllipseClass, rtol: float = 0.0) -> Membership:
    """``||(a_z c_z)||_p`` and whether it is within the radius (up to ``rtol``)."""
    c = c if isinstance(c, CoefficientVector) else CoefficientVector(c)
    if not len(c):
        return Membership(0.0, True)
    a = weight_values(E.weights, c.indices)
    norm = lp_norm(a * c.values, E.p)
    return Membership(norm, norm <= E.radius * (1.0 + rtol))


# ---------------------------------------------------------------------------
# MMD
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelSpectrum:
    """Tabulated spectral amplitudes ``kappa_z`` of a translation-invariant kernel.

    The kernel is ``k(x, y) = sum_z kappa_z^2 phi_z(x) phi_z(y)`` and its unit
    RKHS ball is the ellipse with weights ``a_z = 1 / |kappa_z|``.
    """

    amplitudes: CoefficientVector

    @classmethod
    def from_function(cls, fn, Z: Iterable) -> KernelSpectrum:
        return cls(CoefficientVector((z, fn(z)) for z in Z if not z.is_constant))

    @classmethod
    def geometric(cls, base: float = 2.0, cutoff: int = 30, d: int = 1, kind: str = "fourier") -> KernelSpectrum:
        """``kappa_z = base^{-level(z)}`` on the truncation set of the given cutoff."""
        Z = enumerate_truncation(kind, cutoff, d, zero_mean=True)
        return cls.from_function(lambda z: base ** (-z.level), Z)

    @property
    def weights(self) -> SpectrumWeights:
        return SpectrumWeights(self.amplitudes)

    def ball(self, radius: float = 1.0) -> EllipseClass:
        return EllipseClass(2.0, radius, self.weights)

    def features(self, x) -> np.ndarray:
        return design_matrix(self.amplitudes.indices, x) * np.abs(self.amplitudes.values)

    def kernel(self, x, y) -> np.ndarray:
        """Gram matrix ``k(x_i, y_j)``."""
        return self.features(x) @ self.features(y).T


def mmd_spectral(delta: Mapping, k: KernelSpectrum, radius: float = 1.0) -> float:
    """MMD from the coefficient difference: ``L * sqrt(sum kappa_z^2 delta_z^2)``."""
    return adversarial_loss(delta, k.ball(radius))


def _gram_mean(k: KernelSpectrum, X: np.ndarray, Y: np.ndarray, block: int) -> float:
    fy = k.features(Y)
    total = 0.0
    for start in range(0, X.shape[0], block):
        total += float((k.features(X[start:start + block]) @ fy.T).sum())
    return total / (X.shape[0] * Y.shape[0])


def _points(S) -> np.ndarray:
    pts = getattr(S, "points", S)
    pts = np.asarray(pts, dtype=float)
    return pts.reshape(-1, 1) if pts.ndim == 1 else pts


def mmd_vstat(X, Y, k: KernelSpectrum, block: int = 2048) -> float:
    """Biased (V-statistic) MMD estimate from two samples.

    Evaluates the three kernel Gram-matrix means blockwise; cost is
    ``O(|X| |Y|)`` kernel evaluations, the only quadratic operation here.
    """
    X, Y = _points(X), _points(Y)
    if X.shape[0] == 0 or Y.shape[0] == 0:
        raise ValueError("MMD needs non-empty samples")
    val = _gram_mean(k, X, X, block) - 2.0 * _gram_mean(k, X, Y, block) + _gram_mean(k, Y, Y, block)
    return math.sqrt(max(val, 0.0))


def mmd_stderr(X, Y, k: KernelSpectrum) -> float:
    """Null-scale standard error of :func:`mmd_vstat`.

    ``sqrt(sum_z kappa_z^2 (Var_X phi_z / |X| + Var_Y phi_z / |Y|))``, the
    root mean square of the V-statistic when both samples share one law.
    """
    X, Y = _points(X), _points(Y)
    fx, fy = k.features(X), k.features(Y)
    var = fx.var(axis=0) / X.shape[0] + fy.var(axis=0) / Y.shape[0]
    return float(np.sqrt(var.sum()))

