"""Orthonormal bases of L^2 on the unit cube.

Two families are supported:

* ``fourier`` -- the real tensorized trigonometric system on ``[0, 1]^d``.  A
  multi-index ``z`` in ``Z^d`` selects, coordinate by coordinate, ``1`` for
  ``z_j = 0``, ``sqrt(2) cos(2 pi k x_j)`` for ``z_j = +k`` and
  ``sqrt(2) sin(2 pi k x_j)`` for ``z_j = -k``.
* ``haar`` -- the Haar wavelets ``psi_{i,j}`` on ``[0, 1]`` with level ``i >= 0``
  and position ``1 <= j <= 2^i``.

Both families include the constant function, represented by :data:`CONSTANT`.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np

FOURIER = "fourier"
HAAR = "haar"
BASIS_KINDS = (FOURIER, HAAR)

SQRT2 = math.sqrt(2.0)
TWO_PI = 2.0 * math.pi


class UnsupportedDimensionError(ValueError):
    """Raised when a basis is requested in a dimension it does not support."""


class DimensionMismatchError(ValueError):
    """Raised when points and indices disagree on the dimension."""


@dataclass(frozen=True, order=True)
class BasisIndex:
    """Identifies one basis function.

    ``kind`` is ``"constant"``, ``"fourier"`` or ``"haar"``; ``key`` is the
    signed multi-index for Fourier and ``(level, position)`` for Haar.  Build
    instances with :func:`fourier`, :func:`haar` or :data:`CONSTANT` rather
    than directly, so that the all-zero Fourier index collapses to the
    constant.
    """

    kind: str
    key: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind == HAAR:
            level, position = self.key
            if level < 0 or not 1 <= position <= 2**level:
                raise ValueError(f"invalid Haar index (level={level}, position={position})")
        elif self.kind == FOURIER:
            if not self.key or not any(self.key):
                raise ValueError("the zero Fourier index is the constant; use CONSTANT")
        elif self.kind != "constant":
            raise ValueError(f"unknown basis index kind {self.kind!r}")

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    @property
    def dim(self) -> int | None:
        """Dimension of the index, or ``None`` for the constant."""
        if self.kind == FOURIER:
            return len(self.key)
        if self.kind == HAAR:
            return 1
        return None

    @property
    def level(self) -> int:
        """Frequency level: ``||z||_inf`` for Fourier, ``i`` for Haar, 0 for the constant."""
        if self.kind == FOURIER:
            return max(abs(k) for k in self.key)
        if self.kind == HAAR:
            return self.key[0]
        return 0

    def to_json(self) -> list[int]:
        return list(self.key)

    def __repr__(self):
        if self.is_constant:
            return "CONSTANT"
        return f"{self.kind}{self.key}"


CONSTANT = BasisIndex("constant")


def fourier(*z: int) -> BasisIndex:
    """Fourier index for the signed multi-index ``z`` (all-zero gives :data:`CONSTANT`)."""
    if len(z) == 1 and not isinstance(z[0], (int, np.integer)):
        z = tuple(z[0])
    z = tuple(int(k) for k in z)
    if not any(z):
        return CONSTANT
    return BasisIndex(FOURIER, z)


def haar(level: int, position: int) -> BasisIndex:
    return BasisIndex(HAAR, (int(level), int(position)))


def index_from_json(kind: str, key: Iterable[int]) -> BasisIndex:
    key = [int(k) for k in key]
    if not key:
        return CONSTANT
    if kind == FOURIER:
        return fourier(*key)
    if kind == HAAR:
        return haar(*key)
    raise ValueError(f"unknown basis kind {kind!r}")


# ---------------------------------------------------------------------------
# Coefficient vectors
# ---------------------------------------------------------------------------


class CoefficientVector(Mapping):
    """Finite sparse map from :class:`BasisIndex` to a real coefficient.

    Iteration follows the canonical (lexicographic) index order.  Supports
    ``+``, ``-``, unary ``-`` and scalar ``*``; missing entries count as 0.
    """

    __slots__ = ("_data",)

    def __init__(self, items: Mapping | Iterable | None = None):
        if items is None:
            items = ()
        elif isinstance(items, Mapping):
            items = items.items()
        data: dict[BasisIndex, float] = {}
        for z, c in items:
            if not isinstance(z, BasisIndex):
                raise TypeError(f"coefficient key must be a BasisIndex, got {z!r}")
            data[z] = data.get(z, 0.0) + float(c)
        self._data = dict(sorted(data.items()))

    def __getitem__(self, z):
        return self._data[z]

    def __iter__(self) -> Iterator[BasisIndex]:
        return iter(self._data)

    def __len__(self):
        return len(self._data)

    def get(self, z, default=0.0):
        return self._data.get(z, default)

    def __repr__(self):
        return f"CoefficientVector({self._data!r})"

    def _combine(self, other: Mapping, sign: float) -> CoefficientVector:
        out = dict(self._data)
        for z, c in other.items():
            out[z] = out.get(z, 0.0) + sign * c
        return CoefficientVector(out)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __neg__(self):
        return CoefficientVector({z: -c for z, c in self._data.items()})

    def __mul__(self, scalar):
        return CoefficientVector({z: scalar * c for z, c in self._data.items()})

    __rmul__ = __mul__

    @property
    def indices(self) -> list[BasisIndex]:
        return list(self._data)

    @property
    def values(self) -> np.ndarray:
        return np.fromiter(self._data.values(), dtype=float, count=len(self._data))


# ---------------------------------------------------------------------------
# Truncation sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TruncationSet:
    """A finite index set ``Z``.

    Sets produced by :func:`enumerate_truncation` record the cutoff and
    dimension and materialise ``indices`` lazily, so that large cubes can be
    handled analytically by :mod:`advloss.bounds`.  Arbitrary index lists are
    accepted through :meth:`from_indices` (``cutoff`` is then ``None``).
    """

    kind: str
    d: int
    cutoff: int | None
    include_constant: bool = True
    explicit: tuple[BasisIndex, ...] | None = field(default=None, repr=False)

    @classmethod
    def from_indices(cls, kind: str, d: int, indices: Iterable[BasisIndex]) -> TruncationSet:
        idx = tuple(sorted(set(indices)))
        for z in idx:
            if z.dim is not None and z.dim != d:
                raise DimensionMismatchError(f"index {z!r} is not {d}-dimensional")
        return cls(kind, d, None, CONSTANT in idx, idx)

    @cached_property
    def indices(self) -> tuple[BasisIndex, ...]:
        if self.explicit is not None:
            return self.explicit
        if self.kind == FOURIER:
            rng = range(-self.cutoff, self.cutoff + 1)
            out = [fourier(*z) for z in itertools.product(rng, repeat=self.d)]
        else:
            out = [haar(i, j) for i in range(self.cutoff + 1) for j in range(1, 2**i + 1)]
        if self.include_constant and CONSTANT not in out:
            out.append(CONSTANT)
        if not self.include_constant:
            out = [z for z in out if not z.is_constant]
        return tuple(sorted(out))

    def __len__(self):
        if self.explicit is None and self.cutoff is not None:
            if self.kind == FOURIER:
                return (2 * self.cutoff + 1) ** self.d - (0 if self.include_constant else 1)
            return 2 ** (self.cutoff + 1) - 1 + (1 if self.include_constant else 0)
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, z):
        if self.explicit is None and self.cutoff is not None and isinstance(z, BasisIndex):
            if z.is_constant:
                return self.include_constant
            return z.kind == self.kind and z.dim == self.d and z.level <= self.cutoff
        return z in self.indices

    def nonconstant(self) -> TruncationSet:
        """The same set with the constant removed."""
        if self.explicit is not None:
            return TruncationSet.from_indices(
                self.kind, self.d, (z for z in self.explicit if not z.is_constant)
            )
        return TruncationSet(self.kind, self.d, self.cutoff, include_constant=False)


def enumerate_truncation(kind: str, zeta: int, d: int = 1, *, zero_mean: bool = False) -> TruncationSet:
    """Return the canonical truncation set of cutoff ``zeta``.

    Fourier: all ``z`` with ``||z||_inf <= zeta`` (the constant is dropped when
    ``zero_mean`` is set).  Haar: all ``(i, j)`` with ``i <= zeta``; the Haar
    set never contains the constant.
    """
    if kind not in BASIS_KINDS:
        raise ValueError(f"unknown basis kind {kind!r}")
    if zeta < 0 or int(zeta) != zeta:
        raise ValueError(f"cutoff must be a non-negative integer, got {zeta}")
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if kind == HAAR:
        if d != 1:
            raise UnsupportedDimensionError("the Haar basis is only available for d = 1")
        return TruncationSet(HAAR, 1, int(zeta), include_constant=False)
    return TruncationSet(FOURIER, d, int(zeta), include_constant=not zero_mean)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def _as_points(x, d: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(-1, 1) if d in (None, 1) else x.reshape(1, -1)
    if d is not None and x.shape[1] != d:
        raise DimensionMismatchError(f"expected {d}-dimensional points, got shape {x.shape}")
    return x


def _haar_values(level: np.ndarray, position: np.ndarray, x: np.ndarray) -> np.ndarray:
    # x: (n,), level/position: (m,) -> (n, m)
    scale = 2.0 ** level
    u = x[:, None] * scale[None, :]
    cell = np.minimum(np.floor(u), scale - 1)
    frac = u - cell
    sign = np.where(frac < 0.5, 1.0, -1.0)
    return np.where(cell == position - 1, np.sqrt(scale) * sign, 0.0)


def design_matrix(indices: Iterable[BasisIndex], x) -> np.ndarray:
    """Evaluate every basis function in ``indices`` at every point of ``x``.

    ``x`` has shape ``(n, d)`` (a 1-d array is read as ``n`` points in d = 1).
    Returns an ``(n, len(indices))`` array.
    """
    indices = list(indices)
    dims = {z.dim for z in indices if z.dim is not None}
    if len(dims) > 1:
        raise DimensionMismatchError(f"indices of mixed dimension: {sorted(dims)}")
    d = dims.pop() if dims else None
    pts = _as_points(x, d)
    n = pts.shape[0]
    out = np.ones((n, len(indices)))

    four = [c for c, z in enumerate(indices) if z.kind == FOURIER]
    if four:
        keys = np.array([indices[c].key for c in four], dtype=np.int64)
        kmax = int(np.abs(keys).max())
        k = np.arange(1, kmax + 1)
        arg = TWO_PI * pts[:, :, None] * k[None, None, :]
        table = np.concatenate(
            [SQRT2 * np.sin(arg)[:, :, ::-1], np.ones((n, pts.shape[1], 1)), SQRT2 * np.cos(arg)],
            axis=2,
        )
        # table[:, j, kmax + z_j] is the coordinate factor for z_j
        cols = table[:, np.arange(pts.shape[1])[None, :], keys + kmax]
        out[:, four] = cols.prod(axis=2)

    hw = [c for c, z in enumerate(indices) if z.kind == HAAR]
    if hw:
        lv = np.array([indices[c].key[0] for c in hw], dtype=float)
        ps = np.array([indices[c].key[1] for c in hw], dtype=float)
        out[:, hw] = _haar_values(lv, ps, pts[:, 0])
    return out


def eval_basis(z: BasisIndex, x):
    """Value of ``phi_z`` at ``x``; scalar for a single point, array otherwise."""
    x_arr = np.asarray(x, dtype=float)
    if z.dim is not None and x_arr.ndim == 1 and z.dim > 1 and x_arr.shape[0] != z.dim:
        raise DimensionMismatchError(f"index {z!r} needs {z.dim}-dimensional points")
    vals = design_matrix([z], x)[:, 0]
    single = x_arr.ndim == 0 or (x_arr.ndim == 1 and z.dim not in (None, 1))
    return float(vals[0]) if single else vals


def sup_norm(z: BasisIndex) -> float:
    """``sup_x |phi_z(x)|``."""
    if z.kind == FOURIER:
        return SQRT2 ** sum(1 for k in z.key if k != 0)
    if z.kind == HAAR:
        return 2.0 ** (z.key[0] / 2.0)
    return 1.0


# ---------------------------------------------------------------------------
# Smoothness weights
# ---------------------------------------------------------------------------


class WeightUndefinedError(KeyError):
    """Raised when a weight rule has no value at an index."""


@dataclass(frozen=True)
class SobolevWeights:
    """``a_z = (1 + ||z||_inf^2)^{s/2}`` (Fourier) or ``2^{i s}`` (Haar)."""

    s: float

    def __call__(self, z: BasisIndex) -> float:
        if z.kind == HAAR:
            return 2.0 ** (z.key[0] * self.s)
        return (1.0 + z.level**2) ** (self.s / 2.0)


@dataclass(frozen=True)
class TableWeights:
    """Weights read from an explicit table; missing indices raise."""

    table: Mapping

    def __call__(self, z: BasisIndex) -> float:
        try:
            return float(self.table[z])
        except KeyError:
            raise WeightUndefinedError(f"no tabulated weight for {z!r}") from None


@dataclass(frozen=True)
class SpectrumWeights:
    """Weights induced by a kernel spectrum: ``a_z = 1 / |kappa_z|``."""

    spectrum: Mapping

    def __call__(self, z: BasisIndex) -> float:
        try:
            amp = abs(float(self.spectrum[z]))
        except KeyError:
            raise WeightUndefinedError(f"kernel spectrum has no entry for {z!r}") from None
        return math.inf if amp == 0.0 else 1.0 / amp


WeightRule = Union[SobolevWeights, TableWeights, SpectrumWeights]


def weight(rule: WeightRule, z: BasisIndex) -> float:
    """Evaluate ``rule`` at ``z``."""
    return rule(z)


def weight_values(rule: WeightRule, indices: Iterable[BasisIndex]) -> np.ndarray:
    return np.array([rule(z) for z in indices], dtype=float)
