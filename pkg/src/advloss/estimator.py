"""Truncated orthogonal series estimator and leave-one-out cross-validation."""

from __future__ import annotations

import csv
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .basis import FOURIER, BasisIndex, CoefficientVector, TruncationSet, design_matrix, enumerate_truncation
from .density import SeriesDensity

# keeps the n x |Z| design matrix under ~64 MB
_CHUNK_ENTRIES = 8_000_000


class Dataset:
    """``n`` points in ``[0, 1]^d`` stored as an ``(n, d)`` float array."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[1] < 1:
            raise ValueError(f"points must have shape (n, d), got {pts.shape}")
        if pts.shape[0] < 1:
            raise ValueError("a dataset needs at least one point")
        if not np.all(np.isfinite(pts)) or pts.min() < 0.0 or pts.max() > 1.0:
            raise ValueError("all coordinates must lie in [0, 1]")
        self.points = pts

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"Dataset(n={self.n}, d={self.d})"

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{j + 1}" for j in range(self.d)])
            for row in self.points:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> Dataset:
        path = Path(path)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ValueError(f"{path}: empty file") from None
            expected = [f"x{j + 1}" for j in range(len(header))]
            if [h.strip() for h in header] != expected:
                raise ValueError(f"{path}: header must be {','.join(expected)}, got {','.join(header)}")
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise ValueError(f"{path}: row {lineno} has {len(row)} columns, expected {len(header)}")
                try:
                    rows.append([float(v) for v in row])
                except ValueError:
                    raise ValueError(f"{path}: row {lineno} is not numeric") from None
        if not rows:
            raise ValueError(f"{path}: no data rows")
        try:
            return cls(rows)
        except ValueError as exc:
            raise ValueError(f"{path}: {exc}") from None


def _as_dataset(data) -> Dataset:
    return data if isinstance(data, Dataset) else Dataset(data)


def _chunks(n: int, width: int):
    step = max(1, _CHUNK_ENTRIES // max(width, 1))
    for start in range(0, n, step):
        yield slice(start, min(n, start + step))


def _moments(data: Dataset, indices: Sequence[BasisIndex]) -> tuple[np.ndarray, np.ndarray]:
    """Column sums of ``phi_z(X_i)`` and ``phi_z(X_i)^2``."""
    s1 = np.zeros(len(indices))
    s2 = np.zeros(len(indices))
    if not indices:
        return s1, s2
    for sl in _chunks(data.n, len(indices)):
        phi = design_matrix(indices, data.points[sl])
        s1 += phi.sum(axis=0)
        s2 += (phi * phi).sum(axis=0)
    return s1, s2


def empirical_coefficient(data, z: BasisIndex) -> float:
    """``(1/n) sum_i phi_z(X_i)``."""
    data = _as_dataset(data)
    if z.dim is not None and z.dim != data.d:
        raise ValueError(f"index {z!r} does not match {data.d}-dimensional data")
    return float(design_matrix([z], data.points)[:, 0].mean())


def empirical_coefficients(data, indices: Iterable[BasisIndex]) -> CoefficientVector:
    data = _as_dataset(data)
    idx = [z for z in indices if not z.is_constant]
    s1, _ = _moments(data, idx)
    return CoefficientVector(zip(idx, s1 / data.n))


def _kind_of(Z) -> str:
    return getattr(Z, "kind", None) or next((z.kind for z in Z if not z.is_constant), FOURIER)


def series_estimate(data, Z: TruncationSet | Iterable[BasisIndex]) -> SeriesDensity:
    """The truncated series estimate ``1 + sum_{z in Z} P_hat_z phi_z``.

    The constant is handled implicitly (its coefficient is always one), so a
    constant index in ``Z`` is ignored.  The estimate is not clipped.
    """
    data = _as_dataset(data)
    return SeriesDensity(data.d, _kind_of(Z), empirical_coefficients(data, Z))


@dataclass(frozen=True)
class CVTerms:
    """Per-index pieces of the leave-one-out score, in canonical index order."""

    indices: tuple[BasisIndex, ...]
    contributions: np.ndarray

    def score(self, mask=None) -> float:
        c = self.contributions if mask is None else self.contributions[mask]
        return float(-1.0 + c.sum())


def cv_terms(data, indices: Iterable[BasisIndex]) -> CVTerms:
    """Per-index contributions to the leave-one-out criterion.

    With ``S1 = sum_i phi_z(X_i)`` and ``S2 = sum_i phi_z(X_i)^2`` each
    non-constant index adds ``P_hat_z^2 - 2 (S1^2 - S2) / (n (n - 1))``; the
    constant contributes ``1 - 2 = -1`` in total.
    """
    data = _as_dataset(data)
    n = data.n
    if n < 2:
        raise ValueError("cross-validation needs n >= 2")
    idx = tuple(z for z in indices if not z.is_constant)
    s1, s2 = _moments(data, idx)
    contrib = (s1 / n) ** 2 - 2.0 * (s1 * s1 - s2) / (n * (n - 1.0))
    return CVTerms(idx, contrib)


def cv_score(data, zeta: int, kind: str = FOURIER) -> float:
    """Leave-one-out criterion ``J(zeta) = ||P_hat||^2 - (2/n) sum_i P_hat_{-i}(X_i)``."""
    data = _as_dataset(data)
    Z = enumerate_truncation(kind, zeta, data.d, zero_mean=True)
    return cv_terms(data, Z).score()


def cv_scores(data, grid: Iterable[int], kind: str = FOURIER) -> dict[int, float]:
    """``J`` on every cutoff of ``grid``, sharing one pass over the largest set."""
    data = _as_dataset(data)
    grid = list(grid)
    if not grid:
        raise ValueError("the cutoff grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("the cutoff grid must be strictly increasing")
    Z = enumerate_truncation(kind, grid[-1], data.d, zero_mean=True)
    terms = cv_terms(data, Z)
    levels = np.array([z.level for z in terms.indices], dtype=int)
    return {zeta: terms.score(levels <= zeta) for zeta in grid}


def default_grid(n: int, d: int = 1, cap: int | None = None) -> list[int]:
    """``0, 1, ..., ceil(n^{1/d})``, optionally capped."""
    top = math.ceil(n ** (1.0 / d) - 1e-9)
    if cap is not None:
        top = min(top, cap)
    return list(range(top + 1))


def adaptive_zeta(data, grid: Iterable[int], kind: str = FOURIER) -> int:
    """Cutoff minimising :func:`cv_score` over ``grid``; ties go to the smaller cutoff."""
    scores = cv_scores(data, grid, kind)
    return min(scores, key=lambda zeta: (scores[zeta], zeta))
