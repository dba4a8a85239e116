"""Fit ``constant + alpha . x = 0`` through a set of points.

Row-echelon reduction with partial pivoting (largest magnitude in the
column, lowest row index on ties).  Columns whose best pivot falls under the
rank tolerance are free; free coefficients are either drawn at random or
supplied by the caller, and the pivot coefficients are back-substituted.
Works on float arrays and on object arrays of ``Fraction`` (exact mode,
where the tolerance is exactly zero).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from hypersep.errors import InconsistentSystem, RankDeficient

RANK_TOL = 1e-10
RESIDUAL_TOL = 1e-8
FREE_RANGE = (0.1, 1.0)


@dataclass
class SolveReport:
    coeffs: np.ndarray
    rank: int
    residual: float
    randomized_free_count: int
    free_columns: tuple = ()
    free_values: tuple = ()
    scale: float = 1.0

    @property
    def relative_residual(self) -> float:
        return float(self.residual) / self.scale


def _as_matrix(rows, n: Optional[int] = None) -> np.ndarray:
    if isinstance(rows, np.ndarray) and rows.ndim == 2:
        M = rows
    else:
        rows = list(rows)
        if not rows:
            if n is None:
                raise ValueError("dimension required for an empty row set")
            return np.zeros((0, n))
        M = np.array([np.asarray(r) for r in rows])
        if M.dtype != object:
            M = M.astype(float)
    if n is not None and M.shape[1] != n:
        raise ValueError(f"rows have dimension {M.shape[1]}, expected {n}")
    return M


def _exact(M: np.ndarray) -> bool:
    return M.dtype == object


def _echelon(M: np.ndarray, rhs: np.ndarray, rank_tol: float):
    """Reduce ``[M | rhs]`` in place; return the pivot (row, column) list."""
    k, n = M.shape
    if _exact(M):
        tol = 0
    else:
        tol = rank_tol * (float(np.max(np.abs(M))) if M.size else 0.0)
    pivots = []
    r = 0
    for col in range(n):
        if r >= k:
            break
        colvals = np.abs(M[r:, col])
        best = int(np.argmax(colvals))
        if not colvals[best] > tol:
            continue
        p = r + best
        if p != r:
            M[[r, p]] = M[[p, r]]
            rhs[[r, p]] = rhs[[p, r]]
        if r + 1 < k:
            f = M[r + 1:, col] / M[r, col]
            M[r + 1:, col:] -= np.outer(f, M[r, col:])
            rhs[r + 1:] -= f * rhs[r]
            M[r + 1:, col] = 0
        pivots.append((r, col))
        r += 1
    return pivots


def numeric_rank(rows, rank_tol: float = RANK_TOL) -> int:
    """Rank of a row set; pivots below ``rank_tol * max|entry|`` count as zero."""
    M = _as_matrix(rows)
    if M.size == 0:
        return 0
    M = M.copy()
    rhs = np.zeros(M.shape[0], dtype=M.dtype)
    return len(_echelon(M, rhs, rank_tol))


def draw_free_values(rng: np.random.Generator, count: int, exact: bool = False) -> tuple:
    lo, hi = FREE_RANGE
    mags = rng.uniform(lo, hi, size=count)
    signs = rng.choice((-1.0, 1.0), size=count)
    vals = mags * signs
    if exact:
        return tuple(Fraction(float(v)) for v in vals)
    return tuple(float(v) for v in vals)


def residual_scale(coeffs: np.ndarray, M: np.ndarray, constant) -> float:
    c = abs(float(constant))
    if M.shape[0] == 0:
        return max(c, 1.0)
    terms = np.abs(M.astype(float) * np.asarray(coeffs, dtype=float))
    return max(c + float(np.max(terms.sum(axis=1))), 1.0)


def plane_residual(coeffs: np.ndarray, M: np.ndarray, constant):
    if M.shape[0] == 0:
        return 0
    vals = M @ coeffs + constant
    return max(abs(v) for v in vals)


def solve_affine(
    rows,
    constant=1.0,
    *,
    n: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    free_values: Optional[Sequence] = None,
    rank_tol: float = RANK_TOL,
    residual_tol: float = RESIDUAL_TOL,
) -> SolveReport:
    """General solve of ``constant + alpha . row = 0`` for every row.

    Free coefficients come from ``free_values`` (reused in order, topped up
    from ``rng`` when the rank has dropped), else from ``rng``.  With
    neither, a rank deficit raises :class:`RankDeficient`.
    """
    M0 = _as_matrix(rows, n)
    k, n = M0.shape
    exact = _exact(M0)
    M = M0.copy()
    if exact:
        rhs = np.array([-Fraction(constant)] * k, dtype=object)
    else:
        rhs = np.full(k, -float(constant))
    pivots = _echelon(M, rhs, rank_tol)
    rank = len(pivots)
    pivot_cols = {c for _, c in pivots}
    free_cols = tuple(c for c in range(n) if c not in pivot_cols)

    if free_cols and rng is None and free_values is None:
        raise RankDeficient(rank, n)
    chosen = list(free_values or ())[: len(free_cols)]
    randomized = len(free_cols)
    if len(chosen) < len(free_cols):
        if rng is None:
            raise RankDeficient(rank, n)
        chosen += list(draw_free_values(rng, len(free_cols) - len(chosen), exact))

    x = np.array([Fraction(0)] * n, dtype=object) if exact else np.zeros(n)
    for c, v in zip(free_cols, chosen):
        x[c] = v
    for r, c in reversed(pivots):
        acc = rhs[r] - np.dot(M[r, c + 1:], x[c + 1:])
        x[c] = acc / M[r, c]

    residual = plane_residual(x, M0, Fraction(constant) if exact else float(constant))
    scale = residual_scale(x, M0, constant)
    if exact:
        if residual != 0:
            raise InconsistentSystem(float(residual))
    elif residual > residual_tol * scale:
        raise InconsistentSystem(float(residual))
    return SolveReport(
        coeffs=x,
        rank=rank,
        residual=residual,
        randomized_free_count=randomized,
        free_columns=free_cols,
        free_values=tuple(chosen),
        scale=scale,
    )


def solve_plane_through(rows, constant=1.0, *, rank_tol: float = RANK_TOL,
                        residual_tol: float = RESIDUAL_TOL) -> SolveReport:
    """Unique plane through exactly n points; RankDeficient otherwise."""
    M = _as_matrix(rows)
    k, n = M.shape
    if k != n:
        raise ValueError(f"need exactly {n} points in {n} dimensions, got {k}")
    return solve_affine(M, constant, rank_tol=rank_tol, residual_tol=residual_tol)


def solve_underdetermined(rows, constant, rng: np.random.Generator, *, n: Optional[int] = None,
                          rank_tol: float = RANK_TOL, residual_tol: float = RESIDUAL_TOL) -> SolveReport:
    """Plane through fewer than n points, remaining directions drawn from ``rng``."""
    M = _as_matrix(rows, n)
    k, n = M.shape
    if k > n:
        raise ValueError(f"{k} rows is not underdetermined in {n} dimensions")
    if k > 1 and all(np.array_equal(M[0], M[i]) for i in range(1, k)):
        raise ValueError("all constraint points are identical")
    return solve_affine(M, constant, rng=rng, rank_tol=rank_tol, residual_tol=residual_tol)
