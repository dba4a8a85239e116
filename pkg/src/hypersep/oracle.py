"""Brute-force checks that do not trust the engine's cached orientation data.

Everything here is recomputed from raw coordinates and plane coefficients.
The side test is written out again on purpose instead of importing the
engine's evaluation helpers.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import mpmath
import numpy as np

EXHAUSTIVE_LIMIT = 2000
_BAND = 1e-9


@dataclass
class SeparationReport:
    ok: bool
    violating_pair: Optional[Tuple[int, int]] = None
    pairs_checked: int = 0
    planes_used_histogram: List[int] = field(default_factory=list)
    reason: Optional[str] = None  # "unseparated" | "incident"
    incident: Optional[Tuple[int, int]] = None  # (point id, plane index)

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "violating_pair": list(self.violating_pair) if self.violating_pair else None,
            "pairs_checked": self.pairs_checked,
            "planes_used_histogram": list(self.planes_used_histogram),
            "reason": self.reason,
            "incident": list(self.incident) if self.incident else None,
        }


@dataclass
class BitLedger:
    total_bits: int
    n_points: int
    n_planes: int
    failures: List[str] = field(default_factory=list)
    events_checked: int = 0

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "total_bits": self.total_bits,
            "expected_bits": self.n_points * self.n_planes,
            "events_checked": self.events_checked,
            "failures": list(self.failures),
        }


def _pi_ratio_sign(r: Fraction) -> int:
    # sign of pi/pi_20 + r, with precision raised until it is unambiguous
    dps = 50
    while True:
        with mpmath.workdps(dps):
            v = mpmath.pi / mpmath.mpf("3.14159265358979323846") + mpmath.mpf(r.numerator) / r.denominator
            if abs(v) > mpmath.mpf(10) ** (10 - dps):
                return 1 if v > 0 else -1
        dps *= 2


def _plane_parts(plane):
    return plane.constant, list(plane.coeffs)


def side_matrix(points, planes) -> np.ndarray:
    """N x q array of +1/-1, with 0 where a point sits on a plane."""
    N, q = len(points), len(planes)
    if q == 0 or N == 0:
        return np.zeros((N, q), dtype=np.int8)
    exact = any(np.asarray(p.coords).dtype == object for p in points) or any(
        np.asarray(pl.coeffs).dtype == object or not isinstance(pl.constant, (int, float)) for pl in planes)
    if not exact:
        X = np.array([p.coords for p in points], dtype=float)
        A = np.array([pl.coeffs for pl in planes], dtype=float)
        c = np.array([float(pl.constant) for pl in planes])
        V = X @ A.T + c
        band = _BAND * (1.0 + np.abs(c) + np.abs(X) @ np.abs(A).T)
        return ((V > band).astype(np.int8) - (V < -band).astype(np.int8))
    out = np.zeros((N, q), dtype=np.int8)
    for i, p in enumerate(points):
        for j, pl in enumerate(planes):
            const, coeffs = _plane_parts(pl)
            r = sum((Fraction(a) * Fraction(x) for a, x in zip(coeffs, p.coords)), Fraction(0))
            if isinstance(const, (int, float, Fraction)):
                v = Fraction(const) + r
                out[i, j] = (v > 0) - (v < 0)
            else:
                out[i, j] = _pi_ratio_sign(r)
    return out


def _first_pair(S: np.ndarray, ids: Sequence[int], members: np.ndarray) -> Tuple[int, int]:
    a, b = sorted(members[:2])
    return ids[a], ids[b]


def verify_all_separated(points, planes, method: str = "auto") -> SeparationReport:
    """Check every pair of points for a plane with strictly opposite signs.

    ``method="exhaustive"`` compares all pairs directly.  ``"grouped"`` gets
    the same answer by splitting the point set plane by plane: the pairs
    first separated by plane j are exactly the products of the + and - part
    sizes of each group that plane j splits.  ``"auto"`` picks exhaustive up
    to a few thousand points.
    """
    points = list(points)
    planes = list(planes)
    ids = [p.id for p in points]
    N, q = len(points), len(planes)
    dims = {len(p.coords) for p in points} | {len(pl.coeffs) for pl in planes}
    if len(dims) > 1:
        raise ValueError(f"inconsistent dimensions {sorted(dims)}")
    S = side_matrix(points, planes)
    hist = [0] * q
    total_pairs = N * (N - 1) // 2
    zero = np.argwhere(S == 0)
    if zero.size:
        i, j = (int(v) for v in zero[0])
        return SeparationReport(False, None, 0, hist, "incident", (ids[i], j))
    if method == "auto":
        method = "exhaustive" if N <= EXHAUSTIVE_LIMIT else "grouped"
    if method == "exhaustive":
        checked = 0
        for i in range(N - 1):
            opposite = (S[i + 1:] * S[i]) < 0
            found = opposite.any(axis=1)
            checked += N - 1 - i
            if not found.all():
                k = i + 1 + int(np.argmin(found))
                return SeparationReport(False, (ids[i], ids[k]), checked, hist, "unseparated")
            first = np.argmax(opposite, axis=1)
            for j, cnt in zip(*np.unique(first, return_counts=True)):
                hist[int(j)] += int(cnt)
        return SeparationReport(True, None, checked, hist)
    if method != "grouped":
        raise ValueError(f"unknown method {method!r}")
    groups = [np.arange(N)]
    for j in range(q):
        nxt = []
        for g in groups:
            pos = g[S[g, j] > 0]
            neg = g[S[g, j] < 0]
            hist[j] += len(pos) * len(neg)
            nxt.extend(part for part in (pos, neg) if len(part) > 1)
        groups = nxt
        if not groups:
            break
    if groups:
        return SeparationReport(False, _first_pair(S, ids, groups[0]), total_pairs, hist, "unseparated")
    return SeparationReport(True, None, total_pairs, hist)


def audit_bits(state) -> BitLedger:
    """Recount stored orientation bits and replay the per-flush bit ledger."""
    return audit_bit_counts([ov.length for ov in state.s_ov.values()], len(state.planes), state.events)


def audit_bit_counts(lengths: Sequence[int], n_planes: int, events) -> BitLedger:
    """Bit ledger from stored code lengths and the flush event log."""
    total = sum(lengths)
    ledger = BitLedger(total, len(lengths), n_planes)
    if total != len(lengths) * n_planes:
        ledger.failures.append(f"final: stored {total} bits, expected {len(lengths)} x {n_planes}")
    for e in events:
        q = e.plane_index
        want = e.bits_stage_start + e.n_stage_start + (e.k + e.n_moved) * (q + 1)
        ledger.events_checked += 1
        if e.bits_stage_start != e.n_stage_start * q:
            ledger.failures.append(f"plane {q}: stage opened with {e.bits_stage_start} bits, "
                                   f"expected {e.n_stage_start} x {q}")
        if want != e.bits_after:
            ledger.failures.append(f"plane {q}: {e.bits_stage_start} + {e.n_stage_start} + "
                                   f"({e.k}+{e.n_moved}) x {q + 1} = {want}, stored {e.bits_after}")
        if e.bits_after != e.n_after * (q + 1):
            ledger.failures.append(f"plane {q}: {e.bits_after} bits for {e.n_after} points")
    return ledger


def usf_code(signs_row) -> str:
    return "".join("1" if s > 0 else "0" for s in signs_row)


def quadrant_census(points, planes) -> Counter:
    """Occupancy count per quadrant code (plane 0 first)."""
    points = list(points)
    S = side_matrix(points, list(planes))
    return Counter(usf_code(row) for row in S)


def code_mismatches(points, planes, codes) -> List[Tuple[int, str, str]]:
    """(id, stored, recomputed) for every point whose stored code is wrong."""
    points = list(points)
    S = side_matrix(points, list(planes))
    bad = []
    for p, row, stored in zip(points, S, codes):
        got = usf_code(row)
        if got != stored:
            bad.append((p.id, stored, got))
    return bad
