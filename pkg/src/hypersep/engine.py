"""Incremental separation of points by hyperplanes.

Points are drawn one at a time from the unprocessed pool G.  A point whose
orientation vector is new goes straight into the separated set S.  A point
that shares its quadrant with some S point ``a`` waits in T as a neighbour
of ``a``.  Once n anchors have a first neighbour, one new plane is fitted
through the n segment midpoints, which splits every (anchor, neighbour)
pair at once; the first neighbours then move into S and later neighbours
are re-inserted.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, asdict
from enum import Enum
from fractions import Fraction
from typing import Iterable, List, Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from hypersep import linsolve
from hypersep.errors import (
    BootstrapFailed,
    DegenerateGeometry,
    DimensionError,
    InconsistentSystem,
    RankDeficient,
    StateError,
)
from hypersep.geometry import (
    TAU,
    Hyperplane,
    OrientationVector,
    PiRatio,
    Point,
    as_coords,
    evaluate_side,
    incidence_band,
    midpoint,
)

log = logging.getLogger(__name__)

BOOTSTRAP_TRIALS = 64
SHIFT_FACTOR = 16.0


@dataclass
class SeparationConfig:
    seed: int = 0
    delta_th: float = 1e-6
    eps_on_plane: float = 1e-9
    residual_tol: float = 1e-8
    rank_tol: float = 1e-10
    tau_mode: str = "off"  # "off" | "pi-ratio"
    endgame: str = "step7"  # "step7" | "synthetic"
    pair_cap: Optional[int] = None  # None means 2n
    max_retries: int = 8
    max_repairs: int = 8
    exact: bool = False

    def __post_init__(self):
        if self.tau_mode not in ("off", "pi-ratio"):
            raise ValueError(f"unknown tau mode {self.tau_mode!r}")
        if self.endgame not in ("step7", "synthetic"):
            raise ValueError(f"unknown endgame {self.endgame!r}")
        for name in ("delta_th", "eps_on_plane", "residual_tol", "rank_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


class Outcome(Enum):
    PLACED_IN_S = "PlacedInS"
    PAIRED_FIRST = "PairedFirst"
    PAIRED_SECOND = "PairedSecond"
    PAIRED_THIRD = "PairedThird"
    DUSTBINNED = "DustBinned"
    RETURNED_TO_G = "ReturnedToG"
    TRIGGERED_FLUSH = "TriggeredFlush"


@dataclass(frozen=True)
class InsertOutcome:
    kind: Outcome
    anchor: Optional[int] = None
    plane_index: Optional[int] = None


@dataclass
class PendingPair:
    anchor: int
    first: int
    midpoint: np.ndarray
    second: Optional[int] = None
    third: Optional[int] = None

    @property
    def waiting(self) -> List[int]:
        return [m for m in (self.first, self.second, self.third) if m is not None]


@dataclass
class DustEntry:
    point: Point
    reason: str


@dataclass
class FlushEvent:
    """Bookkeeping for one plane addition, enough to replay the bit ledger."""

    plane_index: int
    n_stage_start: int
    bits_stage_start: int
    k: int
    n_moved: int
    n_after: int
    bits_after: int
    pairs: int
    residual: float
    scale: float
    randomized: int = 0
    synthetic: int = 0
    endgame: bool = False
    repairs: int = 0
    deferred: int = 0


class _CoordStore:
    """Row storage for every point the state has seen."""

    def __init__(self, n: int, dtype):
        self.n = n
        self.dtype = dtype
        self.arr = np.zeros((16, n), dtype=dtype) if dtype != object else np.full((16, n), Fraction(0), dtype=object)
        self.size = 0
        self.row_of: dict = {}
        self.alive = np.zeros(16, dtype=bool)

    def add(self, pid: int, coords: np.ndarray) -> int:
        if self.size == len(self.arr):
            cap = 2 * len(self.arr)
            grown = np.zeros((cap, self.n), dtype=self.dtype) if self.dtype != object \
                else np.full((cap, self.n), Fraction(0), dtype=object)
            grown[: self.size] = self.arr[: self.size]
            self.arr = grown
            alive = np.zeros(cap, dtype=bool)
            alive[: self.size] = self.alive[: self.size]
            self.alive = alive
        row = self.size
        self.arr[row] = coords
        self.alive[row] = True
        self.row_of[pid] = row
        self.size += 1
        return row

    def kill(self, pid: int) -> None:
        self.alive[self.row_of[pid]] = False

    def view(self) -> np.ndarray:
        return self.arr[: self.size]

    def lift(self, r: int) -> None:
        zero = Fraction(0) if self.dtype == object else 0.0
        pad = np.full((len(self.arr), r), zero, dtype=self.dtype)
        self.arr = np.hstack([self.arr, pad])
        self.n += r


class SeparationState:
    """Sets S, T, G and D plus the plane list and bookkeeping."""

    def __init__(self, dimension: int, config: Optional[SeparationConfig] = None):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.config = config or SeparationConfig()
        self.n = dimension
        self.rng = np.random.default_rng(self.config.seed)
        self.planes: List[Hyperplane] = []
        self.points: dict = {}  # every known point, any set
        self.status: dict = {}  # id -> "S" | "T" | "G" | "D"
        self.s_ov: dict = {}
        self.ov_lookup: dict = {}
        self.pending: dict = {}  # anchor id -> PendingPair
        self.counter = 0
        self.dustbin: List[DustEntry] = []
        self.queue: deque = deque()
        self.held: dict = {}  # id -> retries, waiting for the next flush
        self.retries: dict = {}
        self.events: List[FlushEvent] = []
        self.synthetic: set = set()
        self.plane_repairs = 0
        self.stage_n = 0
        self.stage_bits = 0
        self._dtype = object if self.config.exact else float
        self._store = _CoordStore(dimension, self._dtype)
        self._s_rows: List[int] = []
        self._coord_keys: set = set()
        self._max_id = -1
        self._rebuild_stacks()

    # ------------------------------------------------------------------ basics

    @property
    def q(self) -> int:
        return len(self.planes)

    @property
    def pair_cap(self) -> int:
        return self.config.pair_cap if self.config.pair_cap is not None else 2 * self.n

    @property
    def n_separated(self) -> int:
        return len(self.s_ov)

    @property
    def finished(self) -> bool:
        return not self.queue and not self.held and not self.pending

    def s_points(self) -> List[Point]:
        return [self.points[pid] for pid in self.s_ov]

    def stored_bits(self) -> int:
        return sum(ov.length for ov in self.s_ov.values())

    def _rebuild_stacks(self) -> None:
        if self.planes:
            self._C = np.array([p.coeffs for p in self.planes], dtype=self._dtype)
            self._c = np.array([float(p.constant) for p in self.planes])
        else:
            self._C = np.zeros((0, self.n), dtype=self._dtype)
            self._c = np.zeros(0)
        if self._dtype is float:
            self._absC = np.abs(self._C)
            self._abs_c = np.abs(self._c)

    def _constant(self):
        if self.config.tau_mode == "pi-ratio":
            return TAU if self.config.exact else float(TAU)
        return Fraction(1) if self.config.exact else 1.0

    def _key(self, coords: np.ndarray):
        return tuple(coords) if self.config.exact else coords.tobytes()

    def _convert(self, p: Point) -> Point:
        coords = as_coords(p.coords, exact=self.config.exact)
        if len(coords) != self.n:
            raise DimensionError(
                f"point {p.id} has dimension {len(coords)}, state has {self.n}"
                + ("; lift the state first" if len(coords) > self.n else "")
            )
        return Point(p.id, coords, p.label)

    def _register(self, p: Point) -> bool:
        """Add a new point to G; returns False if it was dust-binned as a duplicate."""
        if p.id in self.points:
            raise ValueError(f"point id {p.id} already in use")
        p = self._convert(p)
        self.points[p.id] = p
        self._store.add(p.id, p.coords)
        self._max_id = max(self._max_id, p.id)
        key = self._key(p.coords)
        if key in self._coord_keys:
            self._dust(p.id, "duplicate")
            return False
        self._coord_keys.add(key)
        self.status[p.id] = "G"
        return True

    def _dust(self, pid: int, reason: str) -> None:
        self.status[pid] = "D"
        self._store.kill(pid)
        self.dustbin.append(DustEntry(self.points[pid], reason))

    # --------------------------------------------------------------- sides

    def _sides(self, x: np.ndarray):
        """Signs of ``x`` against every plane; 0 marks an incidence."""
        if self.config.exact:
            return np.array([evaluate_side(x, pl).sign for pl in self.planes], dtype=int)
        v = self._C @ x + self._c
        band = self.config.eps_on_plane * (1.0 + self._abs_c + self._absC @ np.abs(x))
        return (v > band).astype(int) - (v < -band).astype(int)

    def _ov_of(self, x: np.ndarray):
        signs = self._sides(x)
        incident = np.flatnonzero(signs == 0)
        if incident.size:
            return None, incident
        pos = signs > 0
        bits = int.from_bytes(np.packbits(pos, bitorder="little").tobytes(), "little") if pos.size else 0
        return OrientationVector(bits, len(pos)), incident

    def _plane_sides(self, plane: Hyperplane, X: np.ndarray):
        """(values, signs) of the rows of ``X`` against one plane."""
        if self.config.exact:
            evs = [evaluate_side(x, plane) for x in X]
            return np.array([float(e.value) for e in evs]), np.array([e.sign for e in evs], dtype=int)
        a = plane.coeffs.astype(float)
        c = float(plane.constant)
        v = X @ a + c
        band = self.config.eps_on_plane * (1.0 + abs(c) + np.abs(X) @ np.abs(a))
        return v, (v > band).astype(int) - (v < -band).astype(int)

    # ------------------------------------------------------------- bootstrap

    def bootstrap(self, initial_points: Iterable[Point], planes: Optional[Sequence[Hyperplane]] = None
                  ) -> "SeparationState":
        """Seed S with a few points and enough planes to separate them.

        With ``planes`` given, those planes are used as they are and must
        already put every initial point in its own quadrant.
        """
        if self.planes or self.s_ov:
            raise StateError("state already bootstrapped")
        pts = list(initial_points)
        if not pts:
            raise ValueError("bootstrap needs at least one point")
        ids = []
        dust_before = len(self.dustbin)
        for p in pts:
            ids.append(p.id)
            if not self._register(p):
                self._forget(ids, dust_before)
                raise BootstrapFailed(f"initial point {p.id} duplicates another")
        if planes is not None:
            self.planes = [Hyperplane(pl.constant, as_coords(pl.coeffs, exact=self.config.exact), index=j,
                                      saturated=pl.saturated, through=pl.through)
                           for j, pl in enumerate(planes)]
            self._rebuild_stacks()
            if self._try_seed(ids):
                return self
            self.planes = []
            self._rebuild_stacks()
            self._forget(ids, dust_before)
            raise BootstrapFailed("given planes do not separate the initial points")
        X = np.array([self.points[i].coords for i in ids], dtype=float)
        n0 = len(ids)
        q0 = max(math.ceil(math.log2(self.n + 1)), 2, math.ceil(math.log2(max(n0, 1))))
        for trial in range(BOOTSTRAP_TRIALS):
            q = q0 + min(trial // 16, 2)
            if trial % 2 == 0:
                found = self._centroid_trial(X, q)
            else:
                found = self._bootstrap_trial(X, q)
            if found is None:
                continue
            self.planes = found
            self._rebuild_stacks()
            if self._try_seed(ids):
                log.debug("bootstrap: %d points, %d planes after %d trials", n0, q, trial + 1)
                return self
            self.planes = []
            self._rebuild_stacks()
        self._forget(ids, dust_before)
        raise BootstrapFailed(f"no separating start found in {BOOTSTRAP_TRIALS} trials")

    def _try_seed(self, ids: List[int]) -> bool:
        ovs = [self._ov_of(self.points[i].coords)[0] for i in ids]
        if any(ov is None for ov in ovs) or len({ov.bits for ov in ovs}) != len(ids):
            return False
        for pid, ov in zip(ids, ovs):
            self._place(pid, ov)
        self.stage_n = len(self.s_ov)
        self.stage_bits = self.stored_bits()
        return True

    def _forget(self, ids: List[int], dust_before: int) -> None:
        """Undo the registration of ``ids`` after a failed bootstrap."""
        del self.dustbin[dust_before:]
        for pid in ids:
            if pid not in self.points:
                continue
            if self.status.get(pid) != "D":
                self._coord_keys.discard(self._key(self.points[pid].coords))
            self._store.kill(pid)
            del self.points[pid]
            self.status.pop(pid, None)

    def _centroid_trial(self, X: np.ndarray, q: int) -> List[Hyperplane]:
        """Random normals through points near the centroid of the seed set."""
        n0, n = X.shape
        mu = X.mean(axis=0)
        spread = float(np.max(np.abs(X - mu))) if n0 > 1 else 1.0
        spread = spread or 1.0
        planes = []
        for j in range(q):
            u = self.rng.normal(size=n)
            while True:
                through = mu + 0.1 * spread * self.rng.uniform(-1, 1, size=n)
                c = -float(u @ through)
                if abs(c) > 1e-6 * (1.0 + float(np.abs(u) @ np.abs(through))):
                    break
            planes.append(self._normalized(c, u, j))
        return planes

    def _normalized(self, c: float, alpha: np.ndarray, j: int) -> Hyperplane:
        coeffs = alpha / c
        if self.config.exact:
            coeffs = np.array([Fraction(float(v)) for v in coeffs], dtype=object)
        return Hyperplane(self._constant(), coeffs, index=j, saturated=True)

    def _bootstrap_trial(self, X: np.ndarray, q: int) -> Optional[List[Hyperplane]]:
        """Random target codes, each bit realized by a feasibility LP."""
        n0, n = X.shape
        codes = self.rng.choice(2**q, size=n0, replace=False)
        design = np.hstack([np.ones((n0, 1)), X])
        scale = float(np.max(np.abs(X))) + 1.0
        planes = []
        for j in range(q):
            y = np.where((codes >> j) & 1, 1.0, -1.0)
            res = linprog(np.zeros(n + 1), A_ub=-y[:, None] * design, b_ub=-np.ones(n0),
                          bounds=[(None, None)] * (n + 1), method="highs")
            if res.status != 0:
                return None
            c, alpha = float(res.x[0]), np.array(res.x[1:])
            if not np.any(np.abs(alpha) > 1e-12 / scale):
                # one-sided labelling: any small tilt keeps the margin
                alpha = self.rng.normal(size=n)
                alpha *= 0.25 / (np.max(np.abs(X @ alpha)) + 1.0)
            if abs(c) < 0.5:
                c += 0.5 if c >= 0 else -0.5
            planes.append(self._normalized(c, alpha, j))
        return planes

    # ---------------------------------------------------------------- insert

    def _place(self, pid: int, ov: OrientationVector) -> None:
        self.s_ov[pid] = ov
        self.ov_lookup[ov.bits] = pid
        self.status[pid] = "S"
        self._s_rows.append(self._store.row_of[pid])

    def insert_point(self, p: Point) -> InsertOutcome:
        """One pass of the draw: place in S, pair into T, dust-bin, or hand back."""
        if p.id in self.points:
            if self.status[p.id] != "G":
                raise ValueError(f"point {p.id} is already in set {self.status[p.id]}")
        elif not self._register(p):
            return InsertOutcome(Outcome.DUSTBINNED)
        pid = p.id
        x = self.points[pid].coords
        ov, incident = self._ov_of(x)
        if ov is None:
            for j in incident:
                self.repair_incidence(self.planes[int(j)])
            ov, incident = self._ov_of(x)
            if ov is None:
                raise DegenerateGeometry(f"point stays on plane {int(incident[0])} after repair", [pid])

        anchor = self.ov_lookup.get(ov.bits)
        if anchor is None:
            self._place(pid, ov)
            return InsertOutcome(Outcome.PLACED_IN_S)

        pair = self.pending.get(anchor)
        mates = [anchor] + (pair.waiting if pair else [])
        delta = min(float(np.sum(np.abs(x - self.points[m].coords))) for m in mates)
        if delta < self.config.delta_th:
            self._dust(pid, "accumulation")
            return InsertOutcome(Outcome.DUSTBINNED, anchor=anchor)

        if pair is None:
            self.pending[anchor] = PendingPair(anchor, pid, midpoint(self.points[anchor], self.points[pid]))
            self.status[pid] = "T"
            self.counter += 1
            if self.counter >= self.n:
                plane = self.flush_plane()
                if plane is not None:
                    return InsertOutcome(Outcome.TRIGGERED_FLUSH, anchor=anchor, plane_index=plane.index)
            return InsertOutcome(Outcome.PAIRED_FIRST, anchor=anchor)
        if pair.second is None:
            pair.second = pid
            self.status[pid] = "T"
            return InsertOutcome(Outcome.PAIRED_SECOND, anchor=anchor)
        if pair.third is None:
            pair.third = pid
            self.status[pid] = "T"
            return InsertOutcome(Outcome.PAIRED_THIRD, anchor=anchor)
        return InsertOutcome(Outcome.RETURNED_TO_G, anchor=anchor)

    # ----------------------------------------------------------------- flush

    def flush_plane(self, force: bool = False) -> Optional[Hyperplane]:
        """Add one plane through the pending midpoints and promote T into S.

        Returns None when nothing is pending, or when the midpoints are
        degenerate and the state chooses to wait for more pairs.
        """
        pairs = list(self.pending.values())
        if not pairs:
            return None
        can_defer = not force and len(pairs) < self.pair_cap and bool(self.queue)
        fitted = self._fit_plane(pairs, can_defer)
        if fitted is None:
            log.debug("midpoints degenerate with %d pairs; waiting for more", len(pairs))
            return None
        plane, report, repairs, active = fitted
        self._commit(plane, active, report, repairs)
        return plane

    def _alive_rows(self) -> np.ndarray:
        return np.flatnonzero(self._store.alive[: self._store.size])

    def _basis(self, pairs: List[PendingPair]) -> List[PendingPair]:
        """At most n pairs whose midpoints are linearly independent, in order."""
        if len(pairs) <= self.n:
            return list(pairs)
        chosen: List[PendingPair] = []
        for pr in pairs:
            trial = chosen + [pr]
            if linsolve.numeric_rank([t.midpoint for t in trial], self.config.rank_tol) == len(trial):
                chosen = trial
                if len(chosen) == self.n:
                    break
        return chosen

    def _fit_plane(self, pairs: List[PendingPair], can_defer: bool):
        """Solve, check and repair the next plane.

        The plane goes through the midpoints of at most n pending pairs (the
        fitted pairs); any other pending pair it happens to split moves too.
        Returns ``(plane, report, repairs, moved)`` or None to defer.  A fitted
        pair the plane cannot split even after re-cutting its segment (every
        admissible cut lies on one line with the others, typical of lattice
        data) is left out of this plane and stays pending.
        """
        rows = self._store.row_of
        fit = self._basis(pairs)
        if len(pairs) > self.n and len(fit) < self.n and can_defer:
            return None
        cuts = np.array([pr.midpoint for pr in fit], dtype=self._dtype)
        randomize = len(fit) < self.n or not can_defer
        free = None
        X = self._store.view()
        alive = self._alive_rows()
        a_all = [rows[pr.anchor] for pr in pairs]
        b_all = [rows[pr.first] for pr in pairs]
        one = Fraction(1) if self.config.exact else 1.0
        repairs = 0
        jitters = 0
        last_bad: list = []
        attempt = 0
        rounds = 0
        while attempt <= self.config.max_repairs and rounds < 8 * (len(pairs) + self.config.max_repairs):
            rounds += 1
            try:
                report = linsolve.solve_affine(
                    cuts, one, n=self.n, rng=self.rng if randomize else None, free_values=free,
                    rank_tol=self.config.rank_tol, residual_tol=self.config.residual_tol)
            except RankDeficient:
                if can_defer:
                    return None
                randomize = True
                continue
            except InconsistentSystem:
                # cut points on a line through the origin (no plane with a
                # nonzero constant contains them): re-cut, then drop a pair
                if jitters < 2 or len(fit) == 1:
                    cuts = self._jitter_cuts(fit)
                    jitters += 1
                else:
                    fit, cuts = fit[:-1], cuts[:-1]
                    randomize = True
                    jitters = 0
                free = None
                repairs += 1
                continue
            plane = Hyperplane(self._constant(), report.coeffs, index=self.q,
                               saturated=report.randomized_free_count == 0, through=cuts)
            _, signs = self._plane_sides(plane, X[alive])
            row_sign = np.zeros(self._store.size, dtype=int)
            row_sign[alive] = signs
            sa, sb = row_sign[a_all], row_sign[b_all]
            split = dict(zip((pr.anchor for pr in pairs), (sa * sb < 0).tolist()))
            both_on = dict(zip((pr.anchor for pr in pairs), ((sa == 0) & (sb == 0)).tolist()))
            unsplit = np.array([row_sign[rows[pr.anchor]] * row_sign[rows[pr.first]] > 0 or both_on[pr.anchor]
                                for pr in fit], dtype=bool)
            incident = alive[signs == 0]
            log.debug("fit round %d: %d fitted, %d unsplit, %d incident", rounds, len(fit),
                      int(unsplit.sum()), incident.size)
            if unsplit.any():
                if jitters < 2:
                    cuts = self._jitter_cuts(fit)
                    jitters += 1
                else:
                    keep = ~unsplit
                    if not keep.any():
                        keep[0] = True
                    fit = [pr for pr, k in zip(fit, keep) if k]
                    cuts = cuts[keep]
                    randomize = True
                    jitters = 0
                free = None
                repairs += 1
            elif incident.size:
                last_bad = incident
                plane = self._shifted(plane, X[incident], attempt)
                cuts = plane.through
                free = report.free_values
                attempt += 1
                repairs += 1
            else:
                moved = [pr for pr in pairs if split[pr.anchor]]
                return plane, report, repairs, moved
        bad = set(np.asarray(last_bad).tolist())
        ids = [pid for pid, row in self._store.row_of.items() if row in bad]
        raise DegenerateGeometry("could not fit a plane clear of all points", ids)

    def _jitter_cuts(self, pairs: List[PendingPair]) -> np.ndarray:
        out = []
        for pr in pairs:
            a = self.points[pr.anchor].coords
            b = self.points[pr.first].coords
            t = float(self.rng.uniform(0.3, 0.7))
            if self.config.exact:
                tf = Fraction(t)
                out.append(np.array([u + tf * (v - u) for u, v in zip(a, b)], dtype=object))
            else:
                out.append(a + t * (b - a))
        return np.array(out, dtype=self._dtype)

    def _shifted(self, plane: Hyperplane, offenders: np.ndarray, attempt: int) -> Hyperplane:
        """Parallel copy of ``plane`` moved off the offending points.

        Moving the plane by ``s`` along its unit normal is the same as moving
        every fitted point by ``s`` and solving again; the new plane still
        has constant ``plane.constant``.
        """
        a = plane.coeffs.astype(float)
        norm = float(np.linalg.norm(a))
        band = max(incidence_band(plane.constant, a, x) for x in np.asarray(offenders, dtype=float))
        s = SHIFT_FACTOR * band / norm * (2.0 ** (attempt // 2)) * (-1.0 if attempt % 2 else 1.0)
        c = float(plane.constant)
        factor = c / (c - s * norm)
        unit = a / norm
        if self.config.exact:
            f = Fraction(factor)
            coeffs = np.array([Fraction(v) * f for v in plane.coeffs], dtype=object)
            step = np.array([Fraction(float(s * u)) for u in unit], dtype=object)
        else:
            coeffs = plane.coeffs * factor
            step = s * unit
        through = None if plane.through is None else plane.through + step
        return Hyperplane(plane.constant, coeffs, index=plane.index, saturated=plane.saturated, through=through)

    def _commit(self, plane: Hyperplane, pairs: List[PendingPair], report, repairs: int) -> None:
        q = self.q
        n_before = len(self.s_ov)
        k = n_before - self.stage_n
        X = self._store.view()
        alive = self._alive_rows()
        _, signs = self._plane_sides(plane, X[alive])
        row_sign = np.zeros(self._store.size, dtype=int)
        row_sign[alive] = signs

        self.planes.append(plane)
        self._rebuild_stacks()
        shift = 1 << q
        positive = (row_sign[np.array(self._s_rows, dtype=int)] > 0).tolist() if self._s_rows else []
        self.s_ov = {
            pid: OrientationVector(ov.bits | shift if up else ov.bits, q + 1)
            for (pid, ov), up in zip(self.s_ov.items(), positive)
        }
        self.ov_lookup = {ov.bits: pid for pid, ov in self.s_ov.items()}

        reinsert = []
        moving = {pr.anchor for pr in pairs}
        for pr in list(self.pending.values()):
            if pr.anchor in moving:
                continue
            # left out of this plane: a and b stay together on one side
            for m in (pr.second, pr.third):
                if m is not None:
                    self.status[m] = "G"
                    reinsert.append(m)
            pr.second = pr.third = None
            if row_sign[self._store.row_of[pr.first]] != row_sign[self._store.row_of[pr.anchor]]:
                del self.pending[pr.anchor]
                self.status[pr.first] = "G"
                reinsert.append(pr.first)
        for pr in pairs:
            ov, _ = self._ov_of(self.points[pr.first].coords)
            anchor_ov = self.s_ov[pr.anchor]
            if ov is None or ov.bits != anchor_ov.bits ^ shift:
                raise DegenerateGeometry("first neighbour not split from its anchor", [pr.anchor, pr.first])
            if ov.bits in self.ov_lookup:
                raise DegenerateGeometry("promoted point collides with S", [pr.first])
            self._place(pr.first, ov)
            for m in (pr.second, pr.third):
                if m is not None:
                    self.status[m] = "G"
                    reinsert.append(m)
            del self.pending[pr.anchor]
        self.counter = len(self.pending)

        bits_after = self.stored_bits()
        residual = 0.0
        if plane.through is not None and len(plane.through):
            t = np.asarray(plane.through)
            residual = float(max(abs(float(plane.constant) + float(np.dot(plane.coeffs, r))) for r in t))
        self.events.append(FlushEvent(
            plane_index=q,
            n_stage_start=self.stage_n,
            bits_stage_start=self.stage_bits,
            k=k,
            n_moved=len(pairs),
            n_after=len(self.s_ov),
            bits_after=bits_after,
            pairs=len(pairs),
            residual=residual,
            scale=linsolve.residual_scale(plane.coeffs, np.asarray(plane.through if plane.through is not None
                                                                   else np.zeros((0, self.n))),
                                          float(plane.constant)),
            randomized=report.randomized_free_count,
            synthetic=sum(1 for pr in pairs if pr.first in self.synthetic),
            endgame=len(pairs) < self.n,
            deferred=self.counter,
            repairs=repairs,
        ))
        self.stage_n = len(self.s_ov)
        self.stage_bits = bits_after
        log.debug("plane %d: %d pairs, N=%d", q, len(pairs), len(self.s_ov))
        for m in reinsert:
            self.insert_point(self.points[m])

    # ------------------------------------------------------------- repairs

    def repair_incidence(self, plane: Hyperplane) -> Hyperplane:
        """Move ``plane`` off every point lying on it.

        For a plane already in the state, the shifted plane must give every
        point of S and T the side it already has; it then replaces the
        original in place.
        """
        X = self._store.view()
        alive = self._alive_rows()
        _, signs = self._plane_sides(plane, X[alive])
        incident = alive[signs == 0]
        if not incident.size:
            return plane
        if self.config.exact and self.config.tau_mode == "pi-ratio" and not isinstance(plane.constant, PiRatio):
            candidate = Hyperplane(TAU, plane.coeffs, plane.index, plane.saturated, plane.through)
            if self._acceptable_repair(plane, candidate):
                return self._install(plane, candidate)
        for attempt in range(self.config.max_repairs):
            candidate = self._shifted(plane, X[incident], attempt)
            if self._acceptable_repair(plane, candidate):
                self.plane_repairs += 1
                return self._install(plane, candidate)
        ids = [pid for pid, row in self._store.row_of.items() if row in set(incident.tolist())]
        raise DegenerateGeometry(f"cannot move plane {plane.index} off incident points", ids)

    def _acceptable_repair(self, old: Hyperplane, new: Hyperplane) -> bool:
        X = self._store.view()
        alive = self._alive_rows()
        _, signs = self._plane_sides(new, X[alive])
        if np.any(signs == 0):
            return False
        j = old.index
        if j < self.q and self.planes[j] is old:
            row_sign = dict(zip(alive.tolist(), signs.tolist()))
            rows = self._store.row_of
            for pid, ov in self.s_ov.items():
                if row_sign[rows[pid]] != ov.sign(j):
                    return False
            for pr in self.pending.values():
                want = self.s_ov[pr.anchor].sign(j)
                if any(row_sign[rows[m]] != want for m in pr.waiting):
                    return False
        return True

    def _install(self, old: Hyperplane, new: Hyperplane) -> Hyperplane:
        j = old.index
        if j < self.q and self.planes[j] is old:
            self.planes[j] = new
            self._rebuild_stacks()
        return new

    # ------------------------------------------------------------ run / end

    def run(self, g_points: Iterable[Point]) -> "SeparationState":
        """Process every point of G, then drain T."""
        fresh = list(g_points)
        for p in fresh:
            if len(p.coords) != self.n:
                raise DimensionError(
                    f"point {p.id} has dimension {len(p.coords)}, state has {self.n}"
                    + ("; lift the state first" if len(p.coords) > self.n else ""))
        ordered = [fresh[int(i)] for i in self.rng.permutation(len(fresh))] if fresh else []
        if not self.planes and not self.s_ov and ordered:
            head, rest, seen = [], [], set()
            for p in ordered:
                key = self._key(as_coords(p.coords, exact=self.config.exact))
                if len(head) <= self.n and key not in seen:
                    head.append(p)
                    seen.add(key)
                else:
                    rest.append(p)
            self.bootstrap(head)
            ordered = rest
        for p in ordered:
            if self._register(p):
                self.queue.append(p.id)
        self._drain()
        return self

    def _drain(self) -> None:
        while True:
            while self.queue:
                pid = self.queue.popleft()
                if self.status.get(pid) != "G":
                    continue
                before = len(self.events)
                out = self.insert_point(self.points[pid])
                if out.kind is Outcome.RETURNED_TO_G:
                    self.held[pid] = self.retries.get(pid, 0)
                if len(self.events) > before:
                    self._release_held()
            if self.pending:
                self.finalize()
                self._release_held()
                continue
            if self.held:
                self._release_held()
                continue
            return

    def _release_held(self) -> None:
        for pid in list(self.held):
            if self.status.get(pid) != "G":
                del self.held[pid]
                continue
            tries = self.held.pop(pid) + 1
            self.retries[pid] = tries
            if tries > self.config.max_retries:
                self._dust(pid, "over-crowded quadrant")
            else:
                self.queue.append(pid)

    def finalize(self) -> Optional[Hyperplane]:
        """Drain T once G is empty: one last plane through what is pending."""
        if not self.pending:
            return None
        if self.config.endgame == "synthetic" and self.counter < self.n:
            self._add_synthetic(self.n - self.counter)
        return self.flush_plane(force=True)

    def _add_synthetic(self, r: int) -> int:
        free = [pid for pid in self.s_ov if pid not in self.pending]
        order = self.rng.permutation(len(free)) if free else []
        made = 0
        for i in order:
            if made == r:
                break
            a = free[int(i)]
            x = np.asarray(self.points[a].coords, dtype=float)
            dists = np.abs(self._C.astype(float) @ x + self._c) / np.linalg.norm(self._C.astype(float), axis=1)
            radius = 0.5 * float(np.min(dists)) if len(dists) else 1.0
            if radius < 2 * self.config.delta_th:
                continue
            u = self.rng.normal(size=self.n)
            y = x + radius * u / np.linalg.norm(u)
            pid = self._max_id + 1
            pt = Point(pid, y, "synthetic")
            self._register(pt)
            ov, _ = self._ov_of(self.points[pid].coords)
            if ov is None or ov != self.s_ov[a]:
                self._dust(pid, "synthetic rejected")
                continue
            self.synthetic.add(pid)
            self.pending[a] = PendingPair(a, pid, midpoint(self.points[a], self.points[pid]))
            self.status[pid] = "T"
            self.counter += 1
            made += 1
        return made

    def append_points(self, new_points: Iterable[Point]) -> "SeparationState":
        """Restart from a solved state with more points of the same dimension."""
        return self.run(new_points)

    def lift_dimension(self, r: int) -> "SeparationState":
        """Embed everything in n + r dimensions with zero trailing coordinates."""
        if not isinstance(r, (int, np.integer)) or r < 1:
            raise ValueError(f"lift needs a positive integer, got {r!r}")
        zero = Fraction(0) if self.config.exact else 0.0

        def pad(v):
            return np.concatenate([np.asarray(v, dtype=self._dtype), np.full(r, zero, dtype=self._dtype)])

        for p in self.points.values():
            p.coords = pad(p.coords)
        for e in self.dustbin:
            if e.point.id not in self.points:
                e.point.coords = pad(e.point.coords)
        for pl in self.planes:
            pl.coeffs = pad(pl.coeffs)
            if pl.through is not None:
                pl.through = np.array([pad(t) for t in pl.through], dtype=self._dtype).reshape(len(pl.through), -1)
        for pr in self.pending.values():
            pr.midpoint = pad(pr.midpoint)
        self._store.lift(r)
        self.n += r
        self._coord_keys = {self._key(self.points[pid].coords) for pid, st in self.status.items() if st != "D"}
        self._rebuild_stacks()
        return self

    # ------------------------------------------------------------ checking

    def check_invariants(self, full: bool = True) -> None:
        """Raise AssertionError if any structural invariant is broken."""
        q = self.q
        assert all(ov.length == q for ov in self.s_ov.values()), "OV length differs from plane count"
        assert len(self.ov_lookup) == len(self.s_ov), "OVs in S are not pairwise distinct"
        for bits, pid in self.ov_lookup.items():
            assert self.s_ov[pid].bits == bits, f"lookup entry for {pid} is stale"
        assert self.counter == len(self.pending), "counter out of step with pending pairs"
        for a, pr in self.pending.items():
            assert self.status[a] == "S", f"anchor {a} not in S"
            assert len(pr.waiting) <= 3
            for m in pr.waiting:
                assert self.status[m] == "T", f"pending point {m} not in T"
                if full:
                    ov, _ = self._ov_of(self.points[m].coords)
                    assert ov == self.s_ov[a], f"pending point {m} left its anchor's quadrant"
        if full:
            for pid, ov in self.s_ov.items():
                got, _ = self._ov_of(self.points[pid].coords)
                assert got == ov, f"stored OV of point {pid} does not match its coordinates"
        assert self.stored_bits() == len(self.s_ov) * q


# Functional aliases for the documented operations.

def bootstrap(initial_points, config: Optional[SeparationConfig] = None, planes=None):
    pts = list(initial_points)
    if not pts:
        raise ValueError("bootstrap needs at least one point")
    return SeparationState(len(pts[0].coords), config).bootstrap(pts, planes)


def insert_point(state: SeparationState, p: Point) -> InsertOutcome:
    return state.insert_point(p)


def flush_plane(state: SeparationState, force: bool = False):
    return state.flush_plane(force)


def run(state: SeparationState, g_points) -> SeparationState:
    return state.run(g_points)


def finalize(state: SeparationState):
    return state.finalize()


def repair_incidence(state: SeparationState, plane: Hyperplane) -> Hyperplane:
    return state.repair_incidence(plane)


def append_points(state: SeparationState, new_points) -> SeparationState:
    return state.append_points(new_points)


def lift_dimension(state: SeparationState, r: int) -> SeparationState:
    return state.lift_dimension(r)


def separate(points, config: Optional[SeparationConfig] = None) -> SeparationState:
    """Separate a point set from scratch."""
    pts = list(points)
    if not pts:
        raise ValueError("no points")
    state = SeparationState(len(pts[0].coords), config)
    return state.run(pts)
