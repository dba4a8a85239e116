"""Sequences as chains of zero-padded prefix points.

A record ``c(1), ..., c(s)`` with horizon ``H`` becomes the points
``(c(1), 0, ..., 0)``, ``(c(1), c(2), 0, ..., 0)`` and so on, each of
dimension ``H`` (``H * m`` when every observation is an m-vector).  The
points are separated and indexed; a live prefix is then padded the same way
and used as a probe, and every stored history sharing its quadrant comes back
with its continuation.

Value scaling is left to the caller.  Two different prefixes can pad to the
same point (``(3)`` and ``(3, 0)``); pass ``length_tag=True`` to append the
prefix length as one extra coordinate, which makes the encoding injective.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from hypersep.engine import SeparationConfig, SeparationState
from hypersep.geometry import Point
from hypersep.retrieval import RetrievalIndex, build_index


@dataclass
class WorldLine:
    values: list
    horizon: int
    id: int = 0

    def __post_init__(self):
        vals = [np.atleast_1d(np.asarray(v, dtype=float)) for v in self.values]
        if vals and len({len(v) for v in vals}) > 1:
            raise ValueError("all observations must have the same width")
        self._blocks = vals
        if len(vals) > self.horizon:
            raise ValueError(f"sequence of length {len(vals)} exceeds horizon {self.horizon}")

    @property
    def m(self) -> int:
        return len(self._blocks[0]) if self._blocks else 1

    def __len__(self) -> int:
        return len(self._blocks)

    def block(self, i: int) -> np.ndarray:
        return self._blocks[i]


def encode_prefix(seq: WorldLine, k: int, point_id: int = 0, length_tag: bool = False) -> Point:
    if not 1 <= k <= len(seq):
        raise ValueError(f"prefix length {k} outside 1..{len(seq)}")
    m = seq.m
    coords = np.zeros(seq.horizon * m + (1 if length_tag else 0))
    for i in range(k):
        coords[i * m:(i + 1) * m] = seq.block(i)
    if length_tag:
        coords[-1] = k
    return Point(point_id, coords, f"{seq.id}:{k}")


def encode_all(seq: WorldLine, start_id: int = 0, length_tag: bool = False) -> List[Point]:
    if len(seq) < 1:
        raise ValueError("empty sequence")
    return [encode_prefix(seq, k, start_id + k - 1, length_tag) for k in range(1, len(seq) + 1)]


@dataclass
class Match:
    history_id: int
    prefix_length: int
    values: list
    tail: list


@dataclass
class SequenceIndex:
    horizon: int
    m: int
    length_tag: bool
    state: Optional[SeparationState]
    index: RetrievalIndex
    histories: Dict[int, list] = field(default_factory=dict)


def build_sequence_index(histories: Iterable[WorldLine], horizon: int, config: Optional[SeparationConfig] = None,
                         length_tag: bool = False) -> SequenceIndex:
    """Separate every prefix point of every history and index them.

    Prefixes that pad to the same point (shared openings) collapse into one
    point whose record lists every history through it.
    """
    histories = list(histories)
    if not histories:
        raise ValueError("no histories")
    m = histories[0].m
    owners: Dict[bytes, List[Tuple[int, int]]] = {}
    points: List[Point] = []
    for h in histories:
        if h.horizon != horizon:
            raise ValueError(f"history {h.id} has horizon {h.horizon}, expected {horizon}")
        if h.m != m:
            raise ValueError(f"history {h.id} has width {h.m}, expected {m}")
        for k in range(1, len(h) + 1):
            p = encode_prefix(h, k, len(points), length_tag)
            key = p.coords.tobytes()
            if key not in owners:
                owners[key] = []
                points.append(p)
            owners[key].append((h.id, k))
    state = SeparationState(len(points[0].coords), config).run(points)
    by_id = {h.id: [b.tolist() if m > 1 else float(b[0]) for b in h._blocks] for h in histories}

    def payload(pid: int) -> bytes:
        entries = owners[state.points[pid].coords.tobytes()]
        return json.dumps([{"id": hid, "k": k, "values": by_id[hid]} for hid, k in entries]).encode()

    index = build_index(state, payload)
    index.meta = {"kind": "sequence", "horizon": horizon, "m": m, "length_tag": length_tag}
    return SequenceIndex(horizon, m, length_tag, state, index, by_id)


def from_index(index: RetrievalIndex) -> SequenceIndex:
    """Rebuild the query side of a sequence index from a loaded index file."""
    meta = index.meta
    if meta.get("kind") != "sequence":
        raise ValueError("index was not built from sequences")
    return SequenceIndex(meta["horizon"], meta["m"], meta["length_tag"], None, index)


def predict_continuation(seq_index: SequenceIndex, live_prefix: WorldLine, s: Optional[int] = None) -> List[Match]:
    """Histories whose stored prefix shares a quadrant with the live prefix.

    Each match carries the full history and its tail after position ``s``.
    """
    s = len(live_prefix) if s is None else s
    probe = encode_prefix(live_prefix, s, length_tag=seq_index.length_tag)
    out = []
    for rec in seq_index.index.query(probe):
        for entry in json.loads(rec.payload.decode() or "[]"):
            values = entry["values"]
            out.append(Match(entry["id"], entry["k"], values, values[s:]))
    out.sort(key=lambda mt: (mt.history_id, mt.prefix_length))
    return out


def horizon_of(histories: Sequence[WorldLine]) -> int:
    return max(len(h) for h in histories)
