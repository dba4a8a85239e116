"""Quadrant-code storage and retrieval.

Each point's sides against the planes are binarized with the unit step
(``z > 0`` gives 1, anything else 0) into a quadrant code.  Records are kept
under their code, and a probe retrieves whatever shares its code: one pass
over the planes (q.n multiplications and q.n additions) plus one dict lookup.
A probe that sits near a plane can fall on the other side and miss; matching
is exact by design.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Union

import numpy as np

from hypersep.errors import DimensionError, StateError
from hypersep.geometry import Hyperplane, OpCounter, evaluate_side
from hypersep.stateio import num_in, num_out, vec_in, vec_out

MAGIC = b"HYPERSEP-INDEX 1\n"
SEPARATOR = b"--\n"


def usf(z) -> int:
    return 1 if z > 0 else 0


@dataclass(frozen=True)
class QuadrantCode:
    bits: int
    q: int

    def __str__(self) -> str:
        return "".join("1" if (self.bits >> j) & 1 else "0" for j in range(self.q))

    @classmethod
    def parse(cls, text: str) -> "QuadrantCode":
        if any(ch not in "01" for ch in text):
            raise ValueError(f"bad quadrant code {text!r}")
        return cls(sum(1 << j for j, ch in enumerate(text) if ch == "1"), len(text))


@dataclass
class Record:
    key: QuadrantCode
    point_id: int
    payload: bytes = b""


def code_of(point, planes, ops: Optional[OpCounter] = None) -> QuadrantCode:
    """Binarized side code of ``point``; boundary values map to 0."""
    bits = 0
    for j, plane in enumerate(planes):
        if usf(evaluate_side(point, plane, ops).value):
            bits |= 1 << j
    return QuadrantCode(bits, len(planes))


class RetrievalIndex:
    """Records keyed by quadrant code, with the plane snapshot used to code probes."""

    def __init__(self, planes, n: Optional[int] = None, meta: Optional[dict] = None):
        self.planes: List[Hyperplane] = list(planes)
        self.meta = dict(meta or {})
        if n is None:
            if not self.planes:
                raise ValueError("dimension needed for an index without planes")
            n = self.planes[0].dimension
        self.n = n
        self.q = len(self.planes)
        self._table: Dict[int, Dict[int, Record]] = {}
        self._exact = any(pl.coeffs.dtype == object or not isinstance(pl.constant, float) for pl in self.planes)
        if self.planes:
            self._A = np.array([pl.coeffs for pl in self.planes], dtype=float)
            self._c = np.array([float(pl.constant) for pl in self.planes])
        else:
            self._A = np.zeros((0, n))
            self._c = np.zeros(0)

    def __len__(self) -> int:
        return sum(len(v) for v in self._table.values())

    def records(self) -> List[Record]:
        return [r for k in sorted(self._table) for r in self._table[k].values()]

    def codes(self) -> List[QuadrantCode]:
        return [QuadrantCode(k, self.q) for k in self._table]

    def store(self, code: QuadrantCode, record: Record) -> bool:
        """Add ``record`` under ``code``; True when it replaced an older record."""
        if code.q != self.q:
            raise ValueError(f"code has {code.q} bits, index has {self.q} planes")
        record.key = code
        bucket = self._table.setdefault(code.bits, {})
        replaced = record.point_id in bucket
        bucket[record.point_id] = record
        return replaced

    def probe_code(self, probe, ops: Optional[OpCounter] = None) -> QuadrantCode:
        x = np.asarray(getattr(probe, "coords", probe))
        if len(x) != self.n:
            raise DimensionError(f"probe has dimension {len(x)}, index has {self.n}")
        if ops is not None or self._exact:
            return code_of(x, self.planes, ops)
        pos = (self._A @ x.astype(float) + self._c) > 0
        bits = int.from_bytes(np.packbits(pos, bitorder="little").tobytes(), "little") if pos.size else 0
        return QuadrantCode(bits, self.q)

    def query(self, probe, ops: Optional[OpCounter] = None) -> List[Record]:
        code = self.probe_code(probe, ops)
        return list(self._table.get(code.bits, {}).values())

    # -- persistence

    def save(self, path) -> None:
        header = {
            "n": self.n,
            "q": self.q,
            "constants": [num_out(pl.constant) for pl in self.planes],
            "planes": [vec_out(pl.coeffs) for pl in self.planes],
            "meta": self.meta,
        }
        rows, blob, offset = [], [], 0
        for rec in sorted(self.records(), key=lambda r: (str(r.key), r.point_id)):
            rows.append(f"{rec.key}\t{rec.point_id}\t{offset}\t{len(rec.payload)}\n")
            blob.append(rec.payload)
            offset += len(rec.payload)
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(json.dumps(header).encode() + b"\n")
            fh.write("".join(rows).encode())
            fh.write(SEPARATOR)
            fh.write(b"".join(blob))

    @classmethod
    def load(cls, path) -> "RetrievalIndex":
        with open(path, "rb") as fh:
            data = fh.read()
        if not data.startswith(MAGIC):
            raise StateError(f"{path}: not an index file")
        head_end = data.index(b"\n", len(MAGIC))
        header = json.loads(data[len(MAGIC):head_end])
        rest = data[head_end + 1:]
        if rest.startswith(SEPARATOR):
            table, blob = "", rest[len(SEPARATOR):]
        else:
            cut = rest.index(b"\n" + SEPARATOR) + 1
            table, blob = rest[:cut].decode(), rest[cut + len(SEPARATOR):]
        exact = any(isinstance(v, str) and v != "tau" for row in header["planes"] for v in row)
        planes = [Hyperplane(num_in(c, exact), vec_in(a, exact), index=j)
                  for j, (c, a) in enumerate(zip(header["constants"], header["planes"]))]
        index = cls(planes, header["n"], header.get("meta"))
        for line in table.splitlines():
            code, pid, off, length = line.split("\t")
            off, length = int(off), int(length)
            index.store(QuadrantCode.parse(code), Record(QuadrantCode.parse(code), int(pid), blob[off:off + length]))
        return index


PayloadSource = Union[None, Mapping[int, bytes], Callable[[int], bytes]]


def _payload(source: PayloadSource, pid: int) -> bytes:
    if source is None:
        return b""
    value = source(pid) if callable(source) else source.get(pid, b"")
    if isinstance(value, str):
        value = value.encode()
    return bytes(value)


def build_index(state, payload_source: PayloadSource = None) -> RetrievalIndex:
    """One record per separated point, keyed by its stored orientation code."""
    if state.pending or state.queue or state.held:
        raise StateError("state is not finalized: points are still waiting in T or G")
    index = RetrievalIndex(state.planes, state.n)
    for pid, ov in state.s_ov.items():
        code = QuadrantCode(ov.bits, ov.length)
        index.store(code, Record(code, pid, _payload(payload_source, pid)))
    return index


def store(index: RetrievalIndex, code: QuadrantCode, record: Record) -> bool:
    return index.store(code, record)


def query(index: RetrievalIndex, probe, ops: Optional[OpCounter] = None) -> List[Record]:
    return index.query(probe, ops)
