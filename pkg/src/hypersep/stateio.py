"""JSON persistence for a separation state.

Floats are written with Python's shortest round-trip repr, so a reload gives
back the identical doubles.  Exact-mode rationals are written as "p/q"
strings and the near-unity transcendental constant as "tau".
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import asdict
from fractions import Fraction
from typing import Any

import numpy as np

from hypersep.engine import DustEntry, FlushEvent, PendingPair, SeparationConfig, SeparationState
from hypersep.errors import StateError
from hypersep.geometry import TAU, Hyperplane, OrientationVector, PiRatio, Point, as_coords

SCHEMA = 1


def num_out(v) -> Any:
    if isinstance(v, PiRatio):
        return "tau"
    if isinstance(v, Fraction):
        return str(v)
    return float(v)


def num_in(v, exact: bool = False):
    if v == "tau":
        return TAU
    if isinstance(v, str):
        f = Fraction(v)
        return f if exact else float(f)
    return Fraction(v) if exact else float(v)


def vec_out(x) -> list:
    return [num_out(v) for v in x]


def vec_in(values, exact: bool = False) -> np.ndarray:
    return as_coords([num_in(v, exact) for v in values], exact=exact)


def state_to_dict(state: SeparationState) -> dict:
    pts = []
    for pid in sorted(state.points):
        st = state.status[pid]
        if st == "D":
            continue
        p = state.points[pid]
        entry = {"id": pid, "label": p.label, "coords": vec_out(p.coords), "set": st}
        if st == "S":
            entry["code"] = state.s_ov[pid].code_string()
        if pid in state.synthetic:
            entry["synthetic"] = True
        pts.append(entry)
    return {
        "schema": SCHEMA,
        "n": state.n,
        "tau": state.config.tau_mode,
        "planes": [vec_out(pl.coeffs) for pl in state.planes],
        "plane_meta": [
            {
                "constant": num_out(pl.constant),
                "saturated": bool(pl.saturated),
                "through": None if pl.through is None else [vec_out(t) for t in pl.through],
            }
            for pl in state.planes
        ],
        "points": pts,
        "pending": [
            {"anchor": pr.anchor, "first": pr.first, "second": pr.second, "third": pr.third,
             "midpoint": vec_out(pr.midpoint)}
            for pr in state.pending.values()
        ],
        "counter": state.counter,
        "queue": list(state.queue),
        "held": [[pid, r] for pid, r in state.held.items()],
        "retries": [[pid, r] for pid, r in sorted(state.retries.items())],
        "dustbin": [
            {"id": e.point.id, "label": e.point.label, "coords": vec_out(e.point.coords), "reason": e.reason}
            for e in state.dustbin
        ],
        "events": [asdict(e) for e in state.events],
        "stage": {"n": state.stage_n, "bits": state.stage_bits},
        "plane_repairs": state.plane_repairs,
        "config": state.config.to_dict(),
        "seed": state.config.seed,
        "rng_state": state.rng.bit_generator.state,
    }


def state_from_dict(doc: dict) -> SeparationState:
    if doc.get("schema") != SCHEMA:
        raise StateError(f"unsupported state schema {doc.get('schema')!r}")
    try:
        config = SeparationConfig(**doc["config"])
        exact = config.exact
        state = SeparationState(int(doc["n"]), config)
        for coeffs, meta in zip(doc["planes"], doc["plane_meta"]):
            through = meta.get("through")
            if through is not None:
                through = np.array([vec_in(t, exact) for t in through], dtype=object if exact else float)
                through = through.reshape(len(meta["through"]), state.n)
            state.planes.append(Hyperplane(num_in(meta["constant"], exact), vec_in(coeffs, exact),
                                           index=len(state.planes), saturated=meta["saturated"],
                                           through=through))
        state._rebuild_stacks()
        q = len(state.planes)
        for e in doc["points"]:
            p = Point(int(e["id"]), vec_in(e["coords"], exact), e.get("label", ""))
            state.points[p.id] = p
            state._store.add(p.id, p.coords)
            state._coord_keys.add(state._key(p.coords))
            state._max_id = max(state._max_id, p.id)
            state.status[p.id] = e["set"]
            if e["set"] == "S":
                code = e["code"]
                if len(code) != q:
                    raise StateError(f"point {p.id}: code length {len(code)} but {q} planes")
                bits = sum(1 << j for j, ch in enumerate(code) if ch == "1")
                if bits in state.ov_lookup:
                    raise StateError(f"points {state.ov_lookup[bits]} and {p.id} share code {code}")
                state._place(p.id, OrientationVector(bits, q))
            if e.get("synthetic"):
                state.synthetic.add(p.id)
        for e in doc["dustbin"]:
            p = Point(int(e["id"]), vec_in(e["coords"], exact), e.get("label", ""))
            if p.id not in state.points:
                state.points[p.id] = p
                state._store.add(p.id, p.coords)
                state._store.kill(p.id)
                state.status[p.id] = "D"
                state._max_id = max(state._max_id, p.id)
            state.dustbin.append(DustEntry(p, e["reason"]))
        for e in doc["pending"]:
            state.pending[e["anchor"]] = PendingPair(e["anchor"], e["first"], vec_in(e["midpoint"], exact),
                                                     e.get("second"), e.get("third"))
        state.counter = int(doc["counter"])
        state.queue = deque(doc["queue"])
        state.held = {int(a): int(b) for a, b in doc["held"]}
        state.retries = {int(a): int(b) for a, b in doc["retries"]}
        state.events = [FlushEvent(**e) for e in doc["events"]]
        state.stage_n = doc["stage"]["n"]
        state.stage_bits = doc["stage"]["bits"]
        state.plane_repairs = doc.get("plane_repairs", 0)
        state.rng.bit_generator.state = doc["rng_state"]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, StateError):
            raise
        raise StateError(f"malformed state document: {exc}") from exc
    return state


def dumps(state: SeparationState) -> str:
    return json.dumps(state_to_dict(state), indent=1) + "\n"


def loads(text: str) -> SeparationState:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise StateError(f"state file is not JSON: {exc}") from exc
    return state_from_dict(doc)


def save(state: SeparationState, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(state))


def load(path) -> SeparationState:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
