"""Command-line interface.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 audit failure,
4 degenerate geometry.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from fractions import Fraction
from typing import List, Optional

from hypersep import oracle, stateio
from hypersep.engine import FlushEvent, SeparationConfig, SeparationState
from hypersep.errors import BootstrapFailed, DegenerateGeometry, DimensionError, StateError
from hypersep.geometry import Hyperplane, Point, as_coords
from hypersep.retrieval import RetrievalIndex, build_index
from hypersep.sequences import WorldLine, build_sequence_index, from_index, predict_continuation
from hypersep.svgplot import plot_state

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_AUDIT, EXIT_DEGENERATE = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- io helpers

def read_points(path: str, exact: bool = False, dimension: Optional[int] = None) -> List[Point]:
    """Points from a CSV with header ``id,label,x1..xn``."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: no points")
        header = [h.strip() for h in header]
        if header[:2] != ["id", "label"] or len(header) < 3:
            raise DataError(f"{path}: line 1: header must be id,label,x1,...,xn")
        n = len(header) - 2
        if dimension is not None and dimension < n:
            raise UsageError(f"--dimension {dimension} is smaller than the data dimension {n}")
        pts, seen = [], set()
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != n + 2:
                raise DataError(f"{path}: line {lineno}: expected {n + 2} fields, got {len(row)}")
            try:
                pid = int(row[0])
                vals = [Fraction(v.strip()) if exact else float(v) for v in row[2:]]
            except ValueError as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from exc
            if pid in seen:
                raise DataError(f"{path}: line {lineno}: id {pid} used twice")
            seen.add(pid)
            if dimension is not None:
                vals += [Fraction(0) if exact else 0.0] * (dimension - n)
            pts.append(Point(pid, as_coords(vals, exact=exact), row[1].strip()))
    return pts


def load_state(path: str) -> SeparationState:
    try:
        return stateio.load(path)
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from exc


def _seed(value: Optional[int]) -> int:
    if value is not None:
        return value
    env = os.environ.get("HYPERSEP_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError as exc:
        raise UsageError(f"HYPERSEP_SEED must be an integer, got {env!r}") from exc


def _config(args) -> SeparationConfig:
    try:
        return SeparationConfig(
            seed=_seed(args.seed),
            delta_th=args.delta_th,
            tau_mode=args.tau,
            endgame=args.endgame,
            pair_cap=args.pair_cap,
            exact=args.exact,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _emit(obj) -> None:
    print(json.dumps(obj))


def _separation_ok(state: SeparationState) -> bool:
    return oracle.verify_all_separated(state.s_points(), state.planes).ok


# ------------------------------------------------------------------ commands

def cmd_separate(args) -> int:
    config = _config(args)
    pts = read_points(args.points, exact=config.exact, dimension=args.dimension)
    if not pts:
        raise DataError(f"{args.points}: no points")
    t0 = time.perf_counter()
    state = SeparationState(len(pts[0].coords), config).run(pts)
    runtime = time.perf_counter() - t0
    stateio.save(state, args.out)
    _emit({
        "N_f": len(state.s_ov),
        "q_f": state.q,
        "dustbinned": len(state.dustbin),
        "runtime": round(runtime, 3),
        "separation": "ok" if _separation_ok(state) else "failed",
        "state": args.out,
    })
    return EXIT_OK


def cmd_append(args) -> int:
    state = load_state(args.state)
    try:
        empty = os.path.getsize(args.points) == 0
    except OSError as exc:
        raise DataError(f"{args.points}: {exc.strerror}") from exc
    pts = [] if empty else read_points(args.points, exact=state.config.exact)
    for p in pts:
        if len(p.coords) != state.n:
            raise DimensionError(f"points have dimension {len(p.coords)} but the state has {state.n}; "
                                 f"run 'hypersep lift' first")
    q0, n0 = state.q, len(state.s_ov)
    state.append_points(pts)
    stateio.save(state, args.out or args.state)
    _emit({"dq": state.q - q0, "dN": len(state.s_ov) - n0, "q_f": state.q, "N_f": len(state.s_ov)})
    return EXIT_OK


def cmd_lift(args) -> int:
    if args.r < 1:
        raise UsageError("lift needs r >= 1")
    state = load_state(args.state)
    old = state.n
    state.lift_dimension(args.r)
    stateio.save(state, args.out or args.state)
    _emit({"old_n": old, "new_n": state.n})
    return EXIT_OK


def _read_payloads(path: Optional[str]) -> dict:
    if not path:
        return {}
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    out[int(obj["id"])] = str(obj.get("payload", "")).encode()
                except (ValueError, KeyError, TypeError) as exc:
                    raise DataError(f"{path}: line {lineno}: {exc}") from exc
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from exc
    return out


def cmd_index(args) -> int:
    state = load_state(args.state)
    try:
        index = build_index(state, _read_payloads(args.payloads))
    except StateError as exc:
        raise UsageError(str(exc)) from exc
    index.save(args.out)
    _emit({"records": len(index), "q": index.q, "n": index.n, "index": args.out})
    return EXIT_OK


def _load_index(path: str) -> RetrievalIndex:
    try:
        return RetrievalIndex.load(path)
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from exc
    except (ValueError, KeyError) as exc:
        raise DataError(f"{path}: malformed index ({exc})") from exc


def cmd_query(args) -> int:
    index = _load_index(args.index)
    probes = []
    if args.probe is not None:
        try:
            coords = json.loads(args.probe)
            if not isinstance(coords, list):
                raise ValueError("expected a JSON array")
            probes.append((None, [float(v) for v in coords]))
        except (ValueError, TypeError) as exc:
            raise UsageError(f"bad --probe: {exc}") from exc
    if args.probes:
        probes += [(p.id, p.coords) for p in read_points(args.probes)]
    if not probes:
        raise UsageError("give --probe or --probes")
    for probe_id, coords in probes:
        if len(coords) != index.n:
            raise UsageError(f"probe has dimension {len(coords)}, index has {index.n}")
        for rec in index.query(coords):
            row = {"point_id": rec.point_id, "code": str(rec.key),
                   "payload": rec.payload.decode("utf-8", errors="replace")}
            if probe_id is not None:
                row["probe"] = probe_id
            _emit(row)
    return EXIT_OK


def audit_document(doc: dict) -> dict:
    """Audit a state document straight from its JSON, without the engine."""
    exact = bool(doc.get("config", {}).get("exact"))
    planes = [Hyperplane(stateio.num_in(meta["constant"], exact), stateio.vec_in(coeffs, exact), index=j)
              for j, (coeffs, meta) in enumerate(zip(doc["planes"], doc["plane_meta"]))]
    s_entries = [e for e in doc["points"] if e.get("set") == "S"]
    pts = [Point(int(e["id"]), stateio.vec_in(e["coords"], exact), e.get("label", "")) for e in s_entries]
    codes = [e["code"] for e in s_entries]
    sep = oracle.verify_all_separated(pts, planes)
    mismatches = oracle.code_mismatches(pts, planes, codes)
    ledger = oracle.audit_bit_counts([len(c) for c in codes], len(planes),
                                     [FlushEvent(**e) for e in doc.get("events", [])])
    census = oracle.quadrant_census(pts, planes)
    crowded = {code: cnt for code, cnt in census.items() if cnt > 1}
    distinct = len(set(codes)) == len(codes)
    ok = sep.ok and not mismatches and ledger.ok and distinct
    return {
        "ok": ok,
        "separation": sep.to_dict(),
        "code_mismatches": [{"id": i, "stored": a, "recomputed": b} for i, a, b in mismatches],
        "stored_codes_distinct": distinct,
        "bits": ledger.to_dict(),
        "census": {"quadrants": len(census), "points": sum(census.values()), "crowded": crowded},
        "pending_pairs": len(doc.get("pending", [])),
        "dustbin": len(doc.get("dustbin", [])),
    }


def cmd_audit(args) -> int:
    try:
        with open(args.state, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"{args.state}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{args.state}: not JSON ({exc})") from exc
    try:
        report = audit_document(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{args.state}: malformed state ({exc})") from exc
    print(json.dumps(report, indent=1))
    if not report["ok"]:
        for m in report["code_mismatches"]:
            print(f"audit: point {m['id']} stores code {m['stored']} but lies in {m['recomputed']}",
                  file=sys.stderr)
        if report["separation"]["violating_pair"]:
            a, b = report["separation"]["violating_pair"]
            print(f"audit: points {a} and {b} are not separated", file=sys.stderr)
        for f in report["bits"]["failures"]:
            print(f"audit: {f}", file=sys.stderr)
        return EXIT_AUDIT
    return EXIT_OK


def cmd_plot(args) -> int:
    state = load_state(args.state)
    if state.n != 2:
        raise UsageError(f"plot needs a 2-D state, this one has n={state.n}")
    plot_state(state, args.out, title=args.title or f"N={len(state.s_ov)}, q={state.q}")
    _emit({"svg": args.out, "points": len(state.s_ov), "planes": state.q})
    return EXIT_OK


def _read_sequences(path: str, horizon: Optional[int]) -> List[WorldLine]:
    rows = []
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    rows.append((int(obj["id"]), list(obj["values"])))
                except (ValueError, KeyError, TypeError) as exc:
                    raise DataError(f"{path}: line {lineno}: {exc}") from exc
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from exc
    if not rows:
        raise DataError(f"{path}: no sequences")
    h = horizon or max(len(v) for _, v in rows)
    try:
        return [WorldLine(v, h, i) for i, v in rows]
    except ValueError as exc:
        raise DataError(str(exc)) from exc


def cmd_seq_index(args) -> int:
    config = _config(args)
    seqs = _read_sequences(args.sequences, args.horizon)
    built = build_sequence_index(seqs, seqs[0].horizon, config, length_tag=args.length_tag)
    built.index.save(args.out)
    if args.state_out:
        stateio.save(built.state, args.state_out)
    _emit({"records": len(built.index), "q": built.index.q, "n": built.index.n,
           "horizon": built.horizon, "index": args.out})
    return EXIT_OK


def cmd_seq_predict(args) -> int:
    index = _load_index(args.index)
    try:
        seq_index = from_index(index)
        values = json.loads(args.prefix)
        live = WorldLine(values, seq_index.horizon)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if not len(live):
        raise UsageError("empty prefix")
    for m in predict_continuation(seq_index, live):
        _emit({"id": m.history_id, "prefix_length": m.prefix_length, "values": m.values, "tail": m.tail})
    return EXIT_OK


# -------------------------------------------------------------------- parser

def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="RNG seed (default: $HYPERSEP_SEED or 0)")
    p.add_argument("--delta-th", type=float, default=1e-6, help="dust-bin Manhattan threshold")
    p.add_argument("--tau", choices=["off", "pi-ratio"], default="off", help="plane constant")
    p.add_argument("--endgame", choices=["step7", "synthetic"], default="step7",
                   help="how the last, short flush is done")
    p.add_argument("--pair-cap", type=int, default=None, help="max pending pairs while waiting out "
                   "degenerate midpoints (default 2n)")
    p.add_argument("--exact", action="store_true", help="rational arithmetic instead of doubles")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hypersep", description="Separate points by hyperplanes and index them by quadrant.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("separate", help="separate the points of a CSV file")
    p.add_argument("points", help="CSV with header id,label,x1..xn")
    p.add_argument("--out", default="state.json", help="state file to write")
    p.add_argument("--dimension", type=int, default=None, help="pad points with zeros up to this dimension")
    _add_config_flags(p)
    p.set_defaults(func=cmd_separate)

    p = sub.add_parser("append", help="add points to a solved state")
    p.add_argument("state")
    p.add_argument("points")
    p.add_argument("--out", default=None, help="write here instead of overwriting the state")
    p.set_defaults(func=cmd_append)

    p = sub.add_parser("lift", help="embed a state in r more dimensions")
    p.add_argument("state")
    p.add_argument("r", type=int)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_lift)

    p = sub.add_parser("index", help="build a retrieval index from a solved state")
    p.add_argument("state")
    p.add_argument("--payloads", default=None, help="JSON lines {id, payload}")
    p.add_argument("--out", default="index.hsx")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("query", help="look up probes in an index")
    p.add_argument("index")
    p.add_argument("--probe", default=None, help="JSON array of coordinates")
    p.add_argument("--probes", default=None, help="CSV of probe points")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("audit", help="check a state file independently")
    p.add_argument("state")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("plot", help="draw a 2-D state as SVG")
    p.add_argument("state")
    p.add_argument("--out", default="state.svg")
    p.add_argument("--title", default=None)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("seq-index", help="index sequences by their prefixes")
    p.add_argument("sequences", help="JSON lines {id, values}")
    p.add_argument("--horizon", type=int, default=None, help="record length (default: longest sequence)")
    p.add_argument("--length-tag", action="store_true", help="append the prefix length as a coordinate")
    p.add_argument("--out", default="sequences.hsx")
    p.add_argument("--state-out", default=None)
    _add_config_flags(p)
    p.set_defaults(func=cmd_seq_index)

    p = sub.add_parser("seq-predict", help="continuations of a live prefix")
    p.add_argument("index")
    p.add_argument("--prefix", required=True, help="JSON array of observed values")
    p.set_defaults(func=cmd_seq_predict)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, DimensionError) as exc:
        print(f"hypersep: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, StateError) as exc:
        print(f"hypersep: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DegenerateGeometry, BootstrapFailed) as exc:
        print(f"hypersep: degenerate geometry: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
