import math
from fractions import Fraction

import numpy as np
import pytest

from conftest import random_points, worked_example
from hypersep import oracle, stateio
from hypersep.engine import Outcome, SeparationConfig, SeparationState, bootstrap, separate
from hypersep.errors import BootstrapFailed, DimensionError, StateError
from hypersep.geometry import TAU, Hyperplane, Point, PiRatio, compute_ov, evaluate_side


def _solved(points, **cfg):
    return separate(points, SeparationConfig(**cfg))


def _assert_separated(state):
    rep = oracle.verify_all_separated(state.s_points(), state.planes)
    assert rep.ok, rep
    state.check_invariants()


# --- the two-plane start and the first flush, worked by hand

def test_stage_one_codes(stage1):
    assert stage1.q == 2 and len(stage1.s_ov) == 3
    assert stage1.s_ov[1].signs() == (1, 1)
    assert stage1.s_ov[2].signs() == (1, -1)
    assert stage1.s_ov[3].signs() == (-1, 1)


def test_fresh_quadrant_goes_to_s(stage1):
    out = stage1.insert_point(Point(4, [8, 8], "a"))
    assert out.kind is Outcome.PLACED_IN_S
    assert len(stage1.s_ov) == 4


def test_first_neighbour_and_flush(stage1):
    stage1.insert_point(Point(4, [8, 8], "a"))
    out = stage1.insert_point(Point(5, [1, 1], "a"))
    assert out.kind is Outcome.PAIRED_FIRST and out.anchor == 1
    assert stage1.counter == 1
    assert np.array_equal(stage1.pending[1].midpoint, [2.0, 1.5])

    out = stage1.insert_point(Point(6, [9, 4], "c"))
    assert out.kind is Outcome.TRIGGERED_FLUSH and out.plane_index == 2
    # 1 + b1 m_x + b2 m_y = 0 through (2, 1.5) and (8.5, 3)
    assert stage1.planes[2].coeffs == pytest.approx([2 / 9, -26 / 27], rel=1e-12)
    got = {pid: ov.signs() for pid, ov in stage1.s_ov.items()}
    assert got[1] == (1, 1, -1)
    assert got[5] == (1, 1, 1)
    assert got[2] == (1, -1, -1)
    assert got[3] == (-1, 1, 1)
    assert got[6] == (-1, 1, -1)
    assert stage1.q == 3 and len(stage1.s_ov) == 6 and stage1.counter == 0
    _assert_separated(stage1)


def test_second_neighbour_promoted(stage1):
    stage1.insert_point(Point(5, [1, 1], "a"))
    assert stage1.insert_point(Point(7, [2, 1], "a")).kind is Outcome.PAIRED_SECOND
    stage1.insert_point(Point(6, [9, 4], "c"))
    # (2,1) falls on a5's side of the new plane and pairs with it
    assert list(stage1.pending) == [5]
    assert stage1.pending[5].first == 7
    assert stage1.counter == 1
    assert compute_ov(stage1.points[7], stage1.planes) == stage1.s_ov[5]
    stage1.check_invariants()


def test_fourth_neighbour_returned(stage1):
    kinds = [stage1.insert_point(Point(10 + i, xy)).kind
             for i, xy in enumerate([[1, 1], [2, 1], [1, 2], [4, 4]])]
    assert kinds == [Outcome.PAIRED_FIRST, Outcome.PAIRED_SECOND, Outcome.PAIRED_THIRD, Outcome.RETURNED_TO_G]
    assert stage1.status[13] == "G"
    assert stage1.counter == 1


def test_dustbin_threshold():
    state = SeparationState(2, SeparationConfig(delta_th=0.1))
    state.bootstrap([Point(1, [3.0, 2.0]), Point(2, [2.0, 8.0]), Point(3, [8.0, 2.0])],
                    planes=[Hyperplane(1.0, [-0.2, 0.0]), Hyperplane(1.0, [0.0, -0.2])])
    out = state.insert_point(Point(9, [3.025, 2.025]))
    assert out.kind is Outcome.DUSTBINNED and out.anchor == 1
    assert state.status[9] == "D" and state.dustbin[-1].reason == "accumulation"
    assert state.counter == 0


def test_duplicate_point_dustbinned(stage1):
    out = stage1.insert_point(Point(9, [3.0, 2.0]))
    assert out.kind is Outcome.DUSTBINNED
    assert stage1.dustbin[-1].reason == "duplicate"


def test_insert_wrong_dimension(stage1):
    with pytest.raises(DimensionError):
        stage1.insert_point(Point(9, [1.0, 2.0, 3.0]))


def test_reused_id_rejected(stage1):
    with pytest.raises(ValueError):
        stage1.insert_point(Point(1, [7.0, 7.0]))


# --- bootstrap

def test_bootstrap_simplex():
    for n in (2, 3, 5, 8):
        pts = [Point(0, np.zeros(n))] + [Point(i + 1, np.eye(n)[i]) for i in range(n)]
        state = bootstrap(pts, SeparationConfig(seed=n))
        assert state.q <= math.ceil(math.log2(n + 1)) + 2
        assert len({ov.bits for ov in state.s_ov.values()}) == n + 1
        _assert_separated(state)


def test_bootstrap_identical_points():
    with pytest.raises(BootstrapFailed):
        bootstrap([Point(0, [1.0, 1.0]), Point(1, [1.0, 1.0])])


def test_bootstrap_given_planes_must_separate():
    state = SeparationState(2)
    with pytest.raises(BootstrapFailed):
        state.bootstrap([Point(0, [1.0, 1.0]), Point(1, [2.0, 2.0])], planes=[Hyperplane(1.0, [-0.2, 0.0])])
    # the failed attempt leaves nothing behind
    assert not state.points and not state.planes
    state.bootstrap([Point(0, [1.0, 1.0]), Point(1, [9.0, 9.0])], planes=[Hyperplane(1.0, [-0.2, 0.0])])
    assert len(state.s_ov) == 2


def test_bootstrap_twice_rejected(stage1):
    with pytest.raises(StateError):
        stage1.bootstrap([Point(50, [0.0, 0.0])])


# --- run / finalize

def test_run_empty_is_noop(stage1):
    before = stateio.dumps(stage1)
    stage1.run([])
    assert stateio.dumps(stage1) == before


def test_run_random_high_dimension():
    state = _solved(random_points(1000, 20, seed=4), seed=4)
    assert state.finished
    assert state.q <= 3 * math.log2(1000)
    _assert_separated(state)
    assert len(state.s_ov) + len(state.dustbin) == 1000


@pytest.mark.parametrize("n", [2, 3, 5, 10])
def test_run_uniform(n):
    pts = random_points(300, n, seed=n, integer=False)
    state = _solved(pts, seed=n)
    _assert_separated(state)
    assert len(state.s_ov) == 300


def test_run_integer_grid():
    pts = [Point(i * 10 + j, [float(i), float(j)]) for i in range(10) for j in range(10)]
    state = _solved(pts, seed=1)
    _assert_separated(state)
    assert len(state.s_ov) == 100


def test_finalize_noop_when_nothing_pending(stage1):
    q = stage1.q
    assert stage1.finalize() is None
    assert stage1.q == q


def _three_d_state(**cfg):
    planes = [Hyperplane(1.0, [-0.2, 0, 0]), Hyperplane(1.0, [0, -0.2, 0]), Hyperplane(1.0, [0, 0, -0.2])]
    seeds = [Point(1, [1.0, 1.0, 1.0]), Point(2, [9.0, 1.0, 1.0]), Point(3, [1.0, 9.0, 1.0])]
    state = SeparationState(3, SeparationConfig(**cfg))
    state.bootstrap(seeds, planes=planes)
    return state


def test_finalize_step7_single_pair():
    state = _three_d_state(seed=2)
    assert state.insert_point(Point(4, [2.0, 2.0, 2.0])).kind is Outcome.PAIRED_FIRST
    plane = state.finalize()
    assert plane is not None and state.counter == 0
    ev = state.events[-1]
    assert ev.randomized == 2 and ev.endgame
    assert ev.residual <= 1e-8 * ev.scale
    assert state.status[4] == "S"
    _assert_separated(state)


def test_finalize_synthetic():
    state = _three_d_state(seed=5, endgame="synthetic")
    state.insert_point(Point(4, [2.0, 2.0, 2.0]))
    state.insert_point(Point(5, [8.0, 2.0, 2.0]))
    assert state.counter == 2
    state.finalize()
    assert len(state.synthetic) == 1
    ev = state.events[-1]
    assert ev.synthetic == 1 and ev.randomized == 0
    assert state.counter == 0
    _assert_separated(state)
    doc = stateio.state_to_dict(state)
    flagged = [p["id"] for p in doc["points"] if p.get("synthetic")]
    assert flagged == sorted(state.synthetic)


def test_synthetic_endgame_full_run():
    pts = random_points(200, 4, seed=9)
    state = _solved(pts, seed=9, endgame="synthetic")
    _assert_separated(state)
    real = [pid for pid in state.s_ov if pid not in state.synthetic]
    assert len(real) == 200


# --- incidence repair

def test_repair_moves_plane_off_point(stage1):
    plane = Hyperplane(1.0, [-1 / 3, 0.0], index=99)
    assert evaluate_side(stage1.points[1], plane).sign == 0
    fixed = stage1.repair_incidence(plane)
    assert fixed is not plane
    for p in stage1.points.values():
        ev = evaluate_side(p, fixed)
        assert ev.sign != 0
    assert stage1.q == 2


def test_repair_noop_without_incidence(stage1):
    plane = Hyperplane(1.0, [-0.07, -0.11], index=99)
    assert stage1.repair_incidence(plane) is plane


def test_existing_plane_repaired_on_insert(stage1):
    before = [pl.coeffs.copy() for pl in stage1.planes]
    codes = dict(stage1.s_ov)
    out = stage1.insert_point(Point(8, [5.0, 7.0]))
    assert out.kind is Outcome.PLACED_IN_S
    assert stage1.plane_repairs == 1
    assert not np.array_equal(stage1.planes[0].coeffs, before[0])
    assert np.array_equal(stage1.planes[1].coeffs, before[1])
    for pid, ov in codes.items():
        assert stage1.s_ov[pid] == ov
    _assert_separated(stage1)


def test_tau_swaps_constant_in_exact_mode():
    cfg = SeparationConfig(exact=True, tau_mode="pi-ratio")
    state = SeparationState(2, cfg)
    planes = [Hyperplane(TAU, np.array([Fraction(-1, 5), Fraction(0)], dtype=object)),
              Hyperplane(TAU, np.array([Fraction(0), Fraction(-1, 5)], dtype=object))]
    state.bootstrap([Point(1, [3, 2]), Point(2, [2, 8]), Point(3, [8, 2])], planes=planes)
    plane = Hyperplane(Fraction(1), np.array([Fraction(-1, 3), Fraction(0)], dtype=object), index=99)
    fixed = state.repair_incidence(plane)
    assert isinstance(fixed.constant, PiRatio)
    assert list(fixed.coeffs) == list(plane.coeffs)


def test_tau_integer_points_never_incident():
    pts = [Point(i, list(map(int, xy))) for i, xy in
           enumerate(np.random.default_rng(0).integers(-20, 20, size=(60, 2)))]
    state = separate(pts, SeparationConfig(exact=True, tau_mode="pi-ratio", seed=3))
    assert all(isinstance(pl.constant, PiRatio) for pl in state.planes)
    S = oracle.side_matrix(list(state.points[p] for p in state.status if state.status[p] != "D"), state.planes)
    assert not (S == 0).any()
    _assert_separated(state)


def test_exact_mode_rational_planes():
    pts = [Point(i, [Fraction(int(a), 3), Fraction(int(b), 7)]) for i, (a, b) in
           enumerate(np.random.default_rng(1).integers(-50, 50, size=(40, 2)))]
    state = separate(pts, SeparationConfig(exact=True, seed=0))
    _assert_separated(state)
    flushed = [pl for pl in state.planes[len(state.planes) - len(state.events):]]
    for pl in flushed:
        assert all(isinstance(v, Fraction) for v in pl.coeffs)
    for ev in state.events:
        assert ev.residual == 0


# --- restart and lift

def _in_quadrant_copies(state, count, offset):
    """New points next to S points, each still inside its neighbour's quadrant."""
    out, used = [], set()
    for pid in sorted(state.s_ov):
        if pid in state.pending:
            continue
        x = state.points[pid].coords + offset
        if compute_ov(x, state.planes) == state.s_ov[pid]:
            out.append(Point(1000 + len(out), x))
            used.add(pid)
        if len(out) == count:
            break
    return out


def test_append_keeps_planes_and_adds_one():
    state = _solved(worked_example(), seed=0)
    old = [(pl.constant, pl.coeffs.copy()) for pl in state.planes]
    codes = {pid: ov for pid, ov in state.s_ov.items()}
    new = _in_quadrant_copies(state, 2, np.array([0.01, -0.01]))
    kinds = [state.insert_point(p).kind for p in new]
    assert kinds == [Outcome.PAIRED_FIRST, Outcome.TRIGGERED_FLUSH]
    assert state.q == len(old) + 1 and len(state.s_ov) == 31
    for (c, a), pl in zip(old, state.planes):
        assert c == pl.constant and np.array_equal(a, pl.coeffs)
    for pid, ov in codes.items():
        assert state.s_ov[pid].bits & ((1 << len(old)) - 1) == ov.bits
    _assert_separated(state)


def test_append_empty_unchanged():
    state = _solved(worked_example(), seed=0)
    before = stateio.dumps(state)
    state.append_points([])
    assert stateio.dumps(state) == before


def test_append_dimension_mismatch():
    state = _solved(worked_example(), seed=0)
    with pytest.raises(DimensionError, match="lift"):
        state.append_points([Point(500, [1.0, 2.0, 3.0])])


def test_append_triples_points_small_growth():
    growth = []
    # large n: each full flush moves n points at once
    for seed in range(4):
        pts = random_points(1500, 50, seed=seed)
        state = _solved(pts[:500], seed=seed)
        q0 = state.q
        state.append_points(pts[500:])
        _assert_separated(state)
        growth.append(state.q - q0)
    assert max(growth) <= 4


def test_lift_keeps_sides():
    state = _solved(worked_example(), seed=1)
    before = {pid: [evaluate_side(state.points[pid], pl).value for pl in state.planes] for pid in state.s_ov}
    codes = dict(state.s_ov)
    state.lift_dimension(2)
    assert state.n == 4
    for pid in state.s_ov:
        assert list(state.points[pid].coords[2:]) == [0.0, 0.0]
        after = [evaluate_side(state.points[pid], pl).value for pl in state.planes]
        assert after == before[pid]
    assert state.s_ov == codes
    state.check_invariants()


def test_lift_rejects_zero():
    state = _solved(worked_example(), seed=1)
    with pytest.raises(ValueError):
        state.lift_dimension(0)


def test_lift_then_genuine_plane():
    state = _solved(worked_example(), seed=2)
    q = state.q
    state.lift_dimension(1)
    anchors = sorted(state.s_ov)[:3]
    new = [Point(100 + i, np.append(state.points[a].coords[:2], float(i + 1)), "new")
           for i, a in enumerate(anchors)]
    state.append_points(new)
    assert state.q == q + 1 and len(state.s_ov) == 32
    assert state.planes[-1].coeffs[2] != 0
    assert all(pl.coeffs[2] == 0 for pl in state.planes[:-1])
    _assert_separated(state)


# --- determinism and bookkeeping

def test_same_seed_same_state():
    pts = random_points(400, 6, seed=12)
    a = stateio.dumps(_solved(pts, seed=7))
    b = stateio.dumps(_solved(pts, seed=7))
    assert a == b
    c = stateio.dumps(_solved(pts, seed=8))
    assert a != c


def test_bit_ledger_every_event():
    state = _solved(random_points(800, 5, seed=3), seed=3)
    ledger = oracle.audit_bits(state)
    assert ledger.ok, ledger.failures
    assert ledger.events_checked == len(state.events) > 0


def test_counter_matches_pending_midrun():
    pts = random_points(300, 4, seed=6)
    state = SeparationState(4, SeparationConfig(seed=6))
    state.bootstrap(pts[:5])
    for p in pts[5:]:
        out = state.insert_point(p)
        state.check_invariants(full=False)
        if out.kind is Outcome.RETURNED_TO_G:
            continue
    assert state.counter == len(state.pending) < state.n
