import csv

import numpy as np
import pytest

from blockvi.core import ConstraintSet, Prescription, assemble_problem
from blockvi.errors import CoverageError, EmptyBlock, InvalidParameter
from blockvi.fne_ops import IdentityFne
from blockvi.linops import Identity
from blockvi.solver import (
    SolveStatus,
    SolverConfig,
    SolverState,
    SolverTrace,
    arm_gammas,
    averaging_weights,
    make_schedule,
    solve,
    step,
    validate_schedule,
)
from blockvi.space import BlockShape, SpacePoint

from problem_zoo import feasibility_problem, mixed_arms_problem, scalar_problem


def _config(**kw):
    base = dict(gamma=1.0, max_iters=500, tol=1e-10,
                x0=SpacePoint(np.zeros(1)), trace_every=1)
    base.update(kw)
    return SolverConfig(**base)


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------

def test_full_schedule_k1():
    sched = make_schedule("full", 2)
    assert sched.K == 1
    assert sched.active_set(7) == (0, 1)


def test_cyclic_partition_k_equals_blocks():
    sched = make_schedule("cyclic_partition", 10, blocks=4, always_active=[0, 1])
    assert sched.K == 4
    for n in range(8):
        active = sched.active_set(n)
        assert 0 in active and 1 in active
    touched = set()
    for n in range(4):
        touched |= set(sched.active_set(n))
    assert touched == set(range(10))


def test_mod_skip_k_equals_period():
    sched = make_schedule("mod_skip", 3, expensive=[0], period=5)
    assert sched.K == 5
    assert sched.active_set(0) == (0, 1, 2)
    for n in range(1, 5):
        assert sched.active_set(n) == (1, 2)
    assert sched.active_set(5) == (0, 1, 2)


def test_explicit_schedule_scanned():
    sched = make_schedule("explicit", 3, sets=[[0], [1], [2]])
    assert sched.K == 3


def test_missing_index_raises_coverage_error():
    with pytest.raises(CoverageError):
        make_schedule("explicit", 3, sets=[[0], [1]])


def test_empty_set_rejected():
    with pytest.raises(EmptyBlock):
        validate_schedule([[0], []], 2)


def test_out_of_range_index_rejected():
    with pytest.raises(InvalidParameter):
        validate_schedule([[0, 5]], 2)


def test_validate_returns_minimal_k():
    # index 1 appears only every third set
    assert validate_schedule([[0, 1], [0], [0]], 2) == 3
    assert validate_schedule([[0, 1], [0, 1]], 2) == 1


# ---------------------------------------------------------------------------
# configuration guards
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("gamma", [0.0, 2.0, -0.5, 2.5])
def test_gamma_range_guard(gamma):
    prob = scalar_problem(ConstraintSet.whole_space(), 5.0)
    cfg = _config(gamma=gamma)
    with pytest.raises(InvalidParameter):
        solve(prob, make_schedule("full", 1), cfg)


def test_bad_policy_rejected():
    with pytest.raises(InvalidParameter):
        solve(scalar_problem(ConstraintSet.whole_space(), 1.0),
              make_schedule("full", 1), _config(t_init_policy="warm"))


def test_schedule_arm_count_checked():
    prob = scalar_problem(ConstraintSet.whole_space(), 1.0)
    with pytest.raises(InvalidParameter):
        solve(prob, make_schedule("full", 3), _config())


# ---------------------------------------------------------------------------
# solve behavior
# ---------------------------------------------------------------------------

def test_converges_to_unconstrained_root():
    prob = scalar_problem(ConstraintSet.whole_space(), 5.0)
    cfg = _config(max_iters=200)
    res = solve(prob, make_schedule("full", 1), cfg)
    assert res.status is SolveStatus.CONVERGED
    assert res.trace.final_residual <= 1e-10
    np.testing.assert_allclose(res.solution.data, [5.0], atol=1e-9)


def test_converges_to_box_boundary():
    prob = scalar_problem(ConstraintSet.box([0.0], [1.0]), 5.0)
    res = solve(prob, make_schedule("full", 1), _config(max_iters=200))
    assert res.status is SolveStatus.CONVERGED
    np.testing.assert_allclose(res.solution.data, [1.0], atol=1e-9)


def test_least_squares_equivalence():
    prob, matrix, rhs = feasibility_problem(7)
    n = matrix.shape[1]
    cfg = _config(gamma=1.9, max_iters=50000, tol=1e-10,
                  x0=SpacePoint(np.zeros(n)), trace_every=25)
    res = solve(prob, make_schedule("full", prob.arm_count), cfg)
    oracle = np.linalg.solve(matrix.T @ matrix, matrix.T @ rhs)
    rel = np.linalg.norm(res.solution.data - oracle) / np.linalg.norm(oracle)
    assert res.status is SolveStatus.CONVERGED
    assert rel <= 1e-6


def test_max_iters_status():
    prob = scalar_problem(ConstraintSet.whole_space(), 5.0)
    res = solve(prob, make_schedule("full", 1), _config(gamma=0.01, max_iters=3))
    assert res.status is SolveStatus.MAX_ITERS


def test_converged_implies_residual_below_tol():
    for seed in range(3):
        prob, _ = mixed_arms_problem(seed, consistent=False)
        cfg = _config(gamma=1.5, max_iters=100000, tol=1e-8,
                      x0=SpacePoint(np.zeros(6)), trace_every=10)
        res = solve(prob, make_schedule("full", prob.arm_count), cfg)
        assert res.status is SolveStatus.CONVERGED
        assert res.trace.final_residual <= 1e-8


def test_bitwise_replay():
    prob, _ = mixed_arms_problem(5, consistent=False)
    sched = make_schedule("cyclic_partition", prob.arm_count, blocks=2)
    cfg = _config(gamma=1.3, max_iters=2000, tol=0.0,
                  x0=SpacePoint(np.zeros(6)), trace_every=7)
    a = solve(prob, sched, cfg)
    b = solve(prob, sched, cfg)
    assert a.solution.data.tobytes() == b.solution.data.tobytes()
    for ra, rb in zip(a.trace.records, b.trace.records):
        assert (ra.n, ra.residual, ra.step_norm, ra.active_set_id) == \
               (rb.n, rb.residual, rb.step_norm, rb.active_set_id)


# ---------------------------------------------------------------------------
# step semantics
# ---------------------------------------------------------------------------

def _identity_arm_state(p_value, x_value):
    shape = BlockShape.vector(2)
    arm = Prescription(Identity(shape), IdentityFne(shape),
                       SpacePoint(np.full(2, p_value), shape), 1.0)
    prob = assemble_problem(ConstraintSet.box(np.zeros(2), np.ones(2)), [arm])
    x = SpacePoint(np.full(2, x_value), shape)
    return prob, SolverState(0, x, (x,))


def test_step_zero_update_projects_current_point():
    # targets equal to the image: t_i = x_n, so x_{n+1} = proj_C(x_n)
    prob, state = _identity_arm_state(p_value=1.5, x_value=1.5)
    cfg = _config(gamma=1.0, x0=state.x)
    new = step(state, prob, (0,), cfg)
    np.testing.assert_array_equal(new.x.data, np.ones(2))   # clamped into C


def test_step_stale_blocks_bitwise_equal():
    prob, _ = mixed_arms_problem(2, consistent=False)
    shape = prob.domain_shape
    x = SpacePoint(np.linspace(-1, 1, shape.total), shape)
    state = SolverState(0, x, tuple(x for _ in range(prob.arm_count)))
    cfg = _config(gamma=1.5, x0=x)
    new = step(state, prob, (0, 2), cfg)
    assert new.t[1] is state.t[1]
    assert new.t[3] is state.t[3]
    assert new.t[0] is not state.t[0]


def test_step_equals_projection_gradient_for_feasibility_arms():
    # full activation, C whole space: one iteration is a gradient step on the
    # relaxed quadratic, with effective step gamma / sum_j w_j b_j
    prob, matrix, rhs = feasibility_problem(9)
    n = matrix.shape[1]
    x = SpacePoint(np.linspace(-1, 1, n))
    state = SolverState(0, x, tuple(x for _ in range(prob.arm_count)))
    gamma = 1.2
    cfg = _config(gamma=gamma, x0=x)
    new = step(state, prob, tuple(range(prob.arm_count)), cfg)
    z = sum(p.weight * p.norm_sq_bound for p in prob.prescriptions)
    grad = np.zeros(n)
    for i, p in enumerate(prob.prescriptions):
        row = matrix[i]
        grad += p.weight * row * (row @ x.data - rhs[i])
    np.testing.assert_allclose(new.x.data, x.data - (gamma / z) * grad,
                               rtol=1e-12, atol=1e-14)


def test_one_step_policy_matches_virtual_first_activation():
    prob, _ = mixed_arms_problem(1, consistent=True)
    x0 = SpacePoint(np.full(6, 0.3))
    cfg_warm = _config(gamma=1.4, max_iters=1, tol=0.0, x0=x0,
                       t_init_policy="one_step")
    gammas = arm_gammas(prob, 1.4)
    # a solve with max_iters=1 starting warm must match one plain step whose
    # stale arms were already updated at x0
    state = SolverState(0, x0, tuple(
        x0 - g * p.linop.adjoint(p.image(x0) - p.target)
        for p, g in zip(prob.prescriptions, gammas)))
    manual = step(state, prob, (0,), cfg_warm)
    res = solve(prob, make_schedule("explicit", prob.arm_count,
                                    sets=[[0], [1], [2], [3]]), cfg_warm)
    np.testing.assert_array_equal(res.solution.data, manual.x.data)


def test_averaging_weights_cancel_step_scaling():
    prob, _ = mixed_arms_problem(0, consistent=True)
    v = averaging_weights(prob)
    g = arm_gammas(prob, 1.0)
    products = [vi * gi for vi, gi in zip(v, g)]
    # v_i * gamma_i is proportional to w_i: the displacement keeps the
    # problem's own weighting
    ratios = [p / w for p, w in zip(products, (pr.weight for pr in prob.prescriptions))]
    np.testing.assert_allclose(ratios, ratios[0])


# ---------------------------------------------------------------------------
# trace
# ---------------------------------------------------------------------------

def test_trace_records_strictly_increasing():
    trace = SolverTrace()
    trace.add(0, 0.0, 1.0, 1.0, (0,))
    with pytest.raises(InvalidParameter):
        trace.add(0, 0.1, 0.5, 0.5, (0,))


def test_trace_csv_roundtrip(tmp_path):
    prob, _ = mixed_arms_problem(4, consistent=True)
    cfg = _config(gamma=1.5, max_iters=200, tol=0.0,
                  x0=SpacePoint(np.zeros(6)), trace_every=13)
    res = solve(prob, make_schedule("full", prob.arm_count), cfg)
    path = tmp_path / "trace.csv"
    res.trace.to_csv(path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(res.trace.records)
    for row, rec in zip(rows, res.trace.records):
        assert int(row["n"]) == rec.n
        assert float(row["residual"]) == rec.residual       # 17 digits: lossless
        assert float(row["step_norm"]) == rec.step_norm
        assert float(row["seconds"]) == rec.seconds
        assert int(row["active_set_id"]) == rec.active_set_id


def test_snapshots_recorded_when_requested():
    prob = scalar_problem(ConstraintSet.whole_space(), 5.0)
    cfg = _config(max_iters=50, keep_snapshots=True)
    res = solve(prob, make_schedule("full", 1), cfg)
    ks = [k for k, _, _ in res.trace.iterates]
    assert ks[0] == 0
    assert ks == sorted(ks)
    assert res.trace.iterates[-1][2] == res.solution


def test_arm_gaps_recorded_when_requested():
    prob, _ = mixed_arms_problem(6, consistent=False)
    cfg = _config(gamma=1.5, max_iters=30, tol=0.0,
                  x0=SpacePoint(np.zeros(6)), record_arm_gaps=True)
    res = solve(prob, make_schedule("full", prob.arm_count), cfg)
    assert all(len(r.arm_gaps) == prob.arm_count for r in res.trace.records)
