import itertools
import math

import numpy as np
import pytest

from shepard_dp.feedback import (
    DeadEndError,
    FeedbackPolicy,
    NotStabilizableError,
    bellman_residual,
    check_decay,
    closed_loop,
    feedback_control,
)
from shepard_dp.geometry import BoxDomain, grid_nodes, sigma_for_overlap
from shepard_dp.kernels import ShapeFunction
from shepard_dp.problems import ControlProblem, TargetSet, Trajectory, make_problem
from shepard_dp.solver import solve


def policy(p, nodes, k, tol=1e-30, floor=1e-20):
    return FeedbackPolicy.from_solution(solve(p, nodes, k, tol=tol, max_iter=5000), floor=floor)


@pytest.fixture(scope="module")
def pendulum_policy():
    p = make_problem("pendulum")
    nodes = grid_nodes(p.domain, [41, 41])
    return policy(p, nodes, ShapeFunction(sigma=sigma_for_overlap(nodes, 20)))


@pytest.fixture(scope="module")
def linear_policy():
    p = make_problem("linear1d", {"k": 100})
    nodes = grid_nodes(p.domain, [101])
    return policy(p, nodes, ShapeFunction(sigma=20.0), tol=1e-12)


def fake_traj(values, costs, residuals, c_tilde=None):
    n = len(costs)
    return Trajectory(
        states=np.zeros((n + 1, 1)),
        controls=np.zeros((n, 1)),
        costs=np.asarray(costs, float),
        values=np.asarray(values, float),
        residuals=np.asarray(residuals, float),
        c_tilde=np.asarray(costs if c_tilde is None else c_tilde, float),
        reason="max_steps",
    )


def test_tie_goes_to_lowest_index():
    p = ControlProblem(
        name="mirror",
        dim=1,
        controls=[-1.0, 1.0],
        step_fn=lambda x, u: x + 0.0 * u,
        cost_fn=lambda x, u: 1.0 + 0.0 * x[..., 0] * u[..., 0],
        domain=BoxDomain([-1.0], [1.0]),
        target=TargetSet.box([-0.1], [0.1]),
    )
    nodes = grid_nodes(p.domain, [3])
    pol = policy(p, nodes, ShapeFunction(sigma=0.4))
    u, q = feedback_control(pol, np.array([0.5]))
    assert u[0] == -1.0


def test_linear1d_feedback_and_oracle_cost(linear_policy):
    p = linear_policy.problem
    u, q = feedback_control(linear_policy, np.array([0.9]))
    assert u[0] == 0.0 and q == pytest.approx(0.72)
    traj = closed_loop(linear_policy, [0.9], max_steps=50)
    assert traj.reason == "target"
    bound = math.ceil(math.log(p.params["target_upper"] / 0.9) / math.log(0.8))
    assert traj.n_steps <= bound

    # brute-force DP on the exact dynamics: every control sequence up to length 3
    best = math.inf
    for depth in (1, 2, 3):
        for seq in itertools.product(p.controls[:, 0], repeat=depth):
            x, total = 0.9, 0.0
            for uu in seq:
                total += 0.8 * x
                x = 0.8 * uu * x
                if not 0.0 <= x <= 1.0:
                    total = math.inf
                    break
            if p.in_target(x):
                best = min(best, total)
    assert traj.costs.sum() == pytest.approx(best, abs=1e-6)


def test_argmin_consistency(pendulum_policy):
    pol = pendulum_policy
    rng = np.random.default_rng(3)
    pts = rng.uniform([-4, -5], [4, 5], size=(40, 2))
    pts = pts[np.isfinite(pol.value(pts))]
    field = bellman_residual(pol, pts)
    for x, e, v in zip(pts, field.e, field.value):
        _, q = feedback_control(pol, x)
        assert q == pytest.approx(v + e, abs=1e-9)


def test_residual_matches_recomputation(pendulum_policy):
    pol = pendulum_policy
    p = pol.problem
    pts = pol.nodes.points[::37]
    field = bellman_residual(pol, pts)
    for x, e, ct in zip(pts, field.e, field.c_tilde):
        vx = pol.value(x[None])[0]
        qs = [p.cost(x, u) + pol.value(np.asarray(p.step(x, u)).reshape(1, 2))[0] for u in p.controls]
        j = int(np.argmin(qs))
        if not np.isfinite(vx) or not np.isfinite(qs[j]):
            assert e == np.inf
        else:
            assert e == pytest.approx(qs[j] - vx, abs=1e-9)
            assert ct == pytest.approx(p.cost(x, p.controls[j]))


def test_r1_is_a_proper_subset(pendulum_policy):
    field = bellman_residual(pendulum_policy, pendulum_policy.nodes.points, eta=1.0)
    in_s = np.isfinite(field.value)
    r1 = field.in_r_eta()
    assert r1.any() and (in_s & ~r1).any()
    assert np.array_equal(field.sublevel(np.inf), in_s)


def test_closed_loop_from_target_is_empty(pendulum_policy):
    traj = closed_loop(pendulum_policy, [0.05, -0.05])
    assert traj.n_steps == 0 and traj.reason == "target"


def test_not_stabilizable(pendulum_policy):
    with pytest.raises(NotStabilizableError, match="floor"):
        closed_loop(pendulum_policy, [7.9, 9.9])
    with pytest.raises(NotStabilizableError):
        feedback_control(pendulum_policy, [7.9, 9.9])


def test_closed_loop_is_deterministic(pendulum_policy):
    a = closed_loop(pendulum_policy, [2.0, 1.0], max_steps=30)
    b = closed_loop(pendulum_policy, [2.0, 1.0], max_steps=30)
    assert a.states.tobytes() == b.states.tobytes() and a.reason == b.reason


def test_dead_end_is_a_termination_reason():
    p = ControlProblem(
        name="cliff",
        dim=1,
        controls=[1.0],
        step_fn=lambda x, u: x + 5.0 * u,
        cost_fn=lambda x, u: 1.0 + 0.0 * x[..., 0],
        domain=BoxDomain([0.0], [1.0]),
        target=TargetSet.box([0.0], [0.2]),
    )
    pol = policy(p, grid_nodes(p.domain, [6]), ShapeFunction(sigma=2.0))
    with pytest.raises(DeadEndError):
        feedback_control(pol, [0.4])
    traj = closed_loop(pol, [0.4])
    assert traj.reason == "dead_end" and traj.n_steps == 0


def test_unconverged_solution_rejected():
    p = make_problem("linear1d", {"k": 10})
    sol = solve(p, grid_nodes(p.domain, [11]), ShapeFunction(sigma=2.0), tol=1e-300, max_iter=1)
    with pytest.raises(ValueError):
        FeedbackPolicy.from_solution(sol)
    FeedbackPolicy.from_solution(sol, allow_unconverged=True)


def test_decay_inside_r_eta():
    t = fake_traj(values=[3.0, 2.0, 1.2, 0.5], costs=[1.0, 0.8, 0.7], residuals=[0.0, 0.0, 0.0])
    rep = check_decay(t, eta=0.5)
    assert rep.holds and rep.segments == [(0, 3)] and rep.first_exit is None and rep.checked == 3


def test_decay_eta_one_is_monotonicity():
    t = fake_traj(values=[3.0, 2.0, 2.5], costs=[1.0, 1.0], residuals=[-1.0, 0.5])
    rep = check_decay(t, eta=1.0)
    assert not rep.holds and rep.first_violation == 2 and not rep.strictly_decreasing


def test_decay_violation_at_exit_and_reentry():
    # inside for steps 0-1, out at 2, back in at 3
    t = fake_traj(values=[5.0, 4.0, 4.5, 4.8, 4.0], costs=[1, 1, 1, 1], residuals=[-1.0, 0.5, 2.0, -0.8])
    rep = check_decay(t, eta=1.0)
    assert rep.segments == [(0, 2), (3, 4)]
    assert rep.first_entry == 0 and rep.first_exit == 2
    assert rep.first_violation == 2 and rep.violation_at_exit


def test_decay_ignores_states_outside_r_eta():
    t = fake_traj(values=[5.0, 6.0, 5.5], costs=[1, 1], residuals=[3.0, -0.5])
    rep = check_decay(t, eta=1.0)
    assert rep.holds and rep.segments == [(1, 2)]
    with pytest.raises(ValueError):
        check_decay(t, eta=0.0)


def test_shortest_path_heads_for_the_goal():
    p = make_problem("shortest_path", {"domain_lower": [-6.0, 1.0], "domain_upper": [-2.0, 5.0]})
    nodes = grid_nodes(p.domain, [41, 41])
    pol = policy(p, nodes, ShapeFunction(sigma=6.0), tol=1e-300, floor=1e-300)
    x = np.array([-4.0, 3.0])
    u, q = feedback_control(pol, x)
    # exhaustive one-step lookahead over all 20 directions
    qs = [1.0 + pol.value(np.asarray(p.step(x, c)).reshape(1, 2))[0] for c in p.controls]
    assert np.array_equal(u, p.controls[int(np.argmin(qs))])
    assert u[1] > 0.9
