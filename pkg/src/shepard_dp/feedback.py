"""Feedback synthesis from the approximate value function, closed-loop runs and residual checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from shepard_dp.approximation import shepard_matrix
from shepard_dp.geometry import NodeSet
from shepard_dp.kernels import ShapeFunction
from shepard_dp.problems import ControlProblem, Trajectory
from shepard_dp.solver import INTERIOR, TARGET, Solution, classify_images, to_value


class NotStabilizableError(ValueError):
    pass


class DeadEndError(RuntimeError):
    pass


@dataclass
class FeedbackPolicy:
    problem: ControlProblem
    nodes: NodeSet
    kernel: ShapeFunction
    vhat: np.ndarray
    floor: float = 1e-20
    converged: bool = True

    def __post_init__(self):
        if not self.converged:
            raise ValueError("feedback requires a converged value function")

    @classmethod
    def from_solution(cls, sol: Solution, floor: float = 1e-20, allow_unconverged: bool = False):
        return cls(
            sol.problem,
            sol.nodes,
            sol.kernel,
            sol.vhat,
            floor=floor,
            converged=sol.report.converged or allow_unconverged,
        )

    def transformed(self, points) -> np.ndarray:
        """v-bar at arbitrary states: 1 on T, 0 outside Omega, Shepard extension elsewhere."""
        p = self.problem
        pts = np.asarray(points, dtype=float).reshape(-1, p.dim)
        cls = classify_images(p, pts)
        out = np.where(cls == TARGET, 1.0, 0.0)
        inner = np.flatnonzero(cls == INTERIOR)
        if inner.size:
            a = shepard_matrix(self.nodes.scaled(p.metric_scale), self.kernel, pts[inner] / p.metric_scale)
            out[inner] = a.matrix @ self.vhat
        return out

    def value(self, points) -> np.ndarray:
        """V~ = -log(v-bar), +inf outside the stabilizable set."""
        return to_value(self.transformed(points), self.floor)

    def q_values(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Stage costs and ``c(x,u) + V~(f(x,u))`` for every control, shape (N, m)."""
        p = self.problem
        x = np.asarray(points, dtype=float).reshape(-1, p.dim)
        images = np.broadcast_to(p.step(x[:, None, :], p.controls[None, :, :]), (x.shape[0], p.m, p.dim))
        costs = np.broadcast_to(p.cost(x[:, None, :], p.controls[None, :, :]), (x.shape[0], p.m))
        v_img = self.value(images.reshape(-1, p.dim)).reshape(x.shape[0], p.m)
        return costs, costs + v_img


def feedback_control(pol: FeedbackPolicy, x) -> tuple[np.ndarray, float]:
    """Minimizing control over the finite control set (lowest index wins ties) and its q-value."""
    x = np.asarray(x, dtype=float).reshape(1, pol.problem.dim)
    if not np.isfinite(pol.value(x)[0]):
        raise NotStabilizableError(f"state {x[0]} is outside the stabilizable set (floor {pol.floor:g})")
    _, q = pol.q_values(x)
    j = int(np.argmin(q[0]))
    if not np.isfinite(q[0, j]):
        raise DeadEndError(f"every control maps {x[0]} to a state of infinite value")
    return pol.problem.controls[j].copy(), float(q[0, j])


@dataclass
class ResidualField:
    points: np.ndarray
    value: np.ndarray
    e: np.ndarray
    c_tilde: np.ndarray
    eta: float = 1.0

    def in_r_eta(self, eta: float | None = None) -> np.ndarray:
        eta = self.eta if eta is None else eta
        ok = np.isfinite(self.e) & np.isfinite(self.c_tilde)
        return ok & (self.e <= eta * self.c_tilde)

    def sublevel(self, level: float) -> np.ndarray:
        """Membership in D_C = {V~ < level}."""
        return self.value < level


def bellman_residual(pol: FeedbackPolicy, points, eta: float = 1.0) -> ResidualField:
    """``e(x) = min_u {c(x,u) + V~(f(x,u))} - V~(x)``; +inf where x is not stabilizable."""
    if not 0 < eta <= 1:
        raise ValueError("eta must lie in (0, 1]")
    p = pol.problem
    x = np.asarray(points, dtype=float).reshape(-1, p.dim)
    v = pol.value(x)
    costs, q = pol.q_values(x)
    j = np.argmin(q, axis=1)
    rows = np.arange(x.shape[0])
    qmin = q[rows, j]
    c_tilde = costs[rows, j].astype(float)
    e = np.full(x.shape[0], np.inf)
    ok = np.isfinite(v) & np.isfinite(qmin)
    e[ok] = qmin[ok] - v[ok]
    c_tilde[~np.isfinite(qmin)] = np.inf
    return ResidualField(points=x, value=v, e=e, c_tilde=c_tilde, eta=eta)


def closed_loop(pol: FeedbackPolicy, x0, max_steps: int = 100) -> Trajectory:
    """Run ``x <- f(x, u~(x))`` until the target, a dead end, leaving S, or ``max_steps``."""
    p = pol.problem
    x = np.asarray(x0, dtype=float).reshape(p.dim)
    v = float(pol.value(x[None])[0])
    if not np.isfinite(v):
        raise NotStabilizableError(f"initial state {x} is outside the stabilizable set (floor {pol.floor:g})")
    states, controls, costs, values, residuals, c_tilde = [x], [], [], [v], [], []
    reason = "max_steps"
    for _ in range(max_steps):
        if p.in_target(x[None])[0]:
            reason = "target"
            break
        try:
            u, q = feedback_control(pol, x)
        except DeadEndError:
            reason = "dead_end"
            break
        c = float(p.cost(x[None], u[None])[0])
        x = np.asarray(p.step(x[None], u[None]), dtype=float).reshape(p.dim)
        v_next = float(pol.value(x[None])[0])
        residuals.append(q - values[-1])
        c_tilde.append(c)
        states.append(x)
        controls.append(u)
        costs.append(c)
        values.append(v_next)
        if not np.isfinite(v_next):
            reason = "left_S"
            break
    else:
        if p.in_target(x[None])[0]:
            reason = "target"
    return Trajectory(
        states=np.array(states),
        controls=np.array(controls).reshape(len(controls), p.control_dim),
        costs=np.array(costs),
        values=np.array(values),
        residuals=np.array(residuals),
        c_tilde=np.array(c_tilde),
        reason=reason,
    )


@dataclass
class DecayReport:
    holds: bool
    segments: list  # maximal runs [start, stop) of step indices whose state lies in R_eta
    first_entry: int | None
    first_exit: int | None  # first state index outside R_eta after the first entry
    first_violation: int | None  # state index l where the decay bound first fails
    violation_at_exit: bool
    strictly_decreasing: bool  # V~ drops on every step taken from inside R_eta
    checked: int


def r_eta_mask(traj: Trajectory, eta: float = 1.0) -> np.ndarray:
    """R_eta membership of every state at which a control was chosen."""
    e, ct = traj.residuals, traj.c_tilde
    return np.isfinite(e) & np.isfinite(ct) & (e <= eta * ct)


def check_decay(traj: Trajectory, eta: float = 1.0, slack: float = 1e-9) -> DecayReport:
    """Check ``V(x_l) <= V(x_a) - (1 - eta) * sum_{a<=j<l} c_j`` along every stretch inside R_eta.

    The bound may be started at any state of a stretch, so it is equivalent to
    the one-step form ``V(x_{j+1}) <= V(x_j) - (1 - eta) c_j`` for every step
    taken from inside R_eta; that form is what gets checked. With eta = 1 it is
    monotone nonincrease of V~.
    """
    if not 0 < eta <= 1:
        raise ValueError("eta must lie in (0, 1]")
    inside = r_eta_mask(traj, eta)
    segments = []
    j = 0
    while j < inside.size:
        if inside[j]:
            k = j
            while k < inside.size and inside[k]:
                k += 1
            segments.append((j, k))
            j = k
        else:
            j += 1
    v = traj.values
    first_violation = None
    strictly = True
    steps = np.flatnonzero(inside)
    for j in steps:
        if first_violation is None and not v[j + 1] <= v[j] - (1.0 - eta) * traj.costs[j] + slack:
            first_violation = int(j + 1)
        if not v[j + 1] < v[j]:
            strictly = False
    first_entry = segments[0][0] if segments else None
    first_exit = None
    if segments and segments[0][1] < traj.n_steps:
        first_exit = segments[0][1]
    return DecayReport(
        holds=first_violation is None,
        segments=segments,
        first_entry=first_entry,
        first_exit=first_exit,
        first_violation=first_violation,
        violation_at_exit=first_violation is not None and first_violation == first_exit,
        strictly_decreasing=strictly,
        checked=int(steps.size),
    )
