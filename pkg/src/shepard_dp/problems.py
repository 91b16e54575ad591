"""Discrete-time control problems (f, c, Omega, T, U~) and the four reference instances."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from shepard_dp.geometry import BoxDomain, NodeSet, ObstacleMask

PROBLEMS = ("linear1d", "shortest_path", "pendulum", "magnetic_wheel")


@dataclass(frozen=True, eq=False)
class TargetSet:
    """Axis-aligned box ``center +- half_widths`` or closed ball ``||x - center|| <= radius``."""

    center: np.ndarray
    half_widths: np.ndarray | None = None
    radius: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "center", np.atleast_1d(np.asarray(self.center, dtype=float)))
        if (self.half_widths is None) == (self.radius is None):
            raise ValueError("target needs exactly one of half_widths / radius")
        if self.half_widths is not None:
            hw = np.broadcast_to(np.asarray(self.half_widths, dtype=float), self.center.shape).copy()
            if np.any(hw < 0):
                raise ValueError("target half widths must be nonnegative")
            object.__setattr__(self, "half_widths", hw)

    @classmethod
    def box(cls, lower, upper):
        lower, upper = np.atleast_1d(lower).astype(float), np.atleast_1d(upper).astype(float)
        return cls(center=0.5 * (lower + upper), half_widths=0.5 * (upper - lower))

    @property
    def lower(self):
        return self.center - self.half_widths

    @property
    def upper(self):
        return self.center + self.half_widths

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.radius is not None:
            return np.linalg.norm(x - self.center, axis=-1) <= self.radius
        return np.all((x >= self.lower) & (x <= self.upper), axis=-1)


@dataclass(eq=False)
class ControlProblem:
    """A control problem with a finite control sample.

    ``step_fn(x, u)`` and ``cost_fn(x, u)`` are vectorized over leading axes
    (``x`` has trailing size ``dim``, ``u`` trailing size ``control_dim``).
    ``metric_scale`` divides states before kernel distances are taken.
    """

    name: str
    dim: int
    controls: np.ndarray
    step_fn: Callable
    cost_fn: Callable
    domain: BoxDomain
    target: TargetSet
    projection_mode: str = "none"
    mask: ObstacleMask | None = None
    metric_scale: np.ndarray | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        u = np.asarray(self.controls, dtype=float)
        if u.ndim == 1:
            u = u[:, None]
        if u.shape[0] == 0:
            raise ValueError("control set is empty")
        self.controls = u
        if self.projection_mode not in ("none", "clamp"):
            raise ValueError(f"projection_mode must be 'none' or 'clamp', got {self.projection_mode!r}")
        if self.domain.dim != self.dim:
            raise ValueError("domain dimension mismatch")
        scale = np.ones(self.dim) if self.metric_scale is None else np.asarray(self.metric_scale, dtype=float)
        if scale.shape != (self.dim,) or np.any(scale <= 0):
            raise ValueError("metric_scale must be a positive vector of length dim")
        self.metric_scale = scale
        t_lo = self.target.center - (self.target.half_widths if self.target.radius is None else self.target.radius)
        t_hi = self.target.center + (self.target.half_widths if self.target.radius is None else self.target.radius)
        if np.any(t_hi < self.domain.lower) or np.any(t_lo > self.domain.upper):
            raise ValueError("target set does not meet the domain")

    @property
    def m(self) -> int:
        return self.controls.shape[0]

    @property
    def control_dim(self) -> int:
        return self.controls.shape[1]

    def _x(self, x):
        x = np.asarray(x, dtype=float)
        return x[..., None] if (self.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1)) else x

    def _u(self, u):
        u = np.asarray(u, dtype=float)
        return u[..., None] if (self.control_dim == 1 and (u.ndim == 0 or u.shape[-1] != 1)) else u

    def step(self, x, u) -> np.ndarray:
        y = self.step_fn(self._x(x), self._u(u))
        if self.projection_mode == "clamp":
            y = self.domain.clamp(y)
        return y

    def cost(self, x, u) -> np.ndarray:
        c = np.asarray(self.cost_fn(self._x(x), self._u(u)), dtype=float)
        if np.any(c < 0):
            raise ValueError(f"{self.name}: negative stage cost")
        return c

    def in_target(self, x) -> np.ndarray:
        return self.target.contains(self._x(x))

    def in_domain(self, x) -> np.ndarray:
        x = self._x(x)
        ok = self.domain.contains(x) & np.all(np.isfinite(x), axis=-1)
        if self.mask is not None:
            flat = x.reshape(-1, self.dim)
            ok = ok & self.mask.is_admissible(flat).reshape(ok.shape)
        return ok

    def delta_estimate(self, nodes: NodeSet) -> float:
        """Smallest stage cost among the pairs that feed back into the iteration.

        These are the pairs (x_i, u_j) with x_i outside T whose image lies in
        Omega and outside T; all others contribute a constant (1 or 0). +inf
        when no such pair exists.
        """
        x = nodes.points[~self.in_target(nodes.points)]
        if x.shape[0] == 0:
            return math.inf
        u = self.controls[None, :, :]
        with np.errstate(all="ignore"):
            y = np.broadcast_to(self.step(x[:, None, :], u), (x.shape[0], self.m, self.dim))
        live = self.in_domain(y) & ~self.in_target(y)
        if not live.any():
            return math.inf
        c = np.broadcast_to(self.cost(x[:, None, :], u), live.shape)
        return float(c[live].min())


@dataclass
class Trajectory:
    """Closed-loop run: ``states`` has one more entry than ``controls`` and ``costs``.

    ``values`` holds V~ at every state; ``residuals`` / ``c_tilde`` the Bellman
    residual and feedback stage cost at every state where a control was chosen.
    """

    states: np.ndarray
    controls: np.ndarray
    costs: np.ndarray
    values: np.ndarray
    residuals: np.ndarray
    c_tilde: np.ndarray
    reason: str

    def __post_init__(self):
        if not (len(self.states) == len(self.controls) + 1 == len(self.costs) + 1):
            raise ValueError("trajectory arrays have inconsistent lengths")

    @property
    def n_steps(self) -> int:
        return len(self.controls)


def _grid_controls(lo: float, hi: float, step: float) -> np.ndarray:
    n = int(round((hi - lo) / step))
    if n < 0 or not math.isclose(lo + n * step, hi, rel_tol=0, abs_tol=1e-9 * max(1.0, abs(hi))):
        raise ValueError(f"control grid [{lo}, {hi}] is not a multiple of step {step}")
    return lo + step * np.arange(n + 1)


def _linear1d(o: dict) -> ControlProblem:
    a = o.get("a", 0.8)
    cost_scale = o.get("cost_scale", a)
    k = o.get("k", 10)
    n_controls = o.get("n_controls", 21)
    if n_controls < 1:
        raise ValueError("n_controls must be >= 1")
    # -1, -0.9, ..., 1 built from integers to keep the decimal values exact
    controls = np.linspace(-1.0, 1.0, n_controls) if n_controls != 21 else np.arange(-10, 11) / 10.0
    if "controls" in o:
        controls = np.asarray(o["controls"], dtype=float)
    t_hi = o.get("target_upper", 1.0 / (2.0 * k))
    return ControlProblem(
        name="linear1d",
        dim=1,
        controls=controls,
        step_fn=lambda x, u: a * u * x,
        cost_fn=lambda x, u: cost_scale * x[..., 0] + 0.0 * u[..., 0],
        domain=BoxDomain([0.0], [1.0]),
        target=TargetSet.box([0.0], [t_hi]),
        projection_mode=o.get("projection_mode", "none"),
        params=dict(a=a, cost_scale=cost_scale, k=k, target_upper=t_hi),
    )


def _shortest_path(o: dict) -> ControlProblem:
    h = o.get("h", 0.1)
    n_dir = o.get("n_directions", 20)
    if n_dir < 1:
        raise ValueError("n_directions must be >= 1")
    ang = 2.0 * np.pi * np.arange(n_dir) / n_dir
    controls = np.column_stack([np.cos(ang), np.sin(ang)])
    lower = o.get("domain_lower", [-10.0, -10.0])
    upper = o.get("domain_upper", [10.0, 10.0])
    goal = np.asarray(o.get("goal", [-4.0, 4.0]), dtype=float)
    tw = o.get("target_halfwidth", 0.004)
    step_cost = o.get("step_cost", 1.0)
    return ControlProblem(
        name="shortest_path",
        dim=2,
        controls=controls,
        step_fn=lambda x, u: x + h * u,
        cost_fn=lambda x, u: np.full(np.broadcast_shapes(x.shape[:-1], u.shape[:-1]), float(step_cost)),
        domain=BoxDomain(lower, upper),
        target=TargetSet(center=goal, half_widths=tw),
        projection_mode=o.get("projection_mode", "none"),
        mask=o.get("mask"),
        params=dict(h=h, n_directions=n_dir, goal=goal.tolist(), target_halfwidth=tw, step_cost=step_cost),
    )


def pendulum_accel(phi, dphi, u, M=8.0, m=2.0, ell=0.5, g=9.8):
    """Angular acceleration of the inverted pendulum on a cart (cart motion ignored)."""
    mr = m / (m + M)
    num = g / ell * np.sin(phi) - 0.5 * mr * dphi**2 * np.sin(2.0 * phi) - mr / (m * ell) * np.cos(phi) * u
    return num / (4.0 / 3.0 - mr * np.cos(phi) ** 2)


def _euler(rhs, h, substeps):
    dt = h / substeps

    def step(x, u):
        x = np.broadcast_to(x, np.broadcast_shapes(x.shape, u.shape[:-1] + x.shape[-1:])).astype(float)
        for _ in range(substeps):
            x = x + dt * rhs(x, u)
        return x

    return step


def _pendulum(o: dict) -> ControlProblem:
    M, m, ell, g = o.get("M", 8.0), o.get("m", 2.0), o.get("ell", 0.5), o.get("g", 9.8)
    h = o.get("h", 0.1)
    substeps = int(o.get("n_substeps", 1))
    w_phi, w_dphi, w_u = o.get("cost_weights", [0.1, 0.05, 0.01])
    u_max, u_step = o.get("u_max", 128.0), o.get("u_step", 8.0)
    controls = _grid_controls(-u_max, u_max, u_step)

    def rhs(x, u):
        return np.stack([x[..., 1], pendulum_accel(x[..., 0], x[..., 1], u[..., 0], M, m, ell, g)], axis=-1)

    def cost(x, u):
        return 0.5 * (w_phi * x[..., 0] ** 2 + w_dphi * x[..., 1] ** 2 + w_u * u[..., 0] ** 2)

    return ControlProblem(
        name="pendulum",
        dim=2,
        controls=controls,
        step_fn=_euler(rhs, h, substeps),
        cost_fn=cost,
        domain=BoxDomain(o.get("domain_lower", [-8.0, -10.0]), o.get("domain_upper", [8.0, 10.0])),
        target=TargetSet(center=[0.0, 0.0], half_widths=o.get("target_halfwidths", [0.1, 0.1])),
        projection_mode=o.get("projection_mode", "none"),
        params=dict(M=M, m=m, ell=ell, g=g, h=h, n_substeps=substeps, u_max=u_max, u_step=u_step),
    )


def wheel_equilibrium_current(s0=0.01, L_N=1.0, m_m=500.0, mu=3.0, g=9.81) -> float:
    C = L_N * 2.0 * s0
    return math.sqrt(4.0 * m_m * s0**2 * mu * g / C)


def _magnetic_wheel(o: dict) -> ControlProblem:
    s0, L_N, m_m = o.get("s0", 0.01), o.get("L_N", 1.0), o.get("m_m", 500.0)
    mu, R, L_s, g = o.get("mu", 3.0), o.get("R", 4.0), o.get("L_s", 0.15), o.get("g", 9.81)
    h = o.get("h", 0.01)
    substeps = int(o.get("n_substeps", 5))
    C = L_N * 2.0 * s0
    J0 = wheel_equilibrium_current(s0, L_N, m_m, mu, g)
    u_res = o.get("u_resolution", 0.01)
    controls = o.get("u_scale", 6.0e3) * _grid_controls(-1.0, 1.0, u_res) ** 3
    shifted = bool(o.get("shifted_cost", False))
    w_s, w_v, w_u = o.get("cost_weights", [100.0, 1.0, 0.002])
    U0 = R * J0

    def rhs(x, u):
        s, v, J = x[..., 0], x[..., 1], x[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            ds = v
            dv = C * J**2 / (m_m * 4.0 * s**2) - mu * g
            dJ = (-R * J + C / (2.0 * s**2) * J * v + u[..., 0]) / (L_s + C / (2.0 * s))
        return np.stack([np.broadcast_to(ds, dv.shape), dv, dJ], axis=-1)

    def cost(x, u):
        s = x[..., 0] - s0 if shifted else x[..., 0]
        uu = u[..., 0] - U0 if shifted else u[..., 0]
        return 0.5 * (w_s * s**2 + w_v * x[..., 1] ** 2 + w_u * uu**2)

    lower = o.get("domain_lower", [0.0, -4.0, J0 - 80.0])
    upper = o.get("domain_upper", [0.02, 4.0, J0 + 80.0])
    domain = BoxDomain(lower, upper)
    return ControlProblem(
        name="magnetic_wheel",
        dim=3,
        controls=controls,
        step_fn=_euler(rhs, h, substeps),
        cost_fn=cost,
        domain=domain,
        target=TargetSet(center=[s0, 0.0, J0], half_widths=o.get("target_halfwidths", [0.001, 0.1, 2.0])),
        projection_mode=o.get("projection_mode", "none"),
        metric_scale=o.get("metric_scale", domain.widths),
        params=dict(s0=s0, C=C, J0=J0, U0=U0, h=h, n_substeps=substeps, shifted_cost=shifted),
    )


_BUILDERS = {
    "linear1d": _linear1d,
    "shortest_path": _shortest_path,
    "pendulum": _pendulum,
    "magnetic_wheel": _magnetic_wheel,
}


class _SeenKeys(dict):
    """Records which keys a builder looked up, so leftovers can be reported."""

    def __init__(self, *args):
        super().__init__(*args)
        self.seen = set()

    def get(self, key, default=None):
        self.seen.add(key)
        return super().get(key, default)

    def __contains__(self, key):
        self.seen.add(key)
        return super().__contains__(key)

    def __getitem__(self, key):
        self.seen.add(key)
        return super().__getitem__(key)


def make_problem(name: str, overrides: dict | None = None) -> ControlProblem:
    """Build a named instance; every parameter can be overridden by key."""
    if name not in _BUILDERS:
        raise ValueError(f"unknown problem {name!r}; expected one of {PROBLEMS}")
    o = _SeenKeys(overrides or {})
    p = _BUILDERS[name](o)
    unused = sorted(set(o) - o.seen)
    if unused:
        raise ValueError(f"unknown {name} parameters: {unused}")
    return p
