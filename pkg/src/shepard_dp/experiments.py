"""Experiment drivers behind the command line: solve, simulate, residual maps, convergence studies."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from shepard_dp.approximation import Interpolant
from shepard_dp.config import (
    ConfigError,
    RunConfig,
    build_kernel,
    build_nodes,
    build_problem,
    check_delta,
    state_array,
)
from shepard_dp.feedback import FeedbackPolicy, bellman_residual, check_decay, closed_loop, r_eta_mask
from shepard_dp.geometry import NodeSet, fill_distance, separation_distance
from shepard_dp.kernels import ShapeFunction
from shepard_dp.problems import ControlProblem
from shepard_dp.solver import INTERIOR, TARGET, Solution, assemble_transitions, to_value, value_iteration

logger = logging.getLogger(__name__)


class NumericError(RuntimeError):
    """A solve or simulation could not produce a usable result."""


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return "" if v is None else str(v)


def write_csv(path: Path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path: Path) -> tuple[list, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)


def _coord_names(p: ControlProblem) -> list:
    return [f"x{i}" for i in range(p.dim)]


@dataclass
class Setup:
    problem: ControlProblem
    nodes: NodeSet
    kernel: ShapeFunction
    h: float  # fill distance in kernel coordinates
    q: float  # separation distance in kernel coordinates
    delta: float


def setup(cfg: RunConfig, grid=None) -> Setup:
    p = build_problem(cfg, grid)
    nodes = build_nodes(cfg, p, grid)
    delta = check_delta(p, nodes)
    k = build_kernel(cfg, p, nodes)
    scaled = nodes.scaled(p.metric_scale)
    return Setup(p, nodes, k, fill_distance(scaled), separation_distance(scaled) if nodes.n > 1 else math.inf, delta)


def solve_setup(s: Setup, cfg: RunConfig, v0=None) -> Solution:
    t = assemble_transitions(s.problem, s.nodes, s.kernel)
    vhat, report = value_iteration(t, v0=v0, tol=cfg.solver.tol, max_iter=cfg.solver.max_iter)
    return Solution(s.problem, s.nodes, s.kernel, vhat, report, t)


def _summary_lines(s: Setup, sol: Solution) -> list:
    r = sol.report
    lines = [
        f"problem     {s.problem.name}",
        f"nodes       {s.nodes.n}",
        f"controls    {s.problem.m}",
        f"h           {s.h:.6g}",
        f"q_X         {s.q:.6g}",
        f"sigma       {s.kernel.sigma:.6g} ({s.kernel.kind})",
        f"L           {r.contraction_bound:.6g}",
        f"iterations  {r.iterations} ({'converged' if r.converged else 'NOT converged'}, last residual {r.residuals[-1]:.3g})",
        f"wall time   {r.wall_time:.3f} s",
    ]
    if s.problem.name == "linear1d":
        lines.insert(4, f"1/k         {1.0 / s.problem.params['k']:.6g}")
    if r.n_uncovered:
        lines.append(f"uncovered   {r.n_uncovered} interior images (treated as 0)")
    return lines


def write_value_csv(path, sol: Solution, floor: float) -> Path:
    v = to_value(sol.vhat, floor)
    rows = (list(x) + [vh, vv] for x, vh, vv in zip(sol.nodes.points, sol.vhat, v))
    return write_csv(path, _coord_names(sol.problem) + ["vhat", "V"], rows)


def write_report_csv(path, sol: Solution) -> Path:
    return write_csv(path, ["iteration", "residual"], enumerate(sol.report.residuals, start=1))


def run_solve(cfg: RunConfig, echo=print) -> Solution:
    s = setup(cfg)
    sol = solve_setup(s, cfg)
    out = Path(cfg.output)
    write_value_csv(out / "value.csv", sol, cfg.feedback.floor)
    write_report_csv(out / "report.csv", sol)
    for line in _summary_lines(s, sol):
        echo(line)
    return sol


def _policy(sol: Solution, cfg: RunConfig) -> FeedbackPolicy:
    if not sol.report.converged:
        raise NumericError(
            f"value iteration did not reach tol {cfg.solver.tol:g} in {cfg.solver.max_iter} iterations; "
            "feedback needs a converged value function"
        )
    return FeedbackPolicy.from_solution(sol, floor=cfg.feedback.floor)


def write_residual_csv(path, pol: FeedbackPolicy, eta: float):
    field = bellman_residual(pol, pol.nodes.points, eta)
    inside = field.in_r_eta()
    rows = (list(x) + [e, c, r] for x, e, c, r in zip(field.points, field.e, field.c_tilde, inside))
    write_csv(path, _coord_names(pol.problem) + ["e", "c_tilde", "in_R_eta"], rows)
    return field


def run_residual_map(cfg: RunConfig, echo=print):
    s = setup(cfg)
    sol = solve_setup(s, cfg)
    pol = _policy(sol, cfg)
    field = write_residual_csv(Path(cfg.output) / "residual.csv", pol, cfg.feedback.eta)
    for line in _summary_lines(s, sol):
        echo(line)
    in_s = np.isfinite(field.value)
    echo(f"stabilizable nodes  {int(in_s.sum())} of {s.nodes.n}")
    echo(f"nodes in R_eta      {int(field.in_r_eta().sum())} (eta = {cfg.feedback.eta:g})")
    return field


def run_simulate(cfg: RunConfig, echo=print):
    if cfg.feedback.x0 is None:
        raise ConfigError("simulate needs feedback.x0")
    s = setup(cfg)
    x0 = state_array(cfg.feedback.x0, s.problem.dim)
    sol = solve_setup(s, cfg)
    pol = _policy(sol, cfg)
    traj = closed_loop(pol, x0, max_steps=cfg.feedback.steps)
    eta = cfg.feedback.eta
    decay = check_decay(traj, eta=eta)
    out = Path(cfg.output)
    p = s.problem
    inside = r_eta_mask(traj, eta)
    rows = []
    for i, x in enumerate(traj.states):
        if i < traj.n_steps:
            tail = list(traj.controls[i]) + [traj.costs[i], traj.values[i], traj.residuals[i], inside[i]]
        else:
            tail = [None] * p.control_dim + [None, traj.values[i], None, None]
        rows.append([i] + list(x) + tail)
    header = ["step"] + _coord_names(p) + [f"u{j}" for j in range(p.control_dim)] + ["stage_cost", "V", "e", "in_R_eta"]
    write_csv(out / "trajectory.csv", header, rows)
    write_residual_csv(out / "residual.csv", pol, eta)
    for line in _summary_lines(s, sol):
        echo(line)
    echo(f"trajectory  {traj.n_steps} steps, stopped by {traj.reason}, total cost {traj.costs.sum():.6g}")
    echo(f"R_eta runs  {decay.segments} (eta = {eta:g})")
    echo(f"first exit  {decay.first_exit}")
    echo(f"decay       {'holds' if decay.holds else f'fails at state {decay.first_violation}'} on {decay.checked} checks")
    echo(f"V~ strictly decreasing inside R_eta: {decay.strictly_decreasing}")
    return traj, decay


# convergence studies --------------------------------------------------------


def study_grid(p_name: str, k: int, dim: int) -> list:
    """linear1d: ``k`` intervals, so ``k + 1`` nodes; otherwise ``k`` nodes per axis."""
    return [k + 1] if p_name == "linear1d" else [k] * dim


def _extension_at_nodes(s: Setup, vhat: np.ndarray, floor: float) -> np.ndarray:
    # the approximate function sum_j vhat_j psi_j, not the coefficients themselves
    pol = FeedbackPolicy(s.problem, s.nodes, s.kernel, vhat, floor=floor)
    return pol.transformed(s.nodes.points)


def _reference(cfg: RunConfig, dim: int, echo) -> tuple[Setup, np.ndarray]:
    ref = cfg.study.reference
    s = setup(cfg, study_grid(cfg.problem, ref, dim))
    key = RunConfig(
        problem=cfg.problem,
        overrides=cfg.overrides,
        grid=study_grid(cfg.problem, ref, dim),
        kernel=cfg.kernel,
        solver=cfg.solver,
        map=cfg.map,
    ).digest(exclude=("output", "seed", "study", "feedback"))
    cache = Path(cfg.output) / "cache" / f"reference-{key}.csv"
    if cache.exists():
        _, data = read_csv(cache)
        if data.shape == (s.nodes.n, s.problem.dim + 2) and np.array_equal(data[:, : s.problem.dim], s.nodes.points):
            echo(f"reference   loaded from {cache}")
            return s, _extension_at_nodes(s, data[:, s.problem.dim], cfg.feedback.floor)
        logger.warning("ignoring stale reference cache %s", cache)
    sol = solve_setup(s, cfg)
    if not sol.report.converged:
        raise NumericError("reference solve did not converge")
    write_value_csv(cache, sol, cfg.feedback.floor)
    echo(f"reference   solved on {s.nodes.n} nodes in {sol.report.wall_time:.2f} s, cached at {cache}")
    return s, _extension_at_nodes(s, sol.vhat, cfg.feedback.floor)


def study_error(pol: FeedbackPolicy, ref_points: np.ndarray, ref_values: np.ndarray, metric: str, relative: bool, floor: float) -> float:
    """Sup-norm gap at the reference nodes between a coarse solution's extension and the reference."""
    coarse = pol.transformed(ref_points)
    if metric == "transformed":
        a, b = coarse, ref_values
    else:
        a, b = to_value(coarse, floor), to_value(ref_values, floor)
        ok = np.isfinite(a) & np.isfinite(b)
        a, b = a[ok], b[ok]
    if a.size == 0:
        return math.nan
    err = float(np.max(np.abs(a - b)))
    if relative:
        err /= float(np.max(np.abs(b)))
    return err


def run_convergence_study(cfg: RunConfig, echo=print) -> list:
    ks = [int(k) for k in cfg.study.k_list]
    if len(ks) < 3 or ks != sorted(set(ks)):
        raise ConfigError("study.k_list must hold at least 3 strictly ascending resolutions")
    if cfg.study.reference is None or cfg.study.reference <= ks[-1]:
        raise ConfigError("study.reference must be finer than every entry of study.k_list")
    dim = build_problem(cfg).dim
    ref, ref_values = _reference(cfg, dim, echo)
    rows = []
    for k in ks:
        s = setup(cfg, study_grid(cfg.problem, k, dim))
        sol = solve_setup(s, cfg)
        if not sol.report.converged:
            logger.warning("k=%d: value iteration did not converge; row flagged", k)
        pol = FeedbackPolicy.from_solution(sol, floor=cfg.feedback.floor, allow_unconverged=True)
        err = study_error(pol, ref.nodes.points, ref_values, cfg.study.metric, cfg.study.relative, cfg.feedback.floor)
        if s.problem.name == "linear1d":
            h_grid = 1.0 / s.problem.params["k"]
        else:
            h_grid = float(np.max(s.nodes.spacing()))
        rows.append([k, s.nodes.n, s.h, h_grid, s.kernel.sigma, err, sol.report.iterations, sol.report.converged])
        echo(f"k={k:<5d} n={s.nodes.n:<7d} h={s.h:.5g}  error={err:.6g}  iterations={sol.report.iterations}"
             + ("" if sol.report.converged else "  (NOT converged)"))
    write_csv(Path(cfg.output) / "study.csv", ["k", "n", "h", "h_grid", "sigma", "error", "iterations", "converged"], rows)
    return rows


# Shepard vs interpolation ---------------------------------------------------


@dataclass
class IterationStats:
    residuals: list
    status: str  # converged / stalled / diverged
    out_of_range: float = 0.0  # largest distance of an iterate from [0, 1]
    non_monotone_steps: int = 0  # iterations where some entry decreased

    def describe(self) -> str:
        text = f"{self.status} after {len(self.residuals)} iterations (last residual {self.residuals[-1]:.3g})"
        if self.out_of_range > 0:
            text += f", left [0, 1] by up to {self.out_of_range:.3g}"
        if self.non_monotone_steps:
            text += f", {self.non_monotone_steps} non-monotone steps"
        return text


@dataclass
class Comparison:
    shepard: IterationStats
    interpolation: IterationStats


def _status(residuals: list, tol: float, blew_up: bool) -> str:
    if blew_up:
        return "diverged"
    if residuals and residuals[-1] <= tol:
        return "converged"
    if residuals[-1] > 100.0 * min(residuals) and residuals[-1] > 1e-8:
        return "diverged"
    return "stalled"


def _watch():
    stats = {"prev": None, "out": 0.0, "dips": 0}

    def cb(v):
        stats["out"] = max(stats["out"], float(np.max(np.maximum(v - 1.0, -v))))
        if stats["prev"] is not None and np.any(v < stats["prev"] - 1e-15):
            stats["dips"] += 1
        stats["prev"] = v.copy()

    return stats, cb


def interpolation_iteration(s: Setup, tol: float, max_iter: int, blowup: float = 1e6, callback=None):
    """Iterate ``v <- I(Gamma(v))`` with nodal values as unknowns.

    Images are evaluated through the interpolant of the current nodal values,
    with the same target / outside conventions as the Shepard solver. The
    iterate is not clipped, so loss of monotonicity shows up as values leaving
    [0, 1]. Returns the last iterate, the residuals and whether the run blew up.
    """
    p, nodes = s.problem, s.nodes
    t = assemble_transitions(p, nodes, s.kernel)
    interp = Interpolant(nodes.scaled(p.metric_scale), s.kernel)
    flat_cls = t.image_class.ravel()
    interior = np.flatnonzero(flat_cls == INTERIOR)
    ev = interp.evaluation_matrix(t.images.reshape(-1, p.dim)[interior] / p.metric_scale)
    target = (flat_cls == TARGET).astype(float)
    v = np.zeros(nodes.n)
    residuals = []
    blew_up = False
    for _ in range(max_iter):
        vbar = target.copy()
        vbar[interior] = ev @ interp.coefficients(v)
        new = (t.weights * vbar.reshape(t.n, t.m)).max(axis=1)
        new[t.node_in_target] = 1.0
        residuals.append(float(np.max(np.abs(new - v))))
        v = new
        if not np.all(np.isfinite(v)) or np.max(np.abs(v)) > blowup:
            blew_up = True
            break
        if callback is not None:
            callback(v)
        if residuals[-1] <= tol:
            break
    return v, residuals, blew_up


def run_compare_interpolation(cfg: RunConfig, echo=print) -> Comparison:
    s = setup(cfg)
    t = assemble_transitions(s.problem, s.nodes, s.kernel)
    sw, scb = _watch()
    _, srep = value_iteration(t, tol=cfg.solver.tol, max_iter=cfg.solver.max_iter, callback=scb)
    iw, icb = _watch()
    _, ires, blew_up = interpolation_iteration(s, cfg.solver.tol, cfg.solver.max_iter, callback=icb)
    sres = srep.residuals
    cmp = Comparison(
        IterationStats(sres, _status(sres, cfg.solver.tol, False), sw["out"], sw["dips"]),
        IterationStats(ires, _status(ires, cfg.solver.tol, blew_up), iw["out"], iw["dips"]),
    )
    n = max(len(sres), len(ires))
    rows = ([i + 1, sres[i] if i < len(sres) else None, ires[i] if i < len(ires) else None] for i in range(n))
    write_csv(Path(cfg.output) / "compare.csv", ["iteration", "residual_shepard", "residual_interpolation"], rows)
    sol = Solution(s.problem, s.nodes, s.kernel, np.zeros(0), srep, t)
    for line in _summary_lines(s, sol):
        echo(line)
    echo(f"Shepard iteration        {cmp.shepard.describe()}")
    echo(f"interpolation iteration  {cmp.interpolation.describe()}")
    return cmp
