"""Quantitative checks on the time-T graph family.

Each report row compares a measured gap against the a priori bound computed
from the rate ladder, with an explicit tolerance budget so that a violation
of the mathematics is separated from numerical slack.  Bounds are asserted
against the ladder constants as built, never re-fitted: a failing row is a
finding about the implementation or the ladder, not a tuning signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EndpointViolation, FlagMissing
from .lyapunov_perron import (
    SolverCache,
    backward_orbit,
    default_horizon,
    graph_derivative_linearized,
    solve_mixed,
    solve_stable,
)

#: a fixed point with residual r lies within 2 r of the exact one
#: (contraction factor <= 1/2)
RESIDUAL_TO_ERROR = 2.0


@dataclass
class ReportRow:
    check: str
    T: float
    z_minus_label: str
    z_plus_label: str
    direction_label: str
    gap: float
    bound: float
    budget: float
    ok: bool

    @property
    def slack(self):
        return self.bound + self.budget - self.gap

    def to_list(self):
        return [self.check, self.T, self.z_minus_label, self.z_plus_label,
                self.direction_label, self.gap, self.bound, self.budget,
                self.slack, int(self.ok)]


REPORT_COLUMNS = ["check", "T", "z_minus", "z_plus", "direction",
                  "gap", "bound", "budget", "slack", "pass"]


@dataclass
class ConvergenceReport:
    kind: str
    rows: list = field(default_factory=list)
    fitted_rates: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def all_ok(self):
        return all(r.ok for r in self.rows)

    def max_gap(self):
        return max((r.gap for r in self.rows), default=0.0)

    def add(self, **kw):
        self.rows.append(ReportRow(**kw))


def _label(vec):
    return "(" + ",".join(f"{v:.6g}" for v in np.atleast_1d(vec)) + ")"


class GraphFamilySolver:
    """Shared solves for the convergence checks: caches backward orbits and
    mixed fixed points keyed by (T, z-, z+)."""

    def __init__(self, model, ladder, tol=1e-10, cache=None):
        self.model = model
        self.ladder = ladder
        self.tol = tol
        self.cache = cache or SolverCache(model)
        self._orbits = {}
        self._mixed = {}
        self._stable = {}

    def orbit(self, z_minus, t_need):
        key = tuple(np.round(z_minus, 15))
        have = self._orbits.get(key)
        if have is None or have.curve.grid.t0 > -t_need:
            t_max = max(default_horizon(self.ladder), t_need)
            have = backward_orbit(self.model, self.ladder, np.asarray(z_minus),
                                  t_max=t_max, tol=self.tol, cache=self.cache)
            self._orbits[key] = have
        return have

    def mixed(self, T, z_minus, z_plus, enforce_endpoint=True):
        key = (round(float(T), 12), tuple(np.round(z_minus, 15)),
               tuple(np.round(z_plus, 15)))
        if key not in self._mixed:
            orbit = self.orbit(np.asarray(z_minus), T)
            self._mixed[key] = solve_mixed(
                self.model, self.ladder, T, np.asarray(z_minus),
                np.asarray(z_plus), orbit, tol=self.tol, cache=self.cache,
                enforce_endpoint=enforce_endpoint)
        return self._mixed[key]

    def graph_value(self, T, z_minus, z_plus, **kw):
        res, _ = self.mixed(T, z_minus, z_plus, **kw)
        return res.curve.values[0, : self.model.k]

    def stable(self, z_plus):
        key = tuple(np.round(z_plus, 15))
        if key not in self._stable:
            self._stable[key] = solve_stable(self.model, self.ladder,
                                             np.asarray(z_plus), tol=self.tol,
                                             cache=self.cache)
        return self._stable[key]

    def stable_value(self, z_plus):
        return self.stable(z_plus).curve.values[0, : self.model.k]


def _fit_rate(T_values, gaps, floor):
    """Least-squares decay rate of gap ~ exp(-rate * T), above the floor."""
    T_values = np.asarray(T_values, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    keep = gaps > floor
    if np.count_nonzero(keep) < 2:
        return None
    slope = np.polyfit(T_values[keep], np.log(gaps[keep]), 1)[0]
    return -float(slope)


def c0_convergence(solver, T_grid, z_minus_list, z_plus_list):
    """Gap of the time-T graph against the stable graph, per sample.

    Requires T >= max(T0, T2); bound exp(-T lambda / 8) from the ladder.
    """
    ladder = solver.ladder
    t_min = max(ladder.T0, ladder.T2)
    T_grid = np.asarray(sorted(T_grid), dtype=float)
    if T_grid[0] < t_min - 1e-9:
        raise ValueError(f"T grid must start at max(T0, T2) = {t_min}")
    report = ConvergenceReport("c0")
    series = {}
    for T in T_grid:
        for zm in z_minus_list:
            for zp in z_plus_list:
                res, _ = solver.mixed(T, zm, zp)
                g_t = res.curve.values[0, : solver.model.k]
                st = solver.stable(zp)
                g_inf = st.curve.values[0, : solver.model.k]
                gap = float(np.linalg.norm(g_t - g_inf))
                bound = math.exp(-T * ladder.lambda_ / 8.0)
                budget = RESIDUAL_TO_ERROR * (res.reported_residual
                                              + st.reported_residual)
                report.add(check="c0", T=float(T), z_minus_label=_label(zm),
                           z_plus_label=_label(zp), direction_label="",
                           gap=gap, bound=bound, budget=budget,
                           ok=gap <= bound + budget)
                series.setdefault(f"{_label(zm)}|{_label(zp)}", []).append((T, gap))
    floor = 50.0 * solver.tol
    pooled_T, pooled_gap = [], []
    for key, pts in series.items():
        Ts, gaps = zip(*pts)
        rate = _fit_rate(Ts, gaps, floor)
        if rate is not None:
            report.fitted_rates[key] = rate
        pooled_T.extend(Ts)
        pooled_gap.extend(gaps)
    pooled = _fit_rate(pooled_T, pooled_gap, floor)
    if pooled is not None:
        report.fitted_rates["pooled"] = pooled
    report.extras["rate_bound"] = ladder.lambda_ / 8.0
    return report


def c1_convergence(solver, T_grid, z_minus_list, z_plus_list, directions=None,
                   fd_step=None, use_linearized=True):
    """Directional-derivative gap of the time-T graphs against the stable one.

    Requires the C^{2,1} flag (the bound constant c_* needs the Lipschitz
    modulus of dh).  Derivatives are central differences of re-solved graph
    values; the linearized integral equation provides an optional
    cross-check recorded in ``extras``.
    """
    ladder = solver.ladder
    model = solver.model
    if ladder.c_star is None or not model.problem.c21:
        raise FlagMissing("C^{2,1} flag (and kappa_star) required for C1 checks")
    directions = directions if directions is not None else \
        [np.eye(model.n - model.k)[i] for i in range(model.n - model.k)]
    fd_step = fd_step if fd_step is not None else 0.05 * ladder.R
    report = ConvergenceReport("c1")
    cross = []
    for T in sorted(T_grid):
        for zm in z_minus_list:
            for zp in z_plus_list:
                for i, v in enumerate(directions):
                    v = np.asarray(v, dtype=float)
                    nv = np.linalg.norm(v)

                    def fd(value_fn, h):
                        hi = value_fn(zp + h * v)
                        lo = value_fn(zp - h * v)
                        return (hi - lo) / (2.0 * h)

                    gT = lambda z: solver.graph_value(T, zm, z)
                    gI = solver.stable_value
                    dT_full = fd(gT, fd_step)
                    dT_half = fd(gT, 0.5 * fd_step)
                    dI_full = fd(gI, fd_step)
                    dI_half = fd(gI, 0.5 * fd_step)
                    gap = float(np.linalg.norm(dT_half - dI_half))
                    fd_err = (np.linalg.norm(dT_full - dT_half)
                              + np.linalg.norm(dI_full - dI_half)) / 3.0
                    noise = 4.0 * RESIDUAL_TO_ERROR * solver.tol / fd_step
                    bound = ladder.c_star * math.exp(-T * ladder.lambda_ / 8.0) * nv
                    budget = float(fd_err + noise)
                    report.add(check="c1", T=float(T), z_minus_label=_label(zm),
                               z_plus_label=_label(zp),
                               direction_label=f"e{i}",
                               gap=gap, bound=bound, budget=budget,
                               ok=gap <= bound + budget)
                    if use_linearized:
                        resT, _ = solver.mixed(T, zm, zp)
                        dT_lin = graph_derivative_linearized(
                            model, ladder, resT, v, cache=solver.cache)
                        dI_lin = graph_derivative_linearized(
                            model, ladder, solver.stable(zp), v,
                            cache=solver.cache)
                        cross.append(float(np.linalg.norm(
                            (dT_lin - dI_lin) - (dT_half - dI_half))))
    if cross:
        report.extras["linearized_vs_fd_max"] = max(cross)
    return report


def lipschitz_in_T(solver, T_grid, tau_grid, z_minus_list, z_plus_list):
    """Difference quotients of the graph family in the horizon T.

    First quotients are asserted against c1 = 2(|lambda_min| + 1); second
    quotients (the Lipschitz modulus of the T-derivative) are reported but
    not asserted, their constant not being pinned by the ladder.
    """
    ladder = solver.ladder
    report = ConvergenceReport("lipschitz_T")
    second = {}
    for T in sorted(T_grid):
        for tau in tau_grid:
            for zm in z_minus_list:
                for zp in z_plus_list:
                    resA, _ = solver.mixed(T, zm, zp)
                    resB, _ = solver.mixed(T + tau, zm, zp)
                    gA = resA.curve.values[0, : solver.model.k]
                    gB = resB.curve.values[0, : solver.model.k]
                    quotient = float(np.linalg.norm(gB - gA)) / tau
                    budget = RESIDUAL_TO_ERROR * (resA.reported_residual
                                                  + resB.reported_residual) / tau
                    report.add(check="lipschitz_T", T=float(T),
                               z_minus_label=_label(zm), z_plus_label=_label(zp),
                               direction_label=f"tau={tau:g}",
                               gap=quotient, bound=ladder.c1, budget=budget,
                               ok=quotient <= ladder.c1 + budget)
                    if solver.model.problem.c21:
                        resC, _ = solver.mixed(T + 2 * tau, zm, zp)
                        gC = resC.curve.values[0, : solver.model.k]
                        theta_diff = float(np.linalg.norm(gC - 2 * gB + gA)) / (tau * tau)
                        second[(float(T), float(tau), _label(zm), _label(zp))] = theta_diff
    report.extras["second_quotients"] = second
    return report


def endpoint_audit(solver, graph, budget_scale=1.0):
    """Audit of ``|xi(T) - z_minus|`` against the sharp bound rho e^{-T lambda}."""
    ladder = solver.ladder
    if graph.kind != "G_T":
        raise ValueError("endpoint audit expects a time-T graph sample")
    report = ConvergenceReport("endpoint")
    T = graph.T
    bound = ladder.rho * math.exp(-T * ladder.lambda_)
    gaps = graph.endpoint_gaps.ravel()
    residuals = graph.residuals.ravel()
    base = graph.grid_points()
    for zp, gap, res in zip(base, gaps, residuals):
        budget = budget_scale * RESIDUAL_TO_ERROR * res
        report.add(check="endpoint", T=float(T),
                   z_minus_label=_label(graph.z_minus), z_plus_label=_label(zp),
                   direction_label="", gap=float(gap), bound=bound,
                   budget=budget, ok=gap <= bound + budget)
    if not report.all_ok:
        worst = min(report.rows, key=lambda r: r.slack)
        raise EndpointViolation(
            f"endpoint bound violated at z_plus={worst.z_plus_label}: "
            f"gap {worst.gap:.3e} > bound {worst.bound:.3e} + budget {worst.budget:.3e}")
    return report
