"""Staged batch pipeline shared by the CLI and the test suite.

Stages: spectral -> ladder -> manifolds -> lambda -> foliate -> oracle.
Each stage consumes the state produced by earlier ones, emits CSV artifacts
into the output directory, and records a pass/fail status.  The run manifest
lists every emitted file, echoes the full constants ladder, and carries the
config hash and wall times.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import convergence, foliation, reporting
from .errors import BoundViolation
from .flow import descending_disk, integrate_forward
from .local_model import LocalModel, build_ladder, calibrate_ladder, lipschitz_modulus
from .lyapunov_perron import SolverCache, graph_F_inf, graph_G_inf, graph_G_T
from .oracle import mixed_bvp_oracle
from .spectral import split

STAGES = ("spectral", "ladder", "manifolds", "lambda", "foliate", "oracle")


@dataclass
class RunState:
    problem: object
    out_dir: Path
    tol: float = 1e-10
    seed: int = 0
    threads: int = 1  # accepted for interface compatibility; stages run serially
    split: object = None
    model: object = None
    modulus: object = None
    kappa_star: float = None
    ladder: object = None
    cache: object = None
    graph_f: object = None
    graph_g: object = None
    disk: object = None
    atlas: object = None
    statuses: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    wall_times: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def rng(self, salt=0):
        return np.random.default_rng(self.seed + salt)

    def emit(self, name, header, rows):
        path = reporting.write_csv(self.out_dir / name, header, rows)
        self.artifacts.append(path)
        return path


def _require(state, *stages):
    for stage in stages:
        if state.statuses.get(stage) != "pass":
            run_stage(stage, state)


def stage_spectral(state):
    problem = state.problem
    state.split = split(problem.hess(problem.critical_point))
    state.model = LocalModel(problem, state.split)
    sp = state.split
    state.emit("spectral.csv",
               ["index", "eigenvalue"] + [f"v{i + 1}" for i in range(sp.dimension)],
               reporting.spectral_rows(sp))
    state.details["spectral"] = {
        "eigenvalues": sp.eigenvalues.tolist(),
        "morse_index": sp.morse_index,
        "gap": sp.gap,
    }


def stage_ladder(state):
    _require(state, "spectral")
    problem = state.problem
    state.modulus, state.kappa_star = lipschitz_modulus(
        problem, state.split, rng=state.rng(1))
    state.ladder = build_ladder(state.split, state.modulus,
                                choices=problem.ladder_overrides,
                                kappa_star=state.kappa_star,
                                rho0=problem.trust_radius)
    state.cache = SolverCache(state.model)
    rows = [[k, v] for k, v in sorted(state.ladder.echo().items())
            if v is not None]
    state.emit("ladder.csv", ["constant", "value"], rows)
    state.details["ladder"] = state.ladder.echo()


def stage_manifolds(state):
    _require(state, "ladder")
    state.graph_f = graph_F_inf(state.model, state.ladder, tol=state.tol,
                                cache=state.cache)
    state.graph_g = graph_G_inf(state.model, state.ladder, tol=state.tol,
                                cache=state.cache)
    state.ladder = calibrate_ladder(state.ladder, state.model, state.graph_f,
                                    state.graph_g,
                                    overrides=state.problem.ladder_overrides)
    state.disk = descending_disk(state.model, state.ladder, state.graph_f,
                                 cache=state.cache)
    for sample, name in ((state.graph_f, "graph_F_inf.csv"),
                         (state.graph_g, "graph_G_inf.csv")):
        state.emit(name, reporting.graph_header(state.model, sample),
                   reporting.graph_rows(sample, state.model))
    rows = [[k, v] for k, v in sorted(state.ladder.echo().items())
            if v is not None]
    state.emit("ladder_calibrated.csv", ["constant", "value"], rows)
    # one exported reference trajectory from a graph point
    start_local = state.disk.sphere_local[0]
    traj = integrate_forward(state.problem, state.model.to_ambient(start_local),
                             min(2.0, state.ladder.T0))
    state.emit("trajectory_sample.csv",
               reporting.trajectory_header(state.problem.dimension),
               traj.to_rows())
    state.details["manifolds"] = {
        "ladder": state.ladder.echo(),
        "F_max": float(np.max(np.abs(state.graph_f.values))),
        "G_max": float(np.max(np.abs(state.graph_g.values))),
        "sphere": state.disk.sphere_minus.tolist(),
    }


def _lambda_sample_sets(state, n_zplus=3):
    zm_list = [state.disk.sphere_minus[i]
               for i in range(min(2, len(state.disk.sphere_minus)))]
    axes = state.graph_g.axes
    d = len(axes)
    # interior nodes only: finite-difference probes must stay in the domain
    last = len(axes[0]) - 1
    picks = np.round(np.linspace(0.15 * last, 0.85 * last, n_zplus)).astype(int)
    zp_list = [np.array([axes[j][i] for j in range(d)]) for i in picks]
    return zm_list, zp_list


def stage_lambda(state, T_count=5):
    _require(state, "manifolds")
    ladder = state.ladder
    solver = convergence.GraphFamilySolver(state.model, ladder, tol=state.tol,
                                           cache=state.cache)
    t_min = max(ladder.T0, ladder.T2)
    T_grid = t_min + np.arange(T_count, dtype=float)
    zm_list, zp_list = _lambda_sample_sets(state)

    c0 = convergence.c0_convergence(solver, T_grid, zm_list, zp_list)
    reports = {"c0": c0}
    if state.problem.c21:
        reports["c1"] = convergence.c1_convergence(
            solver, T_grid[:2], zm_list[:1], zp_list[:2])
    reports["lipschitz_T"] = convergence.lipschitz_in_T(
        solver, T_grid[:2], (1e-2, 1e-3), zm_list[:1], zp_list[:2])
    graph_t = graph_G_T(state.model, ladder, float(T_grid[0]),
                        zm_list[0], orbit=solver.orbit(zm_list[0], T_grid[0]),
                        tol=state.tol, cache=state.cache)
    state.emit("graph_G_T.csv", reporting.graph_header(state.model, graph_t),
               reporting.graph_rows(graph_t, state.model))
    reports["endpoint"] = convergence.endpoint_audit(solver, graph_t)

    all_ok = True
    for name, rep in reports.items():
        state.emit(f"report_{name}.csv", convergence.REPORT_COLUMNS,
                   reporting.report_rows(rep))
        all_ok = all_ok and rep.all_ok
    state.details["lambda"] = {
        "fitted_rates": c0.fitted_rates,
        "rate_bound": c0.extras.get("rate_bound"),
        "all_ok": all_ok,
    }
    if not all_ok:
        raise BoundViolation("a convergence bound failed beyond its budget")
    state.details["lambda"]["graph_T"] = float(T_grid[0])


def stage_foliate(state):
    _require(state, "manifolds")
    ladder = state.ladder
    tau = state.ladder.T0
    T_grid = tau + np.arange(0.0, 3.0)
    pair = foliation.build_pair(state.model, ladder, rng=state.rng(2))
    atlas = foliation.build_atlas(
        state.model, ladder, state.graph_g, state.disk.sphere_minus,
        pair=pair, tau=tau, T_grid=T_grid,
        zplus_axes=tuple(np.linspace(-ladder.R / np.sqrt(max(1, state.model.n - state.model.k)),
                                     ladder.R / np.sqrt(max(1, state.model.n - state.model.k)), 21)
                         for _ in range(state.model.n - state.model.k)),
        tol=state.tol, cache=state.cache)
    state.atlas = atlas
    state.emit("pair.csv",
               [f"x{i + 1}" for i in range(state.model.n)] + ["f", "exit"],
               reporting.pair_rows(pair, state.model))
    leaf_files = []
    for label in atlas.all_labels():
        leaf = atlas.leaf(label)
        tag = "center" if label == "center" else f"T{label[0]:g}_a{label[1]}"
        name = f"leaf_{tag}.csv"
        state.emit(name, reporting.atlas_leaf_header(state.model, leaf),
                   reporting.atlas_leaf_rows(leaf, state.model))
        leaf_files.append([str(label), name])
    reports = {
        "disjoint": foliation.check_disjoint(atlas, pair_count=100,
                                             rng=state.rng(3)),
        "invariance": foliation.leaf_invariance(atlas),
        "center_distance": foliation.contraction_to_center(atlas),
        "retract": foliation.retract_audit(atlas),
    }
    all_ok = True
    for name, rep in reports.items():
        state.emit(f"report_{name}.csv", convergence.REPORT_COLUMNS,
                   reporting.report_rows(rep))
        all_ok = all_ok and rep.all_ok
    state.details["foliate"] = {
        "leaves": len(atlas.all_labels()),
        "leaf_files": leaf_files,
        "mu_audit": reports["retract"].extras.get("mu_audit"),
        "pair_samples": len(pair.samples),
        "all_ok": all_ok,
    }
    if not all_ok:
        raise BoundViolation("a foliation audit failed beyond its budget")


def stage_oracle(state, grid=2):
    _require(state, "manifolds")
    if state.model.k != 1:
        state.details["oracle"] = {"skipped": "shooting suite covers index one"}
        return
    ladder = state.ladder
    solver = convergence.GraphFamilySolver(state.model, ladder, tol=state.tol,
                                           cache=state.cache)
    # forward shooting has condition number exp(T |lambda_min|); cap the
    # horizon so the oracle itself stays meaningful (the mixed problem is
    # well posed for every T > 0, so shorter-T validation is equally strict)
    t_cap = np.log(1e6) / abs(ladder.lambda_min)
    t_base = min(max(ladder.T0, ladder.T2), t_cap)
    enforce = t_base >= ladder.T0 - 1e-12
    T_list = t_base + (np.linspace(0.0, 2.0, grid) if enforce
                       else np.linspace(-2.0, 0.0, grid))
    zm_list, zp_list = _lambda_sample_sets(state, n_zplus=grid)
    rows = []
    worst = 0.0
    for T in T_list:
        for zm in zm_list[:grid]:
            for zp in zp_list[:grid]:
                res, _ = solver.mixed(T, zm, zp, enforce_endpoint=enforce)
                traj, record = mixed_bvp_oracle(state.model, ladder, float(T),
                                                zm, zp)
                nodes = res.curve.grid.nodes
                states = state.model.to_local(traj.at(nodes))
                err = float(np.max(np.linalg.norm(states - res.curve.values,
                                                  axis=1)))
                worst = max(worst, err)
                rows.append([T, *np.atleast_1d(zm), *np.atleast_1d(zp), err,
                             record.bracket_width])
    state.emit("oracle_comparison.csv",
               ["T"] + [f"zminus_{i}" for i in range(state.model.k)]
               + [f"zplus_{i}" for i in range(state.model.n - state.model.k)]
               + ["sup_error", "shot_residual"], rows)
    state.details["oracle"] = {"worst_sup_error": worst}
    if worst > 1e-6:
        raise BoundViolation(f"oracle disagreement {worst:.3e} above 1e-6")


_STAGE_FUNCS = {
    "spectral": stage_spectral,
    "ladder": stage_ladder,
    "manifolds": stage_manifolds,
    "lambda": stage_lambda,
    "foliate": stage_foliate,
    "oracle": stage_oracle,
}


def run_stage(name, state):
    if name not in _STAGE_FUNCS:
        raise ValueError(f"unknown stage {name!r}")
    start = time.perf_counter()
    try:
        _STAGE_FUNCS[name](state)
    except Exception:
        state.statuses[name] = "error"
        state.wall_times[name] = time.perf_counter() - start
        raise
    state.statuses[name] = "pass"
    state.wall_times[name] = time.perf_counter() - start


def run(problem, out_dir, stages=("all",), tol=1e-10, seed=0, threads=1,
        config_digest=None):
    """Run the requested stages and write the manifest; returns the state."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    state = RunState(problem=problem, out_dir=out_dir, tol=tol, seed=seed,
                     threads=threads)
    todo = list(STAGES) if "all" in stages else list(stages)
    error = None
    try:
        for name in todo:
            run_stage(name, state)
    except Exception as exc:
        error = exc
    manifest = {
        "problem": problem.name,
        "config_hash": config_digest,
        "seed": seed,
        "tol": tol,
        "stages_requested": todo,
        "stage_statuses": state.statuses,
        "wall_times": state.wall_times,
        "ladder_echo": state.ladder.echo() if state.ladder else None,
        "artifact_paths": sorted(str(Path(p).name) for p in state.artifacts),
        "details": state.details,
    }
    if error is not None:
        manifest["error"] = {
            "code": getattr(error, "code", "error"),
            "message": str(error),
            "type": type(error).__name__,
        }
    path = reporting.write_json(out_dir / "manifest.json", manifest)
    state.artifacts.append(path)
    if error is not None:
        raise error
    return state
