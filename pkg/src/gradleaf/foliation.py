"""Level-set pairs, the invariant stable foliation, and the induced flow.

The pair (N, L) is defined purely through level values of the objective
along forward trajectories.  Its foliation is assembled from the time-T
graph family: one codimension-k leaf per (T, alpha) with alpha on the
descending sphere, plus the ascending disk as the center leaf.  Conjugating
the flow on the center leaf with the graph maps equips every leaf with its
own semi-flow whose time-infinity map retracts N onto its part in the
unstable manifold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .convergence import RESIDUAL_TO_ERROR, ConvergenceReport, _label
from .errors import (
    ComponentAmbiguous,
    DisjointnessViolation,
    OutsideLeafDomain,
    RetractViolation,
)
from .flow import integrate_forward
from .lyapunov_perron import SolverCache, backward_orbit, default_horizon, graph_G_T

PAIR_RTOL = 1e-9
PAIR_ATOL = 1e-12
COMPONENT_KEEP_FRACTION = 0.9


@dataclass
class ConleyPair:
    """Sampled level-set pair around the critical point (local frame)."""

    epsilon: float
    tau: float
    c: float
    samples: np.ndarray          # accepted N samples, local frame
    exit_mask: np.ndarray        # True where the sample belongs to L
    dropped: int                 # accepted points outside the x-component

    @property
    def L_samples(self):
        return self.samples[self.exit_mask]


def pair_membership(model, point_local, epsilon, tau, rtol=PAIR_RTOL,
                    atol=PAIR_ATOL):
    """(in_N, in_L) for one local-frame point, by forward integration.

    The objective is monotone along trajectories, so both conditions are
    decided by the time at which the trajectory crosses level c - epsilon:
    never by 2 tau puts the point in N only, crossing in [tau, 2 tau] puts
    it in both, crossing before tau excludes it.
    """
    c = model.f_local(np.zeros(model.n))
    level = c - epsilon
    f0 = model.f_local(point_local)
    if f0 > c + epsilon or f0 < level:
        return False, False
    traj = integrate_forward(model.problem, model.to_ambient(point_local),
                             2.0 * tau, rtol=rtol, atol=atol,
                             stop_below_level=level)
    if traj.stopped_at is None:
        return True, False
    t_cross = traj.stopped_at
    in_n = t_cross >= tau
    return bool(in_n), bool(in_n and t_cross <= 2.0 * tau)


def build_pair(model, ladder, epsilon=None, tau=None, n_samples=240,
               box_halfwidth=None, rng=None, rtol=PAIR_RTOL):
    """Rejection-sample the pair on a box and keep the component of x.

    The box is anisotropic: along unstable directions the set N thins out
    like exp(-tau |lambda_j|) (only points that stay above level c - epsilon
    until time tau belong to it), so the box is shrunk accordingly or an
    isotropic sampler would never hit N.  Connectivity is enforced by flood
    fill over the accepted samples with an edge radius adapted to the
    sampling density; a large disconnected remainder signals insufficient
    resolution and raises.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    epsilon = ladder.epsilon if epsilon is None else float(epsilon)
    tau = ladder.T0 if tau is None else float(tau)
    c = model.f_local(np.zeros(model.n))
    n = model.n
    if box_halfwidth is None:
        widths = np.empty(n)
        for j, lam in enumerate(model.eigenvalues):
            scale = math.sqrt(2.0 * epsilon / abs(lam))
            if lam < 0:
                widths[j] = 1.3 * scale * math.exp(-tau * abs(lam))
            else:
                widths[j] = 1.3 * scale
    else:
        widths = np.broadcast_to(np.asarray(box_halfwidth, dtype=float), (n,)).copy()

    pts = rng.uniform(-1.0, 1.0, size=(n_samples, n)) * widths
    pts = np.concatenate([np.zeros((1, n)), pts])  # x itself is always in N
    accepted = []
    exit_flags = []
    for p in pts:
        in_n, in_l = pair_membership(model, p, epsilon, tau, rtol=rtol)
        if in_n:
            accepted.append(p)
            exit_flags.append(in_l)
    accepted = np.asarray(accepted)
    exit_flags = np.asarray(exit_flags, dtype=bool)

    # flood fill from x over the sample graph; the radius blends the local
    # sampling density with the box scale so random gaps do not fragment
    # a genuinely connected cloud
    m = accepted.shape[0]
    if m > 1:
        dists = np.linalg.norm(accepted[:, None, :] - accepted[None, :, :], axis=-1)
        np.fill_diagonal(dists, np.inf)
        nn = np.min(dists, axis=1)
        radius = max(3.0 * float(np.median(nn)),
                     0.15 * float(np.linalg.norm(2.0 * widths)))
        reach = np.zeros(m, dtype=bool)
        reach[0] = True
        frontier = [0]
        while frontier:
            i = frontier.pop()
            for j in np.nonzero(dists[i] <= radius)[0]:
                if not reach[j]:
                    reach[j] = True
                    frontier.append(j)
        dropped = int(m - np.count_nonzero(reach))
        if dropped > (1.0 - COMPONENT_KEEP_FRACTION) * m:
            raise ComponentAmbiguous(
                f"{dropped} of {m} accepted samples are disconnected from x "
                "at this sampling resolution")
        accepted = accepted[reach]
        exit_flags = exit_flags[reach]
    else:
        dropped = 0
    return ConleyPair(epsilon=epsilon, tau=tau, c=c, samples=accepted,
                      exit_mask=exit_flags, dropped=dropped)


@dataclass
class Leaf:
    """One leaf: a clipped graph over the plus ball.

    ``label`` is "center" or a (T, alpha-index) pair; ``base_point`` is the
    point the leaf contracts onto under the induced flow (alpha^T, or the
    origin for the center leaf).
    """

    label: object
    graph: object
    base_point: np.ndarray
    T: float | None
    clip_level: float
    inside_mask: np.ndarray
    boundary_plus: np.ndarray
    boundary_local: np.ndarray

    def point_at(self, z_plus, model):
        vals = self.graph.evaluate(z_plus)
        point = np.zeros(model.n)
        point[: model.k] = vals
        point[model.k:] = z_plus
        return point

    def inside_points(self, model):
        base = self.graph.grid_points()[self.inside_mask.ravel()]
        vals = self.graph.values_flat()[self.inside_mask.ravel()]
        pts = np.zeros((base.shape[0], model.n))
        pts[:, : model.k] = vals
        pts[:, model.k:] = base
        return base, pts


@dataclass
class FoliationAtlas:
    model: object
    ladder: object
    pair: ConleyPair
    center: Leaf
    leaves: dict
    disk_D: np.ndarray
    annulus_labels: list
    tau: float
    epsilon: float
    interp_tolerance: float = field(default=0.0)

    def leaf(self, label):
        if label == "center":
            return self.center
        return self.leaves[label]

    def all_labels(self):
        return ["center"] + list(self.leaves.keys())

    def locate(self, point_local, residual_tol=None):
        """Label of the leaf through ``point_local`` (None when on no leaf).

        Resolves through the graph parametrization: the point's minus part
        is compared against every leaf graph at its plus part, because
        codimension-k sets cannot be membership-tested by ambient distance.
        """
        model = self.model
        tol = (10.0 * self.interp_tolerance + 1e-9 if residual_tol is None
               else residual_tol)
        point_local = np.asarray(point_local, dtype=float)
        z_plus = point_local[model.k:]
        best = (None, np.inf)
        for label in self.all_labels():
            leaf = self.leaf(label)
            try:
                val = leaf.graph.evaluate(z_plus)
            except Exception:
                continue
            residual = float(np.linalg.norm(point_local[: model.k] - val))
            if residual < best[1]:
                best = (label, residual)
        if best[0] is None or best[1] > tol:
            return None
        return best[0]

    def contains(self, point_local, residual_tol=None):
        """Membership in the sampled pair region through the leaf graphs."""
        label = self.locate(point_local, residual_tol=residual_tol)
        if label is None:
            return False
        f_val = self.model.f_local(np.asarray(point_local, dtype=float))
        return bool(f_val <= self.leaf(label).clip_level + 1e-12)


def _leaf_boundary(model, graph, clip_level, resolution=8):
    """Level-crossing samples of a leaf along rays of the plus subspace."""
    d = model.n - model.k
    if d == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        angles = np.linspace(0.0, 2 * np.pi, resolution, endpoint=False)
        dirs = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
        if d > 2:
            dirs = np.pad(dirs, ((0, 0), (0, d - 2)))

    def leaf_f(z_plus):
        vals = graph.evaluate(z_plus)
        point = np.zeros(model.n)
        point[: model.k] = vals
        point[model.k:] = z_plus
        return model.f_local(point), point

    r_max = float(min(ax[-1] for ax in graph.axes))
    boundary_plus, boundary_local = [], []
    for u in dirs:
        f_hi, _ = leaf_f(r_max * u)
        if f_hi < clip_level:
            continue  # leaf not clipped along this ray
        lo, hi = 0.0, r_max
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            val, point = leaf_f(mid * u)
            if abs(val - clip_level) <= 1e-12 * max(1.0, abs(clip_level)) + 1e-15:
                break
            if val < clip_level:
                lo = mid
            else:
                hi = mid
        boundary_plus.append(mid * u)
        boundary_local.append(point)
    return (np.asarray(boundary_plus).reshape(-1, d),
            np.asarray(boundary_local).reshape(-1, model.n))


def build_atlas(model, ladder, stable_graph, sphere_minus, pair=None,
                epsilon=None, tau=None, T_grid=None, zplus_axes=None,
                tol=1e-10, cache=None, boundary_resolution=8):
    """Assemble the leaf family over a (T, alpha) grid.

    ``sphere_minus``: minus coordinates of the descending-sphere samples.
    Leaves are built from the time-T graphs and clipped at level c + epsilon;
    the center leaf is the clipped stable graph.
    """
    cache = cache or SolverCache(model)
    epsilon = ladder.epsilon if epsilon is None else float(epsilon)
    tau = ladder.T0 if tau is None else float(tau)
    T_grid = np.asarray(T_grid if T_grid is not None
                        else tau + np.arange(0.0, 5.0), dtype=float)
    if np.any(T_grid < tau - 1e-12):
        raise ValueError("atlas horizons must satisfy T >= tau")
    c = model.f_local(np.zeros(model.n))
    clip = c + epsilon

    pair = pair if pair is not None else build_pair(model, ladder,
                                                    epsilon=epsilon, tau=tau)

    def inside(graph):
        base = graph.grid_points()
        vals = graph.values_flat()
        pts = np.zeros((base.shape[0], model.n))
        pts[:, : model.k] = vals
        pts[:, model.k:] = base
        fvals = np.array([model.f_local(p) for p in pts])
        return (fvals <= clip).reshape(graph.grid_shape)

    bnd_p, bnd_l = _leaf_boundary(model, stable_graph, clip, boundary_resolution)
    center = Leaf(label="center", graph=stable_graph,
                  base_point=np.zeros(model.n), T=None, clip_level=clip,
                  inside_mask=inside(stable_graph),
                  boundary_plus=bnd_p, boundary_local=bnd_l)

    leaves = {}
    disk = [np.zeros(model.n)]
    annulus = []
    horizon = max(default_horizon(ladder), float(np.max(T_grid)))
    for ai, alpha in enumerate(np.atleast_2d(sphere_minus)):
        orbit = backward_orbit(model, ladder, alpha, t_max=horizon, tol=tol,
                               cache=cache)
        for T in T_grid:
            graph = graph_G_T(model, ladder, float(T), alpha,
                              base_axes=zplus_axes, orbit=orbit, tol=tol,
                              cache=cache)
            base_point = orbit.curve.evaluate(-float(T))
            label = (float(T), ai)
            bnd_p, bnd_l = _leaf_boundary(model, graph, clip,
                                          boundary_resolution)
            leaves[label] = Leaf(label=label, graph=graph,
                                 base_point=base_point, T=float(T),
                                 clip_level=clip, inside_mask=inside(graph),
                                 boundary_plus=bnd_p, boundary_local=bnd_l)
            disk.append(base_point)
            if T <= 2.0 * tau + 1e-12:
                annulus.append(label)
    interp_tol = max([center.graph.interp_tolerance()]
                     + [lf.graph.interp_tolerance() for lf in leaves.values()])
    return FoliationAtlas(model=model, ladder=ladder, pair=pair, center=center,
                          leaves=leaves, disk_D=np.asarray(disk),
                          annulus_labels=annulus, tau=tau, epsilon=epsilon,
                          interp_tolerance=interp_tol)


def check_disjoint(atlas, pair_count=100, rng=None, refine=9):
    """Pairwise leaf separation over random distinct labels.

    Leaves are graphs over a common plus domain, so they intersect iff their
    graph values meet at a common base point; the separation floor accounts
    for excursions between grid nodes through the measured graph Lipschitz
    constants.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    labels = list(atlas.leaves.keys())
    model = atlas.model
    report = ConvergenceReport("disjoint")
    if len(labels) < 2:
        return report

    def lipschitz(graph):
        worst = 0.0
        for axis in range(len(graph.axes)):
            v = np.moveaxis(graph.values, axis, 0)
            dx = np.diff(graph.axes[axis])
            dv = np.linalg.norm(np.diff(v, axis=0), axis=-1)
            worst = max(worst, float(np.max(dv / dx.reshape(-1, *([1] * (dv.ndim - 1))))))
        return worst

    axes = atlas.center.graph.axes
    fine = tuple(np.linspace(ax[0], ax[-1], refine * (len(ax) - 1) + 1)
                 for ax in axes)
    mesh = np.meshgrid(*fine, indexing="ij")
    probes = np.stack([m.ravel() for m in mesh], axis=-1)
    spacing = max(float(np.max(np.diff(f))) for f in fine)

    for _ in range(pair_count):
        la, lb = rng.choice(len(labels), size=2, replace=False)
        a, b = labels[la], labels[lb]
        ga, gb = atlas.leaves[a].graph, atlas.leaves[b].graph
        vals_a = ga.evaluate(probes)
        vals_b = gb.evaluate(probes)
        separation = float(np.min(np.linalg.norm(vals_a - vals_b, axis=-1)))
        floor = (lipschitz(ga) + lipschitz(gb)) * spacing
        ok = separation > floor
        report.add(check="disjoint", T=float(a[0]), z_minus_label=str(a),
                   z_plus_label=str(b), direction_label="",
                   gap=separation, bound=floor, budget=0.0, ok=ok)
        if not ok:
            raise DisjointnessViolation(
                f"leaves {a} and {b} separated by {separation:.3e} "
                f"<= floor {floor:.3e}")
    return report


def induced_flow(atlas, label, z_local, t, rtol=1e-10, atol=1e-12,
                 domain_slack=1e-9):
    """The leaf-preserving semi-flow: conjugate the center-leaf flow by the
    graph maps.  ``t = inf`` returns the leaf's base point exactly."""
    model = atlas.model
    leaf = atlas.leaf(label)
    z_local = np.asarray(z_local, dtype=float)
    z_plus = z_local[model.k:]
    for i, ax in enumerate(leaf.graph.axes):
        if z_plus[i] < ax[0] - domain_slack or z_plus[i] > ax[-1] + domain_slack:
            raise OutsideLeafDomain(
                f"plus coordinate {z_plus} outside the leaf graph domain")
    if t == math.inf:
        return leaf.base_point.copy()
    if t < 0:
        raise ValueError("the induced flow is a semi-flow: t >= 0")
    center_point = atlas.center.point_at(z_plus, model)
    traj = integrate_forward(model.problem, model.to_ambient(center_point),
                             float(t), rtol=rtol, atol=atol)
    y_t = model.to_local(traj.terminal)[model.k:]
    return leaf.point_at(y_t, model)


def retract_audit(atlas, t_samples=(0.5, 1.5, 4.0), fd_steps=(1e-4, 1e-5),
                  fix_tol=1e-10, rtol=1e-11, atol=1e-13):
    """Three checks behind the strong-deformation-retract property.

    (i) the time-infinity map sends every sampled leaf point to the leaf's
    base point on the disk D; (ii) the induced flow fixes D pointwise;
    (iii) the objective strictly decreases along the induced flow at every
    leaf-boundary sample (inward pointing), quantified by finite-difference
    quotients at two step sizes.  Structurally (i) holds by construction;
    the audit re-evaluates it numerically.  Check (ii) presumes coordinates
    with a flat unstable manifold; the measured flatness residual widens the
    tolerance and is reported.
    """
    model = atlas.model
    report = ConvergenceReport("retract")

    flatness = 0.0
    for label in atlas.leaves:
        base = atlas.leaf(label).base_point
        flatness = max(flatness, float(np.linalg.norm(base[model.k:])))
    report.extras["unstable_flatness_residual"] = flatness
    fix_budget = fix_tol + 10.0 * flatness + 10.0 * atlas.interp_tolerance

    # (i) theta_inf maps leaf samples onto the base point
    for label in atlas.all_labels():
        leaf = atlas.leaf(label)
        end = induced_flow(atlas, label, leaf.point_at(
            np.zeros(model.n - model.k), model), math.inf)
        gap = float(np.linalg.norm(end - leaf.base_point))
        report.add(check="retract_theta_inf", T=leaf.T or 0.0,
                   z_minus_label=str(label), z_plus_label="", direction_label="",
                   gap=gap, bound=0.0, budget=fix_tol, ok=gap <= fix_tol)

    # (ii) theta_t fixes the disk D pointwise
    for label in atlas.all_labels():
        leaf = atlas.leaf(label)
        for t in t_samples:
            moved = induced_flow(atlas, label, leaf.base_point, t,
                                 rtol=rtol, atol=atol)
            gap = float(np.linalg.norm(moved - leaf.base_point))
            report.add(check="retract_fix_D", T=leaf.T or 0.0,
                       z_minus_label=str(label), z_plus_label="",
                       direction_label=f"t={t:g}", gap=gap, bound=0.0,
                       budget=fix_budget, ok=gap <= fix_budget)

    # (iii) inward pointing along every leaf boundary
    mu_audit = math.inf
    for label in atlas.all_labels():
        leaf = atlas.leaf(label)
        for z_plus in leaf.boundary_plus:
            z = leaf.point_at(z_plus, model)
            f0 = model.f_local(z)
            quotients = []
            for h in fd_steps:
                moved = induced_flow(atlas, label, z, h, rtol=rtol, atol=atol)
                quotients.append((model.f_local(moved) - f0) / h)
            worst = max(quotients)
            mu_audit = min(mu_audit, -worst)
            report.add(check="retract_inward", T=leaf.T or 0.0,
                       z_minus_label=str(label), z_plus_label=_label(z_plus),
                       direction_label="", gap=worst, bound=0.0, budget=0.0,
                       ok=worst < 0.0)
    report.extras["mu_audit"] = mu_audit
    if not report.all_ok:
        bad = [r for r in report.rows if not r.ok][0]
        raise RetractViolation(f"{bad.check} failed at {bad.z_minus_label} "
                               f"{bad.z_plus_label}: gap {bad.gap:.3e}")
    return report


def leaf_invariance(atlas, sigmas=(1.0,), rtol=1e-11, atol=1e-13):
    """Forward-flow compatibility: points of the (T, alpha) leaf land on the
    (T - sigma, alpha) leaf, measured through that leaf's graph."""
    model = atlas.model
    report = ConvergenceReport("invariance")
    tol = 10.0 * atlas.interp_tolerance + 1e-9
    for (T, ai), leaf in atlas.leaves.items():
        for sigma in sigmas:
            target_label = (float(T - sigma), ai)
            if target_label not in atlas.leaves:
                continue
            target = atlas.leaves[target_label]
            base, pts = leaf.inside_points(model)
            for z_plus, p in zip(base, pts):
                traj = integrate_forward(model.problem, model.to_ambient(p),
                                         float(sigma), rtol=rtol, atol=atol)
                moved = model.to_local(traj.terminal)
                try:
                    expected = target.graph.evaluate(moved[model.k:])
                except Exception:
                    continue  # flowed outside the sampled target domain
                gap = float(np.linalg.norm(moved[: model.k] - expected))
                report.add(check="invariance", T=float(T),
                           z_minus_label=str((T, ai)),
                           z_plus_label=_label(z_plus),
                           direction_label=f"sigma={sigma:g}",
                           gap=gap, bound=tol, budget=0.0, ok=gap <= tol)
    return report


def contraction_to_center(atlas, refine=8):
    """One-sided distance of each leaf to the ascending disk against
    exp(-T lambda / 8)."""
    model = atlas.model
    ladder = atlas.ladder
    report = ConvergenceReport("center_distance")
    axes = atlas.center.graph.axes
    fine = tuple(np.linspace(ax[0], ax[-1], refine * (len(ax) - 1) + 1)
                 for ax in axes)
    mesh = np.meshgrid(*fine, indexing="ij")
    probes = np.stack([m.ravel() for m in mesh], axis=-1)
    center_vals = atlas.center.graph.evaluate(probes)
    center_pts = np.zeros((probes.shape[0], model.n))
    center_pts[:, : model.k] = center_vals
    center_pts[:, model.k:] = probes
    budget = RESIDUAL_TO_ERROR * float(np.max(
        [np.max(lf.graph.residuals) for lf in atlas.leaves.values()]
        + [np.max(atlas.center.graph.residuals)])) + atlas.interp_tolerance
    for label, leaf in atlas.leaves.items():
        _, pts = leaf.inside_points(model)
        sup = 0.0
        for p in pts:
            sup = max(sup, float(np.min(np.linalg.norm(center_pts - p, axis=1))))
        bound = math.exp(-leaf.T * ladder.lambda_ / 8.0)
        report.add(check="center_distance", T=leaf.T, z_minus_label=str(label),
                   z_plus_label="", direction_label="", gap=sup, bound=bound,
                   budget=budget, ok=sup <= bound + budget)
    return report
