"""Contraction operators on weighted curve spaces and their graph maps.

Three integral operators are provided, all built from the same exponential
convolutions and all using the Cauchy problem in forward time only:

* ``PhiOperator`` on backward curves: its fixed point is the flow line
  emanating from the critical point with prescribed unstable projection;
  reading off the plus part at time zero yields the unstable graph map.
* ``PsiOperator`` on forward curves: fixed points are the flow lines
  converging to the critical point with prescribed stable projection; they
  yield the stable graph map.
* ``PsiTOperator`` on finite horizons: fixed points solve the mixed boundary
  problem (plus part prescribed at time zero, minus part at time T); they
  yield the time-T graph family converging to the stable graph.

Picard iteration converges with factor at most 1/2 whenever the rate ladder
invariants hold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .curves import BACKWARD, FORWARD_FINITE, FORWARD_INFINITE, Curve, PanelGrid
from .errors import (
    EndpointViolation,
    HorizonMismatch,
    NoConvergence,
    NormBudgetExceeded,
    OutOfTrustRegion,
    OutsideSampledDomain,
    StepTooLarge,
)
from .kernels import ExpConvolver

NORM_SLACK = 1e-9
STALL_FACTOR = 0.9
STALL_STEPS = 10


def default_horizon(ladder):
    """Truncation horizon for the infinite-time curve spaces."""
    return max(3.0 * ladder.T0, 40.0 / ladder.lambda_)


def truncation_tail(ladder, t_max):
    """Analytic bound on the discarded integral tail beyond ``t_max``."""
    lam, mu = ladder.lambda_, ladder.mu
    return ladder.kappa_rho * ladder.rho * np.exp(-t_max * lam) / (lam + mu)


class SolverCache:
    """Grids and convolvers keyed by horizon, shared across solves."""

    def __init__(self, model):
        self.model = model
        self._grids = {}
        self._convs = {}

    def grid(self, t0, t1):
        key = (round(float(t0), 12), round(float(t1), 12))
        if key not in self._grids:
            max_rate = float(np.max(np.abs(self.model.eigenvalues)))
            self._grids[key] = PanelGrid(t0, t1, max_rate)
        return self._grids[key]

    def convolver(self, grid):
        key = (round(grid.t0, 12), round(grid.t1, 12), grid.size)
        if key not in self._convs:
            self._convs[key] = ExpConvolver(grid, self.model.eigenvalues)
        return self._convs[key]


@dataclass
class FixedPointResult:
    curve: Curve
    residual: float
    iterations: int
    tail: float

    @property
    def reported_residual(self):
        return self.residual + self.tail


class _OperatorBase:
    kind = None

    def __init__(self, model, ladder, grid, conv):
        self.model = model
        self.ladder = ladder
        self.grid = grid
        self.conv = conv
        self.k = model.k
        self.n = model.n
        self.eigs = model.eigenvalues

    def _nonlinearity(self, curve):
        # curves must stay inside the trust ball where h is controlled
        worst = curve.max_norm()
        if worst > self.model.problem.trust_radius * (1 + NORM_SLACK):
            raise OutOfTrustRegion(
                f"curve reaches |xi| = {worst:.3e} beyond the trust radius")
        return self.model.h(curve.values)

    def _check_budget(self, curve, reference=None):
        gap = curve.exp_norm() if reference is None else curve.exp_distance(reference)
        if gap > self.ladder.rho * (1 + NORM_SLACK):
            raise NormBudgetExceeded(
                f"curve left the rho ball: {gap:.3e} > {self.ladder.rho:.3e}")

    def initial_curve(self):
        raise NotImplementedError

    def apply(self, curve):
        raise NotImplementedError


class PhiOperator(_OperatorBase):
    """Backward-horizon operator with prescribed unstable projection."""

    kind = BACKWARD

    def __init__(self, model, ladder, z_minus, grid, conv):
        super().__init__(model, ladder, grid, conv)
        if abs(grid.t1) > 1e-12:
            raise HorizonMismatch("backward grids must end at t = 0")
        self.z_minus = np.asarray(z_minus, dtype=float)
        self.tail = truncation_tail(ladder, -grid.t0)
        t = grid.nodes
        self._boundary = np.zeros((grid.size, self.n))
        for j in range(self.k):
            # exp(-s * lam_j) with s <= 0 and lam_j < 0: bounded by one
            self._boundary[:, j] = np.exp(-t * self.eigs[j]) * self.z_minus[j]

    def initial_curve(self):
        return Curve(self.grid, self._boundary.copy(), self.ladder.lambda_, self.kind)

    def apply(self, curve):
        y = self._nonlinearity(curve)
        out = self._boundary.copy()
        for j in range(self.n):
            if j < self.k:
                out[:, j] -= self.conv.backward(j, y[:, j])
            else:
                out[:, j] += self.conv.forward(j, y[:, j])
        result = curve.with_values(out)
        self._check_budget(result)
        return result


class PsiOperator(_OperatorBase):
    """Forward-horizon operator with prescribed stable projection."""

    kind = FORWARD_INFINITE

    def __init__(self, model, ladder, z_plus, grid, conv):
        super().__init__(model, ladder, grid, conv)
        if abs(grid.t0) > 1e-12:
            raise HorizonMismatch("forward grids must start at t = 0")
        self.z_plus = np.asarray(z_plus, dtype=float)
        self.tail = truncation_tail(ladder, grid.t1)
        t = grid.nodes
        self._boundary = np.zeros((grid.size, self.n))
        for j in range(self.k, self.n):
            self._boundary[:, j] = np.exp(-t * self.eigs[j]) * self.z_plus[j - self.k]

    def initial_curve(self):
        return Curve(self.grid, self._boundary.copy(), self.ladder.lambda_, self.kind)

    def apply(self, curve):
        y = self._nonlinearity(curve)
        out = self._boundary.copy()
        for j in range(self.n):
            if j < self.k:
                out[:, j] -= self.conv.backward(j, y[:, j])
            else:
                out[:, j] += self.conv.forward(j, y[:, j])
        result = curve.with_values(out)
        self._check_budget(result)
        return result


class PsiTOperator(_OperatorBase):
    """Mixed-boundary operator on [0, T].

    Boundary exactness is structural: the forward convolution vanishes at
    t = 0 and the backward one at t = T, so the plus part of any image curve
    equals ``z_plus`` at 0 and the minus part equals ``z_minus`` at T to
    rounding error.
    """

    kind = FORWARD_FINITE

    def __init__(self, model, ladder, T, z_minus, z_plus, reference, grid, conv):
        super().__init__(model, ladder, grid, conv)
        if abs(grid.t0) > 1e-12 or abs(grid.t1 - T) > 1e-9:
            raise HorizonMismatch(f"grid horizon [{grid.t0}, {grid.t1}] does not match T = {T}")
        self.T = float(T)
        self.z_minus = np.asarray(z_minus, dtype=float)
        self.z_plus = np.asarray(z_plus, dtype=float)
        if np.linalg.norm(self.z_plus) > ladder.R * (1 + NORM_SLACK):
            raise NormBudgetExceeded("|z_plus| exceeds the graph domain radius rho/2")
        self.reference = reference
        self.tail = 0.0
        t = grid.nodes
        self._boundary = np.zeros((grid.size, self.n))
        for j in range(self.k):
            # exp(-(t - T) lam_j) with t <= T and lam_j < 0: bounded by one
            self._boundary[:, j] = np.exp(-(t - self.T) * self.eigs[j]) * self.z_minus[j]
        for j in range(self.k, self.n):
            self._boundary[:, j] += np.exp(-t * self.eigs[j]) * self.z_plus[j - self.k]

    def initial_curve(self):
        return Curve(self.grid, self.reference.values + self._psi_free(),
                     self.ladder.lambda_, self.kind)

    def _psi_free(self):
        t = self.grid.nodes
        free = np.zeros((self.grid.size, self.n))
        for j in range(self.k, self.n):
            free[:, j] = np.exp(-t * self.eigs[j]) * self.z_plus[j - self.k]
        return free

    def apply(self, curve):
        y = self._nonlinearity(curve)
        out = self._boundary.copy()
        for j in range(self.n):
            if j < self.k:
                out[:, j] -= self.conv.backward(j, y[:, j])
            else:
                out[:, j] += self.conv.forward(j, y[:, j])
        result = curve.with_values(out)
        self._check_budget(result, self.reference)
        return result


def fixed_point(operator, initial=None, tol=1e-10, max_iter=200):
    """Picard iteration in the exp norm.

    Raises :class:`NoConvergence` when the residual stalls (fails to shrink
    by the factor 0.9 for 10 consecutive steps) or the iteration budget runs
    out; either signals a ladder violation or an over-coarse grid.
    """
    current = operator.initial_curve() if initial is None else initial
    stall = 0
    prev_res = np.inf
    for it in range(1, max_iter + 1):
        nxt = operator.apply(current)
        res = nxt.exp_distance(current)
        if res <= tol:
            return FixedPointResult(nxt, res, it, operator.tail)
        stall = stall + 1 if res > STALL_FACTOR * prev_res else 0
        if stall >= STALL_STEPS:
            raise NoConvergence(
                f"residual stalled at {res:.3e} after {it} iterations")
        prev_res = res
        current = nxt
    raise NoConvergence(f"no convergence in {max_iter} iterations (residual {res:.3e})")


# -- spec-level single-application entry points ------------------------------

def apply_Phi(model, ladder, z_minus, eta, cache=None):
    cache = cache or SolverCache(model)
    grid = eta.grid
    op = PhiOperator(model, ladder, z_minus, grid, cache.convolver(grid))
    return op.apply(eta)


def apply_Psi_stable(model, ladder, z_plus, xi, cache=None):
    cache = cache or SolverCache(model)
    grid = xi.grid
    op = PsiOperator(model, ladder, z_plus, grid, cache.convolver(grid))
    return op.apply(xi)


def apply_Psi_T(model, ladder, T, z_minus, z_plus, xi, reference, cache=None):
    cache = cache or SolverCache(model)
    grid = xi.grid
    op = PsiTOperator(model, ladder, T, z_minus, z_plus, reference, grid,
                      cache.convolver(grid))
    return op.apply(xi)


# -- orbit and graph solvers --------------------------------------------------

def backward_orbit(model, ladder, z_minus, t_max=None, tol=1e-10, cache=None):
    """Fixed point of the backward operator: the orbit emanating from the
    critical point whose minus projection at time zero is ``z_minus``."""
    cache = cache or SolverCache(model)
    t_max = default_horizon(ladder) if t_max is None else float(t_max)
    grid = cache.grid(-t_max, 0.0)
    op = PhiOperator(model, ladder, z_minus, grid, cache.convolver(grid))
    return fixed_point(op, tol=tol)


def solve_stable(model, ladder, z_plus, t_max=None, tol=1e-10, cache=None):
    cache = cache or SolverCache(model)
    t_max = default_horizon(ladder) if t_max is None else float(t_max)
    grid = cache.grid(0.0, t_max)
    op = PsiOperator(model, ladder, z_plus, grid, cache.convolver(grid))
    return fixed_point(op, tol=tol)


def reference_curve(orbit_curve, grid, rate):
    """The orbit shifted to end at time T on a finite forward grid."""
    T = grid.t1
    vals = orbit_curve.evaluate(grid.nodes - T)
    return Curve(grid, vals, rate, FORWARD_FINITE)


def solve_mixed(model, ladder, T, z_minus, z_plus, orbit, tol=1e-10, cache=None,
                enforce_endpoint=True):
    """Fixed point of the mixed-boundary operator for one (T, z-, z+).

    ``orbit`` is the backward-orbit result for ``z_minus``; its horizon must
    cover [-T, 0].  Returns ``(FixedPointResult, endpoint_gap)``.
    """
    cache = cache or SolverCache(model)
    if T < ladder.T0 - 1e-12 and enforce_endpoint:
        raise HorizonMismatch(f"T = {T} below T0 = {ladder.T0}")
    if orbit.curve.grid.t0 > -T + 1e-12:
        raise HorizonMismatch("backward orbit horizon does not cover [-T, 0]")
    grid = cache.grid(0.0, T)
    ref = reference_curve(orbit.curve, grid, ladder.lambda_)
    op = PsiTOperator(model, ladder, T, z_minus, z_plus, ref, grid,
                      cache.convolver(grid))
    result = fixed_point(op, tol=tol)
    end = result.curve.values[-1]
    target = model.embed_minus(z_minus)
    gap = float(np.linalg.norm(end - target))
    if enforce_endpoint and gap > ladder.varkappa * (1 + NORM_SLACK):
        raise EndpointViolation(
            f"|xi(T) - z_minus| = {gap:.3e} exceeds varkappa = {ladder.varkappa:.3e}")
    return result, gap


# -- sampled graphs -----------------------------------------------------------

@dataclass
class GraphSample:
    """A sampled graph over a tensor grid in one spectral subspace.

    ``axes`` are 1D arrays of subspace coordinates; ``values`` maps the grid
    into the complementary subspace (shape ``grid_shape + (codim,)``).
    ``domain_sign`` tells which subspace the base grid lives in.
    """

    kind: str
    domain_sign: str
    axes: tuple
    values: np.ndarray
    residuals: np.ndarray
    iterations: np.ndarray
    rate: float
    T: float | None = None
    z_minus: np.ndarray | None = None
    endpoint_gaps: np.ndarray | None = None
    _interp: object = field(default=None, repr=False, compare=False)

    @property
    def grid_shape(self):
        return tuple(len(ax) for ax in self.axes)

    @property
    def codim(self):
        return self.values.shape[-1]

    def interpolator(self):
        if self._interp is None:
            self._interp = RegularGridInterpolator(
                self.axes, self.values, method="linear", bounds_error=True)
        return self._interp

    def evaluate(self, z):
        """Multilinear interpolation of the graph at subspace point(s) z."""
        z = np.asarray(z, dtype=float)
        single = z.ndim == 1
        try:
            out = self.interpolator()(np.atleast_2d(z))
        except ValueError as exc:
            raise OutsideSampledDomain(str(exc)) from exc
        return out[0] if single else out

    def grid_points(self):
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def values_flat(self):
        return self.values.reshape(-1, self.codim)

    def _assemble_local(self, base, vals, model):
        pts = np.zeros((base.shape[0], model.n))
        if self.domain_sign == "minus":
            pts[:, : model.k] = base
            pts[:, model.k:] = vals
        else:
            pts[:, : model.k] = vals
            pts[:, model.k:] = base
        return pts

    def all_points_local(self, model):
        base = self.grid_points()
        return base, self._assemble_local(base, self.values_flat(), model)

    def boundary_points_local(self, model):
        base = self.grid_points()
        vals = self.values_flat()
        on_bd = np.zeros(base.shape[0], bool)
        for i, ax in enumerate(self.axes):
            on_bd |= np.isclose(base[:, i], ax[0]) | np.isclose(base[:, i], ax[-1])
        return self._assemble_local(base[on_bd], vals[on_bd], model)

    def interp_tolerance(self):
        """Second-difference estimate of the multilinear interpolation error."""
        worst = 0.0
        for axis in range(len(self.axes)):
            v = np.moveaxis(self.values, axis, 0)
            if v.shape[0] < 3:
                continue
            second = v[2:] - 2.0 * v[1:-1] + v[:-2]
            worst = max(worst, 0.125 * float(np.max(np.abs(second))))
        return worst


def default_axes(radius, dim, count=13):
    """Tensor axes for the cube inscribed in the radius ball."""
    half = radius / np.sqrt(dim)
    return tuple(np.linspace(-half, half, count) for _ in range(dim))


def graph_F_inf(model, ladder, base_axes=None, tol=1e-10, cache=None):
    """Unstable graph: plus part at time 0 of the backward fixed points."""
    cache = cache or SolverCache(model)
    axes = base_axes or default_axes(ladder.R, model.k)
    shape = tuple(len(ax) for ax in axes)
    codim = model.n - model.k
    values = np.zeros(shape + (codim,))
    residuals = np.zeros(shape)
    iters = np.zeros(shape, dtype=int)
    mesh = np.meshgrid(*axes, indexing="ij")
    base = np.stack([m.ravel() for m in mesh], axis=-1)
    for idx, z_minus in enumerate(base):
        res = backward_orbit(model, ladder, z_minus, tol=tol, cache=cache)
        multi = np.unravel_index(idx, shape)
        values[multi] = res.curve.values[-1, model.k:]
        residuals[multi] = res.reported_residual
        iters[multi] = res.iterations
    return GraphSample("F_inf", "minus", tuple(axes), values, residuals, iters,
                       rate=ladder.lambda_)


def graph_G_inf(model, ladder, base_axes=None, tol=1e-10, cache=None):
    """Stable graph: minus part at time 0 of the forward fixed points."""
    cache = cache or SolverCache(model)
    axes = base_axes or default_axes(ladder.R, model.n - model.k)
    shape = tuple(len(ax) for ax in axes)
    values = np.zeros(shape + (model.k,))
    residuals = np.zeros(shape)
    iters = np.zeros(shape, dtype=int)
    mesh = np.meshgrid(*axes, indexing="ij")
    base = np.stack([m.ravel() for m in mesh], axis=-1)
    for idx, z_plus in enumerate(base):
        res = solve_stable(model, ladder, z_plus, tol=tol, cache=cache)
        multi = np.unravel_index(idx, shape)
        values[multi] = res.curve.values[0, : model.k]
        residuals[multi] = res.reported_residual
        iters[multi] = res.iterations
    return GraphSample("G_inf", "plus", tuple(axes), values, residuals, iters,
                       rate=ladder.lambda_)


def graph_G_T(model, ladder, T, z_minus, base_axes=None, orbit=None, tol=1e-10,
              cache=None):
    """Time-T graph over the plus ball for one sphere point ``z_minus``."""
    cache = cache or SolverCache(model)
    if orbit is None:
        orbit = backward_orbit(model, ladder, z_minus,
                               t_max=max(default_horizon(ladder), T), tol=tol,
                               cache=cache)
    axes = base_axes or default_axes(ladder.R, model.n - model.k)
    shape = tuple(len(ax) for ax in axes)
    values = np.zeros(shape + (model.k,))
    residuals = np.zeros(shape)
    iters = np.zeros(shape, dtype=int)
    gaps = np.zeros(shape)
    mesh = np.meshgrid(*axes, indexing="ij")
    base = np.stack([m.ravel() for m in mesh], axis=-1)
    for idx, z_plus in enumerate(base):
        res, gap = solve_mixed(model, ladder, T, z_minus, z_plus, orbit,
                               tol=tol, cache=cache)
        multi = np.unravel_index(idx, shape)
        values[multi] = res.curve.values[0, : model.k]
        residuals[multi] = res.reported_residual
        iters[multi] = res.iterations
        gaps[multi] = gap
    return GraphSample("G_T", "plus", tuple(axes), values, residuals, iters,
                       rate=ladder.lambda_, T=float(T),
                       z_minus=np.asarray(z_minus, dtype=float),
                       endpoint_gaps=gaps)


def graph_derivative(sample, point, direction, step):
    """Central-difference directional derivative of a sampled graph.

    Returns ``(derivative, error_estimate)``; the estimate is the Richardson
    defect between the full-step and half-step quotients (O(step^2)).
    """
    point = np.asarray(point, dtype=float)
    direction = np.asarray(direction, dtype=float)
    for delta in (step, -step):
        probe = point + delta * direction
        for i, ax in enumerate(sample.axes):
            if probe[i] < ax[0] - 1e-15 or probe[i] > ax[-1] + 1e-15:
                raise StepTooLarge(
                    f"stencil point {probe} leaves the sampled domain on axis {i}")

    def quotient(h):
        hi = sample.evaluate(point + h * direction)
        lo = sample.evaluate(point - h * direction)
        return (hi - lo) / (2.0 * h)

    full = quotient(step)
    half = quotient(0.5 * step)
    err = float(np.linalg.norm(full - half)) / 3.0
    return half, err


def _linearized_fixed_point(model, ladder, grid, conv, dh_nodes, v_plus, tol):
    """Solve the linearized integral equation for one direction ``v``.

    Shares the convolution machinery; the inhomogeneity is exp(-tA)v with
    v in the plus subspace, and there is no minus boundary term (the time-T
    and stable linearizations agree in form).
    """
    t = grid.nodes
    n, k = model.n, model.k
    boundary = np.zeros((grid.size, n))
    for j in range(k, n):
        boundary[:, j] = np.exp(-t * model.eigenvalues[j]) * v_plus[j - k]
    X = boundary.copy()
    for it in range(200):
        y = np.einsum("mij,mj->mi", dh_nodes, X)
        nxt = boundary.copy()
        for j in range(n):
            if j < k:
                nxt[:, j] -= conv.backward(j, y[:, j])
            else:
                nxt[:, j] += conv.forward(j, y[:, j])
        res = float(np.max(np.exp(ladder.lambda_ * t) * np.linalg.norm(nxt - X, axis=1)))
        X = nxt
        if res <= tol:
            return X
    raise NoConvergence("linearized derivative iteration did not converge")


def graph_derivative_linearized(model, ladder, fp_result, v_plus, tol=1e-11,
                                cache=None):
    """Directional derivative of a graph map via the linearized equation.

    ``fp_result`` is the fixed point whose graph value is being
    differentiated (time-T or stable); returns the minus-part derivative at
    time zero, i.e. the derivative of the graph map itself.
    """
    cache = cache or SolverCache(model)
    curve = fp_result.curve
    grid = curve.grid
    conv = cache.convolver(grid)
    dh_nodes = np.stack([model.dh(xi) for xi in curve.values])
    X = _linearized_fixed_point(model, ladder, grid, conv, dh_nodes,
                                np.asarray(v_plus, dtype=float), tol)
    return X[0, : model.k]
