import numpy as np
import pytest

from gradleaf import lyapunov_perron as lp
from gradleaf.curves import FORWARD_FINITE, Curve
from gradleaf.errors import NormBudgetExceeded, StepTooLarge
from gradleaf.flow import integrate_forward
from gradleaf.oracle import stable_point_oracle


def random_zt_curves(op, rng, count, scale=0.45):
    """Random elements of the finite-horizon ball around the reference."""
    grid = op.grid
    lam = op.ladder.lambda_
    out = []
    for _ in range(count):
        u = rng.standard_normal(op.n)
        u /= np.linalg.norm(u)
        coeffs = rng.standard_normal(4)
        poly = np.polyval(coeffs, grid.nodes / grid.t1)
        poly /= max(1.0, np.max(np.abs(poly)))
        bump = (scale * op.ladder.rho * np.exp(-lam * grid.nodes) * poly)[:, None] * u
        out.append(op.reference.with_values(op.reference.values + bump))
    return out


def mixed_operator(setup, T, z_minus, z_plus):
    cache = setup.cache
    grid = cache.grid(0.0, T)
    orbit = setup.orbit(z_minus, t_need=T)
    ref = lp.reference_curve(orbit.curve, grid, setup.ladder.lambda_)
    return lp.PsiTOperator(setup.model, setup.ladder, T, z_minus, z_plus, ref,
                           grid, cache.convolver(grid))


# -- operator closed forms on the quadratic ----------------------------------

def test_phi_quadratic_closed_form(p1):
    z = np.array([0.1])
    res = lp.backward_orbit(p1.model, p1.ladder, z, cache=p1.cache)
    t = res.curve.grid.nodes
    assert np.allclose(res.curve.values[:, 0], 0.1 * np.exp(t), atol=1e-14)
    assert np.allclose(res.curve.values[:, 1], 0.0)


def test_phi_zero_input(p1):
    res = lp.backward_orbit(p1.model, p1.ladder, np.array([0.0]), cache=p1.cache)
    assert np.allclose(res.curve.values, 0.0)


def test_psi_quadratic_closed_form(p1):
    z = np.array([0.12])
    res = lp.solve_stable(p1.model, p1.ladder, z, cache=p1.cache)
    t = res.curve.grid.nodes
    assert np.allclose(res.curve.values[:, 1], 0.12 * np.exp(-2 * t), atol=1e-14)
    assert np.allclose(res.curve.values[:, 0], 0.0)


def test_psi_T_quadratic_closed_form(p1):
    T = p1.ladder.T0
    zm, zp = np.array([0.08]), np.array([0.1])
    orbit = p1.orbit(zm, t_need=T)
    res, gap = lp.solve_mixed(p1.model, p1.ladder, T, zm, zp, orbit,
                              cache=p1.cache)
    t = res.curve.grid.nodes
    assert np.allclose(res.curve.values[:, 0], 0.08 * np.exp(t - T), atol=1e-13)
    assert np.allclose(res.curve.values[:, 1], 0.1 * np.exp(-2 * t), atol=1e-13)
    # endpoint gap in closed form: |exp(-T A+) z+|
    assert gap == pytest.approx(0.1 * np.exp(-2 * T), rel=1e-8, abs=1e-15)


def test_psi_T_zero_zplus_is_reference_orbit(p1, p2):
    for setup in (p1, p2):
        T = setup.ladder.T0
        zm = setup.sphere_point()
        orbit = setup.orbit(zm, t_need=T)
        res, _ = lp.solve_mixed(setup.model, setup.ladder, T, zm,
                                np.zeros(setup.model.n - setup.model.k),
                                orbit, cache=setup.cache)
        ref = lp.reference_curve(orbit.curve, res.curve.grid,
                                 setup.ladder.lambda_)
        assert res.curve.sup_distance(ref) < 5e-10


# -- boundary exactness and membership ----------------------------------------

def test_boundary_exactness(p2):
    T = p2.ladder.T0 + 0.7
    zm = p2.sphere_point()
    zp = np.array([0.4 * p2.ladder.R])
    orbit = p2.orbit(zm, t_need=T)
    res, _ = lp.solve_mixed(p2.model, p2.ladder, T, zm, zp, orbit,
                            cache=p2.cache)
    k = p2.model.k
    assert abs(res.curve.values[0, k:] - zp) .max() <= 1e-12
    assert abs(res.curve.values[-1, :k] - zm).max() <= 1e-12


def test_membership_in_ball(p2):
    T = p2.ladder.T0
    zm = p2.sphere_point()
    zp = np.array([0.5 * p2.ladder.R])
    orbit = p2.orbit(zm, t_need=T)
    res, _ = lp.solve_mixed(p2.model, p2.ladder, T, zm, zp, orbit,
                            cache=p2.cache)
    ref = lp.reference_curve(orbit.curve, res.curve.grid, p2.ladder.lambda_)
    assert res.curve.exp_distance(ref) <= p2.ladder.rho


def test_norm_budget_guard(p2):
    T = p2.ladder.T0
    zm = p2.sphere_point()
    op = mixed_operator(p2, T, zm, np.array([0.3 * p2.ladder.R]))
    bad = op.reference.with_values(
        op.reference.values + 2.5 * p2.ladder.rho * np.ones((op.grid.size, 2)))
    with pytest.raises(NormBudgetExceeded):
        op.apply(bad)


# -- contraction and Picard behavior ------------------------------------------

def test_contraction_factor_quartic(p2):
    rng = np.random.default_rng(3)
    T = p2.ladder.T0 + 1.0
    zm = p2.sphere_point()
    op = mixed_operator(p2, T, zm, np.array([0.3 * p2.ladder.R]))
    worst = 0.0
    curves = random_zt_curves(op, rng, 12)
    for a, b in zip(curves[::2], curves[1::2]):
        num = op.apply(a).exp_distance(op.apply(b))
        den = a.exp_distance(b)
        if den > 1e-9:
            worst = max(worst, num / den)
    assert worst <= 0.5 + 0.05
    # the a priori factor from the ladder is itself below 1/2
    assert p2.ladder.contraction_bound() <= 0.5


def test_fixed_point_quadratic_two_iterations(p1):
    T = p1.ladder.T0
    zm, zp = np.array([0.08]), np.array([0.1])
    op = mixed_operator(p1, T, zm, zp)
    zero = Curve(op.grid, np.zeros((op.grid.size, 2)), p1.ladder.lambda_,
                 FORWARD_FINITE)
    res = lp.fixed_point(op, initial=zero, tol=1e-14)
    assert res.iterations <= 2
    assert res.residual <= 1e-14


def test_fixed_point_exact_initial_one_check(p2):
    T = p2.ladder.T0
    zm = p2.sphere_point()
    zp = np.array([0.25 * p2.ladder.R])
    op = mixed_operator(p2, T, zm, zp)
    first = lp.fixed_point(op, tol=1e-12)
    again = lp.fixed_point(op, initial=first.curve, tol=1e-10)
    # no Picard updates beyond the convergence check itself
    assert again.iterations == 1


def test_fixed_point_iteration_budget(p2):
    T = p2.ladder.T0
    zm = p2.sphere_point()
    op = mixed_operator(p2, T, zm, np.array([0.4 * p2.ladder.R]))
    zero = Curve(op.grid, np.zeros((op.grid.size, 2)), p2.ladder.lambda_,
                 FORWARD_FINITE)
    res = lp.fixed_point(op, initial=zero, tol=1e-10)
    assert res.iterations <= int(np.ceil(np.log2(p2.ladder.rho / 1e-10))) + 5


def test_uniqueness_from_different_initials(p2):
    T = p2.ladder.T0
    zm = p2.sphere_point()
    zp = np.array([0.35 * p2.ladder.R])
    op = mixed_operator(p2, T, zm, zp)
    tol = 1e-11
    res_a = lp.fixed_point(op, tol=tol)
    zero = Curve(op.grid, np.zeros((op.grid.size, 2)), p2.ladder.lambda_,
                 FORWARD_FINITE)
    res_b = lp.fixed_point(op, initial=zero, tol=tol)
    assert res_a.curve.exp_distance(res_b.curve) <= 2 * tol


def test_fixed_point_solves_ode(p2):
    # interior-node residual of xi' + A xi - h(xi) at quadrature accuracy
    T = p2.ladder.T0
    zm = p2.sphere_point()
    zp = np.array([0.5 * p2.ladder.R])
    orbit = p2.orbit(zm, t_need=T)
    res, _ = lp.solve_mixed(p2.model, p2.ladder, T, zm, zp, orbit,
                            cache=p2.cache)
    xi = res.curve
    dv = xi.derivative_values()
    rhs = p2.model.h(xi.values) - xi.values * p2.model.eigenvalues
    assert np.max(np.linalg.norm(dv - rhs, axis=1)) < 1e-6


# -- graphs --------------------------------------------------------------------

def test_graphs_flat_on_quadratic(p1):
    assert np.max(np.abs(p1.graph_f.values)) <= 1e-10
    assert np.max(np.abs(p1.graph_g.values)) <= 1e-10


def test_graph_value_zero_at_origin(p2):
    assert np.allclose(p2.graph_f.evaluate(np.zeros(1)), 0.0, atol=1e-12)
    assert np.allclose(p2.graph_g.evaluate(np.zeros(1)), 0.0, atol=1e-12)


def test_graph_residuals_below_tolerance(p2):
    assert np.max(p2.graph_f.residuals) <= 1e-9
    assert np.max(p2.graph_g.residuals) <= 1e-9


def test_stable_graph_matches_oracle_shooting(curved):
    # non-flat stable manifold: graph values against bisection shooting
    y = curved.graph_g.axes[0][-2]
    res = stable_point_oracle(curved.model, curved.ladder, np.array([y]),
                              tol=1e-8)
    lp_val = curved.graph_g.evaluate(np.array([y]))[0]
    assert abs(res.solution[0] - lp_val) <= 1e-6
    # curvature against the asymptotic model w = 0.02 y^2
    assert lp_val == pytest.approx(0.02 * y * y, rel=0.05)


def test_graph_G_T_identity_at_zero(p2):
    T = p2.ladder.T0 + 0.5
    zm = p2.sphere_point()
    orbit = p2.orbit(zm, t_need=T)
    sample = lp.graph_G_T(p2.model, p2.ladder, T, zm, orbit=orbit,
                          cache=p2.cache)
    val = sample.evaluate(np.zeros(1))
    expected = orbit.curve.evaluate(-T)[: p2.model.k]
    assert np.allclose(val, expected, atol=1e-11)
    assert np.all(sample.endpoint_gaps <= p2.ladder.varkappa)


def test_graph_G_T_quadratic_flat(p1):
    T = p1.ladder.T0
    zm = p1.sphere_point()
    sample = lp.graph_G_T(p1.model, p1.ladder, T, zm, cache=p1.cache)
    expected = zm[0] * np.exp(-T)
    assert np.allclose(sample.values, expected, atol=1e-13)


def test_graph_point_forward_roundtrip(p2):
    # forward integration of a sampled graph point reaches the fiber over z-
    T = p2.ladder.T0
    zm = p2.sphere_point()
    orbit = p2.orbit(zm, t_need=T)
    sample = lp.graph_G_T(p2.model, p2.ladder, T, zm, orbit=orbit,
                          cache=p2.cache)
    zp = sample.axes[0][3]
    start = np.concatenate([sample.evaluate(np.array([zp])), [zp]])
    traj = integrate_forward(p2.problem, p2.model.to_ambient(start), T,
                             rtol=1e-12, atol=1e-15)
    end = p2.model.to_local(traj.terminal)
    assert abs(end[0] - zm[0]) <= 1e-6
    assert abs(end[1]) <= p2.ladder.varkappa


def test_stable_graph_decay_along_flow(p2):
    # integrated stable-graph points decay like rho * exp(-lambda t)
    lad = p2.ladder
    y = p2.graph_g.axes[0][-1]
    start = np.concatenate([p2.graph_g.evaluate(np.array([y])), [y]])
    traj = integrate_forward(p2.problem, p2.model.to_ambient(start),
                             3.0 * lad.T0, rtol=1e-12, atol=1e-15)
    for t in np.linspace(0.0, 3.0 * lad.T0, 12):
        x = p2.model.to_local(traj.at(t))
        assert np.linalg.norm(x) <= lad.rho * np.exp(-lad.lambda_ * t) + 1e-12


# -- derivatives ---------------------------------------------------------------

def test_graph_derivative_flat(p1):
    T = p1.ladder.T0
    sample = lp.graph_G_T(p1.model, p1.ladder, T, p1.sphere_point(),
                          cache=p1.cache)
    d, err = lp.graph_derivative(sample, np.zeros(1), np.ones(1),
                                 step=0.2 * p1.ladder.R)
    assert np.allclose(d, 0.0, atol=1e-12)
    assert err <= 1e-12


def test_unstable_graph_tangent_at_origin(p3):
    d, _ = lp.graph_derivative(p3.graph_f, np.zeros(1), np.ones(1),
                               step=0.3 * p3.ladder.R / np.sqrt(1))
    assert np.max(np.abs(d)) <= 1e-8


def test_graph_derivative_step_guard(p1):
    with pytest.raises(StepTooLarge):
        lp.graph_derivative(p1.graph_g, np.array([p1.graph_g.axes[0][-1]]),
                            np.ones(1), step=p1.ladder.R)


def test_linearized_derivative_matches_fd(curved):
    # re-solve central differences vs the linearized integral equation
    setup = curved
    zp = np.array([0.4 * setup.ladder.R])
    st_res = lp.solve_stable(setup.model, setup.ladder, zp, cache=setup.cache)
    v = np.ones(1)
    lin = lp.graph_derivative_linearized(setup.model, setup.ladder, st_res, v,
                                         cache=setup.cache)
    h = 0.05 * setup.ladder.R
    hi = lp.solve_stable(setup.model, setup.ladder, zp + h * v,
                         cache=setup.cache).curve.values[0, :1]
    lo = lp.solve_stable(setup.model, setup.ladder, zp - h * v,
                         cache=setup.cache).curve.values[0, :1]
    fd = (hi - lo) / (2 * h)
    # analytic slope of w = 0.02 y^2 is 0.04 y
    assert lin == pytest.approx(fd, abs=5e-8)
    assert lin[0] == pytest.approx(0.04 * zp[0], rel=0.05)


def test_fd_richardson_consistency(curved):
    sample = curved.graph_g
    point = np.zeros(1)
    step = 0.4 * curved.ladder.R
    d_full, err = lp.graph_derivative(sample, point, np.ones(1), step)
    d_half, _ = lp.graph_derivative(sample, point, np.ones(1), step / 2)
    assert np.linalg.norm(d_full - d_half) <= 4 * err + 1e-12


def test_apply_entry_points_quadratic(p1):
    # single applications on the quadratic: integrals vanish with h == 0
    lad = p1.ladder
    cache = p1.cache
    zm = np.array([0.1])
    zp = np.array([0.12])
    grid_b = cache.grid(-lp.default_horizon(lad), 0.0)
    eta = Curve(grid_b, 0.3 * lad.rho * np.exp(lad.lambda_ * grid_b.nodes)[:, None]
                * np.ones((1, 2)), lad.lambda_, "backward")
    out = lp.apply_Phi(p1.model, lad, zm, eta, cache=cache)
    assert np.allclose(out.values[:, 0], 0.1 * np.exp(grid_b.nodes), atol=1e-14)
    assert np.allclose(out.values[:, 1], 0.0)

    grid_f = cache.grid(0.0, lp.default_horizon(lad))
    xi = Curve(grid_f, np.zeros((grid_f.size, 2)), lad.lambda_, "forward_infinite")
    out = lp.apply_Psi_stable(p1.model, lad, zp, xi, cache=cache)
    assert np.allclose(out.values[:, 1], 0.12 * np.exp(-2 * grid_f.nodes), atol=1e-14)

    T = lad.T0
    orbit = p1.orbit(zm, t_need=T)
    grid_T = cache.grid(0.0, T)
    ref = lp.reference_curve(orbit.curve, grid_T, lad.lambda_)
    out = lp.apply_Psi_T(p1.model, lad, T, zm, zp, ref, ref, cache=cache)
    expect0 = 0.1 * np.exp(grid_T.nodes - T)
    expect1 = 0.12 * np.exp(-2 * grid_T.nodes)
    assert np.allclose(out.values[:, 0], expect0, atol=1e-13)
    assert np.allclose(out.values[:, 1], expect1, atol=1e-13)


def test_operator_rejects_curve_outside_trust_region(p2):
    from gradleaf.errors import OutOfTrustRegion

    T = p2.ladder.T0
    zm = p2.sphere_point()
    op = mixed_operator(p2, T, zm, np.array([0.2 * p2.ladder.R]))
    huge = op.reference.with_values(op.reference.values + 2.0)
    with pytest.raises(OutOfTrustRegion):
        op.apply(huge)


def test_linearized_derivative_norm_bound(p2):
    # the linearized solution obeys the weighted bound |X|_exp <= 2 |v|
    lad = p2.ladder
    zp = np.array([0.4 * lad.R])
    res = lp.solve_stable(p2.model, lad, zp, cache=p2.cache)
    grid = res.curve.grid
    conv = p2.cache.convolver(grid)
    dh_nodes = np.stack([p2.model.dh(xi) for xi in res.curve.values])
    v = np.array([1.0])
    X = lp._linearized_fixed_point(p2.model, lad, grid, conv, dh_nodes, v,
                                   tol=1e-12)
    weighted = np.max(np.exp(lad.lambda_ * grid.nodes)
                      * np.linalg.norm(X, axis=1))
    assert weighted <= 2.0 * np.linalg.norm(v) + 1e-12


def test_mixed_rejects_short_horizon(p2):
    from gradleaf.errors import HorizonMismatch

    zm = p2.sphere_point()
    orbit = p2.orbit(zm)
    with pytest.raises(HorizonMismatch):
        lp.solve_mixed(p2.model, p2.ladder, 0.5 * p2.ladder.T0, zm,
                       np.zeros(1), orbit, cache=p2.cache)
