"""Euclidean local model at the critical point.

Centering at the critical point and rotating into the eigenbasis of the
Hessian puts the gradient flow in the form

    xi' + Lambda xi = h(xi),    h(xi) = Lambda xi - grad_f(x0 + U xi) in frame,

with h(0) = 0 and dh(0) = 0.  This module provides the nonlinearity, sampled
Lipschitz moduli, and the chain of rate constants that all contraction
estimates depend on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    ConfigError,
    IndexOutOfRange,
    LadderInfeasible,
    OutOfTrustRegion,
    OutsideSampledDomain,
)

KAPPA_SAFETY = 1.5
#: region factor: curves of the contraction spaces stay within this multiple
#: of rho of the origin, so the smallness inequality is checked there
REGION_FACTOR = 2.0
SMALLNESS_BOUND = 0.125  # 1/8


class LocalModel:
    """Problem + spectral splitting re-expressed in the adapted frame."""

    def __init__(self, problem, split):
        if problem.dimension != split.dimension:
            raise ValueError("problem and split dimensions disagree")
        self.problem = problem
        self.split = split
        self.x0 = problem.critical_point
        self.U = split.eigenvectors
        self.eigenvalues = split.eigenvalues
        self.k = split.morse_index
        self.n = split.dimension

    # -- coordinates ---------------------------------------------------------
    def to_ambient(self, xi):
        return self.x0 + np.asarray(xi) @ self.U.T

    def to_local(self, x):
        return (np.asarray(x) - self.x0) @ self.U

    def embed_minus(self, c):
        """Pad minus-subspace coordinates to a full local vector."""
        c = np.atleast_2d(np.asarray(c, dtype=float))
        out = np.zeros((c.shape[0], self.n))
        out[:, : self.k] = c
        return out[0] if out.shape[0] == 1 else out

    def embed_plus(self, c):
        c = np.atleast_2d(np.asarray(c, dtype=float))
        out = np.zeros((c.shape[0], self.n))
        out[:, self.k:] = c
        return out[0] if out.shape[0] == 1 else out

    # -- nonlinearity ----------------------------------------------------------
    def h(self, xi):
        """Nonlinearity in the adapted frame; accepts (n,) or (m, n)."""
        xi = np.asarray(xi, dtype=float)
        grad = self.problem.grad(self.to_ambient(xi)) @ self.U
        return xi * self.eigenvalues - grad

    def dh(self, xi):
        """Jacobian of ``h`` at one point, in the adapted frame."""
        H = self.problem.hess(self.to_ambient(xi))
        return np.diag(self.eigenvalues) - self.U.T @ H @ self.U

    def f_local(self, xi):
        return self.problem.f(self.to_ambient(xi))


def nonlinearity(problem, split, xi):
    """Evaluate ``h`` inside the trust region ball."""
    xi = np.asarray(xi, dtype=float)
    norm = np.max(np.linalg.norm(np.atleast_2d(xi), axis=1))
    if norm > problem.trust_radius * (1 + 1e-12):
        raise OutOfTrustRegion(
            f"|xi| = {norm:.3e} exceeds trust radius {problem.trust_radius}")
    return LocalModel(problem, split).h(xi)


@dataclass(frozen=True)
class KappaModulus:
    """Sampled non-decreasing Lipschitz modulus with kappa(0) = 0."""

    radii: np.ndarray
    values: np.ndarray

    def __call__(self, rho):
        if rho < 0 or rho > self.radii[-1] * (1 + 1e-12):
            raise OutsideSampledDomain(
                f"radius {rho} outside sampled range [0, {self.radii[-1]}]")
        return float(np.interp(rho, self.radii, self.values))


def _ball_samples(rng, n, radius, count):
    v = rng.standard_normal((count, n))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = radius * rng.random(count) ** (1.0 / n)
    return v * r[:, None]


def lipschitz_modulus(problem, split, rho_grid=None, samples=160, rng=None):
    """Sampled upper estimate of the Lipschitz modulus of ``h`` on balls.

    For each radius the estimate combines random difference quotients with a
    dense maximization of |dh| (grid plus sphere samples), inflated by a
    safety factor; the result is monotonized.  Returns ``(modulus,
    kappa_star)`` where ``kappa_star`` is the sampled Lipschitz constant of
    ``dh`` on the trust ball (None unless the problem is C^{2,1}).
    """
    rng = np.random.default_rng(0) if rng is None else rng
    model = LocalModel(problem, split)
    n = problem.dimension
    rho0 = problem.trust_radius
    if rho_grid is None:
        rho_grid = rho0 * 0.5 ** np.arange(0, 11)
    rho_grid = np.sort(np.asarray(rho_grid, dtype=float))
    if rho_grid[-1] > rho0 * (1 + 1e-12):
        raise OutsideSampledDomain("rho grid exceeds the trust radius")

    values = []
    for rho in rho_grid:
        best = 0.0
        pts = _ball_samples(rng, n, rho, samples)
        qts = _ball_samples(rng, n, rho, samples)
        hp = model.h(pts)
        hq = model.h(qts)
        dn = np.linalg.norm(pts - qts, axis=1)
        ok = dn > 1e-12 * rho if rho > 0 else np.zeros(samples, bool)
        if np.any(ok):
            best = float(np.max(np.linalg.norm(hp[ok] - hq[ok], axis=1) / dn[ok]))
        # dense |dh| maximization: interior grid + sphere shell
        axes = np.linspace(-rho / math.sqrt(n), rho / math.sqrt(n), 5)
        mesh = np.stack(np.meshgrid(*([axes] * n), indexing="ij"), axis=-1).reshape(-1, n)
        shell = _ball_samples(rng, n, rho, samples)
        shell *= rho / np.maximum(np.linalg.norm(shell, axis=1, keepdims=True), 1e-300)
        for xi in np.concatenate([mesh, shell]):
            best = max(best, float(np.linalg.norm(model.dh(xi), 2)))
        values.append(KAPPA_SAFETY * best)
    values = np.maximum.accumulate(np.asarray(values))

    radii = np.concatenate([[0.0], rho_grid])
    values = np.concatenate([[0.0], values])
    modulus = KappaModulus(radii=radii, values=values)

    kappa_star = None
    if problem.c21:
        best = 0.0
        pts = _ball_samples(rng, n, rho0, samples)
        qts = _ball_samples(rng, n, rho0, samples)
        for a, b in zip(pts, qts):
            dn = float(np.linalg.norm(a - b))
            if dn > 1e-12:
                best = max(best, float(np.linalg.norm(model.dh(a) - model.dh(b), 2)) / dn)
        kappa_star = KAPPA_SAFETY * best
    return modulus, kappa_star


@dataclass(frozen=True)
class RateLadder:
    """The chain of constants every contraction estimate leans on.

    All entries are plain floats so the ladder can be echoed exactly through
    reports.  ``kappa_rho`` is the modulus at ``rho``; ``kappa_region`` the
    modulus at ``min(REGION_FACTOR * rho, rho0)`` actually used in the
    smallness check (curves wander up to one rho away from reference orbits
    inside the descending disk).
    """

    lambda_: float
    delta: float
    mu: float
    rho: float
    varkappa: float
    epsilon: float
    varsigma: float
    T1: float
    T2: float
    T0: float
    kappa_rho: float
    kappa_region: float
    kappa_of_rho: KappaModulus
    kappa_star: float | None
    c1: float
    c_star: float | None
    gap: float
    lambda_min: float
    morse_index: int
    calibrated: bool = False

    def __post_init__(self):
        d = self.gap
        if not 0 < self.lambda_ < d:
            raise LadderInfeasible(f"lambda {self.lambda_} outside (0, {d})")
        if not 0 < self.delta < min(1.0, (d - self.lambda_) / 2) + 1e-15:
            raise LadderInfeasible("delta outside (0, min(1, (d - lambda)/2))")
        if not self.lambda_ < self.mu < (d + self.lambda_) / 2 + 1e-15:
            raise LadderInfeasible("mu outside (lambda, (d + lambda)/2)")
        if self.kappa_rho * (4 / self.lambda_ + 1 / self.delta + 1) > SMALLNESS_BOUND + 1e-15:
            raise LadderInfeasible("smallness inequality fails at rho")
        if not 0 < self.varkappa <= 1.0:
            raise LadderInfeasible("varkappa outside (0, 1]")
        if not 0 < self.epsilon < self.varsigma:
            raise LadderInfeasible("epsilon outside (0, varsigma)")
        if self.T0 < 1.0:
            raise LadderInfeasible("T0 < 1")

    @property
    def R(self):
        """Radius of the graph domains (half of rho)."""
        return 0.5 * self.rho

    def contraction_bound(self):
        """A priori contraction factor of the finite-horizon operator."""
        return self.kappa_region * (1 / self.delta + 1 / (self.lambda_ + self.mu))

    def echo(self):
        return {
            "lambda": self.lambda_,
            "delta": self.delta,
            "mu": self.mu,
            "rho": self.rho,
            "varkappa": self.varkappa,
            "epsilon": self.epsilon,
            "varsigma": self.varsigma,
            "T1": self.T1,
            "T2": self.T2,
            "T0": self.T0,
            "kappa_rho": self.kappa_rho,
            "kappa_region": self.kappa_region,
            "kappa_star": self.kappa_star,
            "c1": self.c1,
            "c_star": self.c_star,
            "gap": self.gap,
            "lambda_min": self.lambda_min,
            "morse_index": self.morse_index,
            "calibrated": self.calibrated,
        }


def _provisional_disks(split, rho):
    """Quadratic-model estimates for varsigma, epsilon, varkappa.

    Replaced by graph-calibrated values once the local manifolds are solved;
    config overrides win over both.
    """
    R = 0.5 * rho
    lam_u = float(np.min(np.abs(split.eigenvalues[: split.morse_index])))
    lam_s = float(np.min(split.eigenvalues[split.morse_index:]))
    lam_top = float(np.max(split.eigenvalues))
    varsigma = min(lam_u, lam_s) * R * R / 8.0
    epsilon = 0.5 * varsigma
    varkappa = min(1.0, 0.9 * math.sqrt(varsigma / lam_top))
    return varsigma, epsilon, varkappa


def build_ladder(split, kappa, choices=None, kappa_star=None, rho0=1.0):
    """Assemble the rate ladder from the spectral data and sampled modulus.

    ``choices`` may fix ``lambda``, ``rho``, ``varkappa``, ``epsilon`` (and
    optionally ``varsigma``); everything else follows the conventions below:
    delta = 0.9 * min(1, (d - lambda)/2), mu = lambda + delta, rho = largest
    sampled radius passing the smallness inequality on the excursion region.
    """
    choices = dict(choices or {})
    unknown = set(choices) - {"lambda", "rho", "varkappa", "epsilon", "varsigma"}
    if unknown:
        raise ConfigError(f"unknown ladder override keys: {sorted(unknown)}")
    k, n = split.morse_index, split.dimension
    if k in (0, n):
        raise IndexOutOfRange(f"Morse index {k} of {n}: no transverse family")
    d = split.gap
    lam = float(choices.get("lambda", 0.5 * d))
    if not 0 < lam < d:
        raise LadderInfeasible(f"lambda {lam} outside spectral gap (0, {d})")
    delta = 0.9 * min(1.0, (d - lam) / 2)
    mu = lam + delta
    smallness = 4 / lam + 1 / delta + 1

    def feasible(rho):
        region = min(REGION_FACTOR * rho, rho0)
        return kappa(region) * smallness <= SMALLNESS_BOUND

    if "rho" in choices:
        rho = float(choices["rho"])
        if rho > 0.5 * rho0 or not feasible(rho):
            raise LadderInfeasible(f"requested rho {rho} fails the smallness inequality")
    else:
        rho = None
        for candidate in rho0 * 0.5 ** np.arange(1, 16):
            if feasible(candidate):
                rho = float(candidate)
                break
        if rho is None:
            raise LadderInfeasible("no sampled radius satisfies the smallness inequality")

    varsigma_est, epsilon_est, varkappa_est = _provisional_disks(split, rho)
    varsigma = float(choices.get("varsigma", varsigma_est))
    epsilon = float(choices.get("epsilon", min(epsilon_est, 0.5 * varsigma)))
    varkappa = float(choices.get("varkappa", varkappa_est))

    T1 = -math.log(varkappa) / lam
    T2 = 4.0 * math.log(8.0) / mu
    T0 = max(T1, T2, 1.0)
    lam1 = float(split.eigenvalues[0])
    c1 = 2.0 * (abs(lam1) + 1.0)
    c_star = None if kappa_star is None else 2.0 * kappa_star * (1 / delta + 1 / lam) + 0.25

    return RateLadder(
        lambda_=lam, delta=delta, mu=mu, rho=rho,
        varkappa=varkappa, epsilon=epsilon, varsigma=varsigma,
        T1=T1, T2=T2, T0=T0,
        kappa_rho=kappa(rho), kappa_region=kappa(min(REGION_FACTOR * rho, rho0)),
        kappa_of_rho=kappa, kappa_star=kappa_star,
        c1=c1, c_star=c_star,
        gap=d, lambda_min=lam1, morse_index=k,
    )


def calibrate_ladder(ladder, model, graph_f, graph_g, overrides=None):
    """Replace provisional disk parameters by graph-verified values.

    varsigma: largest level offset whose descending/ascending disks stay
    inside the sampled graph images (read off the objective's drop/rise along
    the graph boundaries); varkappa: largest plus-ball that stays inside the
    ascending disk at level varsigma.  Overridden entries are kept.
    """
    overrides = dict(overrides or {})
    c = model.f_local(np.zeros(model.n))

    drop = _boundary_level_change(model, graph_f, sign=-1.0)
    rise = _boundary_level_change(model, graph_g, sign=+1.0)
    varsigma = overrides.get("varsigma", 0.45 * min(drop, rise))
    if varsigma <= 0:
        raise LadderInfeasible("graphs carry no level range: varsigma <= 0")
    epsilon = overrides.get("epsilon", 0.5 * varsigma)

    if "varkappa" in overrides:
        varkappa = overrides["varkappa"]
    else:
        varkappa = 0.9 * _plus_radius_within_level(model, graph_g, c + varsigma)
        varkappa = min(1.0, varkappa)
    T1 = -math.log(varkappa) / ladder.lambda_
    T0 = max(T1, ladder.T2, 1.0)
    return replace(ladder, varsigma=varsigma, epsilon=epsilon, varkappa=varkappa,
                   T1=T1, T0=T0, calibrated=True)


def _boundary_level_change(model, graph, sign):
    """Min |f - c| over the boundary base points of a graph sample."""
    c = model.f_local(np.zeros(model.n))
    pts = graph.boundary_points_local(model)
    vals = np.array([model.f_local(p) for p in pts])
    change = sign * (vals - c)
    lo = float(np.min(change))
    if lo <= 0:
        raise LadderInfeasible("objective not monotone across a graph boundary")
    return lo


def _plus_radius_within_level(model, graph_g, level):
    """Largest base radius of the stable graph staying below ``level``."""
    base, pts = graph_g.all_points_local(model)
    radii = np.linalg.norm(base, axis=1)
    vals = np.array([model.f_local(p) for p in pts])
    bad = radii[vals > level]
    limit = float(np.min(bad)) if bad.size else float(np.max(radii))
    inside = radii[radii < limit - 1e-15]
    return float(np.max(inside)) if inside.size else limit


def flatten_map(graph_f, graph_g, point, split):
    """Straightening diffeomorphism built from the two manifold graphs.

    ``point`` is a local-frame vector; returns (x - G(y), y - F(x)) in the
    same frame.  The sampled unstable graph maps into the minus subspace and
    the stable graph into the plus subspace, up to interpolation error.
    """
    point = np.asarray(point, dtype=float)
    k = split.morse_index
    x = point[:k]
    y = point[k:]
    gx = graph_f.evaluate(x)
    gy = graph_g.evaluate(y)
    out = np.empty_like(point)
    out[:k] = x - gy
    out[k:] = y - gx
    return out
