"""Gradient-flow problem definitions and config-file ingestion.

A problem is a smooth objective together with a hyperbolic critical point and
a trust radius for the local model around it.  Polynomial objectives are the
supported input class; gradient and Hessian evaluators are derived
symbolically from the coefficient table.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .polynomials import Polynomial

GRAD_TOL = 1e-9


@dataclass(frozen=True)
class GradientProblem:
    """Objective ``f`` with a critical point and trust radius.

    ``trust_radius`` bounds the local-model ball; it is capped at 1 (in the
    Euclidean model there is no injectivity-radius constraint).  ``c21`` flags
    whether the Hessian field is locally Lipschitz; true for polynomials.
    """

    name: str
    dimension: int
    objective: Polynomial
    critical_point: np.ndarray
    trust_radius: float = 1.0
    c21: bool = True
    ladder_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "critical_point",
                           np.asarray(self.critical_point, dtype=float))
        if self.critical_point.shape != (self.dimension,):
            raise ConfigError("critical_point has wrong dimension")
        if not (0 < self.trust_radius <= 1.0):
            raise ConfigError("trust_radius must lie in (0, 1]")
        g = np.linalg.norm(self.objective.gradient(self.critical_point))
        if g > GRAD_TOL:
            raise ConfigError(f"gradient norm {g:.3e} at declared critical point exceeds {GRAD_TOL}")

    def f(self, x):
        return self.objective(x)

    def grad(self, x):
        return self.objective.gradient(x)

    def hess(self, x):
        return self.objective.hessian(x)

    def critical_value(self):
        return float(self.objective(self.critical_point))

    def check_derivatives(self, rng=None, samples=8, h=1e-6):
        """Max deviation between symbolic and finite-difference derivatives."""
        rng = np.random.default_rng(0) if rng is None else rng
        n = self.dimension
        worst = 0.0
        for _ in range(samples):
            x = self.critical_point + 0.1 * rng.standard_normal(n)
            g = self.grad(x)
            H = self.hess(x)
            for i in range(n):
                e = np.zeros(n)
                e[i] = h
                gfd = (self.f(x + e) - self.f(x - e)) / (2 * h)
                worst = max(worst, abs(gfd - g[i]))
                hfd = (self.grad(x + e) - self.grad(x - e)) / (2 * h)
                worst = max(worst, float(np.max(np.abs(hfd - H[:, i]))))
        return worst


def load_problem(path):
    """Read a problem config (JSON-compatible key/value text)."""
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return problem_from_dict(raw)


def problem_from_dict(raw):
    try:
        dim = int(raw["dimension"])
        objective = Polynomial.from_pairs(dim, raw["objective"])
        crit = raw["critical_point"]
    except KeyError as exc:
        raise ConfigError(f"config missing required key {exc}") from exc
    return GradientProblem(
        name=str(raw.get("name", "problem")),
        dimension=dim,
        objective=objective,
        critical_point=np.asarray(crit, dtype=float),
        trust_radius=float(raw.get("trust_radius", 1.0)),
        c21=bool(raw.get("c21", True)),
        ladder_overrides=dict(raw.get("ladder_overrides", {})),
    )


# -- reference problems used throughout the test suite ----------------------

def quadratic_saddle():
    """f = -x1^2/2 + x2^2.  Linear flow; both local manifolds are flat."""
    poly = Polynomial.from_pairs(2, [[[2, 0], -0.5], [[0, 2], 1.0]])
    return GradientProblem("p1_quadratic", 2, poly, np.zeros(2))


def quartic_saddle():
    """f = -x1^2/2 + x2^2 + x1^2 x2^2 / 4.

    The coordinate axes remain invariant, so the local manifolds stay flat
    while the transverse dynamics (and hence the time-T graphs) are curved.
    """
    poly = Polynomial.from_pairs(2, [[[2, 0], -0.5], [[0, 2], 1.0], [[2, 2], 0.25]])
    return GradientProblem("p2_quartic", 2, poly, np.zeros(2))


def cubic_saddle_3d(coupling=0.05):
    """f = -x1^2 + x2^2/2 + 3 x3^2/2 + coupling * x1^2 x2.

    Hessian diag(-2, 1, 3); the cubic coupling curves the unstable manifold.
    """
    poly = Polynomial.from_pairs(3, [
        [[2, 0, 0], -1.0],
        [[0, 2, 0], 0.5],
        [[0, 0, 2], 1.5],
        [[2, 1, 0], coupling],
    ])
    return GradientProblem("p3_cubic3d", 3, poly, np.zeros(3))


def curved_stable_saddle(coupling=0.1):
    """f = -x1^2/2 + x2^2 + coupling * x1 x2^2: curved stable manifold."""
    poly = Polynomial.from_pairs(2, [[[2, 0], -0.5], [[0, 2], 1.0], [[1, 2], coupling]])
    return GradientProblem("curved_stable", 2, poly, np.zeros(2))
