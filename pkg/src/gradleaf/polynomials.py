"""Multivariate polynomials given by (multi-index, coefficient) tables.

Objectives are ingested as coefficient tables, so gradients and Hessians are
exact (derived term-by-term) rather than obtained by automatic or numerical
differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class Polynomial:
    """Polynomial in ``dimension`` variables.

    ``terms`` maps a multi-index (tuple of non-negative ints, one entry per
    variable) to its real coefficient.
    """

    dimension: int
    terms: dict = field(default_factory=dict)

    @classmethod
    def from_pairs(cls, dimension, pairs):
        """Build from ``[(multi_index, coefficient), ...]`` config pairs."""
        terms = {}
        for entry in pairs:
            if len(entry) != 2:
                raise ConfigError(f"objective entry {entry!r} is not a (multi-index, coefficient) pair")
            alpha, coeff = entry
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != dimension:
                raise ConfigError(f"multi-index {alpha} has length {len(alpha)}, expected {dimension}")
            if any(a < 0 for a in alpha):
                raise ConfigError(f"multi-index {alpha} has negative entries")
            terms[alpha] = terms.get(alpha, 0.0) + float(coeff)
        return cls(dimension, terms)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        out = np.zeros(pts.shape[0])
        for alpha, c in self.terms.items():
            mon = np.ones(pts.shape[0])
            for i, a in enumerate(alpha):
                if a:
                    mon = mon * pts[:, i] ** a
            out += c * mon
        return out[0] if single else out

    def differentiate(self, var):
        """Exact partial derivative with respect to variable ``var``."""
        terms = {}
        for alpha, c in self.terms.items():
            a = alpha[var]
            if a == 0:
                continue
            beta = list(alpha)
            beta[var] = a - 1
            beta = tuple(beta)
            terms[beta] = terms.get(beta, 0.0) + c * a
        return Polynomial(self.dimension, terms)

    def gradient_polys(self):
        return [self.differentiate(i) for i in range(self.dimension)]

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        g = np.stack([p(pts) for p in self.gradient_polys()], axis=-1)
        return g[0] if single else g

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        n = self.dimension
        grads = self.gradient_polys()
        H = np.zeros((pts.shape[0], n, n))
        for i in range(n):
            for j in range(i, n):
                vals = grads[i].differentiate(j)(pts)
                H[:, i, j] = vals
                H[:, j, i] = vals
        return H[0] if single else H

    def to_pairs(self):
        """Deterministically ordered (multi-index, coefficient) list."""
        return [[list(alpha), self.terms[alpha]] for alpha in sorted(self.terms)]
