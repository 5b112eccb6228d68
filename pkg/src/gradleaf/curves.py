"""Time-gridded curves with exponentially weighted norms.

Curves are discretized on composite Chebyshev-Lobatto panels.  Panel width is
tied to the stiffest eigenvalue so that both the curve and the exponential
kernels applied to it are resolved to near machine precision by the
degree-12 interpolants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import HorizonMismatch

NODES_PER_PANEL = 13  # polynomial degree 12 per panel

#: horizon kinds; the weight of the exp norm depends on the kind
FORWARD_FINITE = "forward_finite"      # [0, T], weight e^{+lambda t}
FORWARD_INFINITE = "forward_infinite"  # [0, T_max] truncation, weight e^{+lambda t}
BACKWARD = "backward"                  # [-T_max, 0] truncation, weight e^{-lambda t}


def _lobatto_reference(p):
    # Chebyshev-Lobatto nodes mapped to [0, 1], ascending
    j = np.arange(p + 1)
    return 0.5 * (1.0 - np.cos(np.pi * j / p))


def barycentric_weights(nodes):
    """Barycentric weights for an arbitrary node set (stable at degree 12)."""
    n = len(nodes)
    w = np.ones(n)
    for j in range(n):
        diff = nodes[j] - np.delete(nodes, j)
        w[j] = 1.0 / np.prod(diff)
    return w / np.max(np.abs(w))


def barycentric_matrix(nodes, weights, targets):
    """Row-stochastic matrix evaluating the interpolant at ``targets``."""
    diff = targets[:, None] - nodes[None, :]
    exact = np.isclose(diff, 0.0, atol=1e-15 * max(1.0, np.max(np.abs(nodes))))
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = weights[None, :] / diff
    terms = np.where(exact, 0.0, terms)
    denom = terms.sum(axis=1, keepdims=True)
    hits = exact.any(axis=1)
    out = np.zeros_like(terms)
    ok = ~hits
    out[ok] = terms[ok] / denom[ok]
    out[hits] = exact[hits].astype(float)
    return out


class PanelGrid:
    """Composite Chebyshev-Lobatto grid on ``[t0, t1]``.

    Adjacent panels share their endpoint node; the flat grid therefore has
    ``n_panels * (nodes_per_panel - 1) + 1`` distinct, strictly increasing
    nodes.
    """

    def __init__(self, t0, t1, max_rate, nodes_per_panel=NODES_PER_PANEL,
                 min_panels=3):
        if not t1 > t0:
            raise ValueError("need t1 > t0")
        width = min(0.5, 2.0 / max(float(max_rate), 1e-12))
        n_panels = max(min_panels, int(np.ceil((t1 - t0) / width)))
        self.t0 = float(t0)
        self.t1 = float(t1)
        self.p = nodes_per_panel - 1
        self.n_panels = n_panels
        self.edges = np.linspace(t0, t1, n_panels + 1)
        ref = _lobatto_reference(self.p)
        self.panel_nodes = self.edges[:-1, None] + np.diff(self.edges)[:, None] * ref[None, :]
        nodes = [self.panel_nodes[0]]
        for ip in range(1, n_panels):
            nodes.append(self.panel_nodes[ip, 1:])
        self.nodes = np.concatenate(nodes)
        self.ref_weights = barycentric_weights(ref)

    @property
    def size(self):
        return self.nodes.size

    def panel_slice(self, ip):
        start = ip * self.p
        return slice(start, start + self.p + 1)

    def panel_values(self, values, ip):
        return values[self.panel_slice(ip)]

    def locate(self, t):
        """Panel index containing time ``t`` (clamped to the horizon)."""
        ip = int(np.searchsorted(self.edges, t, side="right")) - 1
        return min(max(ip, 0), self.n_panels - 1)

    def interpolate(self, values, t):
        """Barycentric evaluation of panel-wise interpolants at times ``t``."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        scalar_t = np.isscalar(t) or np.ndim(t) == 0
        flat = values.ndim == 1
        vals = values[:, None] if flat else values
        ref = _lobatto_reference(self.p)
        out = np.empty((t_arr.size, vals.shape[1]))
        for i, ti in enumerate(t_arr):
            if ti < self.t0 - 1e-12 or ti > self.t1 + 1e-12:
                raise HorizonMismatch(f"time {ti} outside horizon [{self.t0}, {self.t1}]")
            ip = self.locate(ti)
            nodes = self.panel_nodes[ip]
            a, b = nodes[0], nodes[-1]
            ref_t = np.array([(ti - a) / (b - a)])
            M = barycentric_matrix(ref, self.ref_weights, ref_t)
            out[i] = M @ self.panel_values(vals, ip)
        if flat:
            out = out[:, 0]
            return out[0] if scalar_t else out
        return out[0] if scalar_t else out

    def differentiation_matrix(self, ip):
        """Spectral differentiation matrix for panel ``ip``."""
        nodes = self.panel_nodes[ip]
        w = barycentric_weights(nodes)
        n = len(nodes)
        D = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                if i != j:
                    D[i, j] = (w[j] / w[i]) / (nodes[i] - nodes[j])
        np.fill_diagonal(D, -D.sum(axis=1))
        return D


@dataclass
class Curve:
    """Sampled curve in the split-adapted frame with an exp-norm rate.

    ``values[i]`` is the state at ``grid.nodes[i]``; states are expressed in
    the orthonormal eigenbasis of the spectral splitting, centred at the
    critical point, so Euclidean norms agree with ambient norms.
    """

    grid: PanelGrid
    values: np.ndarray
    rate: float
    kind: str

    def __post_init__(self):
        if self.values.shape[0] != self.grid.size:
            raise HorizonMismatch(
                f"{self.values.shape[0]} values on a grid of {self.grid.size} nodes")

    def weights(self):
        sign = -1.0 if self.kind == BACKWARD else 1.0
        return np.exp(sign * self.rate * self.grid.nodes)

    def exp_norm(self):
        """Weighted sup norm; the weight grows toward the open end."""
        norms = np.linalg.norm(self.values, axis=1)
        return float(np.max(self.weights() * norms))

    def exp_distance(self, other):
        norms = np.linalg.norm(self.values - other.values, axis=1)
        return float(np.max(self.weights() * norms))

    def sup_distance(self, other):
        return float(np.max(np.linalg.norm(self.values - other.values, axis=1)))

    def max_norm(self):
        return float(np.max(np.linalg.norm(self.values, axis=1)))

    def evaluate(self, t):
        return self.grid.interpolate(self.values, t)

    def with_values(self, values):
        return Curve(self.grid, values, self.rate, self.kind)

    def derivative_values(self):
        """Node-wise time derivative of the panel interpolants."""
        out = np.empty_like(self.values)
        for ip in range(self.grid.n_panels):
            D = self.grid.differentiation_matrix(ip)
            sl = self.grid.panel_slice(ip)
            out[sl] = D @ self.values[sl]
        return out

    def copy(self):
        return Curve(self.grid, self.values.copy(), self.rate, self.kind)


def zero_curve(grid, dimension, rate, kind):
    return Curve(grid, np.zeros((grid.size, dimension)), rate, kind)
