"""Exponential-kernel convolution operators on panel grids.

Given samples of ``y`` on a :class:`~gradleaf.curves.PanelGrid`, the
convolver returns, for every grid node ``t``,

    forward:   F(t) = integral_{t0}^{t}  exp(-(t - s) * lam) y(s) ds
    backward:  B(t) = integral_{t}^{t1}  exp(+(s - t) * lam) y(s) ds

The forward kernel is used only with lam >= 0 and the backward kernel only
with lam <= 0, so every exponential factor that appears is bounded by one:
the recursions below are unconditionally stable and nothing can overflow.

Within a panel, ``y`` is replaced by its Chebyshev-Lobatto interpolant and
the product with the kernel is integrated by Gauss-Legendre quadrature of
order 16; the panel width is tied to the stiffest rate, so both factors are
resolved to near machine precision.  Across panels the accumulated integral
is propagated by exact endpoint decay factors.  Panels of one grid all have
the same width, so a single set of local operators per rate serves the whole
horizon; one instance serves every Picard iteration and every sample sharing
the horizon.
"""

from __future__ import annotations

import numpy as np
from scipy.special import roots_legendre

from .curves import _lobatto_reference, barycentric_matrix, barycentric_weights

GAUSS_ORDER = 16


class ExpConvolver:
    """Precomputed forward/backward exponential convolutions for one grid.

    ``rates`` is the full eigenvalue list; entry ``j`` may only be used with
    ``forward`` when ``rates[j] >= 0`` and with ``backward`` when
    ``rates[j] <= 0``.
    """

    def __init__(self, grid, rates, gauss_order=GAUSS_ORDER):
        self.grid = grid
        self.rates = np.asarray(rates, dtype=float)
        p = grid.p
        m = p + 1
        ref = _lobatto_reference(p)
        ref_w = barycentric_weights(ref)
        gx, gw = roots_legendre(gauss_order)
        gx = 0.5 * (gx + 1.0)  # map to [0, 1]
        gw = 0.5 * gw

        widths = np.diff(grid.edges)
        if not np.allclose(widths, widths[0], rtol=1e-12, atol=0.0):
            raise ValueError("ExpConvolver expects a uniform-width panel grid")
        w = float(widths[0])
        n_rates = self.rates.size

        self._fwd_local = np.zeros((n_rates, m, m))
        self._bwd_local = np.zeros((n_rates, m, m))
        self._fwd_carry = np.zeros((n_rates, m))
        self._bwd_carry = np.zeros((n_rates, m))

        for i in range(m):
            xi = ref[i]
            if xi > 0.0:
                # s = xi * gx in reference coordinates of the panel
                s_ref = xi * gx
                basis = barycentric_matrix(ref, ref_w, s_ref)  # (q, m)
                for r, lam in enumerate(self.rates):
                    if lam < 0.0:
                        continue
                    kern = np.exp(-(xi - s_ref) * w * lam)
                    self._fwd_local[r, i] = (gw * xi * w * kern) @ basis
            if xi < 1.0:
                s_ref = xi + (1.0 - xi) * gx
                basis = barycentric_matrix(ref, ref_w, s_ref)
                for r, lam in enumerate(self.rates):
                    if lam > 0.0:
                        continue
                    kern = np.exp((s_ref - xi) * w * lam)
                    self._bwd_local[r, i] = (gw * (1.0 - xi) * w * kern) @ basis
        for r, lam in enumerate(self.rates):
            if lam >= 0.0:
                self._fwd_carry[r] = np.exp(-ref * w * lam)
            if lam <= 0.0:
                self._bwd_carry[r] = np.exp((1.0 - ref) * w * lam)

    def forward(self, rate_index, y):
        """F(t) on the flat grid for coordinate samples ``y``; needs lam >= 0."""
        if self.rates[rate_index] < 0.0:
            raise ValueError("forward convolution requires a non-negative rate")
        grid = self.grid
        local = self._fwd_local[rate_index]
        carry = self._fwd_carry[rate_index]
        out = np.empty(grid.size)
        acc = 0.0
        for ip in range(grid.n_panels):
            sl = grid.panel_slice(ip)
            vals = carry * acc + local @ y[sl]
            out[sl] = vals
            acc = vals[-1]
        return out

    def backward(self, rate_index, y):
        """B(t) on the flat grid for coordinate samples ``y``; needs lam <= 0."""
        if self.rates[rate_index] > 0.0:
            raise ValueError("backward convolution requires a non-positive rate")
        grid = self.grid
        local = self._bwd_local[rate_index]
        carry = self._bwd_carry[rate_index]
        out = np.empty(grid.size)
        acc = 0.0
        for ip in reversed(range(grid.n_panels)):
            sl = grid.panel_slice(ip)
            vals = carry * acc + local @ y[sl]
            out[sl] = vals
            acc = vals[0]
        return out
