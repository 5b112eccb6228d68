"""Eigen-analysis of the Hessian at a critical point.

The symmetric eigendecomposition is the single source of truth for every
matrix exponential in the package: exponentials are assembled spectrally, so
the semigroup law and the subspace decay bounds hold to rounding error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCriticalPoint, NotSymmetric

#: relative scale for the default non-degeneracy tolerance
DEGENERACY_REL_TOL = 1e-9


@dataclass(frozen=True)
class SpectralSplit:
    """Spectral splitting of a symmetric Hessian ``A``.

    Eigenvalues are sorted ascending, the first ``morse_index`` of them
    negative.  ``eigenvectors`` holds the adapted orthonormal basis as
    columns; the first ``morse_index`` columns span the unstable subspace.
    """

    dimension: int
    hessian: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    morse_index: int
    gap: float
    proj_minus: np.ndarray
    proj_plus: np.ndarray

    @property
    def lambda_min(self):
        return float(self.eigenvalues[0])

    @property
    def lambda_max(self):
        return float(self.eigenvalues[-1])

    @property
    def minus_basis(self):
        return self.eigenvectors[:, : self.morse_index]

    @property
    def plus_basis(self):
        return self.eigenvectors[:, self.morse_index:]

    # subspace coordinates are taken w.r.t. the adapted orthonormal basis
    def to_minus_coords(self, v):
        return np.asarray(v) @ self.minus_basis

    def to_plus_coords(self, v):
        return np.asarray(v) @ self.plus_basis

    def from_minus_coords(self, c):
        return np.asarray(c) @ self.minus_basis.T

    def from_plus_coords(self, c):
        return np.asarray(c) @ self.plus_basis.T


def split(hessian, tol=None):
    """Spectral splitting of a symmetric matrix.

    ``tol`` doubles as the symmetry tolerance and the non-degeneracy
    threshold; by default it is ``1e-9 * max |eigenvalue|`` so the check is
    scale invariant.
    """
    A = np.asarray(hessian, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NotSymmetric(f"hessian must be square, got shape {A.shape}")
    n = A.shape[0]
    asym = float(np.max(np.abs(A - A.T))) if n else 0.0
    scale = float(np.max(np.abs(A))) or 1.0
    sym_tol = tol if tol is not None else DEGENERACY_REL_TOL * scale
    if asym > sym_tol:
        raise NotSymmetric(f"asymmetry {asym:.3e} exceeds tolerance {sym_tol:.3e}")

    evals, evecs = np.linalg.eigh(0.5 * (A + A.T))
    degeneracy_tol = tol if tol is not None else DEGENERACY_REL_TOL * float(np.max(np.abs(evals)))
    if np.any(np.abs(evals) < degeneracy_tol):
        raise DegenerateCriticalPoint(
            f"eigenvalue within {degeneracy_tol:.3e} of zero: {evals}")

    k = int(np.sum(evals < 0))
    gap = float(np.min(np.abs(evals)))
    Um = evecs[:, :k]
    Up = evecs[:, k:]
    return SpectralSplit(
        dimension=n,
        hessian=A,
        eigenvalues=evals,
        eigenvectors=evecs,
        morse_index=k,
        gap=gap,
        proj_minus=Um @ Um.T,
        proj_plus=Up @ Up.T,
    )


def flow_exponential(split_, t):
    """Linearized flow map ``exp(-t A)`` assembled spectrally."""
    U = split_.eigenvectors
    return (U * np.exp(-t * split_.eigenvalues)) @ U.T


def restricted_exponential(split_, sign, t):
    """``exp(-t A)`` restricted to one spectral subspace, zero on the other.

    ``sign`` selects ``"minus"`` (unstable subspace, valid for all real t
    without any backward Cauchy problem) or ``"plus"``.
    """
    if sign not in ("minus", "plus"):
        raise ValueError(f"sign must be 'minus' or 'plus', got {sign!r}")
    k = split_.morse_index
    mask = np.zeros(split_.dimension)
    if sign == "minus":
        mask[:k] = 1.0
    else:
        mask[k:] = 1.0
    U = split_.eigenvectors
    return (U * (mask * np.exp(-t * split_.eigenvalues))) @ U.T
