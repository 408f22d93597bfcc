"""Dense real linear-algebra primitives.

Small matrices only (dimension up to a few dozen). Eigenvalues, least
squares and Kronecker products delegate to LAPACK through numpy; the matrix
exponential is a scaling-and-squaring Pade approximant implemented here so
that the compiled simulation kernel can reproduce it exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import SYM_TOL
from .errors import DimensionError, NumericalBreakdown

__all__ = ["Spectrum", "as_matrix", "eig", "expm", "lstsq", "kron",
           "min_eig_sym", "max_eig_sym", "sym", "PADE6"]

# [6/6] diagonal Pade coefficients of exp
PADE6 = (1.0, 1.0 / 2.0, 5.0 / 44.0, 1.0 / 66.0, 1.0 / 792.0,
         1.0 / 15840.0, 1.0 / 665280.0)
# scaled 1-norm threshold; truncation error of [6/6] at 0.5 is ~2e-17
_THETA = 0.5


def as_matrix(a, name="matrix", rows=None, cols=None, square=False):
    """Convert ``a`` to a finite 2-D float array and check its shape.

    Scalars become 1x1 and 1-D input becomes a column.
    """
    m = np.asarray(a, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    elif m.ndim == 1:
        m = m.reshape(-1, 1)
    elif m.ndim != 2:
        raise DimensionError(f"{name}: expected a 2-D array, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise DimensionError(f"{name}: entries must be finite")
    if square and m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name}: must be square, got {m.shape}")
    if rows is not None and m.shape[0] != rows:
        raise DimensionError(f"{name}: expected {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise DimensionError(f"{name}: expected {cols} columns, got {m.shape[1]}")
    return m


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues of a square matrix with their largest real part."""

    eigenvalues: np.ndarray
    spectral_abscissa: float

    def __len__(self):
        return len(self.eigenvalues)

    @property
    def is_hurwitz(self):
        return self.spectral_abscissa < 0.0


def eig(a) -> Spectrum:
    """All eigenvalues of a square matrix, with multiplicity."""
    a = as_matrix(a, "A", square=True)
    try:
        w = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalBreakdown(f"eigenvalue iteration did not converge: {exc}") from exc
    abscissa = float(np.max(w.real)) if w.size else float("-inf")
    return Spectrum(eigenvalues=w, spectral_abscissa=abscissa)


def _pade6(a):
    n = a.shape[0]
    b = PADE6
    ident = np.eye(n)
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a4 @ a2
    u = a @ (b[1] * ident + b[3] * a2 + b[5] * a4)
    v = b[0] * ident + b[2] * a2 + b[4] * a4 + b[6] * a6
    return np.linalg.solve(v - u, v + u)


def squarings(a_norm):
    """Number of halvings that bring a 1-norm below the Pade threshold."""
    if a_norm <= _THETA:
        return 0
    return int(np.ceil(np.log2(a_norm / _THETA)))


def expm(a, t=1.0):
    """Matrix exponential ``exp(A t)``.

    Scaling and squaring with a fixed [6/6] Pade approximant; ``A t`` is
    scaled by ``2**-s`` until its 1-norm is at most 0.5.
    """
    a = as_matrix(a, "A", square=True)
    at = a * float(t)
    if at.shape[0] == 0:
        return at.copy()
    s = squarings(float(np.linalg.norm(at, 1)))
    r = _pade6(at / (2.0 ** s))
    for _ in range(s):
        r = r @ r
    return r


def lstsq(a, b):
    """Minimum-norm least-squares solution of ``A X = B``."""
    a = as_matrix(a, "A")
    b_arr = np.asarray(b, dtype=float)
    vector = b_arr.ndim == 1
    b = as_matrix(b_arr, "B")
    if a.shape[0] != b.shape[0]:
        raise DimensionError(f"lstsq: A has {a.shape[0]} rows but B has {b.shape[0]}")
    x, *_ = np.linalg.lstsq(a, b, rcond=None)
    return x.ravel() if vector else x


def kron(a, b):
    return np.kron(as_matrix(a, "A"), as_matrix(b, "B"))


def sym(a, tol=SYM_TOL, name="A"):
    """Symmetric part of ``a``; refuses inputs that are visibly asymmetric."""
    a = as_matrix(a, name, square=True)
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if a.size and np.max(np.abs(a - a.T)) > tol * scale:
        raise DimensionError(f"{name}: not symmetric within {tol:g}")
    return 0.5 * (a + a.T)


def min_eig_sym(a, tol=SYM_TOL):
    """Smallest eigenvalue of a symmetric matrix (symmetrised first)."""
    return float(np.linalg.eigvalsh(sym(a, tol))[0])


def max_eig_sym(a, tol=SYM_TOL):
    return float(np.linalg.eigvalsh(sym(a, tol))[-1])
