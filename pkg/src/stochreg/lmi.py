"""Observer-gain synthesis and certification by linear matrix inequalities.

For the estimation-error process (flow ``M``, reset ``N = diag(I, 0)`` at
Poisson rate ``lam``) the Lyapunov function ``V = e^{gamma t} x' P x`` with
``P = diag(P1, P2)`` has a non-positive generator iff

    [[He(P1 A - Qbar H2) + gamma P1,  -A' H2' P2 + H2' Rbar' - Qbar],
     [        *                    ,  He(Rbar) + (gamma - lam) P2  ]]  <= 0,

which is linear in ``(P1, P2, Qbar, Rbar)`` once ``gamma`` is fixed. The gains
follow as ``Q = P1^-1 Qbar`` and ``W = P2^-1 Rbar - H2 Q``.

Semidefinite programs are handed to cvxpy (Clarabel, CVXOPT as backup). The
solver's answer is never trusted directly: every returned point is rebuilt
in numpy and its top eigenvalue is the certificate.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from . import constants as C
from .errors import DimensionError, InfeasibleError, NumericalBreakdown
from .linalg import as_matrix, max_eig_sym, min_eig_sym

__all__ = ["LmiProblem", "LmiSolution", "MBlock", "GainCertificate",
           "build_synthesis_lmi", "synthesis_block", "verification_block",
           "solve_sdp_feasibility", "recover_observer_gains", "build_M",
           "max_gamma", "min_lambda", "verify_gains_lmi", "is_feasible",
           "sweep_lambda"]

log = logging.getLogger(__name__)

_SOLVERS = ("CLARABEL", "CVXOPT")


def _he(x):
    return x + x.T


@dataclass(frozen=True)
class LmiProblem:
    frakA: np.ndarray
    H2: np.ndarray
    lam: float
    gamma: float
    eps: float = C.LMI_EPS
    trace_scale: float = C.LMI_TRACE_SCALE

    @property
    def n(self):
        return self.frakA.shape[0]

    @property
    def p(self):
        return self.H2.shape[0]

    @property
    def trace_bound(self):
        return self.trace_scale * (self.n + self.p)

    def block(self, P1, P2, Qbar, Rbar):
        """Numeric LMI block at a candidate point."""
        return synthesis_block(self.frakA, self.H2, self.lam, self.gamma, P1, P2, Qbar, Rbar)


@dataclass(frozen=True)
class LmiSolution:
    P1: np.ndarray
    P2: np.ndarray
    Qbar: np.ndarray
    Rbar: np.ndarray
    Q: np.ndarray
    W: np.ndarray
    certificate: float
    gamma: float
    lam: float


@dataclass(frozen=True)
class MBlock:
    """Flow and reset matrices of the estimation-error process.

    ``R_w = W + H2 Q`` (kept apart from the regulator-equation ``R``).
    """

    M: np.ndarray
    N: np.ndarray
    R_w: np.ndarray


@dataclass(frozen=True)
class GainCertificate:
    P1: np.ndarray
    P2: np.ndarray
    certificate: float
    gamma: float
    lam: float


def _check_dims(frakA, H2):
    frakA = as_matrix(frakA, "frakA", square=True)
    H2 = as_matrix(H2, "H2", cols=frakA.shape[0])
    return frakA, H2


def _synthesis_parts(frakA, H2, lam, gamma, P1, P2, Qbar, Rbar):
    b11 = _he(P1 @ frakA - Qbar @ H2) + gamma * P1
    b12 = -frakA.T @ H2.T @ P2 + H2.T @ Rbar.T - Qbar
    b22 = _he(Rbar) + (gamma - lam) * P2
    return b11, b12, b22


def synthesis_block(frakA, H2, lam, gamma, P1, P2, Qbar, Rbar):
    b11, b12, b22 = _synthesis_parts(frakA, H2, lam, gamma, *(np.asarray(m, float) for m in (P1, P2, Qbar, Rbar)))
    return np.block([[b11, b12], [b12.T, b22]])


def _verification_parts(frakA, H2, Q, W, lam, gamma, P1, P2):
    R_w = W + H2 @ Q
    b11 = _he(P1 @ (frakA - Q @ H2)) + gamma * P1
    b12 = -frakA.T @ H2.T @ P2 + H2.T @ R_w.T @ P2 - P1 @ Q
    b22 = _he(P2 @ R_w) + (gamma - lam) * P2
    return b11, b12, b22


def verification_block(frakA, H2, Q, W, lam, gamma, P1, P2):
    """The generator matrix with fixed gains; equals ``He(PM) + lam(N'PN - P) + gamma P``."""
    b11, b12, b22 = _verification_parts(frakA, H2, Q, W, lam, gamma, np.asarray(P1, float), np.asarray(P2, float))
    return np.block([[b11, b12], [b12.T, b22]])


def build_synthesis_lmi(frakA, H2, lam, gamma, eps=C.LMI_EPS) -> LmiProblem:
    frakA, H2 = _check_dims(frakA, H2)
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if gamma < 0:
        raise ValueError(f"gamma must be non-negative, got {gamma}")
    return LmiProblem(frakA=frakA, H2=H2, lam=float(lam), gamma=float(gamma), eps=eps)


def _solve(problem: cp.Problem, what: str):
    errors = []
    for name in _SOLVERS:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                problem.solve(solver=name)
        except (cp.error.SolverError, ArithmeticError, ValueError) as exc:
            errors.append(f"{name}: {exc}")
            continue
        if problem.status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            return name
        errors.append(f"{name}: status {problem.status}")
    raise NumericalBreakdown(f"{what}: no solver produced a solution ({'; '.join(errors)})")


def _lyapunov_vars(n, p, eps, trace_bound):
    P1 = cp.Variable((n, n), symmetric=True)
    P2 = cp.Variable((p, p), symmetric=True)
    cons = [P1 >> eps * np.eye(n), P2 >> eps * np.eye(p),
            cp.trace(P1) + cp.trace(P2) <= trace_bound]
    return P1, P2, cons


def _top_constraint(b11, b12, b22, t, trace_bound):
    blk = cp.bmat([[b11, b12], [b12.T, b22]])
    size = blk.shape[0]
    return [0.5 * (blk + blk.T) << t * np.eye(size), t >= -trace_bound]


def solve_sdp_feasibility(problem: LmiProblem) -> LmiSolution:
    """Find ``(P1, P2, Qbar, Rbar)`` making the LMI block negative definite.

    Minimises the top eigenvalue ``t`` of the block over the normalised set
    ``P_i >= eps I``, ``trace(P1) + trace(P2) <= 10 (n + p)``. The problem
    is homogeneous, so the normalisation only fixes the scale.

    Raises
    ------
    InfeasibleError
        If the best top eigenvalue is not below ``-LMI_STRICT``; carries it
        as ``violation``.
    NumericalBreakdown
        If no backend returns a usable point.
    """
    n, p = problem.n, problem.p
    P1, P2, cons = _lyapunov_vars(n, p, problem.eps, problem.trace_bound)
    Qbar = cp.Variable((n, p))
    Rbar = cp.Variable((p, p))
    t = cp.Variable()
    parts = _synthesis_parts(problem.frakA, problem.H2, problem.lam, problem.gamma, P1, P2, Qbar, Rbar)
    cons += _top_constraint(*parts, t, problem.trace_bound)
    _solve(cp.Problem(cp.Minimize(t), cons), "LMI synthesis")
    P1v = 0.5 * (P1.value + P1.value.T)
    P2v = 0.5 * (P2.value + P2.value.T)
    Qb, Rb = np.asarray(Qbar.value), np.asarray(Rbar.value)
    cert = max_eig_sym(problem.block(P1v, P2v, Qb, Rb))
    if cert > -C.LMI_STRICT or min(min_eig_sym(P1v), min_eig_sym(P2v)) <= 0:
        raise InfeasibleError(f"LMI infeasible at gamma={problem.gamma:g}, lambda={problem.lam:g} "
                              f"(best top eigenvalue {cert:.3e})", violation=cert)
    Q, W = recover_observer_gains_arrays(P1v, P2v, Qb, Rb, problem.H2)
    return LmiSolution(P1=P1v, P2=P2v, Qbar=Qb, Rbar=Rb, Q=Q, W=W, certificate=cert,
                       gamma=problem.gamma, lam=problem.lam)


def recover_observer_gains_arrays(P1, P2, Qbar, Rbar, H2):
    Q = np.linalg.solve(P1, Qbar)
    W = np.linalg.solve(P2, Rbar) - H2 @ Q
    return Q, W


def recover_observer_gains(sol: LmiSolution, H2):
    """``Q = P1^-1 Qbar``, ``W = P2^-1 Rbar - H2 Q``."""
    return recover_observer_gains_arrays(sol.P1, sol.P2, sol.Qbar, sol.Rbar, as_matrix(H2, "H2"))


def build_M(frakA, H2, Q, W) -> MBlock:
    frakA, H2 = _check_dims(frakA, H2)
    n, p = frakA.shape[0], H2.shape[0]
    Q = as_matrix(Q, "Q", rows=n, cols=p)
    W = as_matrix(W, "W", rows=p, cols=p)
    R_w = W + H2 @ Q
    M = np.block([[frakA - Q @ H2, -Q], [-H2 @ frakA + R_w @ H2, R_w]])
    N = np.diag(np.concatenate([np.ones(n), np.zeros(p)]))
    return MBlock(M=M, N=N, R_w=R_w)


def is_feasible(frakA, H2, lam, gamma, eps=C.LMI_EPS):
    try:
        solve_sdp_feasibility(build_synthesis_lmi(frakA, H2, lam, gamma, eps))
    except InfeasibleError:
        return False
    return True


def max_gamma(frakA, H2, lam, gamma_hi=5.0, tol=C.BISECT_TOL, eps=C.LMI_EPS,
              check_monotone=False):
    """Largest decay rate in ``[0, gamma_hi]`` for which the LMI is feasible.

    Bisection to absolute tolerance ``tol``; assumes feasibility shrinks as
    gamma grows. With ``check_monotone`` ten extra points around the result
    are tested and a warning is logged if the assumption visibly fails.
    """
    frakA, H2 = _check_dims(frakA, H2)
    if not is_feasible(frakA, H2, lam, 0.0, eps):
        raise InfeasibleError(f"LMI infeasible already at gamma=0 (lambda={lam:g})")
    if is_feasible(frakA, H2, lam, gamma_hi, eps):
        log.warning("LMI still feasible at gamma_hi=%g; returning the bracket end", gamma_hi)
        return float(gamma_hi)
    lo, hi = 0.0, float(gamma_hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if is_feasible(frakA, H2, lam, mid, eps):
            lo = mid
        else:
            hi = mid
    if check_monotone:
        grid = np.linspace(max(0.0, lo - 5 * tol), lo + 5 * tol, 10)
        flags = [is_feasible(frakA, H2, lam, g, eps) for g in grid]
        if any(b and not a for a, b in zip(flags, flags[1:])):
            log.warning("feasibility not monotone in gamma near %g: %s", lo, flags)
    return lo


def min_lambda(frakA, H2, gamma, lambda_hi=100.0, tol=C.BISECT_TOL, eps=C.LMI_EPS):
    """Smallest sampling intensity in ``(0, lambda_hi]`` certifying decay rate ``gamma``.

    Feasibility is monotone in ``lam`` because it enters only through
    ``-lam P2`` with ``P2`` positive definite.
    """
    frakA, H2 = _check_dims(frakA, H2)
    if not is_feasible(frakA, H2, lambda_hi, gamma, eps):
        raise InfeasibleError(f"LMI infeasible even at lambda={lambda_hi:g} (gamma={gamma:g})")
    lo, hi = 0.0, float(lambda_hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if is_feasible(frakA, H2, mid, gamma, eps):
            hi = mid
        else:
            lo = mid
    return hi


def sweep_lambda(frakA, H2, lambdas, gamma_hi=5.0, tol=C.BISECT_TOL, eps=C.LMI_EPS):
    """``max_gamma`` over a grid of intensities; ``None`` marks infeasible-at-zero."""
    lambdas = [float(x) for x in lambdas]
    if not lambdas:
        raise ValueError("empty lambda grid")
    if any(b <= a for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("lambda grid must be strictly increasing")
    out = []
    for lam in lambdas:
        try:
            out.append(max_gamma(frakA, H2, lam, gamma_hi, tol, eps))
        except InfeasibleError:
            out.append(None)
    return out


def verify_gains_lmi(frakA, H2, Q, W, lam, gamma, tol=C.CERT_TOL, eps=C.LMI_EPS) -> GainCertificate:
    """Search ``P = diag(P1, P2)`` certifying fixed gains at ``(gamma, lam)``.

    The certificate is the top eigenvalue of the generator matrix at the
    returned ``P`` (after the same normalisation as the synthesis problem).

    Raises
    ------
    InfeasibleError
        When the certificate exceeds ``tol``.
    """
    frakA, H2 = _check_dims(frakA, H2)
    n, p = frakA.shape[0], H2.shape[0]
    Q = as_matrix(Q, "Q", rows=n, cols=p)
    W = as_matrix(W, "W", rows=p, cols=p)
    if not lam > 0 or gamma < 0:
        raise ValueError("need lambda > 0 and gamma >= 0")
    trace_bound = C.LMI_TRACE_SCALE * (n + p)
    P1, P2, cons = _lyapunov_vars(n, p, eps, trace_bound)
    t = cp.Variable()
    cons += _top_constraint(*_verification_parts(frakA, H2, Q, W, lam, gamma, P1, P2), t, trace_bound)
    _solve(cp.Problem(cp.Minimize(t), cons), "gain verification")
    P1v = 0.5 * (P1.value + P1.value.T)
    P2v = 0.5 * (P2.value + P2.value.T)
    cert = max_eig_sym(verification_block(frakA, H2, Q, W, lam, gamma, P1v, P2v))
    if cert > tol:
        raise InfeasibleError(f"gains not certified at gamma={gamma:g}, lambda={lam:g} "
                              f"(top eigenvalue {cert:.3e} > {tol:g})", violation=cert)
    return GainCertificate(P1=P1v, P2=P2v, certificate=cert, gamma=float(gamma), lam=float(lam))
