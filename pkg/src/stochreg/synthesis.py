"""Regulator construction: internal model, stabilizer, Francis equations
and the structural matrices of the hybrid observer.

State ordering of the augmented plant is ``x_alpha = (x_p, zeta, z)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from . import constants as C
from .errors import DimensionError, SynthesisError, AssumptionError
from .linalg import as_matrix, eig, lstsq
from .model import ExoSystem, PlantModel, check_stabilizable, numerical_rank

__all__ = [
    "InternalModel", "StabilizerParams", "ObserverParams", "AugmentedSystem",
    "FrancisSolution", "build_internal_model", "solve_regulator_equations",
    "place_poles_si", "default_pole_spec", "design_stabilizer",
    "assemble_augmented", "solve_francis", "build_observer_matrices",
    "controllability_matrix", "vec", "unvec",
]


def vec(m):
    """Column-stacking vectorisation, so that vec(A X B) = kron(B.T, A) vec(X)."""
    return np.asarray(m, dtype=float).reshape(-1, order="F")


def unvec(v, shape):
    return np.asarray(v, dtype=float).reshape(shape, order="F")


def controllability_matrix(A, B):
    A = as_matrix(A, "A", square=True)
    B = as_matrix(B, "B", rows=A.shape[0])
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


@dataclass(frozen=True)
class InternalModel:
    G1: np.ndarray
    G2: np.ndarray
    K: np.ndarray

    @property
    def n_z(self):
        return self.G1.shape[0]


@dataclass(frozen=True)
class StabilizerParams:
    A_zeta: np.ndarray
    B_zeta: np.ndarray
    C_zeta: np.ndarray
    D_zeta: np.ndarray

    @property
    def n_zeta(self):
        return self.A_zeta.shape[0]


@dataclass(frozen=True)
class ObserverParams:
    T: np.ndarray
    L1: np.ndarray
    L2: np.ndarray
    H: np.ndarray
    H2: np.ndarray
    Q: np.ndarray
    W: np.ndarray

    @property
    def n_chi(self):
        return self.T.shape[0]


@dataclass(frozen=True)
class AugmentedSystem:
    """Stabilizer-plant-internal-model cascade in ``(x_p, zeta, z)`` order."""

    A_cl: np.ndarray
    B_cl: np.ndarray
    E_cl: np.ndarray
    H1: np.ndarray
    frakA: np.ndarray
    frakAc: np.ndarray
    frakBc: np.ndarray
    H2: np.ndarray
    n_p: int
    n_zeta: int
    n_z: int
    beta_achieved: float

    @property
    def n(self):
        return self.frakA.shape[0]

    @property
    def p(self):
        return self.H2.shape[0]

    @property
    def is_hurwitz(self):
        return self.beta_achieved > 0


@dataclass(frozen=True)
class FrancisSolution:
    X_p: np.ndarray
    R: np.ndarray
    X_M: np.ndarray
    Z: np.ndarray
    residual: float


def _controllable_column(S):
    q = S.shape[0]
    candidates = [np.eye(q)[:, [-1]], np.ones((q, 1))]
    for g in candidates:
        if numerical_rank(controllability_matrix(S, g)) == q:
            return g
    raise SynthesisError("no single-column input makes the exosystem copy controllable; "
                         "supply G2 explicitly")


def build_internal_model(exo: ExoSystem, p: int, m_p: int = 1, G2_override=None,
                         K_override=None, G1_override=None) -> InternalModel:
    """One copy of the exosystem per regulated error channel.

    ``G1 = diag(S, ..., S)`` (p copies). Without an override ``G2`` feeds
    each copy through a column that makes it controllable, and ``K`` reads
    the first state of each copy.
    """
    if p < 1:
        raise DimensionError(f"need at least one error channel, got p={p}")
    S = exo.S
    q = S.shape[0]
    if G1_override is not None:
        G1 = as_matrix(G1_override, "G1", square=True)
        missing = [lam for lam in eig(S).eigenvalues
                   if np.min(np.abs(eig(G1).eigenvalues - lam)) > 1e-6]
        if missing:
            raise SynthesisError(f"G1 does not contain the exosystem modes {missing}")
    else:
        G1 = block_diag(*([S] * p))
    n_z = G1.shape[0]
    if G2_override is not None:
        G2 = as_matrix(G2_override, "G2", rows=n_z, cols=p)
    elif G1_override is not None:
        raise SynthesisError("a custom G1 needs an explicit G2")
    else:
        G2 = block_diag(*([_controllable_column(S)] * p))
    if K_override is not None:
        K = as_matrix(K_override, "K", rows=m_p, cols=n_z)
    else:
        K = np.zeros((m_p, n_z))
        for i in range(min(m_p, p)):
            K[i, i * q] = 1.0
    ctrb = check_stabilizable(G1, G2, tol=np.inf)
    if not ctrb:
        raise SynthesisError(f"(G1, G2) is not controllable; uncontrollable modes {ctrb.witness}")
    return InternalModel(G1=G1, G2=G2, K=K)


def _inputs_norm(*mats):
    return max(float(np.linalg.norm(m)) for m in mats)


def solve_regulator_equations(plant: PlantModel, exo: ExoSystem):
    """Solve ``X_p S = A_p X_p + B_p R + E_p``, ``C_p X_p = F_p``.

    Both equations are vectorised into a single linear system and solved in
    the minimum-norm least-squares sense.

    Returns
    -------
    X_p, R, residual
    """
    A, B, E, Cp, F, S = plant.A_p, plant.B_p, plant.E_p, plant.C_p, plant.F_p, exo.S
    n, m, p, q = plant.n_p, plant.m_p, plant.p, exo.q
    if q != plant.q:
        raise DimensionError(f"S is {q}x{q} but E_p has {plant.q} columns")
    Iq = np.eye(q)
    top = np.hstack([np.kron(S.T, np.eye(n)) - np.kron(Iq, A), -np.kron(Iq, B)])
    bottom = np.hstack([np.kron(Iq, Cp), np.zeros((p * q, m * q))])
    sol = lstsq(np.vstack([top, bottom]), np.concatenate([vec(E), vec(F)]))
    X = unvec(sol[: n * q], (n, q))
    R = unvec(sol[n * q:], (m, q))
    residual = max(np.linalg.norm(X @ S - A @ X - B @ R - E), np.linalg.norm(Cp @ X - F))
    if residual > C.REGULATOR_RTOL * (1.0 + _inputs_norm(A, B, E, Cp, F, S)):
        raise AssumptionError(f"regulator equations unsolvable (residual {residual:.3e}): "
                              "resonance or inconsistent data")
    return X, R, float(residual)


def place_poles_si(A, b, desired):
    """Single-input pole placement by Ackermann's formula.

    Returns the row gain ``k`` with ``eig(A + b k) == desired``; note the
    plus sign.
    """
    A = as_matrix(A, "A", square=True)
    n = A.shape[0]
    b = as_matrix(b, "b", rows=n, cols=1)
    desired = np.asarray(desired, dtype=complex).ravel()
    if desired.size != n:
        raise DimensionError(f"need {n} poles, got {desired.size}")
    remaining = list(desired)
    while remaining:
        z = remaining.pop(0)
        if abs(z.imag) <= 1e-12 * max(1.0, abs(z)):
            continue
        idx = [i for i, u in enumerate(remaining) if abs(u - np.conj(z)) <= 1e-9 * max(1.0, abs(z))]
        if not idx:
            raise ValueError(f"pole set not closed under conjugation: {z} has no partner")
        remaining.pop(idx[0])
    ctrb = controllability_matrix(A, b)
    if numerical_rank(ctrb) < n:
        raise SynthesisError("(A, b) is not controllable")
    coeffs = np.real(np.poly(desired))
    phi = np.zeros_like(A)
    for c in coeffs:
        phi = phi @ A + c * np.eye(n)
    y = np.linalg.solve(ctrb.T, np.eye(n)[:, -1])
    return -(y @ phi).reshape(1, n)


def default_pole_spec(eigs, beta):
    """Move modes with real part above ``-beta`` into ``(-2 beta, -beta)``.

    Imaginary parts are kept; distinct real modes / conjugate pairs get
    distinct real parts so the closed loop stays non-defective. Modes already
    faster than ``-beta`` are left in place.
    """
    eigs = np.asarray(eigs, dtype=complex)
    keep = [z for z in eigs if z.real <= -beta]
    slow = [z for z in eigs if z.real > -beta]
    groups = []
    for z in sorted(slow, key=lambda u: (-u.real, abs(u.imag))):
        if z.imag < -1e-12:
            continue
        groups.append(z)
    out = list(keep)
    k = len(groups)
    for j, z in enumerate(groups):
        re = -beta * (1.0 + (j + 1) / (k + 1))
        if abs(z.imag) > 1e-12:
            out += [complex(re, abs(z.imag)), complex(re, -abs(z.imag))]
        else:
            out.append(complex(re, 0.0))
    return np.array(out)


def _design_blocks(plant, im, D_zeta):
    A = np.block([[plant.A_p, plant.B_p @ D_zeta @ im.K],
                  [im.G2 @ plant.C_p, im.G1]])
    B = np.vstack([plant.B_p, np.zeros((im.n_z, plant.m_p))])
    Cm = np.hstack([np.zeros((im.K.shape[0], plant.n_p)), im.K])
    return A, B, Cm


def design_stabilizer(plant: PlantModel, im: InternalModel, beta_target: float,
                      D_zeta=None, pole_spec=None) -> StabilizerParams:
    """Observer-based stabilizer by separate controller/observer placement.

    With ``A = [[A_p, B_p D_zeta K], [G2 C_p, G1]]``, ``B = [B_p; 0]`` and
    ``C = [0, K]``, places ``A + B C_zeta`` at the controller poles and
    ``A - B_zeta C`` at the observer poles, then sets
    ``A_zeta = A + B C_zeta - B_zeta C``.

    Parameters
    ----------
    beta_target : float
        Required decay rate; every default pole has real part below it.
    D_zeta : array_like, optional
        Feedthrough, ``m_p x m_p``; zero by default.
    pole_spec : (controller_poles, observer_poles), optional
        Explicit pole sets overriding the default rule (observer twice as fast).
    """
    if plant.m_p != 1 or plant.p != 1 or im.K.shape[0] != 1:
        raise SynthesisError("stabilizer synthesis supports single-input, single-error "
                             "plants only; supply A_zeta..D_zeta for MIMO problems")
    if beta_target <= 0:
        raise ValueError("beta_target must be positive")
    D = np.zeros((1, 1)) if D_zeta is None else as_matrix(D_zeta, "D_zeta", rows=1, cols=1)
    A, B, Cm = _design_blocks(plant, im, D)
    stab = check_stabilizable(A, B)
    if not stab:
        raise SynthesisError(f"composite pair (A, B) not stabilizable; modes {stab.witness}")
    det = check_stabilizable(A.T, Cm.T)
    if not det:
        raise SynthesisError(f"composite pair (A, C) not detectable; modes {det.witness}")
    if pole_spec is None:
        ctrl = default_pole_spec(eig(A).eigenvalues, beta_target)
        obs = 2.0 * ctrl
    else:
        ctrl, obs = (np.asarray(s, dtype=complex) for s in pole_spec)
    C_zeta = place_poles_si(A, B, ctrl)
    B_zeta = -place_poles_si(A.T, Cm.T, obs).T
    A_zeta = A + B @ C_zeta - B_zeta @ Cm
    return StabilizerParams(A_zeta=A_zeta, B_zeta=B_zeta, C_zeta=C_zeta, D_zeta=D)


def assemble_augmented(plant: PlantModel, im: InternalModel, stab: StabilizerParams,
                       require_hurwitz=True) -> AugmentedSystem:
    n_p, m_p, p, q = plant.n_p, plant.m_p, plant.p, plant.q
    n_z = im.n_z
    n_zeta = stab.n_zeta
    if n_zeta == 0:
        raise DimensionError("stabilizer must have at least one state")
    as_matrix(stab.A_zeta, "A_zeta", square=True)
    as_matrix(stab.B_zeta, "B_zeta", rows=n_zeta, cols=im.K.shape[0])
    as_matrix(stab.C_zeta, "C_zeta", rows=m_p, cols=n_zeta)
    as_matrix(stab.D_zeta, "D_zeta", rows=m_p, cols=im.K.shape[0])
    as_matrix(im.K, "K", rows=m_p, cols=n_z)
    as_matrix(im.G2, "G2", rows=n_z, cols=p)
    A_cl = np.block([[plant.A_p, plant.B_p @ stab.C_zeta],
                     [np.zeros((n_zeta, n_p)), stab.A_zeta]])
    B_cl = np.vstack([plant.B_p @ stab.D_zeta, stab.B_zeta]) @ im.K
    E_cl = np.vstack([plant.E_p, np.zeros((n_zeta, q))])
    H1 = np.hstack([plant.C_p, np.zeros((p, n_zeta))])
    nM = n_p + n_zeta
    frakA = np.block([[A_cl, B_cl], [np.zeros((n_z, nM)), im.G1]])
    frakBc = np.vstack([np.zeros((nM, p)), im.G2])
    H2 = np.hstack([H1, np.zeros((p, n_z))])
    frakAc = frakA + frakBc @ H2
    beta = -eig(frakAc).spectral_abscissa
    if require_hurwitz and beta <= 0:
        raise SynthesisError(f"augmented matrix is not Hurwitz (spectral abscissa {-beta:.4g})")
    return AugmentedSystem(A_cl=A_cl, B_cl=B_cl, E_cl=E_cl, H1=H1, frakA=frakA,
                           frakAc=frakAc, frakBc=frakBc, H2=H2, n_p=n_p, n_zeta=n_zeta,
                           n_z=n_z, beta_achieved=float(beta))


def solve_francis(aug: AugmentedSystem, im: InternalModel, exo: ExoSystem,
                  F_p, E_cl=None, stab: StabilizerParams | None = None) -> FrancisSolution:
    """Joint minimum-norm solution of

        X_M S = A_cl X_M + B_cl Z + E_cl,   H1 X_M = F_p,   Z S = G1 Z.

    ``R`` is reported as the steady-state plant input
    ``C_zeta X_zeta + D_zeta K Z`` when the stabilizer is given.
    """
    S = exo.S
    q = S.shape[0]
    E_cl = aug.E_cl if E_cl is None else as_matrix(E_cl, "E_cl", rows=aug.A_cl.shape[0], cols=q)
    F_p = as_matrix(F_p, "F_p", rows=aug.p, cols=q)
    nM = aug.A_cl.shape[0]
    n_z = aug.n_z
    Iq = np.eye(q)
    rows = [
        np.hstack([np.kron(S.T, np.eye(nM)) - np.kron(Iq, aug.A_cl), -np.kron(Iq, aug.B_cl)]),
        np.hstack([np.kron(Iq, aug.H1), np.zeros((aug.p * q, n_z * q))]),
        np.hstack([np.zeros((n_z * q, nM * q)), np.kron(S.T, np.eye(n_z)) - np.kron(Iq, im.G1)]),
    ]
    rhs = np.concatenate([vec(E_cl), vec(F_p), np.zeros(n_z * q)])
    sol = lstsq(np.vstack(rows), rhs)
    X_M = unvec(sol[: nM * q], (nM, q))
    Z = unvec(sol[nM * q:], (n_z, q))
    residual = max(np.linalg.norm(X_M @ S - aug.A_cl @ X_M - aug.B_cl @ Z - E_cl),
                   np.linalg.norm(aug.H1 @ X_M - F_p),
                   np.linalg.norm(Z @ S - im.G1 @ Z))
    scale = 1.0 + _inputs_norm(S, aug.A_cl, aug.B_cl, E_cl, aug.H1, F_p, im.G1)
    if residual > C.FRANCIS_RTOL * scale:
        raise SynthesisError(f"Francis equations have no solution (residual {residual:.3e})")
    X_p = X_M[: aug.n_p]
    if stab is not None:
        R = stab.C_zeta @ X_M[aug.n_p:] + stab.D_zeta @ im.K @ Z
    else:
        R = im.K @ Z
    return FrancisSolution(X_p=X_p, R=R, X_M=X_M, Z=Z, residual=float(residual))


def build_observer_matrices(aug: AugmentedSystem, Q, W) -> ObserverParams:
    """Hybrid observer matrices for given gains ``Q`` (n x p) and ``W`` (p x p)."""
    n, p = aug.n, aug.p
    Q = as_matrix(Q, "Q", rows=n, cols=p)
    W = as_matrix(W, "W", rows=p, cols=p)
    T = np.block([[aug.frakAc, Q], [np.zeros((p, n)), W]])
    L1 = np.block([[np.eye(n), np.zeros((n, p))], [-aug.H2, np.zeros((p, p))]])
    L2 = np.vstack([np.zeros((n, p)), np.eye(p)])
    H = np.hstack([aug.H2, np.zeros((p, p))])
    return ObserverParams(T=T, L1=L1, L2=L2, H=H, H2=aug.H2.copy(), Q=Q, W=W)


@dataclass(frozen=True)
class RegulatorParams:
    """Everything the controller needs at run time."""

    internal_model: InternalModel
    stabilizer: StabilizerParams
    observer: ObserverParams
