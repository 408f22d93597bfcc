"""Plant, exosystem and sampling data, plus the solvability checks.

The plant is

    x_p' = A_p x_p + B_p u + E_p w,   e_p = C_p x_p - F_p w,

driven by the exosystem w' = S w, with y_p only available at the arrival
times of a Poisson process of intensity ``lam``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import constants as C
from .errors import DimensionError
from .linalg import as_matrix, eig

__all__ = ["PlantModel", "ExoSystem", "SamplingProcess", "CheckResult",
           "check_stabilizable", "check_detectable", "check_nonresonance",
           "check_neutrally_stable", "check_assumptions", "numerical_rank"]


@dataclass(frozen=True)
class PlantModel:
    A_p: np.ndarray
    B_p: np.ndarray
    E_p: np.ndarray
    C_p: np.ndarray
    F_p: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A_p, "A_p", square=True)
        n = A.shape[0]
        B = as_matrix(self.B_p, "B_p", rows=n)
        E = as_matrix(self.E_p, "E_p", rows=n)
        Cp = as_matrix(self.C_p, "C_p", cols=n)
        F = as_matrix(self.F_p, "F_p", rows=Cp.shape[0], cols=E.shape[1])
        for name, val in zip(("A_p", "B_p", "E_p", "C_p", "F_p"), (A, B, E, Cp, F)):
            object.__setattr__(self, name, val)

    @property
    def n_p(self):
        return self.A_p.shape[0]

    @property
    def m_p(self):
        return self.B_p.shape[1]

    @property
    def p(self):
        return self.C_p.shape[0]

    @property
    def q(self):
        return self.E_p.shape[1]


@dataclass(frozen=True)
class ExoSystem:
    S: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "S", as_matrix(self.S, "S", square=True))

    @property
    def q(self):
        return self.S.shape[0]


@dataclass(frozen=True)
class SamplingProcess:
    """Poisson sampling with intensity ``lam`` (samples per unit time)."""

    lam: float

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"sampling intensity must be positive, got {self.lam}")

    @property
    def mean_interval(self):
        return 1.0 / self.lam


@dataclass
class CheckResult:
    """Outcome of a structural test.

    ``witness`` lists the offending eigenvalues when the test fails; a test
    may also pass with a ``warning`` attached.
    """

    ok: bool
    witness: list = field(default_factory=list)
    warning: str | None = None

    def __bool__(self):
        return bool(self.ok)

    def as_dict(self):
        return {"ok": bool(self.ok),
                "witness": [complex(z).__repr__() for z in self.witness],
                "warning": self.warning}


def numerical_rank(m, tol=C.RANK_TOL):
    s = np.linalg.svd(np.asarray(m, dtype=complex), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def _unique_eigs(w, tol=1e-9):
    out = []
    for z in w:
        if not any(abs(z - u) <= tol * max(1.0, abs(u)) for u in out):
            out.append(z)
    return out


def check_stabilizable(A, B, tol=C.TOL_STAB) -> CheckResult:
    """PBH test: rank [A - lam I, B] == n for every eigenvalue with Re lam >= -tol."""
    A = as_matrix(A, "A", square=True)
    B = as_matrix(B, "B", rows=A.shape[0])
    n = A.shape[0]
    bad = []
    for lam in _unique_eigs(eig(A).eigenvalues):
        if lam.real < -tol:
            continue
        if numerical_rank(np.hstack([A - lam * np.eye(n), B])) < n:
            bad.append(complex(lam))
    return CheckResult(not bad, bad)


def check_detectable(A, Cm, tol=C.TOL_STAB) -> CheckResult:
    A = as_matrix(A, "A", square=True)
    Cm = as_matrix(Cm, "C", cols=A.shape[0])
    return check_stabilizable(A.T, Cm.T, tol)


def check_nonresonance(plant: PlantModel, exo: ExoSystem) -> CheckResult:
    """Full rank of [[A_p - lam I, B_p], [C_p, 0]] at every eigenvalue of S."""
    if exo.q != plant.q:
        raise DimensionError(f"S is {exo.q}x{exo.q} but E_p has {plant.q} columns")
    n, m, p = plant.n_p, plant.m_p, plant.p
    target = min(n + p, n + m)
    bad = []
    for lam in _unique_eigs(eig(exo.S).eigenvalues):
        top = np.hstack([plant.A_p - lam * np.eye(n), plant.B_p])
        bottom = np.hstack([plant.C_p, np.zeros((p, m))])
        if numerical_rank(np.vstack([top, bottom])) < target:
            bad.append(complex(lam))
    return CheckResult(not bad, bad)


def check_neutrally_stable(exo: ExoSystem, tol=C.TOL_NEUTRAL) -> CheckResult:
    """Eigenvalues on the imaginary axis and S diagonalizable.

    A matrix with all eigenvalues on the axis but a non-trivial Jordan block
    (ramp generators such as [[0, 1], [0, 0]]) passes with a warning.
    """
    w = eig(exo.S).eigenvalues
    off_axis = [complex(z) for z in w if abs(z.real) > tol]
    if off_axis:
        return CheckResult(False, off_axis)
    _, vecs = np.linalg.eig(exo.S)
    cond = np.linalg.cond(vecs)
    if not np.isfinite(cond) or cond > C.DEFECTIVE_COND:
        msg = "S is not diagonalizable (Jordan block on the imaginary axis); accepted"
        warnings.warn(msg, stacklevel=2)
        return CheckResult(True, [], warning=msg)
    return CheckResult(True)


def check_assumptions(plant: PlantModel, exo: ExoSystem) -> dict[str, CheckResult]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        neutral = check_neutrally_stable(exo)
    return {
        "stabilizable": check_stabilizable(plant.A_p, plant.B_p),
        "detectable": check_detectable(plant.A_p, plant.C_p),
        "nonresonance": check_nonresonance(plant, exo),
        "neutrally_stable": neutral,
    }
