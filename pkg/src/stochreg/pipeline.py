"""Glue between a problem configuration and the design/simulation stages."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .io import ProblemConfig
from .lmi import (LmiSolution, build_synthesis_lmi, max_gamma, recover_observer_gains,
                  solve_sdp_feasibility)
from .model import check_assumptions
from .pdmp import ClosedLoop, assemble_closed_loop
from .synthesis import (AugmentedSystem, FrancisSolution, InternalModel, RegulatorParams,
                        StabilizerParams, assemble_augmented, build_internal_model,
                        build_observer_matrices, design_stabilizer, solve_francis)


@dataclass
class Front:
    """Everything upstream of the LMI."""

    internal_model: InternalModel
    stabilizer: StabilizerParams
    aug: AugmentedSystem
    francis: FrancisSolution


@dataclass
class Design:
    front: Front
    lmi: LmiSolution
    gamma: float
    lam: float
    regulator: RegulatorParams


def internal_model_from(cfg: ProblemConfig) -> InternalModel:
    if cfg.G1 is not None and cfg.G2 is not None and cfg.K is not None:
        return InternalModel(G1=cfg.G1, G2=cfg.G2, K=cfg.K)
    return build_internal_model(cfg.exo, cfg.plant.p, cfg.plant.m_p, G2_override=cfg.G2,
                                K_override=cfg.K, G1_override=cfg.G1)


def assumptions(cfg: ProblemConfig):
    return check_assumptions(cfg.plant, cfg.exo)


def front_end(cfg: ProblemConfig, regulator: RegulatorParams | None = None) -> Front:
    """Internal model, stabilizer, augmented matrices and Francis solution."""
    if regulator is not None:
        im, stab = regulator.internal_model, regulator.stabilizer
    else:
        im = internal_model_from(cfg)
        if cfg.stabilizer is not None:
            stab = cfg.stabilizer
        else:
            stab = design_stabilizer(cfg.plant, im, cfg.beta_target, D_zeta=cfg.D_zeta)
    aug = assemble_augmented(cfg.plant, im, stab)
    fr = solve_francis(aug, im, cfg.exo, cfg.plant.F_p, stab=stab)
    return Front(internal_model=im, stabilizer=stab, aug=aug, francis=fr)


def synthesize(cfg: ProblemConfig, gamma=None, lam=None, front: Front | None = None) -> Design:
    """Observer gains at a fixed ``gamma`` or at the largest feasible one.

    Raises ``InfeasibleError`` when no gains exist.
    """
    front = front or front_end(cfg)
    lam = cfg.lam if lam is None else float(lam)
    gamma = cfg.gamma if gamma is None else gamma
    aug = front.aug
    if gamma == "maximize":
        gamma = max_gamma(aug.frakA, aug.H2, lam, eps=cfg.epsilon)
    sol = solve_sdp_feasibility(build_synthesis_lmi(aug.frakA, aug.H2, lam, float(gamma),
                                                    cfg.epsilon))
    Q, W = recover_observer_gains(sol, aug.H2)
    return Design(front=front, lmi=sol, gamma=float(gamma), lam=lam,
                  regulator=regulator_from_gains(front, Q, W))


def regulator_from_gains(front: Front, Q, W) -> RegulatorParams:
    return RegulatorParams(internal_model=front.internal_model, stabilizer=front.stabilizer,
                           observer=build_observer_matrices(front.aug, Q, W))


def closed_loop(cfg: ProblemConfig, regulator: RegulatorParams, front: Front | None = None) -> ClosedLoop:
    front = front or front_end(cfg, regulator)
    return assemble_closed_loop(cfg.plant, cfg.exo, regulator, front.francis, frakA=front.aug.frakA)


def initial_state(cfg: ProblemConfig, cl: ClosedLoop, x_p0=None, w0=None):
    """Original-coordinate initial state; regulator states start at zero."""
    x = np.zeros(cl.d_orig)
    sl = cl.slices()
    x[sl["w"]] = cfg.w0 if w0 is None else w0
    x[sl["x_p"]] = cfg.x_p0 if x_p0 is None else x_p0
    return x
