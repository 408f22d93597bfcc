"""Exact simulation of the sampled closed loop as a piecewise deterministic
Markov process.

Between measurement times the stacked state follows ``x' = F x``; at each
sample the observer resets through ``x+ = J x`` using the left limit. Both
the original coordinates ``(w, x_p, zeta, z, chi)`` and the error
coordinates ``(xa~, chi1~, chi2~)`` are supported.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DimensionError
from .lmi import build_M
from .model import ExoSystem, PlantModel
from .synthesis import FrancisSolution, RegulatorParams

COORDS = ("original", "transformed")


@dataclass(frozen=True)
class ClosedLoop:
    """Flow and jump matrices of the interconnection in both coordinate systems.

    ``transform`` maps original to error coordinates. The error coordinates
    drop ``w``, so going back needs ``w`` as well (see ``inverse_transform``).
    """

    F_orig: np.ndarray
    J_orig: np.ndarray
    F_tr: np.ndarray
    J_tr: np.ndarray
    transform: np.ndarray
    X_full: np.ndarray
    H2: np.ndarray
    C_ep_orig: np.ndarray
    C_ep_tr: np.ndarray
    C_yp: np.ndarray
    C_yw: np.ndarray
    dims: dict = field(default_factory=dict)

    @property
    def d_orig(self):
        return self.F_orig.shape[0]

    @property
    def d_tr(self):
        return self.F_tr.shape[0]

    def matrices(self, coords):
        if coords == "original":
            return self.F_orig, self.J_orig, self.C_ep_orig
        if coords == "transformed":
            return self.F_tr, self.J_tr, self.C_ep_tr
        raise ValueError(f"coords must be one of {COORDS}, got {coords!r}")

    def slices(self):
        """Named slices into the original-coordinate state vector."""
        d = self.dims
        out, k = {}, 0
        for name in ("w", "x_p", "zeta", "z", "chi"):
            out[name] = slice(k, k + d[name])
            k += d[name]
        return out


@dataclass
class SamplePath:
    jump_times: np.ndarray
    grid: np.ndarray
    states: np.ndarray
    e_p: np.ndarray
    jump_flags: np.ndarray
    seed: int | None
    coords: str


def _rng(seed, stream=None):
    if stream is None:
        ss = np.random.SeedSequence(seed)
    else:
        ss = np.random.SeedSequence(seed, spawn_key=(int(stream),))
    return np.random.Philox(ss)


def trajectory_seed(seed, index):
    """Seed material for trajectory ``index``: ``SeedSequence(seed, spawn_key=(index,))``.

    Streams depend only on ``(seed, index)``, so ensembles are independent of
    how trajectories are scheduled.
    """
    return np.random.SeedSequence(seed, spawn_key=(int(index),))


def uniform_open(bitgen, n):
    """``n`` uniforms on the open interval (0, 1) from 53-bit raw draws."""
    k = bitgen.random_raw(n) >> np.uint64(11)
    return (k.astype(np.float64) + 0.5) * 2.0 ** -53


def sample_intervals(lam, horizon, seed, stream=None):
    """Poisson sampling times on ``(0, horizon]``.

    Intervals are ``-ln(U)/lam`` with ``U`` uniform on (0, 1), drawn from a
    Philox stream keyed by ``seed`` (and ``stream`` for ensembles). Draws are
    consumed in order, so the result is a prefix-stable function of the seed.
    """
    lam = float(lam)
    horizon = float(horizon)
    if not lam > 0 or not horizon > 0:
        raise ValueError("need lambda > 0 and horizon > 0")
    bg = _rng(seed, stream)
    mean = lam * horizon
    chunk = int(mean + 5.0 * math.sqrt(mean) + 16)
    t = 0.0
    parts = []
    while True:
        d = -np.log(uniform_open(bg, chunk)) / lam
        c = t + np.cumsum(d)
        if c[-1] > horizon:
            parts.append(c[c <= horizon])
            break
        parts.append(c)
        t = c[-1]
    return np.concatenate(parts)


def sample_raw_intervals(lam, n, seed, stream=None):
    """The first ``n`` inter-sample intervals of the same stream."""
    if not lam > 0:
        raise ValueError("need lambda > 0")
    return -np.log(uniform_open(_rng(seed, stream), int(n))) / float(lam)


def assemble_closed_loop(plant: PlantModel, exo: ExoSystem, regulator: RegulatorParams,
                         francis: FrancisSolution, frakA=None) -> ClosedLoop:
    im, st, ob = regulator.internal_model, regulator.stabilizer, regulator.observer
    q, n_p, p = plant.q, plant.n_p, plant.p
    n_zeta, n_z = st.A_zeta.shape[0], im.G1.shape[0]
    n = n_p + n_zeta + n_z
    n_chi = ob.T.shape[0]
    if exo.S.shape[0] != q:
        raise DimensionError(f"S is {exo.S.shape[0]}-dimensional but the plant expects q={q}")
    if n_chi != n + p or ob.H2.shape != (p, n):
        raise DimensionError(f"observer has dimension {n_chi}, expected {n + p}")
    if francis.X_M.shape != (n_p + n_zeta, q) or francis.Z.shape != (n_z, q):
        raise DimensionError("Francis solution does not match the closed-loop dimensions")

    dims = {"w": q, "x_p": n_p, "zeta": n_zeta, "z": n_z, "chi": n_chi, "n": n, "p": p}
    d = q + n + n_chi
    iw, ix, iz, izz, ic = (np.cumsum([0, q, n_p, n_zeta, n_z])).tolist()
    sw, sx = slice(iw, ix), slice(ix, iz)
    sz, szz, sc = slice(iz, izz), slice(izz, ic), slice(ic, d)
    K = im.K

    F = np.zeros((d, d))
    F[sw, sw] = exo.S
    F[sx, sw] = plant.E_p
    F[sx, sx] = plant.A_p
    F[sx, sz] = plant.B_p @ st.C_zeta
    F[sx, szz] = plant.B_p @ st.D_zeta @ K
    F[sz, sz] = st.A_zeta
    F[sz, szz] = st.B_zeta @ K
    F[szz, szz] = im.G1
    F[szz, sc] = im.G2 @ ob.H
    F[sc, sc] = ob.T

    Jo = np.eye(d)
    Jo[sc, :] = 0.0
    Jo[sc, sw] = -ob.L2 @ plant.F_p
    Jo[sc, sx] = ob.L2 @ plant.C_p
    Jo[sc, sc] = ob.L1

    frakBc = np.vstack([np.zeros((n_p + n_zeta, p)), im.G2])
    if frakA is None:
        # the x_alpha diagonal block of F is exactly frakA
        frakA = F[ix:ic, ix:ic].copy()
    frakAc = frakA + frakBc @ ob.H2
    mb = build_M(frakA, ob.H2, ob.Q, ob.W)
    F_tr = np.block([[frakAc, -frakBc @ ob.H], [np.zeros((n_chi, n)), mb.M]])
    J_tr = np.diag(np.concatenate([np.ones(2 * n), np.zeros(p)]))

    X_full = np.vstack([francis.X_M, francis.Z])
    Tm = np.zeros((2 * n + p, d))
    In = np.eye(n)
    Tm[:n, sw] = -X_full
    Tm[:n, ix:ic] = In
    Tm[n: 2 * n, sw] = -X_full
    Tm[n: 2 * n, ix:ic] = In
    Tm[n: 2 * n, ic: ic + n] = -In
    Tm[2 * n:, sw] = ob.H2 @ X_full
    Tm[2 * n:, ix:ic] = -ob.H2
    Tm[2 * n:, ic: ic + n] = ob.H2
    Tm[2 * n:, ic + n:] = np.eye(p)

    C_ep_orig = np.zeros((p, d))
    C_ep_orig[:, sw] = -plant.F_p
    C_ep_orig[:, sx] = plant.C_p
    C_ep_tr = np.hstack([ob.H2, np.zeros((p, n + p))])
    C_yp = np.zeros((p, d))
    C_yp[:, sx] = plant.C_p
    C_yw = np.zeros((p, d))
    C_yw[:, sw] = plant.F_p
    return ClosedLoop(F_orig=F, J_orig=Jo, F_tr=F_tr, J_tr=J_tr, transform=Tm, X_full=X_full,
                      H2=ob.H2.copy(), C_ep_orig=C_ep_orig, C_ep_tr=C_ep_tr, C_yp=C_yp,
                      C_yw=C_yw, dims=dims)


def transform_state(cl: ClosedLoop, x_orig):
    """Original to error coordinates; accepts a vector or rows of vectors."""
    x = np.asarray(x_orig, dtype=float)
    if x.shape[-1] != cl.d_orig:
        raise DimensionError(f"state has length {x.shape[-1]}, expected {cl.d_orig}")
    return x @ cl.transform.T


def inverse_transform(cl: ClosedLoop, x_tr, w):
    """Error coordinates plus exosystem state back to original coordinates."""
    x_tr = np.asarray(x_tr, dtype=float)
    w = np.asarray(w, dtype=float)
    n, p, q = cl.dims["n"], cl.dims["p"], cl.dims["w"]
    if x_tr.shape[-1] != 2 * n + p or w.shape[-1] != q:
        raise DimensionError("inverse_transform: dimension mismatch")
    xa = x_tr[..., :n]
    c1 = x_tr[..., n: 2 * n]
    c2 = x_tr[..., 2 * n:]
    x_alpha = xa + w @ cl.X_full.T
    chi1 = xa - c1
    chi2 = c2 + c1 @ cl.H2.T
    return np.concatenate([w, x_alpha, chi1, chi2], axis=-1)


def output_grid(horizon, output_dt):
    """Uniform grid ``k * output_dt`` closed by ``horizon`` itself."""
    horizon, output_dt = float(horizon), float(output_dt)
    if not horizon > 0 or not output_dt > 0:
        raise ValueError("need horizon > 0 and output_dt > 0")
    m = int(math.floor(horizon / output_dt + 1e-9))
    grid = np.arange(m + 1) * output_dt
    if grid[-1] >= horizon:
        grid[-1] = horizon
    elif horizon - grid[-1] > 1e-9 * output_dt:
        grid = np.append(grid, horizon)
    return grid


def simulate(cl: ClosedLoop, x0, horizon, output_dt, lam, seed, coords="original",
             jump_times=None, stream=None, phi_dt=None) -> SamplePath:
    """One exact sample path.

    Parameters
    ----------
    x0 : array
        Initial state in the chosen ``coords``.
    jump_times : array, optional
        Injected sampling times; when given, ``lam`` and ``seed`` are unused.
    phi_dt : array, optional
        Precomputed ``exp(F * output_dt)`` for the chosen coordinates.
    """
    F, J, Cep = cl.matrices(coords)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != F.shape[0]:
        raise DimensionError(f"x0 has length {x0.shape[0]}, expected {F.shape[0]} ({coords})")
    grid = output_grid(horizon, output_dt)
    if jump_times is None:
        jumps = sample_intervals(lam, grid[-1], seed, stream)
    else:
        jumps = np.asarray(jump_times, dtype=float).reshape(-1)
        if np.any(np.diff(jumps) <= 0):
            raise ValueError("jump_times must be strictly increasing")
        jumps = jumps[(jumps > 0) & (jumps <= grid[-1])]
    if phi_dt is None:
        phi_dt = kernels.expm_pade(F * float(output_dt))
    states, counts = kernels.propagate(F, J, x0, jumps, grid, phi_dt, float(output_dt))
    return SamplePath(jump_times=jumps, grid=grid, states=states, e_p=states @ Cep.T,
                      jump_flags=counts > 0, seed=seed, coords=coords)


def post_jump_states(cl: ClosedLoop, path: SamplePath):
    """Right limits at every jump, recomputed from the recorded grid states."""
    F, J, _ = cl.matrices(path.coords)
    out = []
    k = 0
    for i in range(1, path.grid.size):
        t = path.grid[i - 1]
        x = path.states[i - 1]
        while k < path.jump_times.size and path.jump_times[k] <= path.grid[i]:
            tj = path.jump_times[k]
            x = J @ (kernels.expm_pade(F * (tj - t)) @ x)
            out.append(x)
            t = tj
            k += 1
    return np.array(out).reshape(-1, F.shape[0])
