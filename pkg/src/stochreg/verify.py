"""Monte Carlo and certificate checks of mean exponential stability."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import kernels
from .errors import StochregError
from .lmi import MBlock
from .linalg import as_matrix, min_eig_sym
from .pdmp import ClosedLoop, sample_intervals, sample_raw_intervals, simulate, transform_state

# one-sample KS critical value at the 1% level is 1.63/sqrt(n) for large n
KS_COEF_1PCT = 1.63


@dataclass
class MomentCurve:
    """Ensemble estimate of ``E[|x~(t)|^2]`` on the output grid.

    ``ep_m``/``ep_stderr`` carry the same statistics for ``|e_p(t)|^2``.
    """

    grid: np.ndarray
    m: np.ndarray
    stderr: np.ndarray
    n_trajectories: int
    ep_m: np.ndarray
    ep_stderr: np.ndarray


@dataclass
class DecayEstimate:
    gamma_hat: float
    window: tuple
    r_squared: float
    gamma_0_theory: float


@dataclass
class DynkinResult:
    max_UV: float
    min_eig: float

    def passes(self, tol=1e-6):
        return self.max_UV <= tol and -self.min_eig <= tol


@dataclass
class SamplerReport:
    lam: float
    n: int
    mean: float
    variance: float
    ks_statistic: float
    ks_critical: float
    chi2_statistic: float
    chi2_pvalue: float
    chi2_dof: int

    @property
    def mean_ok(self):
        return abs(self.mean - 1.0 / self.lam) <= 0.05 / self.lam

    @property
    def variance_ok(self):
        v = 1.0 / self.lam ** 2
        return 0.9 * v <= self.variance <= 1.1 * v

    @property
    def ks_ok(self):
        return self.ks_statistic < self.ks_critical

    @property
    def chi2_ok(self):
        return self.chi2_pvalue > 0.01

    @property
    def passes(self):
        return self.mean_ok and self.variance_ok and self.ks_ok and self.chi2_ok


def gamma_0(beta, gamma):
    """Guaranteed mean-square rate ``min(2 beta, gamma / 2)``."""
    return min(2.0 * beta, 0.5 * gamma)


def monte_carlo_moment(cl: ClosedLoop, x0, N, horizon, output_dt, lam, seed,
                       x0_coords="original", workers=None) -> MomentCurve:
    """Second moment of the error state over ``N`` independent sample paths.

    Trajectory ``i`` draws its sampling times from stream ``(seed, i)``, and
    the reduction runs in index order, so the result does not depend on
    ``workers``.
    """
    N = int(N)
    if N < 2:
        raise ValueError("need N >= 2 trajectories")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0_coords == "original":
        x0 = transform_state(cl, x0)
    elif x0_coords != "transformed":
        raise ValueError("x0_coords must be 'original' or 'transformed'")
    phi = kernels.expm_pade(cl.F_tr * float(output_dt))

    def one(i):
        path = simulate(cl, x0, horizon, output_dt, lam, seed, coords="transformed",
                        stream=i, phi_dt=phi)
        return (np.einsum("ij,ij->i", path.states, path.states),
                np.einsum("ij,ij->i", path.e_p, path.e_p), path.grid)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=int(workers)) as ex:
            res = list(ex.map(one, range(N)))
    else:
        res = [one(i) for i in range(N)]
    grid = res[0][2]
    sq = np.stack([r[0] for r in res])
    ep = np.stack([r[1] for r in res])
    rt = math.sqrt(N)
    return MomentCurve(grid=grid, m=sq.mean(axis=0), stderr=sq.std(axis=0, ddof=1) / rt,
                       n_trajectories=N, ep_m=ep.mean(axis=0),
                       ep_stderr=ep.std(axis=0, ddof=1) / rt)


def fit_decay_rate(curve, window=None, gamma_0_theory=float("nan"), values=None) -> DecayEstimate:
    """Least-squares slope of ``ln m(t)`` over ``window``.

    Parameters
    ----------
    curve : MomentCurve or (grid, m) pair
    window : (t_start, t_end), optional
        Defaults to the whole grid.
    values : array, optional
        Fit these moments instead of ``curve.m`` (e.g. ``curve.ep_m``).
    """
    if isinstance(curve, MomentCurve):
        grid, m = curve.grid, curve.m
    else:
        grid, m = (np.asarray(a, dtype=float) for a in curve)
    if values is not None:
        m = np.asarray(values, dtype=float)
    if window is None:
        window = (float(grid[0]), float(grid[-1]))
    t0, t1 = float(window[0]), float(window[1])
    if t1 <= t0 or t0 < grid[0] - 1e-12 or t1 > grid[-1] + 1e-12:
        raise ValueError(f"window {window} must lie within [{grid[0]}, {grid[-1]}]")
    sel = (grid >= t0 - 1e-12) & (grid <= t1 + 1e-12)
    if sel.sum() < 2:
        raise ValueError("window holds fewer than two grid points")
    y = m[sel]
    if np.any(y <= 0):
        raise StochregError("moments must be strictly positive on the fit window")
    t = grid[sel]
    ly = np.log(y)
    fit = stats.linregress(t, ly)
    resid = ly - (fit.intercept + fit.slope * t)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return DecayEstimate(gamma_hat=-float(fit.slope), window=(t0, t1), r_squared=r2,
                         gamma_0_theory=float(gamma_0_theory))


def mes_verdict(curve: MomentCurve, g0, slack=0.5, window=None, values=None):
    """Half-rate acceptance test of an ensemble.

    Passes when the fitted rate is at least ``slack * g0`` and
    ``m(T)/m(0) <= exp(-g0 * T * slack)``.
    """
    m = curve.m if values is None else np.asarray(values)
    est = fit_decay_rate(curve, window, g0, values=values)
    T = float(curve.grid[-1] - curve.grid[0])
    ratio = float(m[-1] / m[0]) if m[0] > 0 else float("nan")
    bound = math.exp(-g0 * T * slack)
    ok = est.gamma_hat >= slack * g0 and ratio <= bound
    return {"gamma_hat": est.gamma_hat, "gamma_0_theory": g0, "threshold": slack * g0,
            "ratio": ratio, "ratio_bound": bound, "r_squared": est.r_squared,
            "window": list(est.window), "pass": bool(ok)}


def generator_matrix(mb: MBlock, P1, P2, lam, gamma=0.0):
    """``He(P M) + lam (N'PN - P) + gamma P`` with ``P = diag(P1, P2)``."""
    P1 = as_matrix(P1, "P1", square=True)
    P2 = as_matrix(P2, "P2", square=True)
    n, p = P1.shape[0], P2.shape[0]
    if mb.M.shape != (n + p, n + p):
        raise ValueError("P1/P2 do not match the M block")
    P = np.zeros((n + p, n + p))
    P[:n, :n] = P1
    P[n:, n:] = P2
    PM = P @ mb.M
    G = PM + PM.T + lam * (mb.N.T @ P @ mb.N - P) + gamma * P
    return 0.5 * (G + G.T)


def dynkin_check(mb: MBlock, P1, P2, lam, n_samples, seed, gamma=0.0) -> DynkinResult:
    """Largest value of the generator of ``V = x'Px`` on random unit vectors.

    ``min_eig`` is the smallest eigenvalue of minus the generator matrix,
    the exact version of the same test.
    """
    G = generator_matrix(mb, P1, P2, lam, gamma)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    x = rng.standard_normal((int(n_samples), G.shape[0]))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    uv = np.einsum("ij,jk,ik->i", x, G, x)
    return DynkinResult(max_UV=float(uv.max()), min_eig=float(min_eig_sym(-G)))


def _poisson_chi2(counts, mu):
    kmax = int(counts.max())
    obs = np.bincount(counts, minlength=kmax + 1).astype(float)
    n = counts.size
    pmf = stats.poisson.pmf(np.arange(kmax + 1), mu)
    pmf[-1] += stats.poisson.sf(kmax, mu)
    exp = n * pmf
    # pool both tails until every expected count is at least 5
    lo, hi = 0, kmax
    while lo < hi and exp[lo] < 5:
        exp[lo + 1] += exp[lo]
        obs[lo + 1] += obs[lo]
        lo += 1
    while hi > lo and exp[hi] < 5:
        exp[hi - 1] += exp[hi]
        obs[hi - 1] += obs[hi]
        hi -= 1
    o, e = obs[lo: hi + 1], exp[lo: hi + 1]
    if o.size < 2:
        return 0.0, 1.0, 0
    res = stats.chisquare(o, e * o.sum() / e.sum())
    return float(res.statistic), float(res.pvalue), int(o.size - 1)


def sampler_stats(lam, n, seed, t=1.0) -> SamplerReport:
    """Distribution tests of the sampling process.

    Intervals: mean, variance and the KS distance to ``Exp(lam)``. Counts:
    ``N_t`` over ``n`` disjoint windows of length ``t`` of one long path,
    which are i.i.d. Poisson(``lam t``), tested by chi-squared.
    """
    n = int(n)
    if n < 1000:
        raise ValueError("sampler_stats needs n >= 1000")
    d = sample_raw_intervals(lam, n, seed)
    ks = stats.kstest(d, "expon", args=(0.0, 1.0 / lam))
    jumps = sample_intervals(lam, n * t, seed + 1 if isinstance(seed, int) else seed)
    counts = np.bincount(np.minimum((jumps // t).astype(np.int64), n - 1), minlength=n)
    chi2, pval, dof = _poisson_chi2(counts, lam * t)
    return SamplerReport(lam=float(lam), n=n, mean=float(d.mean()), variance=float(d.var(ddof=1)),
                         ks_statistic=float(ks.statistic), ks_critical=KS_COEF_1PCT / math.sqrt(n),
                         chi2_statistic=chi2, chi2_pvalue=pval, chi2_dof=dof)
