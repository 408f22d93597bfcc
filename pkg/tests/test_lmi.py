import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import scalar_lmi_boundary, scalar_lmi_min_eig
from stochreg import lmi
from stochreg.errors import InfeasibleError
from stochreg.linalg import eig, max_eig_sym
from stochreg.verify import generator_matrix

A1 = np.array([[-1.0]])
H1 = np.array([[1.0]])


def test_scalar_block_shape():
    prob = lmi.build_synthesis_lmi(A1, H1, 1.0, 0.1)
    assert (prob.n, prob.p) == (1, 1)
    b = prob.block(np.eye(1), np.eye(1), np.zeros((1, 1)), np.zeros((1, 1)))
    assert b.shape == (2, 2)


def test_lambda_enters_only_the_22_block():
    args = (np.eye(1) * 2, np.eye(1) * 3, np.ones((1, 1)), -np.ones((1, 1)))
    b0 = lmi.synthesis_block(A1, H1, 1.0, 0.0, *args)
    b1 = lmi.synthesis_block(A1, H1, 5.0, 0.0, *args)
    d = b1 - b0
    assert d[1, 1] == pytest.approx(-4.0 * 3) and np.count_nonzero(d) == 1


def test_example1_block_size(front1):
    prob = lmi.build_synthesis_lmi(front1.aug.frakA, front1.aug.H2, 2.0, 0.1)
    assert prob.block(np.eye(8), np.eye(1), np.zeros((8, 1)), np.zeros((1, 1))).shape == (9, 9)


def test_scalar_feasible_point_cross_checked_by_grid():
    sol = lmi.solve_sdp_feasibility(lmi.build_synthesis_lmi(A1, H1, 1.0, 0.1))
    assert sol.certificate < -1e-7
    assert scalar_lmi_min_eig(-1.0, 1.0, 1.0, 0.1) < 0


def test_scalar_far_gamma_infeasible():
    gamma = 1.0 + 2.0 * 1.0 + 10.0
    with pytest.raises(InfeasibleError) as err:
        lmi.solve_sdp_feasibility(lmi.build_synthesis_lmi(A1, H1, 1.0, gamma))
    assert err.value.violation > 0
    assert scalar_lmi_min_eig(-1.0, 1.0, 1.0, gamma) > 0


def test_solution_certificate_by_reconstruction(front1, design1):
    sol = design1.lmi
    blk = lmi.synthesis_block(front1.aug.frakA, front1.aug.H2, 2.0, 0.1, sol.P1, sol.P2,
                              sol.Qbar, sol.Rbar)
    assert max_eig_sym(0.5 * (blk + blk.T)) <= 1e-7
    assert np.linalg.eigvalsh(sol.P1).min() >= 1e-4 * (1 - 1e-6)
    assert np.linalg.eigvalsh(sol.P2).min() >= 1e-4 * (1 - 1e-6)
    assert np.allclose(sol.Q, np.linalg.solve(sol.P1, sol.Qbar))
    assert np.allclose(sol.W, np.linalg.solve(sol.P2, sol.Rbar) - front1.aug.H2 @ sol.Q)


def test_solver_is_deterministic(front1):
    a = lmi.solve_sdp_feasibility(lmi.build_synthesis_lmi(front1.aug.frakA, front1.aug.H2, 2, 0.1))
    b = lmi.solve_sdp_feasibility(lmi.build_synthesis_lmi(front1.aug.frakA, front1.aug.H2, 2, 0.1))
    assert np.array_equal(a.Q, b.Q) and a.certificate == b.certificate


def test_recover_roundtrip(rng):
    m = rng.normal(size=(3, 3))
    P1 = m @ m.T + np.eye(3)
    P2 = np.array([[2.0]])
    H2 = rng.normal(size=(1, 3))
    Q0 = rng.normal(size=(3, 1))
    W0 = np.array([[-1.5]])
    Rbar = P2 @ (W0 + H2 @ Q0)
    Q, W = lmi.recover_observer_gains_arrays(P1, P2, P1 @ Q0, Rbar, H2)
    assert np.abs(Q - Q0).max() < 1e-9 and np.abs(W - W0).max() < 1e-9
    Qi, Wi = lmi.recover_observer_gains_arrays(np.eye(3), np.eye(1), Q0, W0, H2)
    assert np.allclose(Qi, Q0) and np.allclose(Wi, W0 - H2 @ Q0)


def test_build_M_zero_gain():
    a = np.array([[0.0, 1.0], [-2.0, -3.0]])
    h = np.array([[1.0, 0.5]])
    mb = lmi.build_M(a, h, np.zeros((2, 1)), [[-0.7]])
    want = np.block([[a, np.zeros((2, 1))], [-h @ a + (-0.7) * h, np.array([[-0.7]])]])
    assert np.allclose(mb.M, want)
    assert np.array_equal(mb.N @ mb.N, mb.N) and np.linalg.norm(mb.N, 2) == 1.0


def test_build_M_published_gains(ex1, front1):
    mb = lmi.build_M(front1.aug.frakA, front1.aug.H2, ex1.published_gains["Q"], ex1.published_gains["W"])
    assert mb.M.shape == (9, 9)
    assert np.allclose(mb.R_w, ex1.published_gains["W"] + front1.aug.H2 @ ex1.published_gains["Q"])


def test_verification_block_is_shifted_generator(front1, design1):
    a, h = front1.aug.frakA, front1.aug.H2
    sol = design1.lmi
    Q, W = sol.Q, sol.W
    blk = lmi.verification_block(a, h, Q, W, 2.0, 0.1, sol.P1, sol.P2)
    G = generator_matrix(lmi.build_M(a, h, Q, W), sol.P1, sol.P2, 2.0, 0.1)
    assert np.allclose(0.5 * (blk + blk.T), G, atol=1e-8 * np.abs(G).max())


def test_max_gamma_example1(front1):
    g = lmi.max_gamma(front1.aug.frakA, front1.aug.H2, 2.0, check_monotone=True)
    assert g >= 0.1


def test_max_gamma_grows_with_lambda(front1):
    a, h = front1.aug.frakA, front1.aug.H2
    assert lmi.max_gamma(a, h, 4.0) >= lmi.max_gamma(a, h, 2.0)


@pytest.mark.parametrize("a, lam", [(-1.0, 1.0), (0.5, 4.0), (-0.2, 2.5)])
def test_max_gamma_scalar_matches_grid_oracle(a, lam):
    got = lmi.max_gamma([[a]], [[1.0]], lam, gamma_hi=20.0)
    want = scalar_lmi_boundary(a, 1.0, lam)
    assert abs(got - want) <= 2e-3


def test_max_gamma_infeasible_at_zero():
    # unstable scalar mode faster than the sampling can correct
    with pytest.raises(InfeasibleError):
        lmi.max_gamma([[0.5]], [[1.0]], 0.8)
    assert scalar_lmi_boundary(0.5, 1.0, 0.8) is None


def test_min_lambda_example1(front1):
    lam = lmi.min_lambda(front1.aug.frakA, front1.aug.H2, 0.1, lambda_hi=20.0)
    assert lam <= 2.0
    lam0 = lmi.min_lambda(front1.aug.frakA, front1.aug.H2, 0.0, lambda_hi=20.0)
    assert 0.0 <= lam0 <= lam


@pytest.mark.parametrize("a, gamma", [(0.5, 0.3), (-1.0, 2.5)])
def test_min_lambda_scalar_matches_grid_oracle(a, gamma):
    got = lmi.min_lambda([[a]], [[1.0]], gamma, lambda_hi=20.0)
    # the oracle boundary must lie within 2e-3 of the returned intensity
    assert scalar_lmi_min_eig(a, 1.0, got + 2e-3, gamma) < 0
    assert scalar_lmi_min_eig(a, 1.0, got - 2e-3, gamma) > 0


def test_sweep_lambda_scalar_matches_grid_oracle():
    grid = [1.0, 2.0, 4.0]
    got = lmi.sweep_lambda([[0.5]], [[1.0]], grid, gamma_hi=20.0)
    for lam, g in zip(grid, got):
        want = scalar_lmi_boundary(0.5, 1.0, lam)
        assert (g is None) == (want is None)
        if g is not None:
            assert abs(g - want) <= 2e-3


def test_sweep_single_point_and_bad_grid():
    assert len(lmi.sweep_lambda(A1, H1, [2.0])) == 1
    with pytest.raises(ValueError):
        lmi.sweep_lambda(A1, H1, [2.0, 1.0])
    with pytest.raises(ValueError):
        lmi.sweep_lambda(A1, H1, [])


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10_000))
def test_feasibility_monotone_in_lambda(seed):
    r = np.random.default_rng(seed)
    a = r.normal(size=(2, 2))
    h = r.normal(size=(1, 2))
    lams = [0.5, 2.0, 8.0]
    flags = [lmi.is_feasible(a, h, lam, 0.1) for lam in lams]
    assert flags == sorted(flags)


def test_self_gains_verify(front1, design1):
    cert = lmi.verify_gains_lmi(front1.aug.frakA, front1.aug.H2, design1.lmi.Q, design1.lmi.W,
                                2.0, 0.1)
    assert cert.certificate <= 1e-6


def test_published_gains_verify_relaxed(ex1, front1):
    pg = ex1.published_gains
    cert = lmi.verify_gains_lmi(front1.aug.frakA, front1.aug.H2, pg["Q"], pg["W"], 2.0, 0.1,
                                tol=1e-4)
    assert cert.certificate <= 1e-4


def test_zero_gains_fail(front1):
    with pytest.raises(InfeasibleError):
        lmi.verify_gains_lmi(front1.aug.frakA, front1.aug.H2, np.zeros((8, 1)), np.zeros((1, 1)),
                             2.0, 0.1)
    # the flow matrix keeps the unstable plant mode
    M = lmi.build_M(front1.aug.frakA, front1.aug.H2, np.zeros((8, 1)), np.zeros((1, 1))).M
    assert eig(M).spectral_abscissa > 0


def test_decoupled_scalar_gains_verify():
    # Q = 0, R_w = W + H2 Q = -1 with a Hurwitz frakA
    a = np.array([[-2.0]])
    cert = lmi.verify_gains_lmi(a, H1, [[0.0]], [[-1.0]], 1.0, 0.1)
    assert cert.certificate < 0
    assert scalar_lmi_min_eig(-2.0, 1.0, 1.0, 0.1) < 0
