import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import charpoly_residual, francis_bruteforce, regulator_bruteforce
from stochreg.errors import DimensionError, SynthesisError
from stochreg.linalg import eig
from stochreg.model import ExoSystem, PlantModel
from stochreg.synthesis import (StabilizerParams, assemble_augmented, build_internal_model,
                                build_observer_matrices, controllability_matrix,
                                default_pole_spec, design_stabilizer, place_poles_si,
                                solve_francis, solve_regulator_equations)


def test_internal_model_example1_override():
    im = build_internal_model(ExoSystem([[0, 1], [-1, 0]]), 1, G2_override=[[-5], [-4]])
    assert np.array_equal(im.G1, [[0, 1], [-1, 0]])
    assert np.array_equal(im.G2, [[-5], [-4]])


def test_internal_model_example2_override():
    im = build_internal_model(ExoSystem([[0, 1], [0, 0]]), 1, G2_override=[[2], [-4]])
    assert np.array_equal(im.G1, [[0, 1], [0, 0]])
    assert np.array_equal(im.G2, [[2], [-4]])


def test_internal_model_integrator():
    im = build_internal_model(ExoSystem([[0.0]]), 1)
    assert np.array_equal(im.G1, [[0.0]]) and np.array_equal(im.G2, [[1.0]])


@pytest.mark.parametrize("S", [[[0, 1], [-1, 0]], [[0, 1], [0, 0]], [[0, 2, 0], [-2, 0, 0], [0, 0, 0]]])
@pytest.mark.parametrize("p", [1, 2])
def test_default_internal_model_controllable(S, p):
    im = build_internal_model(ExoSystem(S), p, m_p=p)
    n_z = im.G1.shape[0]
    assert n_z == p * len(S)
    assert np.linalg.matrix_rank(controllability_matrix(im.G1, im.G2)) == n_z
    got = np.sort_complex(eig(im.G1).eigenvalues)
    want = np.sort_complex(np.tile(eig(np.array(S, float)).eigenvalues, p))
    assert np.allclose(got, want, atol=1e-6)


def test_internal_model_uncontrollable_override():
    with pytest.raises(SynthesisError, match="not controllable"):
        build_internal_model(ExoSystem([[0, 1], [0, 0]]), 1, G2_override=[[1], [0]])


@pytest.mark.parametrize("name", ["ex1", "ex2"])
def test_regulator_equations(name, request):
    cfg = request.getfixturevalue(name)
    p = cfg.plant
    X, R, res = solve_regulator_equations(p, cfg.exo)
    assert res < 1e-8
    assert np.abs(X @ cfg.exo.S - p.A_p @ X - p.B_p @ R - p.E_p).max() < 1e-8
    assert np.abs(p.C_p @ X - p.F_p).max() < 1e-8
    Xo, Ro = regulator_bruteforce(p.A_p, p.B_p, p.E_p, p.C_p, p.F_p, cfg.exo.S)
    assert np.allclose(X, Xo, atol=1e-8) and np.allclose(R, Ro, atol=1e-8)


def test_regulator_example1_input_matches_published(ex1):
    _, R, _ = solve_regulator_equations(ex1.plant, ex1.exo)
    assert np.allclose(R, [[-23.2, -53.0]], atol=1e-9)


def test_regulator_homogeneous(ex1):
    p = ex1.plant
    q = PlantModel(p.A_p, p.B_p, np.zeros_like(p.E_p), p.C_p, np.zeros_like(p.F_p))
    X, R, _ = solve_regulator_equations(q, ex1.exo)
    assert np.abs(X).max() < 1e-12 and np.abs(R).max() < 1e-12


def test_place_poles_double_integrator():
    k = place_poles_si([[0, 1], [0, 0]], [[0], [1]], [-1, -1])
    assert np.allclose(k, [[-1, -2]])


def test_place_poles_keeps_hurwitz_spectrum(rng):
    a = rng.normal(size=(3, 3))
    a -= (np.linalg.eigvals(a).real.max() + 1) * np.eye(3)
    b = rng.normal(size=(3, 1))
    k = place_poles_si(a, b, np.linalg.eigvals(a))
    assert np.abs(k).max() < 1e-6 * (1 + np.abs(a).max())


def test_place_poles_rejects_bad_spec():
    with pytest.raises((SynthesisError, ValueError)):
        place_poles_si([[0, 1], [0, 0]], [[0], [1]], [-1 + 1j, -2])
    with pytest.raises(SynthesisError):
        place_poles_si(np.eye(2), [[1], [0]], [-1, -2])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_place_poles_random(seed):
    r = np.random.default_rng(seed)
    a = r.normal(size=(4, 4))
    b = r.normal(size=(4, 1))
    if np.linalg.cond(controllability_matrix(a, b)) > 1e6:
        return
    want = np.array([-1.0, -2.0, -1.5 + 0.5j, -1.5 - 0.5j])
    k = place_poles_si(a, b, want)
    cl = a + b @ k
    for w in want:
        assert charpoly_residual(cl, w) < 1e-6 * max(1.0, np.abs(cl).max()) ** 4
    got = np.sort_complex(np.linalg.eigvals(cl))
    assert np.allclose(got, np.sort_complex(want), atol=1e-6)


def test_default_pole_spec_band():
    spec = default_pole_spec(np.array([0.8, 1j, -1j, -5.0]), 0.1)
    moved = spec[spec.real > -1.0]
    assert moved.size == 3
    assert np.all(moved.real <= -0.1) and np.all(moved.real >= -0.2)
    assert np.allclose(np.sort(moved.imag), [-1, 0, 1])
    assert -5.0 in spec.real


def test_published_stabilizer_example1(ex1, front1):
    aug = front1.aug
    assert aug.frakAc.shape == (8, 8)
    assert eig(aug.frakAc).spectral_abscissa <= -0.09
    assert aug.beta_achieved >= 0.1


def test_published_stabilizer_example2(front2):
    assert front2.aug.frakAc.shape == (8, 8)
    assert eig(front2.aug.frakAc).is_hurwitz


def _separation_check(plant, im, stab):
    from stochreg.synthesis import _design_blocks
    A, B, Cm = _design_blocks(plant, im, stab.D_zeta)
    aug = assemble_augmented(plant, im, stab)
    want = np.concatenate([eig(A + B @ stab.C_zeta).eigenvalues,
                           eig(A - stab.B_zeta @ Cm).eigenvalues])
    got = eig(aug.frakAc).eigenvalues
    assert np.allclose(np.sort_complex(got), np.sort_complex(want), atol=1e-6)
    return aug


def test_design_stabilizer_example1(ex1):
    im = build_internal_model(ex1.exo, 1, G2_override=ex1.G2, K_override=ex1.K,
                              G1_override=ex1.G1)
    stab = design_stabilizer(ex1.plant, im, 0.1)
    aug = _separation_check(ex1.plant, im, stab)
    assert eig(aug.frakAc).spectral_abscissa <= -0.1


def test_design_stabilizer_example2_with_feedthrough(ex2):
    im = build_internal_model(ex2.exo, 1, G2_override=ex2.G2, K_override=ex2.K,
                              G1_override=ex2.G1)
    stab = design_stabilizer(ex2.plant, im, 0.1, D_zeta=[[5.0]])
    aug = _separation_check(ex2.plant, im, stab)
    assert eig(aug.frakAc).spectral_abscissa <= -0.1


def test_design_stabilizer_scalar():
    plant = PlantModel([[-1.0]], [[1.0]], [[0.0]], [[1.0]], [[0.0]])
    exo = ExoSystem([[0.0]])
    im = build_internal_model(exo, 1)
    stab = design_stabilizer(plant, im, 0.5)
    aug = assemble_augmented(plant, im, stab)
    assert aug.frakAc.shape == (4, 4) and eig(aug.frakAc).is_hurwitz


def test_similarity_to_three_block_form(ex1, front1):
    p, im, st = ex1.plant, front1.internal_model, front1.stabilizer
    n_p, n_zeta, n_z = 2, 4, 2
    # reorder (x_p, zeta, z) -> (x_p, z, zeta)
    perm = np.r_[0:n_p, n_p + n_zeta:n_p + n_zeta + n_z, n_p:n_p + n_zeta]
    P = np.eye(8)[perm]
    got = P @ front1.aug.frakAc @ P.T
    want = np.block([[p.A_p, p.B_p @ st.D_zeta @ im.K, p.B_p @ st.C_zeta],
                     [im.G2 @ p.C_p, im.G1, np.zeros((n_z, n_zeta))],
                     [np.zeros((n_zeta, n_p)), st.B_zeta @ im.K, st.A_zeta]])
    assert np.array_equal(got, want)


def test_frakAc_identity(front1):
    a = front1.aug
    assert np.array_equal(a.frakAc, a.frakA + a.frakBc @ a.H2)


def test_zero_stabilizer_rejected(ex1, front1):
    st = StabilizerParams(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), np.zeros((1, 1)))
    with pytest.raises(DimensionError):
        assemble_augmented(ex1.plant, front1.internal_model, st)


@pytest.mark.parametrize("name", ["ex1", "ex2"])
def test_francis_vs_bruteforce(name, request):
    cfg = request.getfixturevalue(name)
    front = request.getfixturevalue("front" + name[-1])
    aug, im, fr = front.aug, front.internal_model, front.francis
    assert fr.residual < 1e-7
    X_o, Z_o = francis_bruteforce(aug.A_cl, aug.B_cl, aug.E_cl, aug.H1, cfg.plant.F_p, im.G1,
                                  cfg.exo.S)
    for X, Z in ((fr.X_M, fr.Z), (X_o, Z_o)):
        assert np.abs(X @ cfg.exo.S - aug.A_cl @ X - aug.B_cl @ Z - aug.E_cl).max() < 1e-7
        assert np.abs(aug.H1 @ X - cfg.plant.F_p).max() < 1e-7
        assert np.abs(Z @ cfg.exo.S - im.G1 @ Z).max() < 1e-7
    assert np.allclose(fr.X_M, X_o, atol=1e-7) and np.allclose(fr.Z, Z_o, atol=1e-7)


def test_francis_steady_state_input_example1(front1):
    assert np.allclose(front1.francis.R, [[-23.2, -53.0]], atol=1e-6)


def test_francis_homogeneous(ex1, front1):
    aug = front1.aug
    fr = solve_francis(aug, front1.internal_model, ex1.exo, np.zeros((1, 2)),
                       E_cl=np.zeros((6, 2)))
    assert np.abs(fr.X_M).max() < 1e-12 and np.abs(fr.Z).max() < 1e-12


def test_observer_matrices_published_gains(ex1, front1):
    ob = build_observer_matrices(front1.aug, ex1.published_gains["Q"], ex1.published_gains["W"])
    assert ob.T.shape == (9, 9) and ob.T[8, 8] == -116.008
    n = 8
    assert np.array_equal(ob.L1[:n, :n], np.eye(n)) and np.array_equal(ob.L1[n:, :n], -front1.aug.H2)
    assert np.array_equal(ob.L2, np.r_[np.zeros((n, 1)), np.eye(1)])
    assert np.array_equal(ob.H, np.c_[front1.aug.H2, np.zeros((1, 1))])


def test_observer_matrices_zero_gains(front1, front2, ex2):
    ob = build_observer_matrices(front1.aug, np.zeros((8, 1)), np.zeros((1, 1)))
    want = np.zeros((9, 9))
    want[:8, :8] = front1.aug.frakAc
    assert np.array_equal(ob.T, want)
    ob2 = build_observer_matrices(front2.aug, ex2.published_gains["Q"], ex2.published_gains["W"])
    assert ob2.T.shape == (9, 9) and ob2.T[8, 8] == -2998.8
    with pytest.raises(DimensionError):
        build_observer_matrices(front1.aug, np.zeros((7, 1)), np.zeros((1, 1)))
