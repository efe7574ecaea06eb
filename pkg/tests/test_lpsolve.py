from math import pi

import numpy as np
import pytest
from scipy.spatial import cKDTree

from spinprep.analytic import spin1_kappa_e
from spinprep.angular import Direction, coherent_projector
from spinprep.density import (
    DeltaMixture,
    ScaledFamily,
    maximally_mixed,
    p_coeffs,
    positivity_kappa,
    rho_from_mixture,
    scaled_state,
    to_multipole,
)
from spinprep.lpsolve import (
    SphereGrid,
    boundary_kappa,
    build_constraints,
    concavity_check,
    decide_prep,
    fibonacci_grid,
    inverse_kappa,
    maximize_on_sphere,
    nested_grids,
    polish_mixture,
)
from spinprep.simplex import OPTIMAL, simplex_solve


def random_state(d, rng):
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_direction(d, rng):
    x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return x + x.conj().T


# --- grids ------------------------------------------------------------------------

def test_grid_single_point_at_pole():
    g = fibonacci_grid(1)
    np.testing.assert_allclose(g.vectors, [[0, 0, 1]], atol=1e-15)


def test_grid_rejects_empty():
    with pytest.raises(ValueError):
        fibonacci_grid(0)


def test_grid_nearest_neighbour_spread():
    v = fibonacci_grid(1000).vectors
    dist, _ = cKDTree(v).query(v, k=2)
    nn = dist[:, 1]
    med = np.median(nn)
    assert np.mean((nn > med / 2) & (nn < med * 2)) >= 0.99


@pytest.mark.parametrize("n", [500, 1000, 2000])
def test_grid_centroid(n):
    assert np.linalg.norm(fibonacci_grid(n).vectors.mean(axis=0)) < 0.01


def test_grid_distinct_and_deterministic():
    a, b = fibonacci_grid(700), fibonacci_grid(700)
    np.testing.assert_array_equal(a.theta, b.theta)
    dist, _ = cKDTree(a.vectors).query(a.vectors, k=2)
    assert dist[:, 1].min() > 1e-3


def test_grid_max_gap_shrinks():
    probe = fibonacci_grid(20_000).vectors
    gaps = [cKDTree(fibonacci_grid(n).vectors).query(probe)[0].max() for n in (100, 400, 1600)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_nested_grids_contain_previous():
    levels = nested_grids((50, 100, 200))
    for small, big in zip(levels, levels[1:]):
        np.testing.assert_array_equal(big.theta[: len(small)], small.theta)
    assert len(levels[-1]) <= 350


def test_mirrored_grid_is_closed():
    g = fibonacci_grid(40).mirrored()
    v = g.vectors
    flipped = v * [1, -1, 1]
    assert cKDTree(v).query(flipped)[0].max() < 1e-12


# --- constraint assembly -------------------------------------------------------------

def test_constraint_counts_spin_one():
    g = fibonacci_grid(30)
    p = p_coeffs(maximally_mixed(3), 1)
    assert build_constraints(p, g, "boundary").A.shape == (8, 30)
    assert build_constraints(p, g, "decide").A.shape == (9, 30)


@pytest.mark.parametrize("j", [0.5, 1, 1.5, 2])
def test_boundary_rows_count(j):
    d = int(2 * j + 1)
    lp = build_constraints(p_coeffs(maximally_mixed(d), j), fibonacci_grid(10), "boundary")
    assert lp.A.shape[0] == d * d - 1


def test_maximally_mixed_boundary_lp():
    lp = build_constraints(p_coeffs(maximally_mixed(3), 1), fibonacci_grid(50), "boundary")
    np.testing.assert_allclose(lp.b, 0, atol=1e-15)
    sol = simplex_solve(lp)
    assert sol.status == OPTIMAL and sol.objective == pytest.approx(0, abs=1e-14)


def test_grid_permutation_permutes_columns():
    rho = random_state(3, np.random.default_rng(0))
    g = fibonacci_grid(20)
    perm = np.random.default_rng(1).permutation(20)
    a = build_constraints(p_coeffs(rho, 1), g, "decide")
    b = build_constraints(p_coeffs(rho, 1), SphereGrid(g.theta[perm], g.phi[perm]), "decide")
    np.testing.assert_array_equal(a.b, b.b)
    np.testing.assert_allclose(a.A[:, perm], b.A, atol=1e-15)


def test_multipole_target_accepted():
    rho = random_state(3, np.random.default_rng(2))
    g = fibonacci_grid(10)
    a = build_constraints(to_multipole(rho, 1), g)
    b = build_constraints(p_coeffs(rho, 1), g)
    np.testing.assert_allclose(a.b, b.b, atol=1e-15)


def test_constraint_errors():
    g = fibonacci_grid(10)
    with pytest.raises(TypeError):
        build_constraints(np.zeros(9), g)
    with pytest.raises(ValueError):
        build_constraints(p_coeffs(maximally_mixed(3), 1), g, "both")


def test_mixture_satisfies_its_constraints():
    rng = np.random.default_rng(3)
    th, ph = rng.uniform(0, pi, 5), rng.uniform(0, 2 * pi, 5)
    w = rng.random(5)
    w /= w.sum()
    rho = rho_from_mixture(DeltaMixture(w, th, ph), 1.5)
    lp = build_constraints(p_coeffs(rho, 1.5), SphereGrid(th, ph), "decide")
    np.testing.assert_allclose(lp.A @ w, lp.b, atol=1e-13)


# --- sphere maximization --------------------------------------------------------------

def test_maximize_on_sphere_finds_direction():
    target = np.array([0.3, -0.5, 0.8])
    target /= np.linalg.norm(target)
    best, v = maximize_on_sphere(lambda x: x[:, 0, :] @ target, n_grid=200)[0]
    assert best == pytest.approx(1, abs=1e-10)
    np.testing.assert_allclose(v[0], target, atol=1e-5)


# --- decide mode ---------------------------------------------------------------------------

def test_decide_spin_half_random():
    rng = np.random.default_rng(4)
    for _ in range(10):
        dec = decide_prep(random_state(2, rng), grid=16)
        assert dec.prep
        assert dec.mixture.weights.min() >= 0
        assert dec.reconstruction_error < 1e-9


def test_decide_m0_is_not_certified():
    dec = decide_prep(np.diag([0, 1.0, 0]), grid=500)
    assert not dec.prep and dec.mixture is None


@pytest.mark.parametrize("j", [1, 1.5, 2])
def test_decide_off_grid_coherent(j):
    rho = coherent_projector(j, Direction(0.7331, 2.1177))
    dec = decide_prep(rho, grid=500)
    assert dec.prep and dec.reconstruction_error < 1e-6
    assert np.abs(rho_from_mixture(dec.mixture, j) - rho).max() < 1e-6


@pytest.mark.parametrize("j", [0.5, 1, 1.5, 2])
def test_decide_maximally_mixed(j):
    d = int(2 * j + 1)
    dec = decide_prep(maximally_mixed(d))
    assert dec.prep and not dec.polished
    assert len(dec.mixture) <= d * d
    assert dec.mixture.weights.min() > 0


@pytest.mark.parametrize("j", [0.5, 1, 1.5, 2])
def test_decide_interior_ball(j):
    d = int(2 * j + 1)
    rng = np.random.default_rng(int(2 * j))
    for _ in range(5):
        fam = ScaledFamily.from_direction(random_direction(d, rng), d)
        dec = decide_prep(scaled_state(fam, 0.05))
        assert dec.prep and dec.reconstruction_error < 1e-9


def test_decide_random_mixtures_high_spin():
    rng = np.random.default_rng(5)
    for j in (1.5, 2):
        for _ in range(3):
            n = int(rng.integers(1, 6))
            w = rng.random(n)
            mix = DeltaMixture(w / w.sum(), np.arccos(rng.uniform(-1, 1, n)), rng.uniform(0, 6, n))
            dec = decide_prep(rho_from_mixture(mix, j))
            assert dec.prep and dec.mixture.weights.min() >= 0


def test_decide_dimension_mismatch():
    with pytest.raises(ValueError):
        decide_prep(np.eye(3) / 3, j=1.5)


def test_polish_moves_points_onto_target():
    d = Direction(1.0, 1.0)
    start = DeltaMixture([0.6, 0.4], [0.95, 1.05], [1.02, 0.97])
    out = polish_mixture(coherent_projector(1.5, d), start)
    assert np.abs(rho_from_mixture(out, 1.5) - coherent_projector(1.5, d)).max() < 1e-10


# --- boundary mode ----------------------------------------------------------------------------

def test_boundary_toward_m0():
    fam = ScaledFamily.from_direction(np.diag([0, 1.0, 0]), 3)
    res = boundary_kappa(fam, schedule=(250, 500, 1000, 2000))
    assert res.kappa_e == pytest.approx(1 / 3, rel=0.01)
    assert res.kappa_e <= 1 / 3 + 1e-9
    assert res.kappa_upper >= 1 / 3 - 1e-6
    assert all(a >= b - 1e-12 for a, b in zip(res.history, res.history[1:]))


def test_boundary_spin_half_equals_positivity():
    rng = np.random.default_rng(6)
    for _ in range(5):
        fam = ScaledFamily.from_direction(random_direction(2, rng), 2)
        res = boundary_kappa(fam, schedule=(250, 500))
        assert res.kappa_e == pytest.approx(positivity_kappa(fam), rel=0.01)


def test_boundary_toward_coherent_touches_positivity():
    fam = ScaledFamily.from_direction(coherent_projector(1, Direction(0.4, 0.9)), 3)
    res = boundary_kappa(fam, polish=5)
    assert res.kappa_e == pytest.approx(4 / 3, rel=0.01)


def test_boundary_random_spin_one_against_analytic():
    rng = np.random.default_rng(7)
    for _ in range(5):
        fam = ScaledFamily.from_direction(random_direction(3, rng), 3)
        res = boundary_kappa(fam)
        exact = spin1_kappa_e(fam)
        assert res.kappa_e == pytest.approx(exact, rel=0.01)
        assert res.kappa_e <= exact * (1 + 1e-9)


def test_boundary_mixture_reconstructs_boundary_state():
    rng = np.random.default_rng(8)
    fam = ScaledFamily.from_direction(random_direction(4, rng), 4)
    res = boundary_kappa(fam, schedule=(250, 500))
    assert res.support_size <= 15
    assert res.mixture.weights.sum() == pytest.approx(1, abs=1e-9)
    rho = rho_from_mixture(res.mixture, 1.5)
    np.testing.assert_allclose(rho, scaled_state(fam, res.kappa_e), atol=1e-8)


def test_boundary_polish_tightens_bracket():
    fam = ScaledFamily.from_direction(random_direction(3, np.random.default_rng(9)), 3)
    plain = boundary_kappa(fam, schedule=(100,))
    polished = boundary_kappa(fam, schedule=(100,), polish=10, tol=1e-6)
    exact = spin1_kappa_e(fam)
    assert abs(polished.kappa_e - exact) <= abs(plain.kappa_e - exact)
    assert polished.kappa_e <= exact * (1 + 1e-9) <= polished.kappa_upper * (1 + 1e-6)


def test_boundary_degenerate_direction():
    fam = ScaledFamily.from_direction(np.eye(3), 3)
    res = boundary_kappa(fam)
    assert res.kappa_e == float("inf") and res.converged


def test_boundary_rejects_bipartite():
    with pytest.raises(ValueError):
        boundary_kappa(ScaledFamily.from_direction(np.diag([1.0, 0, 0, 0]), (2, 2)))


def test_boundary_serializes():
    fam = ScaledFamily.from_direction(np.diag([0, 1.0, 0]), 3)
    d = boundary_kappa(fam, schedule=(100, 200)).to_dict()
    assert {"kappa_e", "kappa_upper", "history", "mixture", "norm"} <= set(d)


# --- concavity ---------------------------------------------------------------------------------

def test_concavity_identical_families():
    fam = ScaledFamily.from_direction(random_direction(3, np.random.default_rng(10)), 3)
    assert concavity_check(fam, fam, method="analytic") == pytest.approx(0, abs=1e-12)


def test_concavity_random_pairs_analytic():
    rng = np.random.default_rng(11)
    for _ in range(30):
        f1 = ScaledFamily.from_direction(random_direction(3, rng), 3)
        f2 = ScaledFamily.from_direction(random_direction(3, rng), 3)
        assert concavity_check(f1, f2, method="analytic") >= -1e-4


def test_concavity_lp_matches_analytic():
    rng = np.random.default_rng(12)
    f1 = ScaledFamily.from_direction(random_direction(3, rng), 3)
    f2 = ScaledFamily.from_direction(random_direction(3, rng), 3)
    a = concavity_check(f1, f2, method="analytic")
    b = concavity_check(f1, f2, method="lp")
    assert b == pytest.approx(a, abs=0.02)


def test_concavity_coherent_diagonal_on_flat_face():
    # both boundary states lie on the segment |1,1><1,1| -- |1,-1><1,-1| of the
    # boundary, so the midpoint is still on it and the slack vanishes
    f1 = ScaledFamily.from_direction(np.diag([1.0, 0, 0]), 3)
    f2 = ScaledFamily.from_direction(np.diag([0, 0, 1.0]), 3)
    assert concavity_check(f1, f2, method="analytic") == pytest.approx(0, abs=1e-9)


def test_concavity_orthogonal_diagonal_strict():
    # dipole and quadrupole directions, orthogonal in Hilbert-Schmidt product
    f1 = ScaledFamily.from_direction(np.diag([1.0, 0, -1]), 3)
    f2 = ScaledFamily.from_direction(np.diag([1.0, -2, 1]), 3)
    assert concavity_check(f1, f2, method="analytic") > 1e-3


def test_gauge_is_homogeneous():
    x = random_direction(3, np.random.default_rng(13))
    x = x - np.trace(x) / 3 * np.eye(3)
    g = inverse_kappa(x, 3, method="analytic")
    assert inverse_kappa(2.5 * x, 3, method="analytic") == pytest.approx(2.5 * g)


def test_concavity_argument_checks():
    f1 = ScaledFamily.from_direction(np.diag([1.0, 0, 0]), 3)
    f2 = ScaledFamily.from_direction(np.diag([1.0, 0]), 2)
    with pytest.raises(ValueError):
        concavity_check(f1, f2)
    with pytest.raises(ValueError):
        concavity_check(f1, f1, c=1.5)
    with pytest.raises(ValueError):
        inverse_kappa(np.diag([1.0, 0, 0]), 3, method="guess")
