import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.linalg import toeplitz

from lensmimo.analysis import (
    Scenario,
    SnrBoundInputs,
    avg_snr_bounds,
    avg_snr_lower_bound,
    center_out_order,
    compare_with_without_lens,
    covariance_eigenvalues,
    ideal_focusing_snr,
    is_permutation,
    lemma5_condition_check,
    low_snr_quadratic_form,
    majorizes,
    multiuser_uncorrelated_bound,
    power_split,
    psi,
    single_user_avg_snr,
    theorem2_condition_check,
)
from lensmimo.channel_model import (
    ArrayGeometry,
    LensProfile,
    UserProfile,
    apply_lens_covariance,
    gaussian_pas_covariance,
    lens_power_distribution,
)


def _t_transform_pair(rng, M, steps=5):
    """Random pair ``x`` majorized by ``y`` built from T-transforms of ``y``."""
    y = rng.exponential(size=M)
    x = y.copy()
    for _ in range(steps):
        i, j = rng.choice(M, 2, replace=False)
        lam = rng.uniform(0.05, 0.95)
        x[i], x[j] = lam * x[i] + (1 - lam) * x[j], (1 - lam) * x[i] + lam * x[j]
    return x, y


@pytest.mark.parametrize("theta", [0.0, 0.5])
@pytest.mark.parametrize("rho_tr", [0.1, 1.0, 30.0])
def test_single_user_bound_is_exact_functional(theta, rho_tr):
    R = gaussian_pas_covariance(ArrayGeometry(16, 0.5), UserProfile(1.0, theta, 0.2))
    g = avg_snr_lower_bound(SnrBoundInputs([R], rho_tr, 2.0), 0)
    assert g == pytest.approx(single_user_avg_snr(covariance_eigenvalues(R), rho_tr, 2.0), rel=1e-9)


def test_zero_covariances_give_zero_bound():
    np.testing.assert_array_equal(avg_snr_bounds(SnrBoundInputs([np.zeros((3, 3))] * 2, 1.0, 1.0)), 0)


def test_bound_inputs_validation():
    with pytest.raises(ValueError):
        SnrBoundInputs([np.eye(2)], 0.0, 1.0)
    with pytest.raises(ValueError):
        SnrBoundInputs([np.eye(2), np.eye(3)], 1.0, 1.0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), K=st.integers(1, 5), M=st.integers(1, 8))
def test_diagonal_case_matches_uncorrelated_bound(seed, K, M):
    rng = np.random.default_rng(seed)
    beta = rng.uniform(0.2, 2.0, K)
    dists = [rng.dirichlet(np.ones(M)) * M for _ in range(K)]
    covs = [b * np.diag(a) for b, a in zip(beta, dists)]
    rho_tr, rho_d = rng.uniform(0.1, 10, 2)
    bounds = avg_snr_bounds(SnrBoundInputs(covs, rho_tr, rho_d))
    for k in range(K):
        ref = multiuser_uncorrelated_bound(beta, dists, rho_tr, rho_d, k)
        assert bounds[k] == pytest.approx(ref, rel=1e-12, abs=1e-14)
        split = power_split(beta, dists, k)
        assert psi(split.xi, split.kappa, rho_tr, rho_d) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize(
    "eigs, rho_tr, rho_d, expected",
    [
        (np.zeros(4), 1.0, 1.0, 0.0),
        (np.array([1.0]), 1.0, 1.0, 1 / 3),
        (np.r_[10.0, np.zeros(9)], 0.1, 0.1, 1 / 3),
    ],
)
def test_single_user_functional_examples(eigs, rho_tr, rho_d, expected):
    assert single_user_avg_snr(eigs, rho_tr, rho_d) == pytest.approx(expected, abs=1e-15)


def test_single_user_rejects_negative():
    with pytest.raises(ValueError):
        single_user_avg_snr([1.0, -0.5], 1.0, 1.0)


def test_uncorrelated_bound_hand_values():
    lens = [np.array([2.0, 0.0]), np.array([0.0, 2.0])]
    flat = [np.ones(2), np.ones(2)]
    assert multiuser_uncorrelated_bound([1, 1], lens, 1.0, 1.0, 0) == pytest.approx(0.8, abs=1e-12)
    assert multiuser_uncorrelated_bound([1, 1], flat, 1.0, 1.0, 0) == pytest.approx(0.4, abs=1e-12)


def test_uncorrelated_bound_single_user_reduction():
    a = np.array([0.5, 2.0, 1.5, 0.0])
    assert multiuser_uncorrelated_bound([1.7], [a], 0.3, 2.0, 0) == pytest.approx(
        single_user_avg_snr(1.7 * a, 0.3, 2.0), rel=1e-14
    )


@pytest.mark.parametrize(
    "x, y, expected",
    [
        ([1, 1, 1], [3, 0, 0], True),
        ([3, 0, 0], [1, 1, 1], False),
        ([2, 1], [1, 2], True),
        ([1, 2], [2, 1], True),
        ([2, 2], [3, 0], False),
    ],
)
def test_majorizes_examples(x, y, expected):
    assert majorizes(x, y) is expected


def test_majorizes_length_mismatch():
    with pytest.raises(ValueError):
        majorizes([1, 2], [3])


def test_permutation_predicate():
    assert is_permutation([1, 2, 3], [3, 1, 2])
    assert not is_permutation([1, 2, 3], [1, 2, 4])


def test_eigenvalues_examples():
    np.testing.assert_allclose(covariance_eigenvalues(2.0 * np.eye(4)), 2.0)
    R = gaussian_pas_covariance(ArrayGeometry(8, 0.5), UserProfile(1.0, 0.4, 0.0))
    w = covariance_eigenvalues(R)
    assert w[0] == pytest.approx(8.0)
    assert np.all(w[1:] <= 1e-9 * 8)
    assert np.all(np.diff(w) <= 0) and np.all(w >= 0)
    Rc = gaussian_pas_covariance(ArrayGeometry(8, 0.5), UserProfile(1.0, 0.4, 0.3))
    Rl = apply_lens_covariance(Rc, np.array([0, 0, 1, 3, 3, 1, 0, 0.0]))
    assert covariance_eigenvalues(Rl).sum() == pytest.approx(8.0, rel=1e-12)
    with pytest.raises(ValueError):
        covariance_eigenvalues(np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_quadratic_form_examples():
    R = gaussian_pas_covariance(ArrayGeometry(6, 0.5), UserProfile(1.0, 0.2, 0.3))
    assert low_snr_quadratic_form(R, np.ones(6), 0.2, 0.5) == pytest.approx(0.1 * np.sum(np.abs(R) ** 2))
    a = np.array([0, 1, 2, 3, 0, 0.0])
    assert low_snr_quadratic_form(1.5 * np.eye(6), a, 0.2, 0.5) == pytest.approx(0.1 * 2.25 * np.sum(a**2))


@pytest.mark.parametrize("theta", [-0.8, 0.0, 0.6])
def test_quadratic_form_tracks_exact_at_low_snr(theta):
    g = ArrayGeometry(50, 1.0, math.pi / 3)
    lens = LensProfile(g, 2, 0.5)
    R = gaussian_pas_covariance(g, UserProfile(1.0, theta, math.radians(10)))
    a = lens_power_distribution(lens, theta)
    rho = 0.01 / 50 / 2
    exact = single_user_avg_snr(covariance_eigenvalues(apply_lens_covariance(R, a)), rho, rho)
    assert abs(low_snr_quadratic_form(R, a, rho, rho) - exact) < 0.01 * exact


def test_lemma5_identity_table():
    ok, table = lemma5_condition_check(np.eye(4))
    assert ok
    assert table.shape == (3, 4)
    expected = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0]])
    np.testing.assert_array_equal(table, expected)


def test_lemma5_increasing_rows_fail():
    S = np.array([[0.0, 0, 0], [0, 1, 1], [0, 1, 2]])
    ok, table = lemma5_condition_check(S)
    assert not ok
    assert table.min() < 0


def test_lemma5_rejects_asymmetric():
    with pytest.raises(ValueError):
        lemma5_condition_check(np.array([[1.0, 2.0], [0.0, 1.0]]))


@pytest.mark.parametrize("M, order", [(1, [0]), (4, [1, 2, 0, 3]), (5, [2, 3, 1, 4, 0])])
def test_center_out_order(M, order):
    assert center_out_order(M).tolist() == order


@settings(max_examples=100, deadline=None)
@given(M=st.integers(2, 24), seed=st.integers(0, 2**32 - 1))
def test_lemma5_holds_for_decreasing_toeplitz(M, seed):
    q = np.sort(np.random.default_rng(seed).uniform(0, 1, M))[::-1]
    ok, _ = lemma5_condition_check(toeplitz(q), center_out_order(M))
    assert ok


def test_theorem2_condition_examples():
    disjoint = [np.array([2.0, 2, 0, 0]), np.array([0, 0, 3.0, 1])]
    assert theorem2_condition_check([1, 1], disjoint, 0) == (True, True)
    same = [np.array([3.0, 1, 0, 0])] * 2
    assert theorem2_condition_check([1, 1], same, 0)[0] is False
    ones = [np.ones(4)] * 3
    assert theorem2_condition_check([1, 2, 3], ones, 1) == (True, False)


def test_power_split_without_lens():
    split = power_split([1.0, 2.0, 0.5], [np.ones(5)] * 3, 1)
    np.testing.assert_allclose(split.xi, 2.0)
    np.testing.assert_allclose(split.kappa, 1.5)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), M=st.integers(2, 12))
def test_lensed_split_majorizes_flat(seed, M):
    a = np.random.default_rng(seed).dirichlet(np.ones(M)) * M
    flat = power_split([1.3], [np.ones(M)], 0).xi
    lensed = power_split([1.3], [a], 0).xi
    assert majorizes(flat, lensed)
    assert lensed.sum() == pytest.approx(1.3 * M)


def _condition_instance(rng, K, M):
    """Users with disjoint lens supports, which always meet the ordering condition."""
    cuts = np.sort(rng.choice(np.arange(1, M), K - 1, replace=False))
    dists = []
    for seg in np.split(np.arange(M), cuts):
        a = np.zeros(M)
        a[seg] = rng.uniform(0.1, 1.0, len(seg))
        if len(seg) == M:
            a[seg[0]] += 1.0
        dists.append(a * M / a.sum())
    return rng.uniform(0.3, 3.0, K), dists


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), K=st.integers(1, 4), M=st.integers(4, 12))
def test_appendix_chain(seed, K, M):
    rng = np.random.default_rng(seed)
    beta, dists = _condition_instance(rng, K, M)
    rho_tr, rho_d = rng.uniform(0.1, 10, 2)
    for k in range(K):
        ok, focused = theorem2_condition_check(beta, dists, k)
        assert ok and focused
        lens = power_split(beta, dists, k)
        flat = power_split(beta, [np.ones(M)] * K, k)
        p0 = psi(flat.xi, flat.kappa, rho_tr, rho_d)
        p1 = psi(lens.xi, flat.kappa, rho_tr, rho_d)
        p2 = psi(lens.xi, lens.kappa, rho_tr, rho_d)
        assert p0 <= p1 * (1 + 1e-12) and p1 <= p2 * (1 + 1e-12)
        assert p2 > p0


def test_ideal_focusing_value():
    for M in (10, 50, 100):
        assert ideal_focusing_snr(1.0, M, 1 / M, 1 / M) == pytest.approx(1 / 3, abs=1e-12)
    R = gaussian_pas_covariance(ArrayGeometry(20, 0.5), UserProfile(1.0, 0.3, 0.2))
    e = np.zeros(20)
    e[7] = 20
    focused = single_user_avg_snr(covariance_eigenvalues(apply_lens_covariance(R, e)), 2.0, 1.0)
    assert focused == pytest.approx(ideal_focusing_snr(1.0, 20, 2.0, 1.0), rel=1e-9)
    assert focused > single_user_avg_snr(covariance_eigenvalues(R), 2.0, 1.0)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), M=st.integers(2, 10))
def test_schur_convexity(seed, M):
    rng = np.random.default_rng(seed)
    x, y = _t_transform_pair(rng, M)
    assume(not is_permutation(x, y))
    assert majorizes(x, y)
    rho_tr, rho_d = rng.uniform(0.05, 20, 2)
    fx, fy = single_user_avg_snr(x, rho_tr, rho_d), single_user_avg_snr(y, rho_tr, rho_d)
    assert fy - fx > 1e-12 * fy


def _paper_scenario(spread_deg=10.0, rho_tr=1.0, thetas=(0.0,), trials=0):
    g = ArrayGeometry(50, 1.0, math.pi / 3)
    users = [UserProfile(1.0, t, math.radians(spread_deg)) for t in thetas]
    return Scenario.from_geometry(g, users, LensProfile(g, 2, 0.5), rho_tr, 1.0, trials, seed=7)


@pytest.mark.parametrize("theta", [-0.9, 0.0, 0.4])
def test_los_gain_vanishes(theta):
    rep = compare_with_without_lens(_paper_scenario(0.0, 3.0, (theta,)))
    assert abs(rep.bound_gain[0]) <= 1e-9 * rep.bound_nolens[0]


def test_perfect_training_gain_vanishes():
    rep = compare_with_without_lens(_paper_scenario(10.0, 1e9))
    assert abs(rep.bound_gain[0]) / rep.bound_nolens[0] < 1e-6
    assert rep.bound_lens[0] == pytest.approx(50.0, rel=1e-6)


def test_white_channel_gain():
    a = np.array([0, 1.0, 4.0, 1.0, 0, 0])
    rep = compare_with_without_lens(Scenario([np.eye(6)], [a], 1.0, 1.0))
    assert rep.bound_gain[0] > 0
    assert rep.rate_lens is None and rep.rate_gain is None


def test_report_monte_carlo_fields():
    rep = compare_with_without_lens(_paper_scenario(10.0, 1.0, (-0.5, 0.5), trials=300))
    assert rep.rate_lens.trials == 300
    assert rep.snr_lens.shape == (2,)
    assert np.all(rep.snr_diff_se > 0)
    assert rep.rate_gain == pytest.approx(rep.rate_lens.sum - rep.rate_nolens.sum)
    # Jensen: bound below the Monte-Carlo mean
    for s, b in ((rep.snr_lens, rep.bound_lens), (rep.snr_nolens, rep.bound_nolens)):
        assert np.all(b <= s * 1.1)
