import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import ndimage

from bellwit.bds import ProbabilityMatrix, bds_from_probabilities, fourier_from_probabilities, mix_with_noise
from bellwit.criteria import correlation_matrix, ssc_bound, ssc_value
from bellwit.qlinalg import hw_operator, trace_norm
from bellwit.states import builtin
from bellwit.witness import (
    Isometry,
    build_witness,
    expectation_from_coefficients,
    grid_axis,
    measurement_filtration,
    noise_threshold,
    optimal_isometry,
    optimal_witness,
    scan_noise_threshold,
    select_entries,
    sparse_witness,
    witness_expectation,
)
from helpers import random_density, random_product


def bell00(dims=(2, 2)):
    return bds_from_probabilities(ProbabilityMatrix.point(dims))


def state_4x6(eps=0.0):
    return mix_with_noise(bds_from_probabilities(builtin("bound-4x6-a")), eps)


def achieved(U, C, x, y):
    # Re Tr(D_y U^dag D_x C)
    return float(np.real(np.sum(np.conj(U.u) * C.scaled(x, y))))


def test_grid_axis_inclusive():
    xs = grid_axis(0, 2, 200)
    assert len(xs) == 201 and xs[0] == 0 and xs[-1] == 2
    assert 1.0 in xs
    with pytest.raises(ValueError):
        grid_axis(0, 1, 0)


def test_isometry_validation():
    with pytest.raises(ValueError):
        Isometry(np.ones((2, 3)))
    Isometry(np.ones((2, 3)) / 3, sparse=True)
    with pytest.raises(ValueError):
        Isometry(np.ones((2, 3)), sparse=True)


def test_optimal_isometry_rank_one():
    C = correlation_matrix(np.eye(6) / 6, (2, 3))
    U = optimal_isometry(C, 1, 1)
    assert U.u[0, 0] == pytest.approx(-1)
    assert np.allclose(U.u @ U.u.conj().T, np.eye(4))
    assert achieved(U, C, 1, 1) == pytest.approx(-1)


def test_optimal_isometry_bell():
    C = correlation_matrix(bell00(), (2, 2))
    assert achieved(optimal_isometry(C, 1, 1), C, 1, 1) == pytest.approx(-4)


@pytest.mark.parametrize("xy", [(0, 0), (1, 1), (2, 0.5)])
def test_optimal_isometry_attains_trace_norm(xy):
    rng = np.random.default_rng(20)
    C = correlation_matrix(random_density(6, rng), (2, 3))
    U = optimal_isometry(C, *xy)
    assert abs(achieved(U, C, *xy) + trace_norm(C.scaled(*xy))) < 1e-9
    assert np.allclose(U.u @ U.u.conj().T, np.eye(4))


def test_witness_coefficients_structure():
    rng = np.random.default_rng(21)
    u, _ = np.linalg.qr(rng.normal(size=(9, 9)) + 1j * rng.normal(size=(9, 9)))
    U = Isometry(u[:4])
    x, y = 0.7, 1.3
    W = build_witness(U, (2, 3), x, y)
    R = ssc_bound((2, 3), x, y)
    assert abs(W.w[0, 0] - (x * y * U.u[0, 0] + R)) < 1e-12
    assert np.allclose(W.w[1:, 0], y * U.u[1:, 0], atol=1e-12)
    assert np.allclose(W.w[0, 1:], x * U.u[0, 1:], atol=1e-12)
    assert np.allclose(W.w[1:, 1:], U.u[1:, 1:], atol=1e-12)
    assert np.allclose(W.matrix_form, W.matrix_form.conj().T)
    # maximally mixed state only sees the identity term
    assert witness_expectation(W, np.eye(6) / 6) == pytest.approx(x * y * U.u[0, 0].real + R)


def test_witness_dual_path():
    rng = np.random.default_rng(22)
    for dims in [(2, 2), (2, 3), (3, 4)]:
        n = dims[0] * dims[1]
        for _ in range(5):
            rho = random_density(n, rng)
            W = optimal_witness(random_density(n, rng), dims, rng.uniform(0, 2), rng.uniform(0, 2))
            C = correlation_matrix(rho, dims)
            assert abs(witness_expectation(W, rho) - expectation_from_coefficients(W, C)) < 1e-10


def test_witness_equals_criterion_on_noisy_state():
    rho = state_4x6(0.129)
    C = correlation_matrix(rho, (4, 6))
    for x, y in [(0.1, 0.04), (1, 1), (1.33, 1.71)]:
        W = optimal_witness(rho, (4, 6), x, y)
        assert abs(witness_expectation(W, rho) - ssc_value(C, x, y).g) < 1e-8


def test_normalized_witness_value_on_noisy_state():
    rho = state_4x6(0.129)
    W = optimal_witness(rho, (4, 6), 0.1, 0.04).normalized()
    assert witness_expectation(W, rho) == pytest.approx(-6.3e-4, abs=2e-4)


@pytest.mark.parametrize("d", [2, 3])
def test_witness_is_ccnr_witness_for_bds(d):
    rng = np.random.default_rng(23)
    P = ProbabilityMatrix((d, d), rng.dirichlet(np.ones(d * d)).reshape(d, d))
    lam = fourier_from_probabilities(P).lam
    W = optimal_witness(bds_from_probabilities(P), (d, d), 1, 1)
    ref = d * np.eye(d * d) - sum(
        lam[m, n] / abs(lam[m, n]) * np.kron(hw_operator(d, m, n), hw_operator(d, m, -n)) for m in range(d) for n in range(d)
    )
    assert np.max(np.abs(W.matrix_form - ref)) < 1e-10


def test_witness_positive_on_product_states():
    rng = np.random.default_rng(24)
    W = optimal_witness(bell00((2, 3)), (2, 3), 1, 1)
    vals = [witness_expectation(W, random_product((2, 3), rng)) for _ in range(1000)]
    assert min(vals) >= -1e-8


def test_witness_expectation_dimension_mismatch():
    W = optimal_witness(bell00(), (2, 2), 1, 1)
    with pytest.raises(ValueError):
        witness_expectation(W, np.eye(6) / 6)


def test_noise_threshold_examples():
    assert noise_threshold(np.eye(4) / 4, (2, 2), 1, 1) == 0
    assert noise_threshold(bell00(), (2, 2), 1, 1, tol=1e-6) == pytest.approx(2 / 3, abs=1e-5)
    with pytest.raises(ValueError):
        noise_threshold(bell00(), (2, 2), 1, 1, tol=0)


def test_scan_single_point():
    scan = scan_noise_threshold(bell00(), (2, 2), (1, 1), (1, 1), steps=1, tol=1e-7)
    assert np.allclose(scan.eps_max, 2 / 3, atol=1e-5)
    assert scan.monotone


def test_scan_separable_is_zero():
    scan = scan_noise_threshold(np.eye(6) / 6, (2, 3), steps=10)
    assert scan.max == 0 and scan.argmax_set == [] and scan.boundary == []


def test_scan_matches_pointwise_bisection():
    rho = state_4x6()
    scan = scan_noise_threshold(rho, (4, 6), steps=10, tol=1e-6)
    assert np.all((scan.eps_max >= 0) & (scan.eps_max <= 1))
    for i, j in [(0, 0), (5, 5), (1, 0), (7, 9), (10, 10)]:
        x, y = scan.xs[i], scan.ys[j]
        assert scan.eps_max[i, j] == pytest.approx(noise_threshold(rho, (4, 6), x, y, tol=1e-6), abs=2e-6)
    assert len(scan.argmax_set) > 0
    # zero exactly where the noiseless state is undetected
    C = correlation_matrix(rho, (4, 6))
    det = np.array([[ssc_value(C, x, y).detected for y in scan.ys] for x in scan.xs])
    assert np.array_equal(scan.eps_max > 0, det)


def test_scan_region_simply_connected():
    scan = scan_noise_threshold(state_4x6(), (4, 6), steps=40)
    _, n_regions = ndimage.label(scan.eps_max > 0)
    _, n_holes = ndimage.label(np.pad(scan.eps_max == 0, 1, constant_values=True))
    assert n_regions == 1 and n_holes == 1


def test_scan_independent_of_workers():
    rho = state_4x6()
    a = scan_noise_threshold(rho, (4, 6), steps=8, workers=1, chunk=20)
    b = scan_noise_threshold(rho, (4, 6), steps=8, workers=2, chunk=20)
    assert np.array_equal(a.eps_max, b.eps_max)


def test_select_entries_ties_go_to_lower_index():
    m = np.array([[5.0, 1, 1], [1, 2, 1]])
    assert list(select_entries(m, 1)) == [4]
    assert sorted(select_entries(m, 3)) == [1, 2, 4]


def test_sparse_witness_validation():
    with pytest.raises(ValueError):
        sparse_witness(bell00(), (2, 2), 1, 1, 0)
    with pytest.raises(ValueError):
        sparse_witness(bell00(), (2, 2), 1, 1, 16)


@pytest.mark.parametrize("xy", [(1, 1), (0.5, 1.5), (0, 0)])
def test_sparse_full_support_matches_criterion(xy):
    rho = bell00((2, 3))
    g = ssc_value(correlation_matrix(rho, (2, 3)), *xy).g
    res = sparse_witness(rho, (2, 3), *xy, 35)
    assert res is not None
    assert res["value"] == pytest.approx(g, abs=1e-6)


def test_sparse_witness_three_measurements():
    rho = bell00((2, 3))
    res = sparse_witness(rho, (2, 3), 0.5, 1.0, 3)
    assert res is not None and res["value"] < -1e-8
    W = res["witness"]
    assert len(W.measurements()) == 3
    assert abs(witness_expectation(W, rho) - res["value"]) < 1e-8
    rng = np.random.default_rng(25)
    assert min(witness_expectation(W, random_product((2, 3), rng)) for _ in range(300)) >= -1e-8


def test_sparse_two_measurements_never_detect():
    rho = bell00((2, 3))
    for x in np.linspace(0, 2, 9):
        for y in np.linspace(0, 2, 9):
            assert sparse_witness(rho, (2, 3), x, y, 2) is None


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 8), st.floats(0, 2), st.floats(0, 2), st.integers(0, 10**6))
def test_sparse_never_beats_criterion(ell, x, y, seed):
    rng = np.random.default_rng(seed)
    rho = random_density(4, rng, rank=1)
    g = ssc_value(correlation_matrix(rho, (2, 2)), x, y).g
    res = sparse_witness(rho, (2, 2), x, y, ell)
    if res is not None:
        assert res["value"] >= g - 1e-8


def test_filtration_separable_undetected():
    F = measurement_filtration(np.eye(4) / 4, (2, 2), steps=4, ell_max=3)
    assert not F.detected.any() and np.all(F.min_ell == 0)


def test_filtration_nested_random_states():
    rng = np.random.default_rng(26)
    for _ in range(2):
        rho = random_density(4, rng, rank=1)
        F = measurement_filtration(rho, (2, 2), steps=4, ell_max=5)
        assert F.nested()


def test_filtration_bell_2x3_coarse():
    F = measurement_filtration(bell00((2, 3)), (2, 3), steps=20, ell_max=6)
    ml = F.min_ell
    assert F.nested()
    assert not F.region(1).any() and not F.region(2).any()
    assert ml[ml > 0].min() == 3
    # columns with x >= 1 need more measurements than the best points left of x = 1
    i1 = int(np.argmin(np.abs(F.xs - 1)))
    assert np.all(ml[i1:][ml[i1:] > 0] >= 5)
    assert np.any(ml[i1 - 1] == 3)
    rows = list(F.rows())
    assert len(rows) == 21 * 21 and rows[0][:2] == (0.0, 0.0)
