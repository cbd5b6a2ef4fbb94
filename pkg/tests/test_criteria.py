import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bellwit.bds import ProbabilityMatrix, bds_from_probabilities, ccnr_value_equal_dims, fourier_from_probabilities, werner
from bellwit.criteria import (
    CorrelationMatrix,
    basis_operator,
    basis_stack,
    ccnr,
    correlation_matrices,
    correlation_matrix,
    de_vicente,
    ppt_check,
    ssc_bound,
    ssc_value,
    state_from_correlation,
)
from bellwit.qlinalg import hw_operator, trace_norm
from bellwit.states import builtin
from bellwit.witness import g_batch
from helpers import random_density, random_probabilities, random_separable


def bell00(dims=(2, 2)):
    return bds_from_probabilities(ProbabilityMatrix.point(dims))


def correlation_oracle(rho, dims):
    # direct traces, one basis pair at a time
    d_A, d_B = dims
    c = np.zeros((d_A**2, d_B**2), dtype=complex)
    for i in range(d_A**2):
        for j in range(d_B**2):
            op = np.kron(basis_operator(dims, "A", i), basis_operator(dims, "B", j))
            c[i, j] = np.trace(op.conj().T @ rho)
    return c


def test_basis_operator_examples():
    assert np.allclose(basis_operator((2, 3), "A", 0), np.eye(2))
    assert np.allclose(basis_operator((2, 3), "B", 0), np.eye(3))
    assert np.allclose(basis_operator((2, 2), "A", 3), hw_operator(2, 1, 1))
    assert np.allclose(basis_operator((2, 3), "B", 4), hw_operator(3, 1, -4))
    with pytest.raises(ValueError):
        basis_operator((2, 2), "A", 4)
    with pytest.raises(ValueError):
        basis_operator((2, 2), "C", 0)


@pytest.mark.parametrize("d", [2, 3, 4, 6])
def test_basis_gram(d):
    for side in "AB":
        B = basis_stack((d, d), side)
        gram = np.einsum("iab,jab->ij", B.conj(), B) / d
        assert np.max(np.abs(gram - np.eye(d * d))) < 1e-12


def test_correlation_examples():
    C = correlation_matrix(np.eye(6) / 6, (2, 3))
    expected = np.zeros((4, 9))
    expected[0, 0] = 1
    assert np.allclose(C.c, expected)
    c = correlation_matrix(bell00(), (2, 2)).c
    mags = np.sort(np.abs(c).ravel())
    assert np.allclose(mags[-4:], 1) and np.allclose(mags[:-4], 0)


@pytest.mark.parametrize("dims", [(2, 2), (2, 3), (3, 4)])
def test_correlation_against_direct_traces(dims):
    rng = np.random.default_rng(10)
    rho = random_density(dims[0] * dims[1], rng)
    C = correlation_matrix(rho, dims)
    assert np.max(np.abs(C.c - correlation_oracle(rho, dims))) < 1e-12
    assert np.max(np.abs(state_from_correlation(C) - rho)) < 1e-10
    batch = correlation_matrices(np.stack([rho, rho]), dims)
    assert np.allclose(batch[1], C.c)


def test_correlation_matrix_validation():
    with pytest.raises(ValueError):
        CorrelationMatrix((2, 2), np.zeros((4, 4)))
    with pytest.raises(ValueError):
        correlation_matrix(np.eye(4) / 4, (2, 3))


def test_ssc_examples():
    C = correlation_matrix(np.eye(6) / 6, (2, 3))
    for x, y in [(0, 0), (1, 1), (2, 0.5)]:
        r = ssc_value(C, x, y)
        assert r.norm == pytest.approx(x * y)
        assert r.g == pytest.approx(ssc_bound((2, 3), x, y) - x * y)
        assert r.g >= 0
    r = ssc_value(correlation_matrix(bell00(), (2, 2)), 1, 1)
    assert (r.norm, r.bound, r.g) == pytest.approx((4, 2, -2))
    assert r.detected and r.relative == pytest.approx(-1)
    with pytest.raises(ValueError):
        ssc_value(C, -1, 0)


def test_ssc_bound_formula():
    assert ssc_bound((2, 3), 1, 1) == pytest.approx(np.sqrt(6))
    assert ssc_bound((4, 6), 0, 0) == pytest.approx(np.sqrt(15))


def test_ccnr_examples():
    res = ccnr(bds_from_probabilities(builtin("bound-4x4")), (4, 4))
    assert res["value"] == pytest.approx(6, abs=1e-9) and res["threshold"] == 4 and res["detected"]
    for name in ("bound-4x6-a", "bound-4x6-b"):
        res = ccnr(bds_from_probabilities(builtin(name)), (4, 6))
        assert res["value"] - np.sqrt(24) == pytest.approx(0.554, abs=2e-3)
        assert res["detected"]
    res = ccnr(np.eye(9) / 9, (3, 3))
    assert res["value"] == pytest.approx(1) and not res["detected"]


def test_de_vicente_examples():
    res = de_vicente(np.eye(9) / 9, (3, 3))
    assert res["value"] == pytest.approx(0, abs=1e-12) and not res["detected"]
    res = de_vicente(bell00(), (2, 2))
    assert (res["value"], res["threshold"]) == pytest.approx((3, 1)) and res["detected"]


def test_ppt_examples():
    assert ppt_check(bds_from_probabilities(builtin("bound-4x4")), (4, 4))["is_ppt"]
    res = ppt_check(bell00(), (2, 2))
    assert res["min_eig"] == pytest.approx(-0.5) and not res["is_ppt"]


def test_werner_ppt_boundary():
    for q in (0.2, 0.49):
        assert not ppt_check(bds_from_probabilities(werner(q)), (2, 2))["is_ppt"]
    for q in (0.5, 0.51, 0.9):
        assert ppt_check(bds_from_probabilities(werner(q)), (2, 2))["is_ppt"]


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([(2, 2), (2, 3), (3, 3)]), st.integers(0, 10**6))
def test_ssc_endpoints_match_named_criteria(dims, seed):
    rng = np.random.default_rng(seed)
    rho = random_density(dims[0] * dims[1], rng, rank=1 + seed % 3)
    C = correlation_matrix(rho, dims)
    assert ssc_value(C, 1, 1).detected == ccnr(rho, dims)["detected"]
    assert ssc_value(C, 0, 0).detected == de_vicente(rho, dims)["detected"]
    assert ssc_value(C, 1, 1).norm == pytest.approx(ccnr(rho, dims)["value"])


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([2, 3, 4]), st.integers(0, 10**6))
def test_ccnr_equals_fourier_sum(d, seed):
    rng = np.random.default_rng(seed)
    P = ProbabilityMatrix((d, d), random_probabilities((d, d), rng, sparse=True))
    value = ccnr(bds_from_probabilities(P), (d, d))["value"]
    assert abs(value - ccnr_value_equal_dims(fourier_from_probabilities(P))) < 1e-10


def test_trace_norm_basis_independent():
    # recombining each local basis by a unitary keeps the trace norm
    rng = np.random.default_rng(11)
    dims = (2, 3)
    rho = random_density(6, rng)
    C = correlation_matrix(rho, dims).c
    UA, _ = np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
    UB, _ = np.linalg.qr(rng.normal(size=(9, 9)) + 1j * rng.normal(size=(9, 9)))
    BA = np.einsum("ki,iab->kab", UA, basis_stack(dims, "A"))
    BB = np.einsum("kj,jab->kab", UB, basis_stack(dims, "B"))
    t = rho.reshape(2, 3, 2, 3)
    c2 = np.einsum("kpq,lrs,prqs->kl", BA.conj(), BB.conj(), t)
    assert abs(trace_norm(c2) - trace_norm(C)) < 1e-10


def test_separable_states_satisfy_bound():
    rng = np.random.default_rng(12)
    xs = np.linspace(0, 2, 11)
    X, Y = (a.ravel() for a in np.meshgrid(xs, xs, indexing="ij"))
    for dims in [(2, 2), (2, 3), (3, 3)]:
        for _ in range(10):
            c = correlation_matrix(random_separable(dims, rng), dims).c
            assert g_batch(c, dims, X, Y, np.zeros(X.size)).min() >= -1e-10


def test_g_continuous_on_grid():
    c = correlation_matrix(bds_from_probabilities(builtin("bound-4x6-a")), (4, 6)).c
    xs = np.linspace(0, 2, 41)
    X, Y = (a.ravel() for a in np.meshgrid(xs, xs, indexing="ij"))
    g = g_batch(c, (4, 6), X, Y, np.zeros(X.size)).reshape(41, 41)
    step = xs[1] - xs[0]
    assert np.max(np.abs(np.diff(g, axis=0))) < 10 * step
    assert np.max(np.abs(np.diff(g, axis=1))) < 10 * step
