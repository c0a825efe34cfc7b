import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from zerostat.ensembles import (
    EnsembleError,
    EnsembleSpec,
    SectionSample,
    basis_indices,
    evaluate_gradient,
    evaluate_section,
    full_dimension,
    hermitian_magnitude,
    monomial_norm,
    sample_coefficients,
    sample_many,
    sample_section,
    trial_rng,
)
from zerostat.polytopes import LatticePolytope


def sphere_points(n, dim, rng):
    g = rng.standard_normal((n, 2 * dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g[:, :dim] + 1j * g[:, dim:]


def test_norm_constant_m1():
    assert monomial_norm(1, 1, (0,)) == pytest.approx(math.sqrt(0.5), rel=1e-14)


def test_norm_constant_m2():
    assert monomial_norm(2, 1, (0, 0)) == pytest.approx(math.sqrt(1 / 3), rel=1e-14)


def test_norm_matches_sphere_monte_carlo():
    # oracle: 10^7 uniform points on S^3, E|Z0 Z1|^2
    rng = np.random.default_rng(11)
    total, n = 0.0, 0
    for _ in range(10):
        Z = sphere_points(10**6, 2, rng)
        total += np.sum(np.abs(Z[:, 0] * Z[:, 1]) ** 2)
        n += Z.shape[0]
    mc = total / n
    assert monomial_norm(1, 2, (1,)) ** 2 == pytest.approx(mc, rel=5e-3)


@pytest.mark.parametrize("m,N,alpha", [(1, 5, (2,)), (2, 3, (1, 1)), (2, 4, (0, 3)), (3, 2, (1, 0, 1))])
def test_norm_closed_form_vs_monte_carlo(m, N, alpha):
    rng = np.random.default_rng(3)
    Z = sphere_points(2 * 10**6, m + 1, rng)
    mono = Z[:, 0] ** (N - sum(alpha))
    for j, a in enumerate(alpha):
        mono = mono * Z[:, j + 1] ** a
    vals = np.abs(mono) ** 2
    mc, se = vals.mean(), vals.std() / math.sqrt(vals.size)
    assert abs(monomial_norm(m, N, alpha) ** 2 - mc) < 4 * se


def test_norm_invalid_index():
    with pytest.raises(EnsembleError):
        monomial_norm(1, 2, (3,))
    with pytest.raises(EnsembleError):
        monomial_norm(2, 2, (-1, 0))


@given(st.integers(0, 12), st.integers(0, 12), st.integers(0, 12))
def test_norm_symmetric_in_variables(a, b, extra):
    N = a + b + extra
    assert monomial_norm(2, N, (a, b)) == pytest.approx(monomial_norm(2, N, (b, a)), rel=1e-13)
    assert monomial_norm(3, N, (a, b, 0)) == pytest.approx(monomial_norm(3, N, (0, b, a)), rel=1e-13)


def test_basis_examples():
    assert basis_indices(EnsembleSpec(1, 3)) == [(0,), (1,), (2,), (3,)]
    assert basis_indices(EnsembleSpec(1, 4, LatticePolytope.interval(1, 3))) == [(1,), (2,), (3,)]
    assert len(basis_indices(EnsembleSpec(2, 2))) == 6


def test_basis_graded_lex_order():
    assert basis_indices(EnsembleSpec(2, 2)) == [(0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (2, 0)]
    b = basis_indices(EnsembleSpec(2, 3))
    degrees = [sum(a) for a in b]
    assert degrees == sorted(degrees)


def test_empty_basis_error():
    with pytest.raises(EnsembleError):
        EnsembleSpec(1, 2, LatticePolytope.interval(5, 7)).basis


def test_dimension_cap():
    with pytest.raises(EnsembleError):
        EnsembleSpec(4, 2)


@given(st.integers(1, 3), st.integers(0, 9))
@settings(max_examples=30)
def test_basis_cardinality_unconstrained(m, N):
    assert EnsembleSpec(m, N).dim == full_dimension(m, N) == math.comb(N + m, m)


@given(st.integers(0, 6), st.integers(0, 6), st.integers(0, 8))
@settings(max_examples=40)
def test_basis_cardinality_constrained(a, w, N):
    P = LatticePolytope.interval(a, a + w)
    expected = len([k for k in range(a, a + w + 1) if k <= N])
    if expected == 0:
        with pytest.raises(EnsembleError):
            EnsembleSpec(1, N, P).basis
    else:
        assert EnsembleSpec(1, N, P).dim == expected


def test_basis_norms_positive():
    spec = EnsembleSpec(2, 6, LatticePolytope(2, ((0, 0), (3, 0), (0, 3))))
    assert all(v > 0 for v in spec.basis_norms.values())
    assert all(sum(a) <= 6 for a in spec.basis)


def test_sampling_deterministic():
    spec = EnsembleSpec(2, 3)
    a = sample_section(spec, trial_rng(5, 9))
    b = sample_section(spec, trial_rng(5, 9))
    assert a.as_dict() == b.as_dict()
    c = sample_section(spec, trial_rng(5, 10))
    assert not np.allclose(a.coeffs, c.coeffs)


def test_sampling_covariance_identity():
    rng = np.random.default_rng(0)
    n, d = 10**5, 4
    C = sample_coefficients(n * d, rng).reshape(n, d)
    cov = C.T @ C.conj() / n
    # entries of the empirical covariance have standard error 1/sqrt(n)
    assert np.all(np.abs(cov - np.eye(d)) < 3 / math.sqrt(n) * 1.5)
    pseudo = C.T @ C / n
    assert np.all(np.abs(pseudo) < 3 / math.sqrt(n) * 1.5)


def test_sampling_norm_expectation():
    spec = EnsembleSpec(1, 10)
    X = sample_many(spec, 1, range(10**4))
    sq = np.sum(np.abs(X) ** 2, axis=1)
    se = sq.std() / math.sqrt(sq.size)
    assert abs(sq.mean() - 11) < 3 * se


def test_sampling_ks_gaussian():
    x = sample_coefficients(10**5, np.random.default_rng(2)).real
    assert stats.kstest(x, "norm", args=(0, math.sqrt(0.5))).pvalue > 1e-3


def test_trial_streams_distinct():
    a = trial_rng(0, 1).standard_normal(4)
    b = trial_rng(0, 1, stream=7).standard_normal(4)
    assert not np.allclose(a, b)
    assert np.allclose(a, trial_rng(0, 1).standard_normal(4))


def test_evaluate_constant():
    spec = EnsembleSpec(1, 5)
    s = SectionSample.from_dict(spec, {(0,): 1.0})
    for z in [0, 0.3 + 2j, -5.0]:
        assert evaluate_section(s, z) == pytest.approx(1 / monomial_norm(1, 5, (0,)), rel=1e-12)


def test_evaluate_origin_m2():
    spec = EnsembleSpec(2, 4)
    s = sample_section(spec, trial_rng(3, 0))
    val = evaluate_section(s, np.array([0j, 0j]))
    assert val == pytest.approx(s.as_dict()[(0, 0)] / monomial_norm(2, 4, (0, 0)), rel=1e-13)


def naive_value(sample, z):
    mpmath.mp.dps = 40
    total = mpmath.mpc(0)
    for alpha, lam in sample.as_dict().items():
        term = mpmath.mpc(lam.real, lam.imag) / mpmath.sqrt(mpmath.mpf(monomial_norm(sample.spec.m, sample.spec.N, alpha)) ** 2)
        for zj, aj in zip(np.atleast_1d(z), alpha):
            term *= mpmath.mpc(zj.real, zj.imag) ** aj
        total += term
    return complex(total)


@pytest.mark.parametrize("m,N", [(1, 30), (2, 8), (3, 4)])
def test_evaluate_matches_extended_precision(m, N):
    spec = EnsembleSpec(m, N)
    rng = np.random.default_rng(m * 100 + N)
    for t in range(3):
        s = sample_section(spec, trial_rng(m, t))
        z = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) * 0.8
        zz = z[0] if m == 1 else z
        assert evaluate_section(s, zz) == pytest.approx(naive_value(s, z), rel=1e-12)


def test_evaluate_large_z_no_overflow():
    spec = EnsembleSpec(1, 400)
    s = sample_section(spec, trial_rng(0, 0))
    h = hermitian_magnitude(s, 1e200)
    assert np.isfinite(h) and h > 0
    # |s|_h at z -> infinity tends to |lam_N| / ||z^N|| scaled by the unit representative
    assert h == pytest.approx(abs(s.as_dict()[(400,)]) / monomial_norm(1, 400, (400,)), rel=1e-10)


def test_gradient_matches_finite_difference():
    spec = EnsembleSpec(2, 5)
    s = sample_section(spec, trial_rng(4, 4))
    z = np.array([0.3 + 0.2j, -0.4 + 0.1j])
    g = evaluate_gradient(s, z)
    h = 1e-6
    for j in range(2):
        e = np.zeros(2, dtype=complex)
        e[j] = h
        fd = (evaluate_section(s, z + e) - evaluate_section(s, z - e)) / (2 * h)
        assert g[j] == pytest.approx(fd, rel=1e-7)


def test_gradient_scalar_m1():
    spec = EnsembleSpec(1, 6)
    s = SectionSample.from_chart(spec, {(3,): 1.0})
    assert evaluate_gradient(s, 2.0) == pytest.approx(3 * 4.0)


@given(st.integers(0, 10**6), st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=30, deadline=None)
def test_evaluation_linear(seed, x, y):
    spec = EnsembleSpec(1, 12)
    a = sample_section(spec, trial_rng(seed, 0))
    b = sample_section(spec, trial_rng(seed, 1))
    z = complex(x, y)
    lhs = evaluate_section(a + b, z)
    rhs = evaluate_section(a, z) + evaluate_section(b, z)
    scale = abs(evaluate_section(a, z)) + abs(evaluate_section(b, z)) + 1e-300
    assert abs(lhs - rhs) <= 1e-12 * scale


def test_json_roundtrip():
    spec = EnsembleSpec(2, 6, LatticePolytope(2, ((0, 0), (3, 0), (0, 3))))
    s = sample_section(spec, trial_rng(8, 2))
    doc = json.loads(s.to_json())
    assert doc["m"] == 2 and doc["N"] == 6 and len(doc["coeffs"]) == spec.dim
    back = SectionSample.from_json(s.to_json())
    assert back.spec == spec
    assert np.array_equal(back.coeffs, s.coeffs)


def test_json_key_mismatch():
    spec = EnsembleSpec(1, 2)
    doc = {"m": 1, "N": 2, "coeffs": [[[0], 1.0, 0.0]]}
    with pytest.raises(EnsembleError):
        SectionSample.from_json(json.dumps(doc))


def test_coefficients_immutable():
    s = sample_section(EnsembleSpec(1, 3), trial_rng(0, 0))
    with pytest.raises(ValueError):
        s.coeffs[0] = 1.0
