import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zerostat.ensembles import EnsembleSpec, SectionSample, evaluate_section, sample_section, trial_rng
from zerostat.polytopes import LatticePolytope
from zerostat.zeros import (
    DegeneracyError,
    ZeroSectionError,
    ZeroSet,
    ZeroSolverError,
    aberth_roots,
    annulus,
    count_in,
    roots_cp1,
    solve_cp1_batch,
    solve_system_2d,
    solve_univariate,
    torus,
    whole_chart,
)

TRIANGLE3 = LatticePolytope(2, ((0, 0), (3, 0), (0, 3)))


def roots_of_unity_set():
    a = np.zeros(9, dtype=complex)
    a[0], a[8] = -1, 1
    return solve_univariate(a)


def test_roots_of_unity():
    zs = roots_of_unity_set()
    assert zs.at_infinity == 0 and zs.chart_count == 8
    z = zs.points[:, 0]
    assert np.allclose(np.abs(z), 1, atol=1e-14)
    assert np.all(np.abs(z**8 - 1) < 1e-13)
    angles = np.sort(np.mod(np.angle(z), 2 * math.pi))
    assert np.allclose(angles, 2 * math.pi * np.arange(8) / 8, atol=1e-13)
    assert np.all(zs.residuals < 1e-8)


def test_degree_drop_goes_to_infinity():
    spec = EnsembleSpec(1, 6)
    s = sample_section(spec, trial_rng(2, 0))
    lam = s.as_dict()
    lam[(6,)] = 0
    zs = roots_cp1(SectionSample.from_dict(spec, lam))
    assert zs.at_infinity >= 1
    assert zs.total_count == 6


def test_zero_section_rejected():
    with pytest.raises(ZeroSectionError):
        solve_univariate(np.zeros(5))


def test_root_at_origin_has_multiplicity():
    zs = solve_univariate([0, 0, 1, 1, 0])  # z^2 (1 + z), degree 4
    assert zs.at_infinity == 1
    assert dict(zip(np.round(zs.points[:, 0].real, 12), zs.multiplicity)) == {0.0: 2, -1.0: 1}


def test_double_root_does_not_crash():
    zs = solve_univariate([1, -1, -1, 1])  # (z - 1)^2 (z + 1)
    assert zs.total_count == 3
    assert count_in(zs, annulus(0.99, 1.01)) == 3


@pytest.mark.parametrize("t", range(5))
def test_random_n50_residuals_and_cross_check(t):
    spec = EnsembleSpec(1, 50)
    s = sample_section(spec, trial_rng(50, t))
    zs = roots_cp1(s, cross_check=True)
    assert zs.total_count == 50
    z = zs.points[:, 0]
    # relative residual of the section against the sum of absolute term sizes
    terms = np.abs(s.chart_coeffs())[None, :] * np.abs(z)[:, None] ** np.arange(51)[None, :]
    rel = np.abs(evaluate_section(s, z)) / terms.sum(axis=1)
    assert np.all(rel < 1e-8)


def test_matches_independent_aberth_iteration():
    spec = EnsembleSpec(1, 50)
    s = sample_section(spec, trial_rng(7, 0))
    zs = roots_cp1(s)
    other = aberth_roots(s.chart_coeffs())
    d = np.abs(zs.points[:, 0][:, None] - other[None, :])
    assert d.min(axis=1).max() < 1e-6 * (1 + np.abs(zs.points[:, 0]).max())


def test_batch_matches_single():
    spec = EnsembleSpec(1, 30)
    rows = []
    for t in range(4):
        s = sample_section(spec, trial_rng(3, t))
        rows.append(s.chart_coeffs())
    batch = solve_cp1_batch(np.array(rows))
    for row, zs in zip(rows, batch):
        single = solve_univariate(row)
        a = np.sort_complex(single.points[:, 0])
        b = np.sort_complex(zs.points[:, 0])
        assert np.allclose(a, b, atol=1e-12)


def test_count_in_examples():
    empty = ZeroSet(np.zeros((0, 1), complex), np.zeros(0), np.zeros(0, np.int64), 0, 0)
    assert count_in(empty, whole_chart) == 0
    zs = roots_of_unity_set()
    assert count_in(zs, annulus(0.9, 1.1)) == 8
    assert count_in(zs, whole_chart) == len(zs.chart_zeros)
    assert count_in(zs, annulus(1.1, 2.0)) == 0


def test_csv_columns():
    lines = roots_of_unity_set().to_csv().splitlines()
    assert lines[0] == "re,im,residual,multiplicity"
    assert len(lines) == 9


@pytest.mark.parametrize("t", range(10))
def test_perturbation_stability(t):
    # well-conditioned: roots well separated, coefficients moderate
    rng = np.random.default_rng(t)
    roots = np.exp(2j * math.pi * (np.arange(10) + 0.3 * rng.random(10)) / 10) * (0.5 + rng.random(10))
    a = np.polynomial.polynomial.polyfromroots(roots)
    base = np.sort_complex(solve_univariate(a).points[:, 0])
    pert = a + 1e-10 * (rng.standard_normal(11) + 1j * rng.standard_normal(11))
    moved = solve_univariate(pert).points[:, 0]
    for r in base:
        assert np.min(np.abs(moved - r)) <= 1e-6


@given(st.integers(1, 400), st.integers(0, 2**32))
@settings(max_examples=60, deadline=None)
def test_total_count_equals_degree(N, seed):
    s = sample_section(EnsembleSpec(1, N), trial_rng(seed, N))
    try:
        zs = roots_cp1(s)
    except ZeroSolverError:
        return  # failures must be loud, never a wrong count
    assert zs.total_count == N


def test_system_roots_of_unity():
    spec = EnsembleSpec(2, 2)
    f = SectionSample.from_chart(spec, {(2, 0): 1, (0, 0): -1})
    g = SectionSample.from_chart(spec, {(0, 2): 1, (0, 0): -1})
    zs = solve_system_2d(f, g)
    assert zs.chart_count == 4 and zs.at_infinity == 0
    got = sorted((round(p[0].real), round(p[1].real)) for p in zs.points)
    assert got == [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    assert np.allclose(np.abs(zs.points.imag), 0, atol=1e-12)
    assert count_in(zs, torus) == 4


def test_system_shared_component_raises():
    # both vanish on the line x + y = 1
    spec = EnsembleSpec(2, 2)
    f = SectionSample.from_chart(spec, {(2, 0): 1, (1, 1): 1, (1, 0): -1})  # x (x + y - 1)
    g = SectionSample.from_chart(spec, {(1, 1): 1, (0, 2): 1, (0, 1): -1})  # y (x + y - 1)
    with pytest.raises(ZeroSolverError):
        solve_system_2d(f, g)


def test_system_degree_cap():
    big = EnsembleSpec(2, 13)
    f = sample_section(big, trial_rng(0, 0))
    with pytest.raises(ValueError):
        solve_system_2d(f, f)


def test_system_identical_sections_degenerate():
    spec = EnsembleSpec(2, 3)
    f = sample_section(spec, trial_rng(1, 1))
    with pytest.raises(ZeroSolverError):
        solve_system_2d(f, f.scaled(2.0))


def test_triangle_pairs_have_nine_torus_zeros():
    spec = EnsembleSpec(2, 3, TRIANGLE3)
    for t in range(20):
        rng = trial_rng(9, t)
        f, g = sample_section(spec, rng), sample_section(spec, rng)
        zs = solve_system_2d(f, g)
        assert count_in(zs, torus) == 9
        assert np.all(zs.residuals < 1e-8)


def test_bezout_n4():
    spec = EnsembleSpec(2, 4)
    exact, errors = 0, 0
    for t in range(200):
        rng = trial_rng(44, t)
        f, g = sample_section(spec, rng), sample_section(spec, rng)
        try:
            zs = solve_system_2d(f, g)
        except (ZeroSolverError, DegeneracyError):
            errors += 1
            continue
        assert zs.chart_count == 16, "a wrong count must never be returned silently"
        exact += 1
    assert exact >= 190
    assert exact + errors == 200
