import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import M1_oracle, eye_area
from twoloop.errors import NoisyTail, NotHyperelliptic, OutOfAnnulus, PreconditionError
from twoloop.melnikov import (AbelianIntegralSamples, abelian_integral, characteristic_number,
                              composite, decompose_log, default_grid, estimate_Md, melnikov_M1,
                              periodic_orbit, vanishing_cycle, vanishing_parts)
from twoloop.system_model import OneForm, Polynomial2, canonical_system

Y_DX = (Polynomial2.from_terms([(0, 1, 1.0)]), Polynomial2([[0.0]]))


def test_periodic_orbit_crosses_axis_at_algebraic_points(canonical):
    t = -0.1
    cyc = periodic_orbit(canonical, t)
    pts = cyc.samples(2048)
    half_width = math.sqrt(1 - 2 * math.sqrt(-t))
    assert np.max(np.abs(pts[:, 0].real)) == pytest.approx(half_width, abs=1e-5)
    assert cyc.is_closed(1e-8)
    assert np.max(np.abs(canonical.f(pts[:, 0], pts[:, 1]) - t)) < 1e-9


def test_enclosed_area_grows_toward_eye(canonical):
    areas = [abelian_integral(periodic_orbit(canonical, -s), Y_DX).real for s in (0.2, 0.1, 0.01, 1e-4)]
    assert np.all(np.diff(areas) > 0) and areas[-1] < eye_area()


def test_outside_annulus(canonical):
    with pytest.raises(OutOfAnnulus):
        periodic_orbit(canonical, 0.01)


@pytest.mark.parametrize("s", [0.2, 0.05, 0.003])
def test_area_against_green_oracle(canonical, s):
    assert abs(abelian_integral(periodic_orbit(canonical, -s), Y_DX) - M1_oracle(s)) < 1e-9


def test_exact_form_integrates_to_zero(canonical):
    df = (canonical.f.dx(), canonical.f.dy())
    for cyc in (periodic_orbit(canonical, -0.05), vanishing_cycle(canonical, 1, -1e-3),
                vanishing_cycle(canonical, 2, -0.02)):
        assert abs(abelian_integral(cyc, df)) < 1e-11


def test_reversal_negates(canonical):
    for cyc in (periodic_orbit(canonical, -0.05), vanishing_cycle(canonical, 2, -0.01)):
        assert abelian_integral(cyc.reversed(), Y_DX) == -abelian_integral(cyc, Y_DX)


def test_composite_is_additive(canonical):
    a, b = vanishing_cycle(canonical, 1, -0.01), vanishing_cycle(canonical, 2, -0.01)
    total = abelian_integral(composite(a, b), Y_DX)
    assert abs(total - abelian_integral(a, Y_DX) - abelian_integral(b, Y_DX)) < 1e-14
    g = periodic_orbit(canonical, -0.01)
    assert abs(abelian_integral(composite(g, g.reversed()), Y_DX)) < 1e-14


def test_vanishing_cycle_near_saddle(canonical):
    t = -1e-3
    cyc = vanishing_cycle(canonical, 1, t)
    x_s = canonical.loop.saddle1.location[0]
    pts = cyc.samples(256)
    assert np.max(np.abs(pts[:, 0] - x_s)) < 10 * math.sqrt(abs(t))
    assert cyc.is_closed()
    assert np.max(np.abs(canonical.f(pts[:, 0], pts[:, 1]) - t)) < 1e-9


def test_vanishing_cycle_diameter_shrinks_like_sqrt(canonical):
    ratios = [vanishing_cycle(canonical, 2, -t).diameter() / math.sqrt(t) for t in (1e-2, 1e-3, 1e-4, 1e-5)]
    assert max(ratios) < 1.2 * min(ratios)


def test_vanishing_integral_pure_imaginary(canonical):
    for idx in (1, 2):
        for s in (0.03, 3e-4):
            v = abelian_integral(vanishing_cycle(canonical, idx, -s), Y_DX)
            assert abs(v.real) < 1e-10 * max(1, abs(v))
            # local Morse integral: area of the vanishing disc, pi * s * sqrt(2) to leading order
            assert abs(abs(v) - 2 * math.pi * s / math.sqrt(2)) < 0.05 * abs(v)


def test_not_hyperelliptic(canonical):
    from twoloop.melnikov import _hyperelliptic
    with pytest.raises(NotHyperelliptic):
        _hyperelliptic(Polynomial2.from_terms([(0, 4, 1.0), (2, 0, 1.0)]))
    assert _hyperelliptic(canonical.f)[0] == pytest.approx(0.5)


def test_melnikov_zero_form(canonical):
    m = melnikov_M1(canonical_system(0.0, 0.0))
    assert np.all(m.values == 0)


def test_melnikov_tends_to_eye_area(canonical):
    m = melnikov_M1(canonical, [1e-3, 1e-5, 1e-7])
    gaps = eye_area() - np.asarray(m.values)
    assert np.all(gaps > 0) and np.all(np.diff(gaps) < 0) and gaps[-1] < 1e-5


def test_odd_form_vanishes(canonical):
    odd = canonical.with_omega(OneForm.from_terms([(0, 1, 1, 1.0)], []))
    assert np.max(np.abs(melnikov_M1(odd, default_grid(odd, 12)).values)) < 1e-10


def test_melnikov_matches_quadrature_for_family():
    sysm = canonical_system(1.0, -2.0)
    grid = [0.1, 0.01, 0.001]
    got = melnikov_M1(sysm, grid).values
    assert np.allclose(got, [M1_oracle(s, 1.0, -2.0) for s in grid], atol=1e-9, rtol=0)


def test_symmetric_form_has_equal_parts(canonical):
    f1, f2 = vanishing_parts(canonical, default_grid(canonical, 12))
    assert np.max(np.abs(f1.values - f2.values)) < 1e-9


def test_fsum_vanishes_linearly(canonical):
    grid = default_grid(canonical, 16)
    f1, f2 = vanishing_parts(canonical, grid)
    m1 = characteristic_number(f1)
    m2 = characteristic_number(f2)
    assert (m1.p, m1.q) == (Fraction(1), 0) and (m2.p, m2.q) == (Fraction(1), 0)
    fsum = f1.values + f2.values
    assert characteristic_number(grid, fsum).p == 1


def test_decomposition_of_synthetic_input():
    s = 0.1 * 2.0 ** -np.arange(14)
    M1 = AbelianIntegralSamples("periodic", s, 2 * s * np.log(s) + 3)
    f = AbelianIntegralSamples("vanishing1", s, s.copy())
    dec = decompose_log(M1, f, f)
    assert np.max(np.abs(dec.f3 - 3)) < 1e-10


def test_decomposition_of_y_dx_is_smooth(canonical):
    grid = default_grid(canonical)
    f1, f2 = vanishing_parts(canonical, grid)
    dec = decompose_log(melnikov_M1(canonical, grid), f1, f2)
    assert dec.residual < 10
    assert abs(dec.f3[-1] - eye_area()) < 1e-4


def test_decomposition_requires_common_grid():
    a = AbelianIntegralSamples("periodic", np.array([0.1, 0.05]), np.ones(2))
    b = AbelianIntegralSamples("vanishing1", np.array([0.1, 0.04]), np.ones(2))
    with pytest.raises(PreconditionError):
        decompose_log(a, b, b)


def test_fit_s2_log_s():
    s = 0.0625 * 2.0 ** -np.arange(16)
    m = characteristic_number(s, s ** 2 * np.log(s))
    assert (m.p, m.q) == (Fraction(2), 1) and m.c == pytest.approx(1, rel=1e-6)


def test_fit_power_three_halves():
    s = 0.0625 * 2.0 ** -np.arange(16)
    m = characteristic_number(s, 5 * s ** 1.5)
    assert (m.p, m.q) == (Fraction(3, 2), 0) and m.c == pytest.approx(5, rel=1e-6)


def test_fit_of_canonical_m1(canonical):
    m = characteristic_number(melnikov_M1(canonical))
    assert (m.p, m.q) == (Fraction(0), 0)
    assert m.c == pytest.approx(eye_area(), rel=0.05)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([0, 0.5, 1, 1.5, 2]), st.integers(0, 2), st.floats(0.2, 5.0),
       st.integers(0, 2 ** 31))
def test_fit_stable_under_grid_halving(p, q, c, seed):
    rng = np.random.default_rng(seed)
    s = 0.0625 * 2.0 ** -np.arange(0, 24, 0.5)
    v = c * s ** p * np.log(s) ** q * (1 + 0.005 * rng.standard_normal(len(s)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        dense = characteristic_number(s, v)
        sparse = characteristic_number(s[::2], v[::2])
    assert (dense.p, dense.q) == (sparse.p, sparse.q) == (Fraction(p).limit_denominator(4), q)


def test_fit_rejects_short_grids():
    s = np.geomspace(0.1, 1e-2, 20)
    with pytest.raises(PreconditionError):
        characteristic_number(s, s)


def test_noisy_tail():
    s = np.geomspace(0.1, 1e-5, 30)
    v = np.where(s < 1e-4, s ** 2, s)
    with pytest.raises(NoisyTail):
        characteristic_number(s, v)


def test_estimate_first_order(canonical):
    t = -0.05
    est = estimate_Md(canonical, periodic_orbit(canonical, t), t, [1e-2, 1e-3, 1e-4])
    assert est.d == 1
    assert abs(est.Md + M1_oracle(0.05)) < 1e-6 * M1_oracle(0.05)
    assert est.check < 1e-6


def test_estimate_detects_second_order(canonical):
    # omega = d(x^2) + eps y dx: the exact part has no first-order effect
    sysm = canonical.with_omega(OneForm.from_terms([(0, 1, 0, 2.0), (1, 0, 1, 1.0)], []))
    t = -0.05
    d, _ = estimate_Md(sysm, periodic_orbit(sysm, t), t, [1e-2, 1e-3, 1e-4])
    assert d == 2


def test_estimate_degenerate(canonical):
    sysm = canonical_system(0.0, 0.0)
    est = estimate_Md(sysm, periodic_orbit(sysm, -0.05), -0.05, [1e-2, 1e-3, 1e-4])
    assert est.d is None
