import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twoloop.errors import OutOfAnnulus, PreconditionError, SaddleLevelMismatch, ValidationError
from twoloop.system_model import (CriticalPoint, OneForm, Polynomial2, build_system,
                                  canonical_f, find_critical_points, load_system,
                                  normalized_parameter, parse_system, system_to_json,
                                  validate_two_saddle_loop)

coef = st.floats(-3, 3, allow_nan=False)
terms = st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3), coef), min_size=1, max_size=6)


@settings(max_examples=60, deadline=None)
@given(terms, st.complex_numbers(max_magnitude=2), st.complex_numbers(max_magnitude=2))
def test_polynomial_evaluation_matches_term_sum(ts, x, y):
    p = Polynomial2.from_terms(ts)
    direct = sum(c * x ** i * y ** j for i, j, c in ts)
    assert abs(p(x, y) - direct) <= 1e-12 * (1 + sum(abs(c) * 3 ** (i + j) for i, j, c in ts))


@settings(max_examples=40, deadline=None)
@given(terms, st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_derivatives_match_finite_differences(ts, x, y):
    p = Polynomial2.from_terms(ts)
    h = 1e-6
    assert p.dx()(x, y) == pytest.approx((p(x + h, y) - p(x - h, y)) / (2 * h), abs=1e-5)
    assert p.dy()(x, y) == pytest.approx((p(x, y + h) - p(x, y - h)) / (2 * h), abs=1e-5)


def test_duplicate_terms_are_summed():
    p = Polynomial2.from_terms([(1, 0, 2.0), (1, 0, 0.5)])
    assert p(2.0, 7.0) == pytest.approx(5.0)


def test_oneform_epsilon_slices():
    om = OneForm.from_terms([(0, 0, 1, 1.0), (1, 1, 0, 2.0)], [(2, 0, 0, 3.0)])
    P, Q = om(0.5, 2.0, eps=0.1)
    assert P == pytest.approx(2.0 + 0.1 * 2 * 0.5)
    assert Q == pytest.approx(0.01 * 3.0)
    assert OneForm.zero().is_zero()


def test_critical_points_of_saddle_quadratic():
    cps = find_critical_points(Polynomial2.from_terms([(2, 0, 1.0), (0, 2, -1.0)]), (-2, 2, -2, 2), 16)
    assert len(cps) == 1
    assert cps[0].kind == "saddle"
    assert np.allclose(cps[0].location, (0, 0), atol=1e-12) and cps[0].level == 0


def test_critical_points_of_canonical_f():
    cps = find_critical_points(canonical_f(), (-2, 2, -2, 2), 16)
    saddles = sorted(c.location for c in cps if c.kind == "saddle")
    centers = [c for c in cps if c.kind == "center"]
    assert np.allclose(saddles, [(-1, 0), (1, 0)], atol=1e-12)
    assert len(centers) == 1 and centers[0].level == pytest.approx(-0.25, abs=1e-14)


def test_no_critical_points_for_linear_f():
    assert find_critical_points(Polynomial2.from_terms([(1, 0, 1.0)]), (-1, 1, -1, 1), 16) == []


def test_symmetric_saddles_are_mirror_images():
    s = [c for c in find_critical_points(canonical_f(), (-2, 2, -2, 2), 16) if c.kind == "saddle"]
    a, b = s
    assert abs(a.location[0] + b.location[0]) < 1e-10 and abs(a.location[1] - b.location[1]) < 1e-10


def test_canonical_loop(canonical):
    loop = canonical.loop
    assert loop.annulus_sign == -1
    assert loop.annulus_range == pytest.approx((-0.25, 0.0))
    assert np.allclose(loop.center.location, (0, 0), atol=1e-12)
    for s in loop.saddles:
        assert canonical.f(*s.location) == 0.0
        assert s.hessian_det < -1e-10


def test_center_only_with_fabricated_saddles():
    f = Polynomial2.from_terms([(0, 2, 0.5), (2, 0, 0.5)])
    fake = CriticalPoint((1.0, 0.0), "saddle", 0.5, -1.0)
    fake2 = CriticalPoint((-1.0, 0.0), "saddle", 0.5, -1.0)
    with pytest.raises(ValidationError):
        validate_two_saddle_loop(f, fake, fake2)


def test_same_saddle_twice():
    f = Polynomial2.from_terms([(0, 2, 0.5), (2, 0, -0.5), (4, 0, 0.25)])
    s = [c for c in find_critical_points(f, (-2, 2, -2, 2), 16) if c.kind == "saddle"][0]
    with pytest.raises(PreconditionError):
        validate_two_saddle_loop(f, s, s)


def test_level_mismatch():
    f = canonical_f() + Polynomial2.from_terms([(1, 0, 0.01)])
    s = [c for c in find_critical_points(f, (-2, 2, -2, 2), 16) if c.kind == "saddle"]
    with pytest.raises(SaddleLevelMismatch):
        validate_two_saddle_loop(f, s[0], s[1])


def test_normalized_parameter(canonical):
    loop = canonical.loop
    assert normalized_parameter(loop, -0.1) == pytest.approx(0.1)
    assert abs(loop.annulus_sign * normalized_parameter(loop, -0.1)) == pytest.approx(0.1)
    with pytest.raises(OutOfAnnulus):
        normalized_parameter(loop, 0.0)


@pytest.mark.parametrize("t", np.linspace(-0.24, -0.005, 10))
def test_ovals_close(canonical, t):
    from twoloop.melnikov import periodic_orbit
    cyc = periodic_orbit(canonical, t)
    assert cyc.is_closed(1e-8)


def test_json_round_trip(tmp_path):
    f = canonical_f()
    om = OneForm.from_terms([(0, 0, 1, 1.0), (0, 2, 1, -2.0)], [])
    path = tmp_path / "sys.json"
    path.write_text(json.dumps(system_to_json(f, om, (-2, 2, -2, 2))))
    sysm = load_system(path)
    assert sysm.loop.annulus_sign == -1
    assert sysm.omega(0.5, 0.3) == pytest.approx(om(0.5, 0.3))


def test_malformed_definition():
    with pytest.raises(ValidationError):
        parse_system({"f": [[0, 2, 1.0]]})
    with pytest.raises(ValidationError):
        build_system(Polynomial2.from_terms([(1, 0, 1.0)]), OneForm.zero(), (-1, 1, -1, 1))
