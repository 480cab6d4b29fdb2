from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from twoloop import bounds as B
from twoloop.errors import ValidationError

F = Fraction
quarter = st.integers(0, 16).map(lambda k: F(k, 4))


@pytest.mark.parametrize("nu, want", [((1, 1, 1, 1), 4), ((0, 0, 0, 0), 1), ((2, 1, 3, 2), 8)])
def test_two_saddle(nu, want):
    assert B.bound_two_saddle(B.CharacteristicSet(*nu)) == want


@pytest.mark.parametrize("args, want", [((1, 1), 2), ((0, 0), 0), ((F(3, 2), 1), F(5, 2))])
def test_homoclinic(args, want):
    assert B.bound_homoclinic(*args) == want


@pytest.mark.parametrize("args, want", [((2, 2, 2, 2), 7), ((0, 1, 1, 1), 3), ((0, 0, 0, 0), 1)])
def test_example_form(args, want):
    assert B.bound_example_form(*args) == want


@pytest.mark.parametrize("args, want", [((1, 2), 2), ((2, 2), 3), ((0, 1), 0)])
def test_roussarie(args, want):
    assert B.bound_roussarie(*args) == want


@pytest.mark.parametrize("p, want", [(1, 1), (2, 4), (3, 8)])
def test_dumortier_roussarie(p, want):
    assert B.bound_dumortier_roussarie(p) == want


def test_compare():
    assert B.compare_bounds(1, 1, 1, 1)["bounds"]["example_form"] == 4
    assert B.compare_bounds(1, 1, 1, 1)["bounds"]["dumortier_roussarie"] == 1
    two = B.compare_bounds(2, 2, 2, 2)["bounds"]
    assert (two["example_form"], two["dumortier_roussarie"]) == (7, 4)
    zero = B.compare_bounds(0, 0, 0, 0)
    assert zero["bounds"]["example_form"] == 1
    assert zero["bounds"]["dumortier_roussarie"] == 0
    assert any("clipped" in n for n in zero["notes"])


def test_results_are_exact_rationals():
    v = B.bound_two_saddle(B.CharacteristicSet(0.5, 0.25, "3/4", F(1, 3)))
    assert isinstance(v, Fraction) and v == 1 + F(1, 2) + F(3, 4) + F(1, 3)


@given(quarter, quarter, quarter, quarter, st.integers(0, 3), quarter)
def test_monotone_in_each_argument(a, b, c, d, which, bump):
    base = [a, b, c, d]
    raised = list(base)
    raised[which] += bump
    assert B.bound_two_saddle(B.CharacteristicSet(*raised)) >= B.bound_two_saddle(B.CharacteristicSet(*base))


@given(quarter, quarter, quarter, quarter)
def test_json_round_trip(a, b, c, d):
    cs = B.CharacteristicSet(a, b, c, d, "fitted")
    assert B.CharacteristicSet.from_json(cs.to_json()) == cs


@pytest.mark.parametrize("bad", [(-1, 0, 0, 0), (float("nan"), 0, 0, 0), ("x", 0, 0, 0)])
def test_invalid_inputs(bad):
    with pytest.raises(ValidationError):
        B.CharacteristicSet(*bad)
