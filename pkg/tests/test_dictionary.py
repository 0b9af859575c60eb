import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pdl.dictionary import Dictionary


def test_quadwell_dictionary_has_ten_atoms():
    d = Dictionary.polynomial(2, 3)
    assert d.n_atoms == 10
    assert d.labels()[:3] == ["1", "x1", "x2"]
    assert "x1*x2^2" in d.labels()


def test_no_cross_terms():
    d = Dictionary.polynomial(4, 1, constant=False, cross_terms=False)
    np.testing.assert_array_equal(d.exponents, np.eye(4, dtype=int))
    assert Dictionary.polynomial(2, 2, cross_terms=False).n_atoms == 5


@settings(max_examples=40)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_evaluate_matches_monomials(n, degree, seed):
    d = Dictionary.polynomial(n, degree)
    x = np.random.default_rng(seed).uniform(-2, 2, (7, n))
    ref = np.prod(x[:, None, :] ** d.exponents[None], axis=2)
    np.testing.assert_allclose(d.evaluate(x), ref, rtol=1e-12)


def test_index_of_and_json():
    d = Dictionary.polynomial(3, 2, variable_names=("a", "b", "c"))
    assert d.index_of((0, 1, 1)) == d.labels().index("b*c")
    with pytest.raises(KeyError):
        d.index_of((3, 0, 0))
    back = Dictionary.from_json(d.to_json())
    np.testing.assert_array_equal(back.exponents, d.exponents)
    assert back.variable_names == ("a", "b", "c")


def test_rejects_bad_exponents():
    with pytest.raises(ValueError):
        Dictionary(np.array([[1, 0], [1, 0]]))
    with pytest.raises(ValueError):
        Dictionary(np.array([[-1]]))
