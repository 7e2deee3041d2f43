import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fimissing.divergence import LOG_LINEAR, NCE, QUADRATIC, bregman, f_eval, get_divergence


def test_closed_form_values():
    assert f_eval("log_linear", 1.0) == pytest.approx((0.0, 1.0, 1.0))
    assert f_eval("quadratic", 3.0) == pytest.approx((4.5, 3.0, 1.0))
    assert f_eval("nce", 1.0) == pytest.approx((-2 * np.log(2), -np.log(2), 0.5))


def test_bregman_values():
    for kind in ("log_linear", "nce", "quadratic"):
        assert bregman(kind, 2.0, 2.0) == 0.0
    assert bregman("quadratic", 3.0, 1.0) == pytest.approx(2.0)
    mp = mpmath.mpf
    oracle = 2 * mpmath.log(mp(2)) - 1
    assert bregman("log_linear", 2.0, 1.0) == pytest.approx(float(oracle), rel=1e-15)


def test_unknown_kind():
    with pytest.raises(ValueError):
        get_divergence("hellinger")


@pytest.mark.parametrize("fn", [LOG_LINEAR, NCE, QUADRATIC])
def test_ratio_terms_match_definitions(fn):
    log_r = np.linspace(-6, 6, 101)
    r = np.exp(log_r)
    f, f1, f2 = fn(r)
    m1, m2, g1, g2, dg1, dg2 = fn.ratio_terms(log_r)
    np.testing.assert_allclose(m1, -f1, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(m2, f1 * r - f, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(g1, f2 * r, rtol=1e-12)
    np.testing.assert_allclose(g2, f2 * r ** 2, rtol=1e-12)
    # dg are derivatives in log r
    h = 1e-6
    up, lo = fn.ratio_terms(log_r + h), fn.ratio_terms(log_r - h)
    np.testing.assert_allclose(dg1, (up[2] - lo[2]) / (2 * h), rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(dg2, (up[3] - lo[3]) / (2 * h), rtol=1e-6, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 50), st.floats(0.01, 50))
def test_bregman_nonnegative(a, b):
    for kind in ("log_linear", "nce", "quadratic"):
        assert bregman(kind, a, b) >= -1e-10


def test_ratio_terms_stable_in_tails():
    m1, m2, g1, g2, dg1, dg2 = NCE.ratio_terms(np.array([-800.0, 800.0]))
    for arr in (m1, m2, g1, g2, dg1, dg2):
        assert np.all(np.isfinite(arr))
