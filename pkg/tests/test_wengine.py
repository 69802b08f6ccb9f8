import math

import numpy as np
import pytest

from mlzseries.errors import DomainError, NotResonant
from mlzseries.model import lambda_matrix, new_model
from mlzseries.series import series_coefficients
from mlzseries.specfun import resonant_r
from mlzseries.wengine import (
    pn_finite,
    pn_limit,
    resonant_limit_check,
    w1_infinity,
    w2_infinity,
    w_n_finite,
    window_average,
    wn_limit,
)

from conftest import fig2_model, lz_model


def test_zero_time_and_zero_couplings():
    m = fig2_model()
    assert np.array_equal(w_n_finite(m, 1, 0.0).values, np.zeros((3, 3)))
    assert np.array_equal(w_n_finite(m, 0, 2.0).values, np.eye(3))
    assert not np.any(w1_infinity(np.zeros((3, 3)), m.slopes).values)


def test_domain_errors():
    m = fig2_model()
    with pytest.raises(DomainError):
        w_n_finite(m, 4, 1.0)
    with pytest.raises(DomainError):
        w_n_finite(m, 1, -1.0)
    with pytest.raises(DomainError):
        pn_finite(m, 5, 1.0)


def test_w1_infinity_lz():
    w = w1_infinity(lambda_matrix(lz_model(1.0)), [1.0, -1.0]).values
    # |W1_12|^2 = 2 lambda^2
    assert abs(w[0, 1]) ** 2 == pytest.approx(2.0, rel=1e-14)


def test_w1_w2_limits_match_closed_forms():
    m = fig2_model()
    L = lambda_matrix(m)
    w1 = wn_limit(m, 1).values
    w2 = wn_limit(m, 2).values
    assert np.abs(w1 - w1_infinity(L, m.slopes).values).max() <= 1e-6
    assert np.abs(w2 - w2_infinity(L, m.slopes).values).max() <= 1e-6


def test_w2_converges_with_t():
    m = fig2_model()
    ref = w2_infinity(lambda_matrix(m), m.slopes).values
    # oscillating tails decay like 1/t
    errs = [np.abs(w_n_finite(m, 2, t).values - ref).max() for t in (80.0, 320.0, 1280.0)]
    assert errs[0] / errs[1] > 3 and errs[1] / errs[2] > 3
    assert errs[2] < 0.01


@pytest.mark.parametrize("t", [1.0, 3.0])
def test_recursion_matches_symmetrized(t):
    m = fig2_model()
    for n in (2, 3):
        a = w_n_finite(m, n, t, tol=1e-10).values
        b = w_n_finite(m, n, t, tol=1e-10, method="recursion").values
        assert np.abs(a - b).max() <= 1e-8


def test_pn_finite_parity():
    m = fig2_model()
    for n, sym in ((2, 1), (3, -1), (4, 1)):
        p = pn_finite(m, n, 3.0)
        assert np.abs(p - sym * p.T).max() <= 1e-9
    assert np.abs(np.diag(pn_finite(m, 1, 3.0))).max() == 0


def test_p2_limit_lz():
    p = pn_limit(lz_model(1.0), 2)
    assert p[0, 1] == pytest.approx(2.0, abs=1e-8)


def test_p4_limit_fig2():
    m = fig2_model()
    p4 = pn_limit(m, 4)
    c = series_coefficients(m)
    assert abs(p4[0, 1] - c.p4[0, 1]) <= 1e-3
    p3 = pn_limit(m, 3)
    assert np.abs(p3 - c.p3).max() <= 1e-3


def test_window_average_constant():
    u = np.linspace(0, 100, 2001)
    assert window_average(u, np.full_like(u, 3.0), 10.0, 20.0) == pytest.approx(3.0, rel=1e-14)
    with pytest.raises(DomainError):
        window_average(u, u, 200.0, 5.0)


def test_w3_grows_on_resonant_configuration():
    # the three-state benchmark has the resonant terms (j,k,l,p) = (1,3,2,1); W3 has no limit
    m = fig2_model()
    mags = [np.abs(w_n_finite(m, 3, t, tol=1e-8).values).max() for t in (5.0, 20.0, 80.0)]
    assert mags[2] > mags[1] > mags[0]


def test_resonant_limit_trivial_and_errors():
    m = fig2_model()
    assert abs(resonant_limit_check(m, 0, 2, 2, 0)) <= 1e-3
    with pytest.raises(NotResonant):
        resonant_limit_check(m, 0, 2, 1, 1)


def test_resonant_limit_fig2():
    m = fig2_model()
    L = lambda_matrix(m)
    got = resonant_limit_check(m, 0, 2, 1, 0)
    assert got == pytest.approx(L.values[0, 2] ** 2 * L.values[0, 1] ** 2, abs=1e-3)
    assert abs(got - resonant_r(L, m.slopes, 0, 2, 1, 0)) <= 1e-3


def test_resonant_limit_negative_sign():
    # p = j with l > k: sgn(b_lk) = -1
    m = new_model([2.0, 0.5, -1.0], [[0, 0.8, 0.6], [0.8, 0, 0.7], [0.6, 0.7, 0]])
    L = lambda_matrix(m)
    got = resonant_limit_check(m, 0, 1, 2, 0)
    assert got < 0
    assert abs(got - resonant_r(L, m.slopes, 0, 1, 2, 0)) <= 1e-3
    assert math.isfinite(got)
