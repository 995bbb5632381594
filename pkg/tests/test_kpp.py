import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pulsefront.errors import UnboundedSearchError
from pulsefront.kpp import EigenProblem, minimal_speed, principal_eigenvalue, speed_bracket
from pulsefront.reaction import LogisticReaction

one = lambda x: np.ones_like(x)  # noqa: E731
sine = lambda x: 2 + np.sin(2 * np.pi * x)  # noqa: E731


def test_constant_potential_no_tilt():
    val, psi = principal_eigenvalue(EigenProblem(1.0, one))
    assert val == pytest.approx(-1.0, abs=1e-12)
    assert np.allclose(psi, 1.0)


def test_constant_potential_unit_tilt():
    val, _ = principal_eigenvalue(EigenProblem(1.0, one, wavenumber=1.0))
    assert val == pytest.approx(-2.0, abs=1e-5)


def test_sine_potential_against_dense_grid():
    val, psi = principal_eigenvalue(EigenProblem(1.0, sine, grid_n=512))
    ref, _ = principal_eigenvalue(EigenProblem(1.0, sine, grid_n=4096))
    assert -3 < val < -2
    assert abs(val - ref) < 1e-6
    assert psi.min() > 0 and psi.max() == 1.0


def test_second_order_convergence():
    p = lambda n: principal_eigenvalue(EigenProblem(1.0, sine, wavenumber=0.7, grid_n=n))[0]  # noqa: E731
    e1, e2, e3 = p(64), p(128), p(256)
    ratio = (e1 - e2) / (e2 - e3)
    assert 3.5 < ratio < 4.5


def test_grid_n_minimum():
    with pytest.raises(ValueError):
        EigenProblem(1.0, one, grid_n=8)


def test_homogeneous_minimal_speed():
    res = minimal_speed(LogisticReaction(1.0), 1.0)
    assert res.c_star == pytest.approx(2.0, abs=1e-4)
    assert res.lambda_opt == pytest.approx(1.0, rel=1e-3)
    assert minimal_speed(LogisticReaction(1.0), 4.0).c_star == pytest.approx(4.0, abs=1e-4)


def test_sine_minimal_speed_bracketed(sine_logistic):
    c = minimal_speed(sine_logistic, 1.0).c_star
    assert 2.0 <= c <= 2 * np.sqrt(3.0)
    fine = minimal_speed(sine_logistic, 1.0, grid_n=2048).c_star
    assert abs(c - fine) < 1e-5


def test_speed_bracket_examples():
    r = LogisticReaction(1.0)
    lo, hi = speed_bracket(1.0, r, r)
    assert lo == pytest.approx(-2.0, abs=1e-4) and hi == pytest.approx(2.0, abs=1e-4)
    assert speed_bracket(4.0, r, r)[0] == pytest.approx(-4.0, abs=1e-4)
    assert lo == pytest.approx(-hi, abs=1e-9)


def test_unbounded_search():
    tiny = LogisticReaction(1e-9)
    with pytest.raises(UnboundedSearchError):
        minimal_speed(tiny, 1.0)


@settings(max_examples=8, deadline=None)
@given(st.floats(0.3, 3.0), st.floats(-0.25, 0.25), st.floats(0.25, 4.0))
def test_speed_properties(mean, amp, delta):
    r = LogisticReaction(mean, fourier_cosine=(amp * mean,))
    c = minimal_speed(r, delta, grid_n=256).c_star
    m, big = r.m_min, r.m_max
    assert 2 * np.sqrt(delta * m) - 1e-5 <= c <= 2 * np.sqrt(delta * big) + 1e-5
    # a pointwise smaller rate cannot be faster
    smaller = LogisticReaction(0.8 * mean, fourier_cosine=(0.8 * amp * mean,))
    assert minimal_speed(smaller, delta, grid_n=256).c_star <= c + 1e-6


def test_sqrt_scaling_homogeneous():
    r = LogisticReaction(1.7)
    assert minimal_speed(r, 2.4).c_star == pytest.approx(2 * minimal_speed(r, 0.6).c_star, rel=1e-3)


def test_speed_grid_convergence_constant(sine_logistic):
    cs = [minimal_speed(sine_logistic, 1.0, grid_n=n).c_star for n in (64, 128, 256)]
    const = abs(cs[0] - cs[1]) * 64**2
    # second-order: the next difference follows C / n^2 within a safety factor
    assert abs(cs[1] - cs[2]) <= 2 * const / 128**2
