import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from liouville_fusion.kernels import DomainError, LiouvilleParams
from liouville_fusion.special import (
    d_dozz_at_q,
    d_dozz_at_q_third,
    dozz,
    dozz_reduced,
    dozz_value,
    get_evaluator,
    log_upsilon,
    upsilon,
    upsilon_derivatives_at_zero,
)

# first verified outputs at gamma = 1.5, mu = 1 (regression values)
GOLDEN_D1 = 0.8760820757771315
GOLDEN_DOZZ = 0.10953231246298649
GOLDEN_D_DOZZ = -0.22522094836242698
P15 = LiouvilleParams(1.5)


@pytest.mark.parametrize("g", np.linspace(0.2, 1.9, 8))
def test_upsilon_half_q_is_one(g):
    q = g / 2 + 2 / g
    assert abs(log_upsilon(q / 2, g)) < 1e-10


def test_reflection_real_and_complex_grid():
    for g in (0.8, 1.5):
        q = g / 2 + 2 / g
        x = np.linspace(0.02, q - 0.02, 50)
        assert np.max(np.abs(log_upsilon(x, g) - log_upsilon(q - x, g))) < 1e-8
        z = np.linspace(0.1, q - 0.1, 20) + 1j * np.linspace(-0.8, 0.8, 20)
        assert np.max(np.abs(log_upsilon(z, g) - log_upsilon(q - z, g))) < 1e-8


def test_log_upsilon_real_on_real_axis():
    v = log_upsilon(np.array([0.3, 1.0, 1.7]), 1.5)
    assert np.isrealobj(v)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(-1.0, 1.0))
def test_conjugation(x, y):
    v = log_upsilon(complex(x, y), 1.5)
    w = log_upsilon(complex(x, -y), 1.5)
    assert abs(v - np.conj(w)) < 1e-10


def test_strip_domain():
    with pytest.raises(DomainError):
        log_upsilon(0.0, 1.5)
    with pytest.raises(DomainError):
        log_upsilon(P15.q + 0.1, 1.5)
    with pytest.raises(DomainError):
        upsilon(-0.5, 1.5)


def test_simple_zero_and_derivative():
    d = upsilon_derivatives_at_zero(1.5)
    assert d["d1"] > 0 and d["d1_err"] < 1e-6
    assert d["d1"] == pytest.approx(GOLDEN_D1, rel=1e-10)
    ev = get_evaluator(1.5)
    for h in (1e-2, 5e-3, 2.5e-3):
        # Y(h) - h Y'(0) = O(h^2)
        r = (upsilon(h, 1.5) - h * d["d1"]) / h**2
        assert abs(r - d["d2"] / 2) < 0.1
        # Y'(Q) = -Y'(0) by the symmetric ladder
        assert upsilon(ev.q - h, 1.5) / (-h) == pytest.approx(-upsilon(h, 1.5) / h, rel=1e-9)


def test_derivative_oracle_shift_relation():
    # Y'(0) = Y(gamma/2) follows from the shift relation
    for g in (0.8, 1.5):
        assert get_evaluator(g).d1 == pytest.approx(upsilon(g / 2, g), rel=1e-9)


def test_boundary_methods_agree_to_expansion_order():
    for w in (1e-3, 0.01j, 0.002 - 0.003j):
        a = upsilon(w, 1.5, boundary="expansion")
        b = upsilon(w, 1.5, boundary="shift")
        assert abs(a - b) < 10 * abs(w) ** 3


def test_dozz_golden_and_symmetry():
    assert dozz(1.6, 1.7, 1.8, P15) == pytest.approx(GOLDEN_DOZZ, rel=1e-10)
    ref = dozz(1.6, 1.7, 1.8, P15)
    for perm in ((1.7, 1.6, 1.8), (1.8, 1.7, 1.6), (1.6, 1.8, 1.7)):
        assert dozz(*perm, P15) == pytest.approx(ref, rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.2, 5.0))
def test_dozz_mu_scaling(mu):
    p = LiouvilleParams(1.5, mu)
    v = dozz_value(1.6, 1.7, 1.8, p)
    ratio = dozz(1.6, 1.7, 1.8, p) / dozz(1.6, 1.7, 1.8, P15)
    assert ratio == pytest.approx(mu ** v.prefactor_exponent.real, rel=1e-12)
    assert dozz_reduced(1.6, 1.7, 1.8, p) == pytest.approx(dozz_reduced(1.6, 1.7, 1.8, P15), rel=1e-14)


def test_dozz_vanishes_at_q():
    q = P15.q
    vals = [abs(dozz(q - h, 1.6, 1.7, P15)) for h in (1e-2, 1e-3, 1e-4)]
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] < 1e-3


def test_d_dozz_finite_difference():
    q = P15.q
    d = d_dozz_at_q(1.6, 1.7, P15)
    assert d == pytest.approx(GOLDEN_D_DOZZ, rel=1e-10)
    prev = None
    for k in range(1, 6):
        h = 2.0**-k * 1e-2
        fd = dozz(q - h, 1.6, 1.7, P15) / (-h)
        err = abs(fd - d)
        if prev is not None:
            assert err < prev  # first-order convergence
        prev = err
    assert prev / abs(d) < 1e-3


def test_d_dozz_permutation_and_domain():
    assert d_dozz_at_q_third(1.6, 1.7, P15) == d_dozz_at_q(1.6, 1.7, P15)
    assert d_dozz_at_q(1.7, 1.6, P15) == pytest.approx(d_dozz_at_q(1.6, 1.7, P15), rel=1e-12)
    with pytest.raises(DomainError):
        d_dozz_at_q(0.5, 0.6, P15)


def test_dozz_complex_momenta_conjugate():
    q = P15.q
    a = dozz(1.0, q - 1.0, q - 0.01j, P15)
    b = dozz(1.0, q - 1.0, q + 0.01j, P15)
    assert abs(a - np.conj(b)) < 1e-12 * abs(a)


def test_dozz_denominator_domain():
    with pytest.raises(DomainError):
        dozz(0.1, 0.1, 5.0, P15)
