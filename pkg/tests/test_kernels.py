import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from liouville_fusion.kernels import (
    INFINITY,
    Branch,
    DomainError,
    InsertionSet,
    LiouvilleParams,
    RateSpec,
    SingularityError,
    background_charge,
    check_seiberg,
    cylinder_to_plane,
    green_cylinder,
    green_sphere,
    lateral_cov,
    log_rate_function,
    rate_function,
    select_branch,
)

gammas = st.floats(0.05, 1.95)
points = st.complex_numbers(max_magnitude=5.0, allow_nan=False, allow_infinity=False)


def test_background_charge_values():
    assert background_charge(1.0) == 2.5
    assert background_charge(math.sqrt(2)) == pytest.approx(3 * math.sqrt(2) / 2, abs=1e-15)
    for g in (0.0, 2.0, -1.0, 2.5):
        with pytest.raises(DomainError):
            background_charge(g)


def test_background_charge_infimum_on_grid():
    # Q > 2 on (0, 2), decreasing towards its infimum 2 at the excluded endpoint
    g = np.linspace(0.05, 1.999, 400)
    q = np.array([background_charge(x) for x in g])
    assert np.all(q > 2.0) and np.all(np.diff(q) < 0)
    assert q[-1] == pytest.approx(2.0, abs=1e-6)


@given(gammas)
def test_background_charge_duality(g):
    # gamma <-> 4/gamma symmetry of the formula gamma/2 + 2/gamma
    assert g / 2 + 2 / g == pytest.approx(background_charge(g), rel=1e-15)
    g2 = 4 / g
    assert g2 / 2 + 2 / g2 == pytest.approx(background_charge(g), rel=1e-12)


def test_params_validation():
    with pytest.raises(DomainError):
        LiouvilleParams(1.0, 0.0)
    with pytest.raises(DomainError):
        LiouvilleParams(2.0)


def test_seiberg_examples():
    p = LiouvilleParams(1.5)
    rep = check_seiberg(InsertionSet.from_pairs((0, 1, INFINITY), (1.6, 1.7, 1.8)), p)
    assert rep.valid and rep.sigma == pytest.approx(5.1 / p.q - 2)
    assert all(rep.below_q)
    rep = check_seiberg(InsertionSet.from_pairs((0, 1, INFINITY), (1, 1, 1)), LiouvilleParams(1.0))
    assert not rep.valid
    rep = check_seiberg(InsertionSet.from_pairs((0, INFINITY), (1.9, 1.9)), p)
    assert not rep.valid and rep.notes


def test_seiberg_extended_flag_reported():
    p = LiouvilleParams(1.5)
    rep = check_seiberg(InsertionSet.from_pairs((0, 1, INFINITY), (1.6, 1.7, 1.8)), p, kappa=0.5)
    assert rep.extended_valid is not None
    assert rep.as_dict()["kappa"] == 0.5


def test_insertion_validation():
    with pytest.raises(DomainError):
        InsertionSet.from_pairs((0, 0), (1.0, 1.0))
    with pytest.raises(DomainError):
        InsertionSet.from_pairs((0, 1), (-0.1, 1.0))


def test_green_sphere_examples():
    assert green_sphere(0, 0.5) == pytest.approx(math.log(2))
    assert green_sphere(2, 3) == pytest.approx(math.log(6))
    assert green_sphere(INFINITY, 0.5) == 0.0
    assert green_sphere(3.0, INFINITY) == pytest.approx(math.log(3))
    with pytest.raises(SingularityError):
        green_sphere(0.3, 0.3)


@given(points, points)
def test_green_sphere_symmetric(x, y):
    if abs(x - y) < 1e-6:
        return
    assert green_sphere(x, y) == pytest.approx(green_sphere(y, x), rel=1e-12, abs=1e-12)


def test_lateral_cov_examples():
    assert lateral_cov(0.0, math.pi) == pytest.approx(-math.log(2))
    assert abs(lateral_cov(60.0, 1.3)) < 1e-20
    with pytest.raises(SingularityError):
        lateral_cov(0.0, 0.0)


@given(st.floats(-5, 5), st.floats(-6, 6))
def test_lateral_cov_reflection(ds, dth):
    if abs(ds) < 1e-6 and abs(cmath.exp(1j * dth) - 1) < 1e-6:
        return
    assert lateral_cov(ds, dth) == pytest.approx(lateral_cov(-ds, -dth), rel=1e-12, abs=1e-12)


def test_lateral_cov_decreasing_in_ds():
    ds = np.linspace(0.01, 10, 200)
    v = np.array([lateral_cov(x, 0.0) for x in ds])
    assert np.all(np.diff(v) < 0)


def test_green_cylinder_examples():
    assert green_cylinder(1, 0, 2, 0) == pytest.approx(1 + lateral_cov(1, 0))
    assert green_cylinder(-1, 0.2, 2, 0.7) == pytest.approx(lateral_cov(3, 0.5))


def test_green_cylinder_matches_sphere():
    rng = np.random.default_rng(0)
    n = 0
    while n < 100:
        s, s2 = rng.uniform(-4, 4, 2)
        th, th2 = rng.uniform(0, 2 * math.pi, 2)
        if abs(s - s2) < 0.05:
            continue
        x, y = cylinder_to_plane(s, th), cylinder_to_plane(s2, th2)
        assert green_cylinder(s, th, s2, th2) == pytest.approx(green_sphere(x, y), abs=1e-10)
        n += 1


def test_rate_function_examples():
    p = LiouvilleParams(1.0)
    t = 3.0
    z = math.exp(-t)
    assert rate_function(RateSpec(2.0, 1.0, 1.0), p, z) == 1.0
    assert rate_function(RateSpec(p.q, 1.0, 1.0), p, z) == pytest.approx(math.sqrt(t))
    assert rate_function(RateSpec(p.q + 0.5, 1.0, 1.0), p, z) == pytest.approx(math.exp(-t / 8) * t**1.5)
    # corrected convention flips the log power
    assert rate_function(RateSpec(p.q + 0.5, 1.0, 1.0), p, z, "corrected") == pytest.approx(math.exp(-t / 8) * t**-1.5)
    with pytest.raises(DomainError):
        rate_function(RateSpec(2.0, 1.0, 1.0), p, 1.0)


def test_rate_function_heavy_and_boundary():
    p = LiouvilleParams(1.0)
    t = 2.0
    d = 1.5  # kappa gamma = 1 < d
    v = log_rate_function(RateSpec(p.q + d, 1.0, 1.0), p, t)
    assert v == pytest.approx(-t * (d * d / 2 - (1 - d) ** 2 / 2))
    assert RateSpec(p.q + 1.0, 1.0, 1.0).branch is Branch.BOUNDARY
    assert log_rate_function(RateSpec(p.q + 1.0, 1.0, 1.0), p, t) == pytest.approx(-t / 2 + 0.5 * math.log(t))


@settings(max_examples=50)
@given(st.floats(0.3, 1.9), st.floats(0.1, 3.0), st.floats(-2, 4))
def test_branch_changes_only_at_thresholds(g, kappa, d):
    q = background_charge(g)
    kg = kappa * g
    br = select_branch(q + d, q, kappa, g)
    if abs(d) < 1e-12:
        assert br is Branch.CRITICAL
    elif abs(d - kg) < 1e-12:
        assert br is Branch.BOUNDARY
    elif d < 0:
        assert br is Branch.SUBCRITICAL
    elif d < kg:
        assert br is Branch.INTERMEDIATE
    else:
        assert br is Branch.HEAVY


def test_branch_tie_tolerance():
    q = background_charge(1.0)
    assert select_branch(q + 5e-13, q, 1.0, 1.0) is Branch.CRITICAL
    assert select_branch(q + 1e-9, q, 1.0, 1.0) is Branch.INTERMEDIATE
    with pytest.raises(DomainError):
        RateSpec(3.0, 0.0, 1.0)
