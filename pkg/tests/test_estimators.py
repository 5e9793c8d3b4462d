import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from liouville_fusion.estimators import (
    BranchError,
    FunctionalFInput,
    SeibergError,
    beta_moment_identity_check,
    bessel_prefactors,
    cameron_martin_check,
    default_f_lattice,
    four_point_mc,
    functional_F,
    limit_constant_bessel,
    limit_constant_direct,
    log_F_heavy,
    negative_moment,
    sample_exp,
    sample_gamma2,
    series_partial_sums,
    split_mass,
    subcritical_limit_mc,
    three_point_mc,
    wt_lattice,
)
from liouville_fusion.field import CylinderLattice
from liouville_fusion.kernels import DomainError, LiouvilleParams
from liouville_fusion.montecarlo import MCConfig, ValidationError, run_chunked
from liouville_fusion.paths import sample_conditioned_bes
from liouville_fusion.special import dozz

P1 = LiouvilleParams(1.0)
P15 = LiouvilleParams(1.5)
SMALL3 = CylinderLattice.window(0.0, n_theta=16, buffer=6.0)


# -- negative moments ---------------------------------------------------------


def test_negative_moment_examples():
    e = negative_moment([2.0] * 10, 1.5)
    assert e.value == pytest.approx(2.0**-1.5) and e.stderr == 0.0
    assert negative_moment([0.3, 4.0, 7.0], 0.0).value == 1.0
    x = np.exp(np.random.default_rng(0).normal(0, 0.5, 20000))
    e = negative_moment(x, 1.0)
    assert abs(e.value - math.exp(0.5 * 0.25)) < 3 * e.stderr
    with pytest.raises(DomainError):
        negative_moment([1.0, 0.0], 1.0)


@settings(max_examples=30)
@given(st.lists(st.floats(1.0, 50.0), min_size=2, max_size=20), st.floats(0.1, 3.0), st.floats(0.1, 10.0))
def test_negative_moment_scaling_and_antitone(xs, kappa, c):
    base = negative_moment(xs, kappa)
    scaled = negative_moment(np.array(xs) * c, kappa)
    assert scaled.value == pytest.approx(c**-kappa * base.value, rel=1e-10)
    assert negative_moment(xs, kappa + 0.5).value <= base.value + 1e-15


def test_mc_config_requires_seed():
    mc = MCConfig(10, None)
    with pytest.raises(ValidationError, match="master_seed"):
        run_chunked(lambda r, m: r.random(m), mc, "x")
    with pytest.raises(ValidationError):
        MCConfig(1, 0)


def test_worker_count_does_not_change_results():
    f = lambda r, m: r.standard_normal(m)  # noqa: E731
    a = run_chunked(f, MCConfig(1000, 3, 1, chunk=64), "w")
    b = run_chunked(f, MCConfig(1000, 3, 4, chunk=64), "w")
    assert a.tobytes() == b.tobytes()


# -- correlation functions ----------------------------------------------------


def test_three_point_mu_scaling_and_permutation():
    mc = MCConfig(200, 1)
    base = three_point_mc(1.6, 1.7, 1.8, P15, mc, lattice=SMALL3)
    mu = 2.5
    scaled = three_point_mc(1.6, 1.7, 1.8, LiouvilleParams(1.5, mu), mc, lattice=SMALL3)
    kappa = (5.1 - 2 * P15.q) / 1.5
    assert scaled.value / base.value == pytest.approx(mu**-kappa, rel=1e-12)
    perm = three_point_mc(1.8, 1.6, 1.7, P15, mc, lattice=SMALL3)
    assert abs(perm.value - base.value) <= 3 * math.hypot(perm.stderr, base.stderr)
    assert base.digest and base.seed == 1


def test_three_point_seiberg_violation():
    with pytest.raises(SeibergError):
        three_point_mc(0.2, 0.2, 0.2, P15, MCConfig(10, 0))


def test_four_point_phase_dependence_through_moduli():
    mc = MCConfig(400, 2)
    lat = CylinderLattice.window(1.0, n_theta=16, buffer=6.0)
    z = 0.3 * np.exp(0.9j)
    a = four_point_mc(z, (1.5,) * 4, P1, mc, lattice=lat)
    b = four_point_mc(np.conj(z), (1.5,) * 4, P1, MCConfig(400, 3), lattice=lat)
    assert abs(a.value - b.value) <= 3 * math.hypot(a.stderr, b.stderr)


def test_four_point_domain():
    mc = MCConfig(10, 0)
    for z in (0, 1, 1.5):
        with pytest.raises(DomainError):
            four_point_mc(z, (1.5,) * 4, P1, mc)
    with pytest.raises(SeibergError):
        four_point_mc(0.5, (0.1, 0.1, 0.1, 0.1), P1, mc)


def test_four_point_subcritical_fusion():
    # |z| small, a1 + a2 < Q: <V V V V> ~ |z|^{-a1 a2} C(a1 + a2, a3, a4)
    p = P1
    m = (0.8, 0.8, 1.5, 2.2)
    z = 1e-3
    e = four_point_mc(z, m, p, MCConfig(800, 4), lattice=CylinderLattice.window(-math.log(z), n_theta=32, buffer=8.0))
    target = z ** (-m[0] * m[1]) * dozz(m[0] + m[1], m[2], m[3], p)
    assert abs(e.value - target) <= max(3 * e.stderr, 0.15 * target)


# -- Cameron-Martin -----------------------------------------------------------


def test_cameron_martin_zero_tilt_identical():
    r = cameron_martin_check(math.exp(-2.0), (1.5,) * 4, 1.0, P1, MCConfig(100, 5), theta=0.0,
                             lattice=wt_lattice(2.0, n_theta=16, buffer=5.0))
    assert r["direct"]["value"] == r["tilted"]["value"]


def test_cameron_martin_agreement():
    r = cameron_martin_check(math.exp(-3.0), (1.5,) * 4, 1.0, P1, MCConfig(1000, 6),
                             lattice=wt_lattice(3.0, n_theta=16, buffer=5.0))
    assert abs(r["z_score"]) <= 3.0


# -- split mass ---------------------------------------------------------------


@settings(max_examples=40)
@given(st.lists(st.floats(0.0, 10.0), min_size=8, max_size=40), st.floats(1.0, 30.0), st.floats(0.01, 0.49))
def test_split_mass_partition(w, t, eta):
    s = np.linspace(-2, t + 2, len(w))
    L, C, R = split_mass(np.array(w)[:, None], s, t, eta, tails=(0.5, 0.25))
    total = sum(w) + 0.75
    assert L + C + R == pytest.approx(total, rel=1e-12, abs=1e-12)
    assert min(L, C, R) >= 0


def test_split_mass_window_shrinks():
    s = np.linspace(-1, 30, 311)
    w = np.ones((s.size, 1))
    L, _, _ = split_mass(w, s, 25.0, 0.4999)
    assert L == np.sum(s < 25.0**1e-4)
    with pytest.raises(DomainError):
        split_mass(w, s, 25.0, 0.5)


# -- functional F and the Bessel representation -------------------------------


def test_functional_F_positive_and_decreasing_in_u():
    lat = default_f_lattice(n_theta=16, left=5.0, right=6.0)
    path = sample_conditioned_bes(1.0, np.random.default_rng(7), t=10.0, dt=0.02)
    vals = [functional_F(FunctionalFInput(1.5, 1.5, u, path), P1, lat, np.random.default_rng(8)) for u in (0.0, 0.5, 2.0)]
    assert all(v > 0 for v in vals)
    assert vals[0] > vals[1] > vals[2]
    with pytest.raises(DomainError):
        FunctionalFInput(1.5, 1.5, -1.0, path)


def test_exponential_and_gamma_samplers():
    rng = np.random.default_rng(9)
    x = sample_exp(2.0, rng, 20000)
    assert abs(x.mean() - 0.5) < 3 * x.std(ddof=1) / math.sqrt(x.size)
    y = sample_gamma2(2.0, rng, 20000)
    assert abs(y.mean() - 1.0) < 3 * y.std(ddof=1) / math.sqrt(y.size)
    with pytest.raises(DomainError):
        sample_exp(0.0, rng, 2)


def test_bessel_prefactor_limits():
    g, kappa = 1.0, 1.5
    kg = kappa * g
    crit = bessel_prefactors(0.1, kappa, g)["critical"]
    prev = None
    for lam in (1e-2, 1e-4, 1e-6):
        pf = bessel_prefactors(lam, kappa, g)
        r = lam**2 * (kg - lam) * pf["intermediate"] / (kg * crit)
        if prev is not None:
            assert abs(r - 1) < abs(prev - 1)
        prev = r
        mirror = kg - lam  # approach the boundary branch
        r2 = mirror * (kg - mirror) ** 2 * bessel_prefactors(mirror, kappa, g)["intermediate"]
        assert r2 / (kg * pf["boundary"]) == pytest.approx(1.0, abs=5 * lam)
    assert abs(prev - 1) < 1e-5


def test_heavy_branch_remark_rewriting():
    lat = default_f_lattice(n_theta=16, left=5.0, right=6.0)
    a = log_F_heavy(1.2, 1.9, 0.4, P1, lat, np.random.default_rng(10), 5)
    b = log_F_heavy(1.2, 1.9, 0.4, P1, lat, np.random.default_rng(10), 5, remark_form=True)
    assert np.max(np.abs(a - b)) < 1e-10


def test_bessel_branch_checks():
    mc = MCConfig(10, 0)
    with pytest.raises(BranchError):
        limit_constant_bessel((0.5, 0.5, 1.9, 1.9), 1.0, P1, mc)
    with pytest.raises(BranchError):
        limit_constant_bessel((1.5,) * 4, 1.0, P1, mc, branch="critical")


def test_bessel_critical_branch_runs():
    q = P1.q
    lat = default_f_lattice(n_theta=16, left=5.0, right=8.0)
    e = limit_constant_bessel((q / 2, q / 2, 1.5, 1.5), 1.0, P1, MCConfig(100, 11), lattice=lat)
    assert e.extra["branch"] == "critical" and e.value > 0 and math.isfinite(e.stderr)


def test_series_terms_nonnegative_and_decay():
    q = P1.q
    lat = default_f_lattice(n_theta=16, left=5.0, right=8.0)
    r = series_partial_sums((q / 2, q / 2, 1.5, 1.5), 1.0, P1, 0.5, 4, MCConfig(60, 12), lattice=lat)
    assert all(t >= 0 for t in r["terms"])
    assert np.all(np.diff(r["partial_sums"]) >= 0)
    with pytest.raises(BranchError):
        series_partial_sums((0.5, 0.5, 1.9, 1.9), 1.0, P1, 0.5, 2, MCConfig(10, 0))


# -- limit constants ----------------------------------------------------------


def test_direct_limit_positive_and_subcritical_plateau():
    m = (0.6, 0.6, 2.0, 2.0)
    lat = wt_lattice(8.0, n_theta=16, buffer=6.0)
    e = limit_constant_direct(m, 1.0, P1, (2.0, 4.0, 8.0), MCConfig(300, 13), lattice=lat)
    assert all(r["value"] > 0 and math.isfinite(r["value"]) for r in e.extra["per_t"])
    ref = subcritical_limit_mc(m, 1.0, P1, MCConfig(300, 14), lattice=lat)
    assert abs(e.value - ref.value) <= max(3 * math.hypot(e.stderr, ref.stderr), 0.05 * ref.value)
    assert "slope" in e.extra and e.extra["cauchy"]["available"]


# -- beta-moment identity -------------------------------------------------------


def test_beta_identity_two_sided_form():
    rep = beta_moment_identity_check("one", "one", 0.5, 1.0, P1)
    assert rep["two_sided_rel_diff"] < 1e-10
    # the one-sided form misses the u > 1 half of the Beta integral
    assert rep["lhs"] == pytest.approx(math.pi / 4, rel=1e-10)
    assert rep["rhs"] == pytest.approx(math.pi / 2, rel=1e-10)


def test_beta_identity_small_lambda_ladder():
    # both sides tend to E[X^-kappa] = 1 as lambda / gamma -> 0
    prev = None
    for lam in (0.1, 0.01, 0.001):
        rep = beta_moment_identity_check("one", "one", lam, 1.0, P1)
        err = abs(rep["lhs"] - 1) + abs(rep["rhs"] - 1)
        if prev is not None:
            assert err < prev
        prev = err
    assert prev < 0.01


def test_beta_identity_lognormal_two_sided():
    rep = beta_moment_identity_check(("lognormal", 0.0, 0.5), ("lognormal", 0.2, 0.3), 0.5, 1.0, P1,
                                     MCConfig(4000, 15))
    assert abs(rep["two_sided_z"]) <= 3.0
    with pytest.raises(DomainError):
        beta_moment_identity_check("one", "one", 2.0, 1.0, P1)
