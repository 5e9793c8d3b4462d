import math

import numpy as np
import pytest
from scipy import stats

from liouville_fusion.field import (
    CylinderLattice,
    DenseLateralSampler,
    FactorizationError,
    InsertionProfile,
    dump_field,
    gmc_weights,
    lateral_cov_matrix,
    load_field,
    log_masses,
    sample_field,
    sample_lateral,
    total_mass_Wt,
    truncated_lateral_cov,
)
from liouville_fusion.kernels import DomainError, LiouvilleParams, lateral_cov


def small_lattice(n_theta=16, half=2.0):
    return CylinderLattice.window(0.0, n_theta=n_theta, buffer=half)


def test_lattice_invariants():
    lat = small_lattice()
    assert lat.s_min < 0 < lat.s_max
    assert lat.dtheta == pytest.approx(2 * math.pi / lat.n_theta)
    assert lat.cell_area == pytest.approx(lat.ds * lat.dtheta)
    with pytest.raises(DomainError):
        CylinderLattice(0.0, 1.0, 8, 8)
    with pytest.raises(DomainError):
        CylinderLattice(-1.0, 1.0, 3, 8)


def test_truncated_kernel_converges_to_lateral_cov():
    ds, dth = 0.3, 1.1
    for n in (16, 64):
        approx = float(truncated_lateral_cov(ds, dth, n))
        tail = math.exp(-(n + 1) * ds) / ((n + 1) * (1 - math.exp(-ds)))
        assert abs(approx - lateral_cov(ds, dth)) <= tail


def test_lateral_empirical_covariance():
    lat = CylinderLattice(-2.0, 2.0, 10, 8)
    y, var = sample_lateral(lat, np.random.default_rng(0), 2000)
    i, j = 3, 5
    a = y[:, i, 0]
    b = y[:, j, 2]
    target = float(truncated_lateral_cov(lat.s[j] - lat.s[i], lat.theta[2], lat.n_modes))
    prod = a * b
    assert abs(prod.mean() - target) < 4 * prod.std(ddof=1) / math.sqrt(prod.size)
    assert var == pytest.approx(lat.var_diag)


def test_lateral_translation_invariance_in_theta():
    lat = CylinderLattice(-2.0, 2.0, 10, 8)
    y, _ = sample_lateral(lat, np.random.default_rng(1), 3000)
    i = 4
    # covariance at theta-offset 1 for every rotation: chi-square homogeneity
    covs, ses = [], []
    for k in range(lat.n_theta):
        prod = y[:, i, k] * y[:, i, (k + 1) % lat.n_theta]
        covs.append(prod.mean())
        ses.append(prod.std(ddof=1) / math.sqrt(prod.size))
    covs, ses = np.array(covs), np.array(ses)
    w = 1 / ses**2
    mean = np.sum(w * covs) / np.sum(w)
    chi2 = np.sum(w * (covs - mean) ** 2)
    assert stats.chi2.sf(chi2, lat.n_theta - 1) > 0.01


def test_dense_sampler_matches_mode_sampler_law():
    lat = CylinderLattice(-1.0, 1.0, 8, 8)
    dense = DenseLateralSampler(lat)
    c = lateral_cov_matrix(lat)
    assert np.allclose(dense.factor @ dense.factor.T, c, atol=1e-10)
    with pytest.raises(FactorizationError):
        DenseLateralSampler(lat, rule="diagonal")


def test_same_seed_same_field():
    lat = small_lattice()
    a = sample_field(lat, np.random.default_rng(3))
    b = sample_field(lat, np.random.default_rng(3))
    c = sample_field(lat, np.random.default_rng(4))
    assert np.array_equal(a.lateral, b.lateral) and np.array_equal(a.radial, b.radial)
    assert not np.array_equal(a.lateral, c.lateral)


def test_field_dump_roundtrip(tmp_path):
    lat = small_lattice()
    f = sample_field(lat, np.random.default_rng(5), seed=5)
    path = tmp_path / "field.bin"
    dump_field(f, path)
    g = load_field(path)
    assert g.lattice == lat and g.seed == 5
    assert np.array_equal(f.lateral, g.lateral) and np.array_equal(f.radial_edges, g.radial_edges)


def test_weights_shift_and_positivity():
    lat = small_lattice()
    p = LiouvilleParams(1.0)
    f = sample_field(lat, np.random.default_rng(6))
    w0 = gmc_weights(f, p)
    w1 = gmc_weights(f, p, shift=0.4)
    assert np.all(w0.weights >= 0) and np.all(np.isfinite(w0.weights))
    assert np.allclose(w1.weights, w0.weights * math.exp(0.4), rtol=1e-12)


def test_region_mass_expectation_equals_area():
    lat = small_lattice(n_theta=16, half=1.0)
    p = LiouvilleParams(1.0)
    rng = np.random.default_rng(7)
    masses = []
    for _ in range(1500):
        f = sample_field(lat, rng)
        masses.append(gmc_weights(f, p, normalize_radial=True).weights.sum())
    masses = np.array(masses)
    area = (lat.s_max - lat.s_min) * 2 * math.pi
    assert abs(masses.mean() - area) < 3 * masses.std(ddof=1) / math.sqrt(masses.size)


def test_q_drift_expected_mass():
    lat = CylinderLattice.window(0.0, n_theta=16, ds=0.05, buffer=3.0)
    p = LiouvilleParams(1.0)
    prof = InsertionProfile((), p.q)
    lm = log_masses(lat, p, prof, np.random.default_rng(8), 3000, tails=False, normalize_radial=True)
    m = np.exp(lm)
    # midpoint sum of the deterministic integral of exp(-gamma Q |s|) * 2 pi over the lattice cells
    target = np.sum(np.exp(-p.gamma * p.q * np.abs(lat.s))) * lat.ds * 2 * math.pi
    assert abs(m.mean() - target) < 3 * m.std(ddof=1) / math.sqrt(m.size)
    exact = 2 * 2 * math.pi * (1 - math.exp(-p.gamma * p.q * 3.0)) / (p.gamma * p.q)
    assert target == pytest.approx(exact, rel=0.02)


def test_total_mass_positive_and_phase_free_without_a2():
    lat = CylinderLattice.window(2.0, n_theta=16, buffer=4.0)
    p = LiouvilleParams(1.0)
    w = [total_mass_Wt(math.exp(-2.0), 0.7, (1.5, 1.5, 1.5, 1.5), p, lat, np.random.default_rng(s)) for s in range(5)]
    assert all(x > 0 for x in w)
    a = total_mass_Wt(math.exp(-2.0), 0.0, (1.5, 0.0, 1.5, 1.5), p, lat, np.random.default_rng(9))
    b = total_mass_Wt(math.exp(-2.0), 1.3, (1.5, 0.0, 1.5, 1.5), p, lat, np.random.default_rng(9))
    assert a == pytest.approx(b, rel=1e-12)
    with pytest.raises(DomainError):
        total_mass_Wt(1.5, 0.0, (1.5, 1.5, 1.5, 1.5), p, lat, np.random.default_rng(0))


def test_small_gamma_mean_mass_matches_quadrature():
    g = 0.2
    p = LiouvilleParams(g)
    t = 1.0
    lat = CylinderLattice.window(t, n_theta=16, buffer=3.0)
    prof = InsertionProfile.four_point((0.3, 0.3, 0.3, 0.3), t, 0.0, p.q)
    m = np.exp(log_masses(lat, p, prof, np.random.default_rng(10), 2000, tails=False, normalize_radial=True))
    rad = prof.radial(lat.s)
    lateral = prof.lateral(lat)
    target = np.sum(np.exp(g * (rad[:, None] + lateral))) * lat.cell_area
    assert abs(m.mean() - target) < 3 * m.std(ddof=1) / math.sqrt(m.size)


def test_refinement_stability_small_gamma():
    p = LiouvilleParams(0.5)
    res = []
    for n_theta in (16, 32):
        lat = CylinderLattice(-1.0, 1.0, n_theta, n_theta)
        prof = InsertionProfile((), p.q, q_drift=False)
        m = np.exp(log_masses(lat, p, prof, np.random.default_rng(11), 2000, tails=False, normalize_radial=True))
        res.append(m.mean())
    assert abs(res[1] / res[0] - 1) < 0.02


def test_kahane_common_shift_bound():
    # adding an independent common Gaussian of variance eps shifts E[M^-k] by a bounded factor
    lat = small_lattice(n_theta=16, half=1.0)
    p = LiouvilleParams(1.0)
    prof = InsertionProfile((), p.q)
    lm = log_masses(lat, p, prof, np.random.default_rng(12), 3000, tails=False)
    eps, k = 0.05, 1.0
    n = np.random.default_rng(13).standard_normal(lm.size) * math.sqrt(eps)
    lm2 = lm + p.gamma * n - 0.5 * p.gamma**2 * eps
    r = np.mean(np.exp(-k * lm2)) / np.mean(np.exp(-k * lm))
    # exact factor for an independent shift: exp(k (k + 1) gamma^2 eps / 2)
    c = k * (k + 1) * p.gamma**2 / 2
    assert math.exp(-3 * c * eps) < r < math.exp(3 * c * eps)
