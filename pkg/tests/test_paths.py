import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from liouville_fusion.kernels import DomainError
from liouville_fusion.paths import (
    barrier_prob,
    bes3_paths,
    bm_paths,
    bridge_paths,
    conditioned_bes_paths,
    first_hits,
    hitting_time_cdf,
    sample_bes3,
    sample_bm,
    sample_bridge,
    sample_conditioned_bes,
    williams_compose,
    williams_paths,
)


def rng(seed=0):
    return np.random.default_rng(seed)


def test_bm_moments():
    n, t = 10_000, 2.0
    x, _ = bm_paths(t, 0.1, rng(1), n)
    end = x[:, -1]
    assert abs(end.mean()) < 3 * math.sqrt(t / n)
    # variance within 5 chi-square standard errors: sd(s^2) = t sqrt(2/(n-1))
    assert abs(end.var(ddof=1) - t) < 5 * t * math.sqrt(2 / (n - 1))
    y, _ = bm_paths(t, 0.1, rng(2), n, drift=0.7)
    assert abs(y[:, -1].mean() - 0.7 * t) < 3 * math.sqrt(t / n)


def test_path_sample_records():
    p = sample_bm(1.0, 0.01, 0.0, rng(), x0=0.3)
    assert p.values[0] == 0.3 and p.kind == "bm" and p.t == pytest.approx(1.0)
    assert sample_bm(1.0, 0.01, 0.5, rng()).kind == "drifted_bm"
    with pytest.raises(DomainError):
        sample_bm(0.0, 0.01, 0.0, rng())
    with pytest.raises(DomainError):
        sample_bm(1.0, -0.1, 0.0, rng())


def test_determinism():
    a = sample_bes3(1.0, 1.0, 0.01, rng(5)).values
    b = sample_bes3(1.0, 1.0, 0.01, rng(5)).values
    c = sample_bes3(1.0, 1.0, 0.01, rng(6)).values
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_bridge_endpoints_and_barrier():
    p = sample_bridge(4.0, 0.01, rng())
    assert p.values[0] == 0.0 and p.values[-1] == 0.0
    t, n = 4.0, 20_000
    b = math.sqrt(t)
    paths, h = bridge_paths(t, 0.01, rng(3), n)
    k, _ = first_hits(-paths, -b, h, rng(4))
    freq = np.mean(k < 0)
    target = barrier_prob("bridge", b, t)
    assert target == pytest.approx(1 - math.exp(-2), abs=1e-12)
    assert abs(freq - target) < 3 * math.sqrt(target * (1 - target) / n)


@pytest.mark.parametrize("b,t", [(0.5, 1.0), (1.0, 1.0), (1.0, 2.0), (2.0, 4.0), (0.8, 3.0)])
def test_bridge_barrier_pairs(b, t):
    n = 5000
    paths, h = bridge_paths(t, 0.02, rng(int(10 * b + t)), n)
    k, _ = first_hits(-paths, -b, h, rng(7))
    freq = np.mean(k < 0)
    target = barrier_prob("bridge", b, t)
    assert abs(freq - target) < 3 * math.sqrt(target * (1 - target) / n) + 1e-3


def test_bridge_time_reversal():
    paths, _ = bridge_paths(2.0, 0.01, rng(8), 4000)
    m = paths.shape[1] // 2
    a = paths[:, : m + 1].max(axis=1)
    b = paths[:, m:].max(axis=1)
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_bes3_nonnegative_and_second_moment():
    x, t, n = 1.0, 0.5, 10_000
    v, _ = bes3_paths(x, t, 0.05, rng(9), n)
    assert np.all(v >= 0)
    m2 = v[:, -1] ** 2
    assert abs(m2.mean() - (x * x + 3 * t)) < 3 * m2.std(ddof=1) / math.sqrt(n)
    with pytest.raises(DomainError):
        sample_bes3(-0.1, 1.0, 0.1, rng())


def test_bes3_large_start_stays_near():
    p = sample_bes3(50.0, 0.01, 0.001, rng(10))
    assert np.max(np.abs(p.values - 50.0)) < 1.0


def test_williams_minimum_and_degenerate():
    p = williams_compose(1.5, rng(11), t=1.0, dt=0.001)
    assert p.meta["minimum"] == pytest.approx(1.5 * p.meta["u"])
    assert np.min(p.values) >= p.meta["minimum"] - 1e-12
    q = williams_compose(1.5, rng(12), t=1.0, dt=0.001, u=1.0)
    assert q.meta["split_time"] == 0.0
    with pytest.raises(DomainError):
        williams_compose(0.0, rng())


@pytest.mark.parametrize("s", [0.5, 1.0, 2.0])
def test_williams_marginals_match_bes3(s):
    n = 10_000
    w, h, _, _ = williams_paths(1.0, s, 0.005, rng(13), n)
    b, _ = bes3_paths(1.0, s, 0.005, rng(14), n)
    assert stats.ks_2samp(w[:, -1], b[:, -1]).pvalue > 0.01


def test_conditioned_bes_properties():
    p = sample_conditioned_bes(0.0, rng(15), t=1.0, dt=0.01)
    assert p.meta["hit_time"] == 0.0 and np.all(p.values >= 0)
    q = sample_conditioned_bes(0.5, rng(16), t=5.0, dt=0.001)
    assert np.all(q.values >= -1e-12)
    assert q.meta["minimum"] == 0.0
    with pytest.raises(DomainError):
        sample_conditioned_bes(-1.0, rng())


def test_conditioned_bes_hitting_time_law():
    x, n = 0.5, 4000
    _, _, tau = conditioned_bes_paths(x, 4.0, 0.002, rng(17), n)
    tau = tau[np.isfinite(tau)]
    # compare with the reflection-principle law restricted to [0, 4]
    cap = hitting_time_cdf(4.0, x)
    p = stats.kstest(tau, lambda s: hitting_time_cdf(s, x) / cap).pvalue
    assert p > 0.01


def test_conditioned_pre_hit_matches_stopped_bm():
    # before the hit the path is plain BM; compare the value at min(s, T)
    x, s, n = 1.0, 0.5, 5000
    v, h, tau = conditioned_bes_paths(x, 1.0, 0.002, rng(18), n)
    i = int(round(s / h))
    pre = v[tau > s, i]
    bm, _ = bm_paths(1.0, 0.002, rng(19), 3 * n, x0=x)
    k, tau2 = first_hits(bm, 0.0, h, rng(20))
    ref = bm[tau2 > s, i]
    assert stats.ks_2samp(pre, ref).pvalue > 0.01


def test_barrier_prob_closed_forms():
    assert barrier_prob("bridge", 2.0, 4.0) == pytest.approx(1 - math.exp(-2))
    assert barrier_prob("bm", 100.0, 1.0) == pytest.approx(1.0)
    x = 1e-3
    assert barrier_prob("bm", x, 1.0) == pytest.approx(math.sqrt(2 / math.pi) * x, rel=1e-6)
    assert barrier_prob("bm", 1.0, math.inf, drift=-0.5) == pytest.approx(1 - math.exp(-1.0))
    with pytest.raises(DomainError):
        barrier_prob("bm", -1.0, 1.0)
    with pytest.raises(DomainError):
        barrier_prob("walk", 1.0, 1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 3.0), st.floats(0.1, 10.0), st.floats(-2.0, 2.0))
def test_barrier_prob_is_probability(b, t, m):
    p = barrier_prob("bm", b, t, m)
    assert -1e-12 <= p <= 1 + 1e-12
    # increasing in the barrier level
    assert barrier_prob("bm", b * 1.5, t, m) >= p - 1e-12


def test_drifted_barrier_matches_simulation():
    b, t, m, n = 1.0, 2.0, -0.3, 10_000
    paths, h = bm_paths(t, 0.01, rng(21), n, drift=m)
    k, _ = first_hits(-paths, -b, h, rng(22))
    p = barrier_prob("bm", b, t, m)
    assert abs(np.mean(k < 0) - p) < 3 * math.sqrt(p * (1 - p) / n)
