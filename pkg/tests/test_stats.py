import math

import numpy as np
import pytest
import scipy.stats as sps
from hypothesis import given, settings, strategies as st

from gffmetric.stats import (
    EmpiricalDistribution,
    RandomStream,
    TestReport,
    ks_one_sample,
    ks_two_sample,
    majority_pass,
    mean_z,
    philox4x32,
    proportion_z,
    slope_fit,
)


def test_philox_known_answer_zero():
    # Reference vector of the Random123 distribution (counter 0, key 0).
    out = philox4x32([np.uint64(0)] * 4, (0, 0))
    assert [int(np.asarray(x).ravel()[0]) for x in out] == [0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8]


def test_philox_known_answer_pi():
    ctr = [np.uint64(x) for x in (0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344)]
    out = philox4x32(ctr, (0xA4093822, 0x299F31D0))
    assert [int(np.asarray(x).ravel()[0]) for x in out] == [0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1]


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**63), start=st.integers(0, 10_000), k=st.integers(1, 40),
       sites=st.integers(1, 17), offset=st.integers(0, 9))
def test_uniforms_independent_of_batching(seed, start, k, sites, offset):
    s = RandomStream(seed).substream("x")
    reps = np.arange(start, start + k)
    whole = s.uniforms(reps, sites + offset)
    part = s.uniforms(reps[::-1], sites, offset)[::-1]
    assert np.array_equal(whole[:, offset:], part)
    single = np.vstack([s.uniforms([r], sites + offset) for r in reps])
    assert np.array_equal(whole, single)


def test_uniforms_open_interval_and_moments():
    u = RandomStream(3).uniforms(np.arange(2000), 50)
    assert u.min() > 0.0 and u.max() < 1.0
    assert sps.kstest(u.ravel(), "uniform").pvalue > 1e-4


def test_substreams_differ():
    a = RandomStream(1).substream("a").uniforms([0], 8)
    b = RandomStream(1).substream("b").uniforms([0], 8)
    c = RandomStream(2).substream("a").uniforms([0], 8)
    assert not np.array_equal(a, b) and not np.array_equal(a, c)
    assert np.array_equal(a, RandomStream(1).substream("a").uniforms([0], 8))


def test_normals_are_standard():
    z = RandomStream(11).normals(np.arange(5000), 20).ravel()
    assert sps.kstest(z, "norm").pvalue > 1e-4


def test_empirical_distribution():
    e = EmpiricalDistribution([0.0, 0.0, 1.0, 2.0], atom=0.0)
    assert e.count == 4
    assert e.cdf(0.0) == pytest.approx(0.5)
    assert e.survival(1.0) == pytest.approx(0.25)


def test_ks_one_sample_detects_wrong_law():
    x = RandomStream(5).normals(np.arange(20000), 1).ravel()
    assert ks_one_sample(x, sps.norm.cdf, seed=5).passed
    assert not ks_one_sample(x + 0.1, sps.norm.cdf, seed=5).passed


def test_ks_one_sample_with_atom():
    rng = np.random.default_rng(0)
    n = 40000
    x = np.where(rng.random(n) < 0.3, 0.0, rng.exponential(size=n))
    cdf = lambda t: np.where(t < 0, 0.0, 0.3 + 0.7 * sps.expon.cdf(t))
    good = ks_one_sample(x, cdf, atom=0.0, atom_mass=0.3)
    assert good.passed
    bad = ks_one_sample(x, lambda t: np.where(t < 0, 0.0, 0.4 + 0.6 * sps.expon.cdf(t)), atom=0.0, atom_mass=0.4)
    assert not bad.passed


def test_ks_two_sample():
    rng = np.random.default_rng(1)
    assert ks_two_sample(rng.normal(size=5000), rng.normal(size=5000)).passed
    assert not ks_two_sample(rng.normal(size=5000), rng.normal(0.2, size=5000)).passed
    with pytest.raises(ValueError):
        ks_two_sample([1.0], [2.0])


def test_mean_and_proportion_z():
    rng = np.random.default_rng(2)
    assert mean_z(rng.normal(1.0, size=4000), 1.0).passed
    r = proportion_z(500, 1000, 0.5)
    assert r.z == 0.0 and r.passed
    assert not proportion_z(600, 1000, 0.5).passed
    with pytest.raises(ValueError):
        proportion_z(1, 0, 0.5)


def test_slope_fit_exact_power():
    x = np.log([0.4, 0.2, 0.1, 0.05])
    fit = slope_fit(x, 3.0 * x + 1.5)
    assert fit.slope == pytest.approx(3.0, abs=1e-12)
    assert fit.intercept == pytest.approx(1.5, abs=1e-12)
    with pytest.raises(ValueError):
        slope_fit([1.0, 2.0], [1.0, 2.0])


def test_majority_and_report_json():
    reps = [TestReport("t", "KS", 0.1, p=p, passed=p > 0.01) for p in (0.5, 0.001, 0.2)]
    assert majority_pass(reps, 2)
    assert not majority_pass(reps, 3)
    j = reps[0].to_json()
    assert set(j) >= {"test", "statistic", "value", "p", "z", "threshold", "passed", "n", "seed", "runtime_ms"}
    assert "[PASS]" in reps[0].line()
