import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from oracles import gev_bound, noise_normalized_covariance, quadratic_bound, random_instance, sinr_direct, split

from dronecf import scenarios
from dronecf.analysis import (
    DEFAULT_COUNTS,
    PERCENTILES,
    LinkBudget,
    ap_subset_sweep,
    distribution_stats,
    interference_plus_noise,
    mr_vector,
    multi_user_sinr_eval,
    multi_user_sinr_samples,
    multiuser_sinr,
    optimum_vector,
    random_subsets,
    sinr,
    sinr_upper_bound,
    uplink_snr,
)
from dronecf.channel import (
    DatasetMetadata,
    SoundingDataset,
    average_gain,
    db_to_linear,
    records_from_array,
)
from dronecf.errors import (
    DegenerateChannelError,
    IncompatibleDatasetError,
    InfeasibleSubsetError,
    InvalidCombinerError,
    InvalidInputError,
)
from dronecf.sounder import FlightPlan, multi_ue_campaign

BUDGET = LinkBudget()


# --- uplink SNR ---

def test_single_ap_snr():
    assert uplink_snr([db_to_linear(-60.0)]).db == 30.0


def test_two_equal_aps_add_3db():
    one = uplink_snr([1e-7]).db
    two = uplink_snr([1e-7, 1e-7]).db
    assert two - one == pytest.approx(10 * math.log10(2), abs=1e-12)
    assert two - one == pytest.approx(3.01, abs=1e-3)


def test_snr_matches_direct_sum():
    rng = np.random.default_rng(0)
    g = 10 ** rng.uniform(-12, -5, 1024)
    total = 0.0
    for x in g:
        total += x
    p_w = 10 ** (0 / 10) / 1000
    s2_w = 10 ** (-90 / 10) / 1000
    assert uplink_snr(g).linear == pytest.approx(p_w / s2_w * total, rel=1e-12)


def test_snr_budget_arithmetic():
    b = LinkBudget(p_dbm=23.0, noise_dbm=-94.0)
    assert uplink_snr([1e-9], b).db == pytest.approx(23 + 94 - 90, abs=1e-9)


def test_snr_rejects_bad_gains():
    with pytest.raises(InvalidInputError):
        uplink_snr([])
    with pytest.raises(InvalidInputError):
        uplink_snr([-1.0])


def test_link_budget_validation():
    with pytest.raises(InvalidInputError):
        LinkBudget(p_dbm=float("nan"))
    with pytest.raises(InvalidInputError):
        LinkBudget(p_dbm=0.0, noise_dbm=250.0)


# --- combiners ---

def test_mr_identity():
    e1 = np.zeros(4, complex)
    e1[0] = 1
    np.testing.assert_array_equal(mr_vector(e1), e1)
    h = np.array([1 + 2j, -3j, 0.5])
    np.testing.assert_array_equal(mr_vector(h), h)


def test_mr_zero_channel():
    with pytest.raises(DegenerateChannelError):
        mr_vector(np.zeros(3))


def test_mr_single_user_sinr():
    rng = np.random.default_rng(1)
    h = random_instance(rng, 16, 1)[:, 0]
    expected = BUDGET.rho * np.linalg.norm(h) ** 2
    assert sinr(mr_vector(h), h, None, BUDGET).linear == pytest.approx(expected, rel=1e-12)


def test_optimum_single_user_is_mr_direction():
    rng = np.random.default_rng(2)
    h = random_instance(rng, 8, 1)[:, 0]
    v = optimum_vector(h, None, BUDGET)
    ratio = v / h
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-12)


def test_optimum_orthogonal_interferer():
    h = np.array([1.0, 1j, 0.0, 0.0]) * 1e-4
    a = np.array([0.0, 0.0, 1.0, -1j])[:, None] * 1e-4
    v = optimum_vector(h, a, BUDGET)
    np.testing.assert_allclose(v[:2] / h[:2], v[0] / h[0], rtol=1e-12)
    np.testing.assert_allclose(v[2:], 0.0, atol=1e-15 * np.abs(v).max())


def test_optimum_rejects_non_finite():
    with pytest.raises(InvalidInputError):
        optimum_vector(np.array([1.0, np.nan]), None, BUDGET)
    with pytest.raises(InvalidInputError):
        optimum_vector(np.array([1.0, 1.0]), np.array([[np.inf], [0.0]]), BUDGET)


def test_sinr_orthogonal_combiner_is_zero():
    h = np.array([1.0, 0.0])
    assert sinr(np.array([0.0, 1.0]), h, None, BUDGET).linear == 0.0


def test_sinr_zero_combiner():
    with pytest.raises(InvalidCombinerError):
        sinr(np.zeros(2), np.ones(2), None, BUDGET)


@pytest.mark.parametrize("seed", range(20))
def test_optimum_matches_generalized_eigenvalue(seed):
    rng = np.random.default_rng(100 + seed)
    h = random_instance(rng, 8, 4)
    hk, a = split(h, 0)
    got = sinr(optimum_vector(hk, a, BUDGET), hk, a, BUDGET).linear
    assert got == pytest.approx(gev_bound(hk, a), rel=1e-9)
    assert got == pytest.approx(quadratic_bound(hk, a), rel=1e-9)
    assert sinr_upper_bound(hk, a, BUDGET).linear == pytest.approx(quadratic_bound(hk, a), rel=1e-9)


def test_sinr_matches_unnormalized_formula():
    rng = np.random.default_rng(3)
    h = random_instance(rng, 12, 5)
    hk, a = split(h, 2)
    v = rng.standard_normal(12) + 1j * rng.standard_normal(12)
    assert sinr(v, hk, a, BUDGET).linear == pytest.approx(sinr_direct(v, hk, a), rel=1e-12)


instances = st.tuples(st.integers(1, 32), st.integers(1, 8), st.integers(0, 2 ** 32 - 1))


@settings(max_examples=200, deadline=None)
@given(instances, st.complex_numbers(min_magnitude=1e-6, max_magnitude=1e6, allow_nan=False,
                                     allow_infinity=False))
def test_combiner_scale_invariance(inst, c):
    m, k, seed = inst
    rng = np.random.default_rng(seed)
    h = random_instance(rng, m, k)
    hk, a = split(h, 0)
    v = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    assert sinr(c * v, hk, a, BUDGET).linear == pytest.approx(sinr(v, hk, a, BUDGET).linear, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(instances)
def test_optimum_beats_random_probes(inst):
    m, k, seed = inst
    rng = np.random.default_rng(seed)
    h = random_instance(rng, m, k)
    hk, a = split(h, int(rng.integers(k)))
    best = sinr(optimum_vector(hk, a, BUDGET), hk, a, BUDGET).linear
    for _ in range(100):
        w = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        assert sinr(w, hk, a, BUDGET).linear <= best * (1 + 1e-9)
    assert best == pytest.approx(gev_bound(hk, a), rel=1e-9)


@settings(max_examples=100, deadline=None)
@given(instances)
def test_appending_an_ap_never_hurts_optimum(inst):
    m, k, seed = inst
    rng = np.random.default_rng(seed)
    h = random_instance(rng, m + 1, k)
    small, big = h[:-1], h
    s_small = sinr(optimum_vector(*split(small, 0), BUDGET), *split(small, 0), BUDGET).linear
    s_big = sinr(optimum_vector(*split(big, 0), BUDGET), *split(big, 0), BUDGET).linear
    assert s_big >= s_small * (1 - 1e-9)


@settings(max_examples=100, deadline=None)
@given(instances)
def test_low_snr_mr_is_optimal(inst):
    m, k, seed = inst
    rng = np.random.default_rng(seed)
    low = LinkBudget(p_dbm=-60.0, noise_dbm=-90.0)    # p scaled down by 1e6
    hk, a = split(random_instance(rng, m, k), 0)
    opt = sinr(optimum_vector(hk, a, low), hk, a, low).linear
    mr = sinr(mr_vector(hk), hk, a, low).linear
    assert mr == pytest.approx(opt, rel=1e-3)


@settings(max_examples=100, deadline=None)
@given(instances)
def test_interference_plus_noise_is_hermitian_pd(inst):
    m, k, seed = inst
    rng = np.random.default_rng(seed)
    _, a = split(random_instance(rng, m, k), 0)
    r = interference_plus_noise(a, BUDGET, m)
    np.testing.assert_array_equal(r, r.conj().T)
    # normalized by sigma^2, so the noise floor is 1
    assert np.linalg.eigvalsh(r).min() >= 1 - 1e-9


# --- batched evaluation ---

@pytest.mark.parametrize("method", ["optimum", "mr"])
def test_batched_matches_single_instance(method):
    rng = np.random.default_rng(4)
    hs = np.stack([random_instance(rng, 24, 4) for _ in range(10)])
    out = multiuser_sinr(hs, BUDGET, method)
    for b in range(10):
        for k in range(4):
            hk, a = split(hs[b], k)
            v = optimum_vector(hk, a, BUDGET) if method == "optimum" else mr_vector(hk)
            assert out[b, k] == pytest.approx(sinr(v, hk, a, BUDGET).linear, rel=1e-9)


def test_batched_zero_interferers_gives_single_user_snr():
    rng = np.random.default_rng(5)
    h = random_instance(rng, 16, 3)
    h[:, 1:] = 0.0
    for method in ("optimum", "mr"):
        out = multiuser_sinr(h, BUDGET, method)
        assert out[0] == pytest.approx(BUDGET.rho * np.linalg.norm(h[:, 0]) ** 2, rel=1e-12)


def test_k1_per_realization_mean_equals_uplink_snr():
    rng = np.random.default_rng(6)
    ch = random_instance(rng, 32, 16)          # 32 APs x 16 realizations, one UE
    recs = records_from_array(ch, np.zeros((32, 3)), 1, 1)
    gains = [average_gain(r) for r in recs]
    per_realization = multiuser_sinr(ch.T[:, :, None], BUDGET, "mr")[:, 0]
    assert per_realization.mean() == pytest.approx(uplink_snr(gains).linear, rel=1e-12)


def test_unknown_method():
    with pytest.raises(InvalidInputError):
        multiuser_sinr(np.ones((2, 2)), BUDGET, "zf")


# --- statistics ---

def test_constant_samples():
    s = distribution_stats(np.full(50, 7.5))
    assert s.std_db == 0.0
    assert set(s.percentiles.values()) == {7.5}
    assert s.median_db == 7.5


def test_two_sample_median():
    assert distribution_stats([0.0, 10.0]).median_db == 5.0


def test_standard_normal_std():
    x = np.random.default_rng(8).standard_normal(100_000)
    assert abs(distribution_stats(x).std_db - 1) < 0.02


def test_empty_samples():
    with pytest.raises(InvalidInputError):
        distribution_stats([])


@given(st.lists(st.floats(-200, 200), min_size=1, max_size=200))
def test_percentiles_and_cdf_monotone(xs):
    s = distribution_stats(xs)
    p = [s.percentiles[q] for q in PERCENTILES]
    assert all(b >= a for a, b in zip(p, p[1:]))
    assert np.all(np.diff(s.cdf) >= 0)
    assert s.cdf[-1] == 1.0 and s.cdf.min() >= 0.0


def test_no_signal_samples_stay_ordered():
    s = distribution_stats([float("-inf"), 0.0, 10.0])
    p = [s.percentiles[q] for q in PERCENTILES]
    assert p[0] == float("-inf") and not any(np.isnan(p))
    assert all(b >= a for a, b in zip(p, p[1:]))


# --- random AP subsets ---

def test_subsets_without_replacement():
    rng = np.random.default_rng(0)
    sub = random_subsets(50, 20, 300, rng)
    assert sub.shape == (300, 20)
    assert all(len(set(row)) == 20 for row in sub)
    assert sub.min() >= 0 and sub.max() < 50


def test_subset_count_too_large():
    with pytest.raises(InfeasibleSubsetError):
        random_subsets(5, 6, 1, np.random.default_rng(0))


def flat_dataset(gains, ue_id=1, F=4):
    L = len(gains)
    ch = np.sqrt(np.asarray(gains))[:, None] * np.ones((L, F))
    meta = DatasetMetadata(3.5e9, 46e6, F, 4.0, 0.05, 35.0, 0)
    return SoundingDataset(meta, records_from_array(ch, np.zeros((L, 3)), ue_id, 1))


def test_sweep_all_aps_zero_variance():
    rng = np.random.default_rng(9)
    ds = flat_dataset(10 ** rng.uniform(-12, -6, 64))
    r = ap_subset_sweep(ds, 1, counts=[64], n_subsets=50, seed=1)
    assert r[(1, 64, "mr")].std_db == 0.0


def test_sweep_homogeneous_field():
    ds = flat_dataset(np.full(100, 1e-8))
    r = ap_subset_sweep(ds, 1, counts=[2], n_subsets=200, seed=1)
    assert r[(1, 2, "mr")].std_db == 0.0
    assert r[(1, 2, "mr")].median_db == pytest.approx(10 * math.log10(2e-8 * 1e9), abs=1e-9)


def test_sweep_count_exceeds_aps():
    with pytest.raises(InfeasibleSubsetError):
        ap_subset_sweep(flat_dataset(np.ones(8)), 1, counts=[16], n_subsets=5)


def test_sweep_unknown_ue():
    with pytest.raises(IncompatibleDatasetError):
        ap_subset_sweep(flat_dataset(np.ones(8)), 7, counts=[2], n_subsets=5)


def test_sweep_deterministic_and_worker_independent():
    rng = np.random.default_rng(10)
    ds = flat_dataset(10 ** rng.uniform(-12, -6, 300))
    counts = [2, 4, 8, 16]
    a = ap_subset_sweep(ds, 1, counts, n_subsets=300, seed=4, keep_samples=True)
    b = ap_subset_sweep(ds, 1, counts[::-1], n_subsets=300, seed=4, workers=3, keep_samples=True)
    for c in counts:
        np.testing.assert_array_equal(a.samples[(1, c, "mr")], b.samples[(1, c, "mr")])
    c = ap_subset_sweep(ds, 1, counts, n_subsets=300, seed=5, keep_samples=True)
    assert not np.array_equal(a.samples[(1, 8, "mr")], c.samples[(1, 8, "mr")])


def test_sweep_default_counts():
    assert DEFAULT_COUNTS == (2, 4, 8, 16, 32, 64, 128, 256, 512, 1024)


# --- multi-user evaluation ---

@pytest.fixture(scope="module")
def small_campaign():
    env = scenarios.default_environment(seed=2, n_freq=8)
    plan = FlightPlan(np.array([[0.0, 0.0], [400.0, 0.0], [400.0, 200.0]]), altitude_m=35.0)
    return multi_ue_campaign(plan, env, scenarios.default_ue_specs(), trials_per_ue=2)


def test_optimum_dominates_mr_on_campaign(small_campaign):
    out = multi_user_sinr_samples(small_campaign, [1, 2, 3, 4], 64, n_subsets=30, seed=3)
    assert out["optimum"].shape == (30, 8, 4)
    assert np.all(out["optimum"] >= out["mr"] * (1 - 1e-9))


def test_multi_user_averaged_mode(small_campaign):
    per = multi_user_sinr_samples(small_campaign, [1, 2], 16, n_subsets=10, seed=3)
    avg = multi_user_sinr_samples(small_campaign, [1, 2], 16, n_subsets=10, seed=3, frequency_mode="averaged")
    np.testing.assert_allclose(avg["mr"], per["mr"].mean(axis=1), rtol=1e-15)


def test_multi_user_uses_requested_trials(small_campaign):
    a = multi_user_sinr_samples(small_campaign, [1, 2], 16, n_subsets=5, seed=3, trials={1: 1, 2: 1})
    b = multi_user_sinr_samples(small_campaign, [1, 2], 16, n_subsets=5, seed=3, trials={1: 1, 2: 2})
    assert not np.array_equal(a["mr"], b["mr"])


def test_multi_user_needs_two_ues(small_campaign):
    with pytest.raises(InvalidInputError):
        multi_user_sinr_samples(small_campaign, [1], 8)


def test_multi_user_mismatched_flights():
    a = flat_dataset(np.ones(10), ue_id=1)
    b = flat_dataset(np.ones(12), ue_id=2)
    merged = SoundingDataset(a.metadata, a.records + b.records)
    with pytest.raises(IncompatibleDatasetError):
        multi_user_sinr_samples(merged, [1, 2], 4)


def test_multi_user_eval_report(small_campaign):
    r = multi_user_sinr_eval(small_campaign, [1, 2, 3, 4], 32, "mr", n_subsets=10, seed=1)
    assert sorted(r.keys()) == [(u, 32, "mr") for u in (1, 2, 3, 4)]
    assert r[(3, 32, "mr")].n_samples == 10 * 8


@pytest.mark.xfail(strict=True, reason="the synthetic field widens the low-tail optimum-MR gap as L grows")
def test_low_tail_gap_shrinks_or_holds_with_more_aps():
    env = scenarios.default_environment(seed=0, n_freq=16)
    ds = multi_ue_campaign(scenarios.default_flight_plan(), env, scenarios.default_ue_specs())
    gaps = {}
    for L in (64, 256):
        s = multi_user_sinr_samples(ds, [1, 2, 3, 4], L, n_subsets=200, seed=0)
        opt = 10 * np.log10(s["optimum"])
        mr = 10 * np.log10(s["mr"])
        gaps[L] = [np.percentile(opt[..., k], 10) - np.percentile(mr[..., k], 10) for k in range(4)]
    assert all(b <= a for a, b in zip(gaps[64], gaps[256])), gaps
