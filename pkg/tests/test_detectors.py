from __future__ import annotations

import itertools
import math
import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mapek.detectors import (
    CusumState,
    DetectorVote,
    detect_cusum,
    detect_pca,
    detect_threshold,
    detect_zscore,
    ensemble,
    majority,
    org_coupling,
    power_iteration_components,
)
from mapek.telemetry import CollaborationEvent, WindowAggregate


def agg_with_mean(mean, metric="latency_ms", service="svc-a"):
    return WindowAggregate(service, metric, "dynamic", 0, 20, 20, mean, mean, mean, 0.0)


# --------------------------------------------------------------------------
# independent brute-force references (straight-line reimplementations kept
# deliberately separate from the library code paths)
# --------------------------------------------------------------------------

def ref_mean(xs):
    return sum(xs) / len(xs)


def ref_pstd(xs):
    m = ref_mean(xs)
    return math.sqrt(sum((x - m) ** 2 for x in xs) / len(xs))


def ref_zscore_alarms(values, w, k):
    """Indices where |z| of values[i] against the previous w values exceeds k."""
    alarms = []
    for i in range(w, len(values)):
        window = values[i - w:i]
        m = ref_mean(window)
        sd = ref_pstd(window)
        if sd < 1e-9:
            if abs(values[i] - m) > 1e-9:
                alarms.append(i)
        elif abs(values[i] - m) / sd > k:
            alarms.append(i)
    return alarms


def ref_cusum_alarms(values, b, kappa, h):
    """Alarm indices for a standardized two-sided CUSUM calibrated on values[:b]."""
    mu = ref_mean(values[:b])
    sd = ref_pstd(values[:b])
    if sd < 1e-9:
        sd = 1e-9
    sp = sn = 0.0
    alarms = []
    for i in range(b, len(values)):
        x = (values[i] - mu) / sd
        sp = max(0.0, sp + x - kappa)
        sn = max(0.0, sn - x - kappa)
        if max(sp, sn) >= h:
            alarms.append(i)
            sp = sn = 0.0
    return alarms


# -- threshold detector ------------------------------------------------------

def test_threshold_within_bounds():
    vote = detect_threshold(agg_with_mean(5.0), {"max": 10.0})
    assert vote.anomalous is False and vote.score == 0.0


def test_threshold_error_rate_exceedance_score():
    vote = detect_threshold(agg_with_mean(0.95, metric="error_rate"), {"max": 0.05})
    assert vote.anomalous is True
    assert vote.score == pytest.approx(18.0)  # 0.9 / 0.05


def test_threshold_at_bound_is_not_anomalous():
    vote = detect_threshold(agg_with_mean(10.0), {"max": 10.0})
    assert vote.anomalous is False


def test_threshold_min_bound():
    vote = detect_threshold(agg_with_mean(10.0, metric="cert_days_remaining"), {"min": 30.0})
    assert vote.anomalous is True
    assert vote.score == pytest.approx(20.0 / 30.0)


def test_threshold_zero_bound_uses_unit_denominator():
    vote = detect_threshold(agg_with_mean(-2.0, metric="cert_days_remaining"), {"min": 0.0})
    assert vote.anomalous is True
    assert vote.score == pytest.approx(2.0)


# -- z-score ---------------------------------------------------------------------

def test_zscore_degenerate_constant_series_same_value():
    vote = detect_zscore([10.0] * 60, 10.0, k=3.0)
    assert vote.anomalous is False and vote.score == 0.0


def test_zscore_degenerate_constant_series_new_value():
    vote = detect_zscore([10.0] * 60, 11.0, k=3.0)
    assert vote.anomalous is True


def test_zscore_matches_bruteforce_on_ramp():
    series = [float(v) for v in range(1, 61)]
    vote = detect_zscore(series, 100.0, k=3.0)
    m = ref_mean(series)
    sd = ref_pstd(series)
    z = abs(100.0 - m) / sd
    assert vote.score == pytest.approx(z, abs=1e-12)
    assert vote.anomalous == (z > 3.0)


def test_zscore_alarm_indices_match_bruteforce_1000():
    rng = random.Random(42)
    values = [rng.gauss(10.0, 2.0) for _ in range(1000)]
    for i in (200, 450, 700, 925):
        values[i] += 25.0
    w, k = 60, 3.0
    lib_alarms = []
    for i in range(w, len(values)):
        vote = detect_zscore(values[i - w:i], values[i], k)
        if vote.anomalous:
            lib_alarms.append(i)
    assert lib_alarms == ref_zscore_alarms(values, w, k)
    assert len(lib_alarms) >= 4


# -- CUSUM ------------------------------------------------------------------------

def calibrated_state(kappa=0.5, h=5.0):
    return CusumState(kappa=kappa, h=h, calibration=2, mu=0.0, sigma=1.0, calibrated=True)


def test_cusum_constant_series_never_alarms():
    state = calibrated_state()
    for _ in range(500):
        vote = detect_cusum(state, 0.0)
        assert vote is not None and vote.anomalous is False
    assert state.s_pos == 0.0 and state.s_neg == 0.0


def test_cusum_unit_drift_alarms_at_tenth_input():
    # oracle (hand iteration): x=1, S+ grows by 1-0.5 each step; reaches h=5
    # exactly at the 10th input
    state = calibrated_state()
    alarms = []
    for i in range(1, 13):
        vote = detect_cusum(state, 1.0)
        if vote.anomalous:
            alarms.append(i)
    assert alarms[0] == 10


def test_cusum_negative_step_alarm_within_two():
    # oracle: x=-3 drives S- by 2.5 per step; ceil(5/2.5)=2 steps to alarm
    state = calibrated_state()
    v1 = detect_cusum(state, -3.0)
    v2 = detect_cusum(state, -3.0)
    assert v1.anomalous is False
    assert v2.anomalous is True
    assert v2.score == pytest.approx(5.0)


def test_cusum_withholds_during_calibration():
    state = CusumState(kappa=0.5, h=5.0, calibration=5)
    votes = [detect_cusum(state, float(v)) for v in (10, 10, 10, 10, 10)]
    assert votes == [None] * 5
    assert state.calibrated is True
    assert detect_cusum(state, 10.0) is not None


def test_cusum_alarm_indices_match_bruteforce_1000():
    rng = random.Random(7)
    values = [rng.gauss(0.0, 1.0) for _ in range(1000)]
    for i in range(400, 520):
        values[i] += 2.0   # sustained shift
    for i in range(800, 1000):
        values[i] -= 1.5   # downward shift
    b, kappa, h = 30, 0.5, 5.0
    state = CusumState(kappa=kappa, h=h, calibration=b)
    lib_alarms = []
    for i, v in enumerate(values):
        vote = detect_cusum(state, v)
        if vote is not None and vote.anomalous:
            lib_alarms.append(i)
    assert lib_alarms == ref_cusum_alarms(values, b, kappa, h)
    assert len(lib_alarms) > 0


# -- PCA ---------------------------------------------------------------------------

def test_pca_rank_one_data_has_zero_spe():
    direction = np.array([1.0, 2.0, 3.0])
    rows = np.array([t * direction for t in range(1, 21)])
    vote = detect_pca(rows, components=1, spe_threshold=1.0)
    assert vote.score == pytest.approx(0.0, abs=1e-9)
    assert vote.anomalous is False


def test_pca_orthogonal_row_spe_is_length_squared():
    # x-axis data with zero-mean y, last row (0, L) orthogonal to component 1
    length = 3.0
    rows = [[float(x), 0.0] for x in range(1, 20)]
    rows.append([10.0, -length])
    rows.append([10.0, length])
    vote = detect_pca(np.array(rows), components=1, spe_threshold=100.0)
    assert vote.score == pytest.approx(length ** 2, abs=1e-6)


def test_pca_eigenvalues_match_numpy_oracle_50x3():
    rng = np.random.default_rng(3)
    base = rng.normal(size=(50, 3))
    base[:, 2] = 0.5 * base[:, 0] + 0.1 * base[:, 2]   # correlated columns
    values, vectors = power_iteration_components(base, k=3)
    cov = np.cov(base, rowvar=False, bias=True)
    oracle = np.sort(np.linalg.eigh(cov)[0])[::-1]
    assert values.shape[0] == 3
    assert np.allclose(values, oracle[:3], atol=1e-6)
    # explained variance sums to total variance
    assert abs(values.sum() - np.trace(cov)) < 1e-6
    # ratios non-increasing
    assert all(values[i] >= values[i + 1] - 1e-12 for i in range(len(values) - 1))
    # components are orthonormal
    gram = vectors @ vectors.T
    assert np.allclose(gram, np.eye(len(values)), atol=1e-6)


def test_pca_rank_deficient_ends_deflation_early():
    rows = np.array([[t, 2.0 * t, 0.0] for t in range(1, 30)])
    values, vectors = power_iteration_components(rows, k=3)
    assert len(values) == 1  # single direction of variance
    assert len(vectors) == 1


def test_pca_spe_nonnegative_random():
    rng = np.random.default_rng(11)
    for _ in range(10):
        rows = rng.normal(size=(30, 4))
        vote = detect_pca(rows, components=2, spe_threshold=1.0)
        assert vote.score >= 0.0


# -- organizational coupling -----------------------------------------------------

def ev(contributor, service):
    return CollaborationEvent(contributor, service, 1)


def test_coupling_disjoint_teams():
    events = [ev("a", "s1"), ev("b", "s2")]
    votes = org_coupling(events, tau=0.5)
    vote = votes[("s1", "s2")]
    assert vote.score == 0.0 and vote.anomalous is False


def test_coupling_identical_teams():
    events = [ev("a", "s1"), ev("b", "s1"), ev("a", "s2"), ev("b", "s2")]
    vote = org_coupling(events, tau=1.0)[("s1", "s2")]
    assert vote.score == 1.0 and vote.anomalous is True


def test_coupling_set_arithmetic():
    events = ([ev(c, "s1") for c in "abc"] + [ev(c, "s2") for c in "bcd"])
    vote = org_coupling(events, tau=0.5)[("s1", "s2")]
    assert vote.score == pytest.approx(0.5)  # |{b,c}| / |{a,b,c,d}|
    assert vote.anomalous is True


@given(st.sets(st.sampled_from("abcdef"), max_size=6),
       st.sets(st.sampled_from("abcdef"), max_size=6))
def test_coupling_symmetric(team1, team2):
    events = [ev(c, "s1") for c in team1] + [ev(c, "s2") for c in team2]
    mirrored = [ev(c, "s2") for c in team1] + [ev(c, "s1") for c in team2]
    votes = org_coupling(events, tau=0.5)
    votes_m = org_coupling(mirrored, tau=0.5)
    if ("s1", "s2") in votes:
        assert votes[("s1", "s2")].score == votes_m[("s1", "s2")].score


def test_coupling_excludes_empty_sets():
    assert org_coupling([], tau=0.5) == {}


# -- ensemble ---------------------------------------------------------------------

def vote(anomalous, score=1.0, detector="zscore"):
    return DetectorVote(detector, anomalous, score)


def test_majority_truth_table_examples():
    assert majority([vote(True), vote(False), vote(False)]) is False
    assert majority([vote(True), vote(True), vote(False)]) is True
    assert majority([vote(True), vote(False)]) is False


def test_majority_exhaustive_up_to_five():
    for n in range(1, 6):
        for flags in itertools.product([True, False], repeat=n):
            votes = [vote(f) for f in flags]
            assert majority(votes) == (sum(flags) * 2 > n)


def test_ensemble_none_without_majority():
    context = {"id": "a-1", "target": "svc-a", "layer": "dynamic", "tick": 20,
               "metric": "latency_ms", "mean": 1.0, "down_floor": 0.95}
    bands = {"low": 2.0, "medium": 5.0}
    refs = {"zscore": 3.0, "cusum": 5.0}
    votes = [vote(True, 4.0), vote(False, 0.0, "cusum")]
    assert ensemble(votes, context, bands, refs) is None


def test_ensemble_kind_from_highest_scoring_detector():
    context = {"id": "a-1", "target": "svc-a", "layer": "dynamic", "tick": 20,
               "metric": "mem_mb", "mean": 150.0, "down_floor": 0.95}
    bands = {"low": 2.0, "medium": 5.0}
    refs = {"zscore": 3.0, "cusum": 5.0, "threshold": 1.0}
    votes = [vote(True, 9.0, "cusum"), vote(True, 0.5, "threshold")]
    report = ensemble(votes, context, bands, refs)
    assert report.signature["kind"] == "level_shift"


def test_ensemble_tie_break_uses_priority_order():
    context = {"id": "a-1", "target": "svc-a", "layer": "dynamic", "tick": 20,
               "metric": "mem_mb", "mean": 1.0, "down_floor": 0.95}
    bands = {"low": 2.0, "medium": 5.0}
    refs = {"zscore": 3.0, "cusum": 5.0}
    votes = [vote(True, 5.0, "zscore"), vote(True, 5.0, "cusum")]
    report = ensemble(votes, context, bands, refs)
    assert report.signature["kind"] == "level_shift"  # cusum outranks zscore


def test_ensemble_cert_metric_forces_cert_expiring():
    context = {"id": "a-1", "target": "svc-b", "layer": "dynamic", "tick": 40,
               "metric": "cert_days_remaining", "mean": 14.5, "down_floor": 0.95}
    bands = {"low": 2.0, "medium": 5.0}
    refs = {"cusum": 5.0}
    report = ensemble([vote(True, 6.0, "cusum")], context, bands, refs)
    assert report.signature["kind"] == "cert_expiring"


def test_ensemble_down_floor_forces_service_down():
    context = {"id": "a-1", "target": "svc-a", "layer": "dynamic", "tick": 40,
               "metric": "error_rate", "mean": 1.0, "down_floor": 0.95}
    bands = {"low": 2.0, "medium": 5.0}
    refs = {"threshold": 1.0}
    report = ensemble([vote(True, 18.0, "threshold")], context, bands, refs)
    assert report.signature["kind"] == "service_down"
    assert report.severity == "high"  # 18x the reference


def test_ensemble_severity_bands():
    context = {"id": "a-1", "target": "svc-a", "layer": "dynamic", "tick": 20,
               "metric": "mem_mb", "mean": 1.0, "down_floor": 0.95}
    bands = {"low": 2.0, "medium": 5.0}
    refs = {"cusum": 5.0}
    assert ensemble([vote(True, 6.0, "cusum")], context, bands, refs).severity == "low"
    assert ensemble([vote(True, 15.0, "cusum")], context, bands, refs).severity == "medium"
    assert ensemble([vote(True, 30.0, "cusum")], context, bands, refs).severity == "high"


@given(st.lists(st.booleans(), min_size=1, max_size=7), st.integers(0, 6))
def test_ensemble_monotonicity(flags, flip_at):
    """Flipping any vote false->true never turns an anomaly into none."""
    before = majority([vote(f) for f in flags])
    flipped = list(flags)
    flipped[flip_at % len(flags)] = True
    after = majority([vote(f) for f in flipped])
    if before:
        assert after
