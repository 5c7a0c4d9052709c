"""Analyze stage: streaming detectors, coupling analysis, majority ensemble.

Per (service, metric) stream three detectors can vote: a goal-bounds check
on the window mean, a rolling z-score on raw samples, and a standardized
CUSUM change-point detector on raw samples. Per service, a PCA detector
scores the squared reconstruction error of the newest window-mean row
against the top principal directions of recent history. Per service pair,
organizational coupling is the Jaccard overlap of contributor sets.

Streaming detectors consume each raw sample as it is ingested and latch any
alarm until the window closes; window-batch detectors vote on the closed
window. A detector that is still warming up withholds its vote entirely -
withheld votes do not count toward the majority denominator.

An anomaly is emitted for a vote group iff strictly more than half of the
present votes are anomalous. The report's signature kind comes from the
highest-scoring anomalous detector (ties broken by a fixed priority order),
except that cert and hard-down conditions are named for the resource:
cert_days_remaining trouble is cert_expiring and a window of error_rate at
or above the down floor is service_down, whichever detector saw it first.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .config import METRICS
from .telemetry import CollaborationEvent, WindowAggregate

EPS = 1e-9

# priority order for score ties (first wins)
DETECTOR_PRIORITY = ("threshold", "cusum", "zscore", "pca", "coupling")

NATIVE_KIND = {
    "threshold": "range_violation",
    "cusum": "level_shift",
    "zscore": "point_outlier",
    "pca": "multivariate_drift",
    "coupling": "org_coupling",
}


@dataclass(frozen=True)
class DetectorVote:
    detector_id: str
    anomalous: bool
    score: float


@dataclass(frozen=True)
class AnomalyReport:
    id: str
    signature: dict          # {kind, target}
    layer: str
    severity: str
    votes: list[DetectorVote]
    tick: int
    metric: str | None = None

    def to_payload(self) -> dict:
        return {
            "id": self.id,
            "signature": self.signature,
            "layer": self.layer,
            "severity": self.severity,
            "metric": self.metric,
            "votes": [
                {"detector_id": v.detector_id, "anomalous": v.anomalous, "score": v.score}
                for v in self.votes
            ],
        }


# -- single-shot detector functions ---------------------------------------

def detect_threshold(agg: WindowAggregate, bounds: dict) -> DetectorVote:
    """Bounds check on the window mean. Strict inequality: at-bound is fine."""
    lo, hi = bounds.get("min"), bounds.get("max")
    violated = None
    if lo is not None and agg.mean < lo:
        violated = lo
    if hi is not None and agg.mean > hi:
        violated = hi
    if violated is None:
        return DetectorVote("threshold", False, 0.0)
    denom = abs(violated) if violated != 0 else 1.0
    return DetectorVote("threshold", True, abs(agg.mean - violated) / denom)


def detect_zscore(series: list[float], new_value: float, k: float) -> DetectorVote:
    """|z| of new_value against the trailing series; caller guarantees len == W."""
    m = sum(series) / len(series)
    sd = math.sqrt(sum((v - m) ** 2 for v in series) / len(series))
    if sd < EPS:
        anomalous = abs(new_value - m) > EPS
        score = abs(new_value - m) / EPS if anomalous else 0.0
        return DetectorVote("zscore", anomalous, score)
    z = abs(new_value - m) / sd
    return DetectorVote("zscore", z > k, z)


@dataclass
class CusumState:
    """Two-sided standardized CUSUM with calibration over the first B samples."""
    kappa: float
    h: float
    calibration: int
    samples: list[float] = field(default_factory=list)
    mu: float = 0.0
    sigma: float = 1.0
    calibrated: bool = False
    s_pos: float = 0.0
    s_neg: float = 0.0


def detect_cusum(state: CusumState, value: float) -> DetectorVote | None:
    """Advance the CUSUM recurrence by one sample.

    During calibration the vote is withheld (returns None). Alarm resets
    both sums. Alarm comparison is inclusive (max sum reaching h fires).
    """
    if not state.calibrated:
        state.samples.append(value)
        if len(state.samples) >= state.calibration:
            m = sum(state.samples) / len(state.samples)
            sd = math.sqrt(sum((v - m) ** 2 for v in state.samples) / len(state.samples))
            state.mu = m
            state.sigma = sd if sd >= EPS else EPS
            state.calibrated = True
            state.samples = []
        return None
    x = (value - state.mu) / state.sigma
    state.s_pos = max(0.0, state.s_pos + x - state.kappa)
    state.s_neg = max(0.0, state.s_neg - x - state.kappa)
    score = max(state.s_pos, state.s_neg)
    anomalous = score >= state.h
    if anomalous:
        state.s_pos = 0.0
        state.s_neg = 0.0
    return DetectorVote("cusum", anomalous, score)


def power_iteration_components(matrix: np.ndarray, k: int,
                               tol: float = 1e-9, max_iter: int = 1000) -> tuple[np.ndarray, np.ndarray]:
    """Top-k eigenpairs of the population covariance of `matrix` rows.

    Columns are centered internally; each principal direction is found by
    power iteration and removed by deflation. A zero eigenvalue ends
    deflation early (rank-deficient data). Returns (eigenvalues, components)
    with components stacked as rows; both may be shorter than k.
    """
    x = np.asarray(matrix, dtype=float)
    n, d = x.shape
    xc = x - x.mean(axis=0)
    cov = (xc.T @ xc) / n
    values: list[float] = []
    vectors: list[np.ndarray] = []
    # deterministic start vector with a ramp to break symmetric ties
    base = np.ones(d) + np.linspace(0.0, 0.1, d)
    for _ in range(k):
        v = base / np.linalg.norm(base)
        lam = 0.0
        for _ in range(max_iter):
            w = cov @ v
            norm = np.linalg.norm(w)
            if norm < tol:
                lam = 0.0
                break
            w = w / norm
            if np.linalg.norm(w - v) < tol:
                v = w
                lam = float(v @ cov @ v)
                break
            v = w
        else:
            lam = float(v @ cov @ v)
        if lam <= tol:
            break
        values.append(lam)
        vectors.append(v.copy())
        cov = cov - lam * np.outer(v, v)
    return np.array(values), np.array(vectors)


def detect_pca(window_matrix: np.ndarray, components: int, spe_threshold: float) -> DetectorVote:
    """Squared reconstruction error of the newest row vs the top-k subspace."""
    x = np.asarray(window_matrix, dtype=float)
    _, vecs = power_iteration_components(x, components)
    center = x.mean(axis=0)
    last = x[-1] - center
    if len(vecs) == 0:
        residual = last
    else:
        projected = vecs.T @ (vecs @ last)
        residual = last - projected
    spe = float(residual @ residual)
    return DetectorVote("pca", spe > spe_threshold, spe)


def org_coupling(events: list[CollaborationEvent], tau: float) -> dict[tuple[str, str], DetectorVote]:
    """Jaccard overlap of contributor sets for every service pair in view.

    Services with empty contributor sets are excluded; keys are sorted pairs.
    """
    contributors: dict[str, set[str]] = {}
    for e in events:
        contributors.setdefault(e.service_id, set()).add(e.contributor_id)
    services = sorted(s for s, c in contributors.items() if c)
    votes: dict[tuple[str, str], DetectorVote] = {}
    for i, s1 in enumerate(services):
        for s2 in services[i + 1:]:
            c1, c2 = contributors[s1], contributors[s2]
            coupling = len(c1 & c2) / len(c1 | c2)
            votes[(s1, s2)] = DetectorVote("coupling", coupling >= tau, coupling)
    return votes


# -- ensemble ---------------------------------------------------------------

def majority(votes: list[DetectorVote]) -> bool:
    """Strictly more than half of the present votes are anomalous."""
    if not votes:
        return False
    return sum(1 for v in votes if v.anomalous) * 2 > len(votes)


def ensemble(votes: list[DetectorVote], context: dict, bands: dict,
             threshold_refs: dict[str, float]) -> AnomalyReport | None:
    """Combine one vote group into an AnomalyReport, or None without majority.

    context carries target/layer/tick/metric and, for metric groups, the
    window mean and the service-down floor used for resource-specific kinds.
    """
    if not majority(votes):
        return None
    anomalous = [v for v in votes if v.anomalous]
    winner = max(
        anomalous,
        key=lambda v: (v.score, -DETECTOR_PRIORITY.index(v.detector_id)),
    )
    metric = context.get("metric")
    kind = NATIVE_KIND[winner.detector_id]
    if metric == "cert_days_remaining":
        kind = "cert_expiring"
    elif metric == "error_rate" and context.get("mean", 0.0) >= context.get("down_floor", 0.95):
        kind = "service_down"
    ref = threshold_refs.get(winner.detector_id, 1.0)
    ratio = winner.score / ref if ref > 0 else winner.score
    if ratio < bands["low"]:
        severity = "low"
    elif ratio < bands["medium"]:
        severity = "medium"
    else:
        severity = "high"
    return AnomalyReport(
        id=context["id"],
        signature={"kind": kind, "target": context["target"]},
        layer=context["layer"],
        severity=severity,
        votes=list(votes),
        tick=context["tick"],
        metric=metric,
    )


# -- the stage --------------------------------------------------------------

class AnalyzeStage:
    """Owns all detector state; mutated only inside a cycle."""

    def __init__(self, cfg: dict, goals: dict):
        az = cfg["analyze"]
        self.enabled = list(az["enabled"])
        self.goals = goals
        self.z_window = az["zscore"]["window"]
        self.z_k = az["zscore"]["k"]
        self.cusum_cfg = az["cusum"]
        self.pca_components = az["pca"]["components"]
        self.pca_spe_threshold = az["pca"]["spe_threshold"]
        self.pca_history = az["pca"]["history"]
        self.tau = az["coupling"]["tau"]
        self.bands = az["severity_bands"]
        self.down_floor = az["service_down_error_rate"]
        self.threshold_refs = {
            "threshold": 1.0,
            "zscore": self.z_k,
            "cusum": self.cusum_cfg["h"],
            "pca": self.pca_spe_threshold,
            "coupling": self.tau,
        }
        self.z_series: dict[tuple[str, str], deque] = {}
        self.cusum_states: dict[tuple[str, str], CusumState] = {}
        # alarms latched within the open window, keyed by stream
        self.latched: dict[tuple[str, str], dict[str, DetectorVote]] = {}
        self.pca_rows: dict[str, deque] = {}

    def observe_sample(self, service_id: str, metric: str, value: float) -> None:
        """Feed one raw sample to the streaming detectors, latching alarms."""
        key = (service_id, metric)
        if "zscore" in self.enabled:
            series = self.z_series.setdefault(key, deque(maxlen=self.z_window))
            if len(series) == self.z_window:
                vote = detect_zscore(list(series), value, self.z_k)
                self._latch(key, vote)
            series.append(value)
        if "cusum" in self.enabled:
            state = self.cusum_states.setdefault(
                key,
                CusumState(
                    kappa=self.cusum_cfg["kappa"],
                    h=self.cusum_cfg["h"],
                    calibration=self.cusum_cfg["calibration"],
                ),
            )
            vote = detect_cusum(state, value)
            if vote is not None:
                self._latch(key, vote)

    def _latch(self, key: tuple[str, str], vote: DetectorVote) -> None:
        slot = self.latched.setdefault(key, {})
        prev = slot.get(vote.detector_id)
        if prev is None:
            slot[vote.detector_id] = vote
            return
        anomalous = prev.anomalous or vote.anomalous
        score = max(prev.score, vote.score)
        slot[vote.detector_id] = DetectorVote(vote.detector_id, anomalous, score)

    def on_window_close(self, aggregates: list[WindowAggregate],
                        events: list[CollaborationEvent],
                        cycle: int, tick: int) -> list[AnomalyReport]:
        """Vote groups for the closed window -> anomaly reports."""
        reports: list[AnomalyReport] = []
        n = 0

        def next_id(kind_hint: str) -> str:
            nonlocal n
            n += 1
            return f"a-{cycle:05d}-{n:02d}-{kind_hint}"

        by_service: dict[str, dict[str, WindowAggregate]] = {}
        for agg in aggregates:
            by_service.setdefault(agg.service_id, {})[agg.metric] = agg

        for agg in aggregates:
            key = (agg.service_id, agg.metric)
            votes: list[DetectorVote] = []
            if "threshold" in self.enabled:
                bounds = self.goals.get(agg.service_id, {}).get(agg.metric)
                if isinstance(bounds, dict):
                    votes.append(detect_threshold(agg, bounds))
            latched = self.latched.pop(key, {})
            for det in ("zscore", "cusum"):
                if det in self.enabled and det in latched:
                    votes.append(latched[det])
            if not votes:
                continue
            context = {
                "id": next_id(agg.metric),
                "target": agg.service_id,
                "layer": agg.layer,
                "tick": tick,
                "metric": agg.metric,
                "mean": agg.mean,
                "down_floor": self.down_floor,
            }
            report = ensemble(votes, context, self.bands, self.threshold_refs)
            if report is not None:
                reports.append(report)
        self.latched.clear()

        if "pca" in self.enabled:
            for service_id in sorted(by_service):
                metrics = by_service[service_id]
                if len(metrics) < len(METRICS):
                    continue
                row = [metrics[m].mean for m in METRICS]
                rows = self.pca_rows.setdefault(service_id, deque(maxlen=self.pca_history))
                rows.append(row)
                if len(rows) < self.pca_history or len(rows) < len(METRICS):
                    continue  # warm-up: vote withheld
                vote = detect_pca(np.array(rows), self.pca_components, self.pca_spe_threshold)
                context = {
                    "id": next_id("pca"),
                    "target": service_id,
                    "layer": "dynamic",
                    "tick": tick,
                    "metric": None,
                }
                report = ensemble([vote], context, self.bands, self.threshold_refs)
                if report is not None:
                    reports.append(report)

        if "coupling" in self.enabled and events:
            for (s1, s2), vote in sorted(org_coupling(events, self.tau).items()):
                context = {
                    "id": next_id("coupling"),
                    "target": f"{s1}|{s2}",
                    "layer": "organizational",
                    "tick": tick,
                    "metric": None,
                }
                report = ensemble([vote], context, self.bands, self.threshold_refs)
                if report is not None:
                    reports.append(report)

        return reports
