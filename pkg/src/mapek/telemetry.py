"""Monitor stage: ingest layer-tagged sensor data, filter, window, aggregate.

Samples are buffered per (service, metric) stream into tumbling half-open
windows [start, start+window_len). A window is immutable once its end tick
has passed; closing it runs the configured filter chain and produces one
WindowAggregate per non-empty stream. Buffers are bounded at
buffer_factor * window_len samples per stream - beyond that the oldest
sample is dropped and counted, so a flood can slow analysis but not sink it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .config import LAYERS, METRICS
from .errors import ConfigError

# validation ranges per metric: (min, max); None = unbounded
_RANGES = {
    "latency_ms": (0.0, None),
    "error_rate": (0.0, 1.0),
    "cpu_pct": (0.0, 100.0),
    "mem_mb": (0.0, None),
    "cert_days_remaining": (None, None),
}


@dataclass(frozen=True)
class MetricSample:
    service_id: str
    metric: str
    layer: str
    value: float
    tick: int


@dataclass(frozen=True)
class CollaborationEvent:
    contributor_id: str
    service_id: str
    tick: int


@dataclass(frozen=True)
class WindowAggregate:
    service_id: str
    metric: str
    layer: str
    start_tick: int
    end_tick: int
    count: int
    mean: float
    min: float
    max: float
    stddev: float

    def to_payload(self) -> dict:
        return {
            "service_id": self.service_id,
            "metric": self.metric,
            "layer": self.layer,
            "window": [self.start_tick, self.end_tick],
            "count": self.count,
            "mean": self.mean,
            "min": self.min,
            "max": self.max,
            "stddev": self.stddev,
        }


def _mean(values: list[float]) -> float:
    return sum(values) / len(values)


def _pstddev(values: list[float]) -> float:
    m = _mean(values)
    return math.sqrt(sum((v - m) ** 2 for v in values) / len(values))


def aggregate(samples: list[MetricSample], start_tick: int, end_tick: int) -> WindowAggregate | None:
    """Aggregate of the samples with start_tick <= tick < end_tick.

    Population stddev. Returns None for an empty window (sensor gap).
    """
    inside = [s for s in samples if start_tick <= s.tick < end_tick]
    if not inside:
        return None
    values = [s.value for s in inside]
    return WindowAggregate(
        service_id=inside[0].service_id,
        metric=inside[0].metric,
        layer=inside[0].layer,
        start_tick=start_tick,
        end_tick=end_tick,
        count=len(values),
        mean=_mean(values),
        min=min(values),
        max=max(values),
        stddev=_pstddev(values),
    )


def apply_filter(samples: list[MetricSample], rule: dict) -> list[MetricSample]:
    """One filter pass: dedup | clamp_outlier(k) | downsample(n)."""
    kind = rule["rule"]
    if kind == "dedup":
        out: list[MetricSample] = []
        for s in samples:
            if out and out[-1].tick == s.tick and out[-1].value == s.value:
                continue
            out.append(s)
        return out
    if kind == "downsample":
        n = rule["n"]
        return samples[::n]
    if kind == "clamp_outlier":
        if len(samples) < 2:
            return list(samples)
        k = rule["k"]
        values = [s.value for s in samples]
        m, sd = _mean(values), _pstddev(values)
        out = []
        for s in samples:
            if abs(s.value - m) > k * sd:
                bound = m + k * sd if s.value > m else m - k * sd
                s = MetricSample(s.service_id, s.metric, s.layer, bound, s.tick)
            out.append(s)
        return out
    raise ConfigError(f"unknown filter rule {kind!r}")


class Monitor:
    """Per-stream windowed buffering with validation and drop accounting."""

    def __init__(self, window_len: int, known_services: set[str] | None,
                 filters: list[dict] | None = None, buffer_factor: int = 10):
        self.window_len = window_len
        # None: accept any service (offline trace ingestion)
        self.known_services = set(known_services) if known_services is not None else None
        self.filters = list(filters or [])
        self.max_buffer = buffer_factor * window_len
        self.buffers: dict[tuple[str, str], dict[int, list[MetricSample]]] = {}
        self.collab: dict[int, list[CollaborationEvent]] = {}
        self.drops: dict[str, int] = {}
        self.sensor_gaps: list[tuple[str, str, int]] = []

    def _drop(self, reason: str) -> None:
        self.drops[reason] = self.drops.get(reason, 0) + 1

    def ingest(self, samples: list[MetricSample | CollaborationEvent]) -> int:
        """Buffer valid samples, tally drops by reason, return accepted count."""
        accepted = 0
        for s in samples:
            if isinstance(s, CollaborationEvent):
                if not s.contributor_id or not s.service_id:
                    self._drop("invalid_event")
                    continue
                self.collab.setdefault(s.tick // self.window_len, []).append(s)
                accepted += 1
                continue
            if not self._valid(s):
                continue
            key = (s.service_id, s.metric)
            windows = self.buffers.setdefault(key, {})
            windows.setdefault(s.tick // self.window_len, []).append(s)
            if sum(len(w) for w in windows.values()) > self.max_buffer:
                oldest = min(windows)
                windows[oldest].pop(0)
                if not windows[oldest]:
                    del windows[oldest]
                self._drop("buffer_overflow")
            accepted += 1
        return accepted

    def _valid(self, s: MetricSample) -> bool:
        if self.known_services is not None and s.service_id not in self.known_services:
            self._drop("unknown_service")
            return False
        if s.metric not in METRICS:
            self._drop("unknown_metric")
            return False
        if s.layer not in LAYERS:
            self._drop("unknown_layer")
            return False
        if s.tick < 0:
            self._drop("range")
            return False
        lo, hi = _RANGES[s.metric]
        if (lo is not None and s.value < lo) or (hi is not None and s.value > hi):
            self._drop("range")
            return False
        return True

    def close_window(self, start_tick: int) -> tuple[list[WindowAggregate], list[CollaborationEvent]]:
        """Filter + aggregate every stream for window [start, start+len).

        Streams with no samples in the window record a sensor gap instead of
        emitting an aggregate.
        """
        end_tick = start_tick + self.window_len
        index = start_tick // self.window_len
        aggregates: list[WindowAggregate] = []
        for key in sorted(self.buffers):
            samples = self.buffers[key].pop(index, [])
            for rule in self.filters:
                samples = apply_filter(samples, rule)
            agg = aggregate(samples, start_tick, end_tick)
            if agg is None:
                self.sensor_gaps.append((key[0], key[1], start_tick))
                continue
            aggregates.append(agg)
        events = self.collab.pop(index, [])
        return aggregates, events
