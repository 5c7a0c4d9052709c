"""Configuration loading and validation.

The config file is YAML with sections kb, monitor, analyze, goals, plan,
execute, sim, gateway. User values are deep-merged over the defaults below;
every tunable the stages consult lives here so a run is fully described by
(config, scenario, seed). Validation happens once at startup: a bad filter
parameter, a missing risk-subtype weight or an ill-ordered goal bound is a
ConfigError before the first tick, never a mid-loop surprise.
"""

from __future__ import annotations

import copy
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError

METRICS = ("latency_ms", "error_rate", "cpu_pct", "mem_mb", "cert_days_remaining")
LAYERS = ("static", "dynamic", "organizational")

HR_SUBTYPES = ("cert_mgmt", "sys_upgrade", "key_dist")

DEFAULTS: dict[str, Any] = {
    "kb": {
        "journal_path": "journal.ndjson",
        "digest_algo": "sha256",
    },
    "monitor": {
        "window_len": 20,
        "buffer_factor": 10,
        "filters": [],
    },
    "analyze": {
        "enabled": ["threshold", "zscore", "cusum", "pca", "coupling"],
        "zscore": {"window": 60, "k": 3.0},
        "cusum": {"kappa": 0.5, "h": 5.0, "calibration": 30},
        "pca": {"components": 2, "spe_threshold": 100.0, "history": 20},
        "coupling": {"tau": 0.5},
        "severity_bands": {"low": 2.0, "medium": 5.0},
        "service_down_error_rate": 0.95,
    },
    "goals": {
        "priorities": ["error_rate", "mem_mb", "latency_ms", "cert_days_remaining", "cpu_pct"],
    },
    "plan": {
        "alpha": 1.0,
        "risk_penalty": 0.5,
        "weights": {"cert_mgmt": 1.0, "sys_upgrade": 1.0, "key_dist": 1.0},
        "templates": {},   # overlaid on planner built-ins, see planner.DEFAULT_TEMPLATES
        "impact": {},      # template-key -> list of per-candidate impacts
    },
    "execute": {
        "approval_ttl": 50,
        "loop_guard": {"L": 3, "N": 10},
    },
    "sim": {
        "seed": 0,
        "noise_amplitude": 0.0,
        "propagation_coeff": 0.5,
        "down_error_floor": 0.9,
        "upgrade_downtime": 3,
    },
    "gateway": {
        "host": "127.0.0.1",
        "port": 8700,
        "poll_interval_s": 1.0,
    },
}


def _deep_merge(base: dict, overlay: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> dict:
    """Load, merge and validate a config. No path means pure defaults."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            user = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {p} is not valid YAML: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"config file {p} must be a mapping at top level")
        cfg = _deep_merge(cfg, user)
    if overrides:
        cfg = _deep_merge(cfg, overrides)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    mon = cfg["monitor"]
    if not isinstance(mon["window_len"], int) or mon["window_len"] < 1:
        raise ConfigError("monitor.window_len must be an integer >= 1")
    if mon["buffer_factor"] < 1:
        raise ConfigError("monitor.buffer_factor must be >= 1")
    for i, rule in enumerate(mon["filters"]):
        _validate_filter_rule(rule, f"monitor.filters[{i}]")

    az = cfg["analyze"]
    zs = az["zscore"]
    if zs["window"] < 2:
        raise ConfigError("analyze.zscore.window must be >= 2")
    if zs["k"] <= 0:
        raise ConfigError("analyze.zscore.k must be > 0")
    cu = az["cusum"]
    if cu["kappa"] < 0:
        raise ConfigError("analyze.cusum.kappa must be >= 0")
    if cu["h"] <= 0:
        raise ConfigError("analyze.cusum.h must be > 0")
    if cu["calibration"] < 2:
        raise ConfigError("analyze.cusum.calibration must be >= 2")
    pca = az["pca"]
    if not 1 <= pca["components"] <= len(METRICS):
        raise ConfigError(f"analyze.pca.components must be in [1, {len(METRICS)}]")
    if pca["history"] < 2:
        raise ConfigError("analyze.pca.history must be >= 2")
    if pca["spe_threshold"] <= 0:
        raise ConfigError("analyze.pca.spe_threshold must be > 0")
    tau = az["coupling"]["tau"]
    if not 0 < tau <= 1:
        raise ConfigError("analyze.coupling.tau must be in (0, 1]")

    goals = cfg["goals"]
    for service, bounds_per_metric in goals.items():
        if service == "priorities":
            continue
        if not isinstance(bounds_per_metric, dict):
            raise ConfigError(f"goals.{service} must map metrics to bounds")
        for metric, bounds in bounds_per_metric.items():
            if metric not in METRICS:
                raise ConfigError(f"goals.{service}.{metric}: unknown metric")
            lo, hi = bounds.get("min"), bounds.get("max")
            if lo is None and hi is None:
                raise ConfigError(f"goals.{service}.{metric}: need min and/or max")
            if lo is not None and hi is not None and lo > hi:
                raise ConfigError(f"goals.{service}.{metric}: min > max")

    plan = cfg["plan"]
    if plan["alpha"] < 0:
        raise ConfigError("plan.alpha must be >= 0")
    for subtype in HR_SUBTYPES:
        w = plan["weights"].get(subtype)
        if w is None:
            raise ConfigError(f"plan.weights.{subtype} is required")
        if w <= 0:
            raise ConfigError(f"plan.weights.{subtype} must be > 0")

    ex = cfg["execute"]
    if ex["approval_ttl"] < 1:
        raise ConfigError("execute.approval_ttl must be >= 1")
    guard = ex["loop_guard"]
    if guard["L"] < 2:
        raise ConfigError("execute.loop_guard.L must be >= 2")
    if guard["N"] < guard["L"]:
        raise ConfigError("execute.loop_guard.N must be >= L")

    if cfg["sim"]["noise_amplitude"] < 0:
        raise ConfigError("sim.noise_amplitude must be >= 0")


def _validate_filter_rule(rule: dict, where: str) -> None:
    kind = rule.get("rule")
    if kind == "dedup":
        return
    if kind == "clamp_outlier":
        if rule.get("k", 0) <= 0:
            raise ConfigError(f"{where}: clamp_outlier needs k > 0")
        return
    if kind == "downsample":
        n = rule.get("n", 0)
        if not isinstance(n, int) or n < 1:
            raise ConfigError(f"{where}: downsample needs integer n >= 1")
        return
    raise ConfigError(f"{where}: unknown filter rule {kind!r}")


def goal_bounds(cfg: dict, service: str, metric: str) -> dict | None:
    """Bounds dict {min?, max?} for (service, metric), or None if unset."""
    per_service = cfg["goals"].get(service)
    if not isinstance(per_service, dict):
        return None
    return per_service.get(metric)
