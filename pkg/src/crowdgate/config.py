"""YAML configuration loading for the CLI and the service.

See configs/desk.yaml for a commented example of every knob.
"""

from __future__ import annotations

import math
from pathlib import Path

import yaml

from .assigner import AssignmentPolicy, GoldItem
from .judgment import JudgmentPolicy
from .pipeline import PipelineConfig
from .segmenter import SegmentationPolicy
from .sim import Scenario, SimStreamModel, SimWorker, SimWorkerModel


class ConfigError(ValueError):
    """Unusable configuration file; maps to exit code 2."""


def _section(doc: dict, name: str) -> dict:
    value = doc.get(name, {})
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    return value


def load_config_doc(path: str | Path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    return doc


def pipeline_config_from_doc(doc: dict, log_path: str | None = None) -> PipelineConfig:
    try:
        return PipelineConfig(
            segmentation=SegmentationPolicy(**_section(doc, "segmentation")),
            assignment=AssignmentPolicy(**_section(doc, "assignment")),
            judgment=JudgmentPolicy(**_section(doc, "judgment")),
            log_path=log_path or doc.get("log_path", "events.log"),
            mode=doc.get("mode", "simulation"),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad pipeline configuration: {exc}") from exc


def gold_bank_from_doc(doc: dict) -> list[GoldItem]:
    out = []
    for i, entry in enumerate(doc.get("gold_bank", []) or []):
        try:
            out.append(GoldItem(**entry))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad gold_bank entry #{i}: {exc}") from exc
    return out


def scenario_from_doc(doc: dict, gold_bank: list[GoldItem]) -> Scenario:
    sc = _section(doc, "scenario")
    if not sc:
        raise ConfigError("simulation mode needs a `scenario` section")
    stream_doc = _section(sc, "stream")
    workers_doc = _section(sc, "workers")
    try:
        stream = SimStreamModel(
            video_arrival_rate=float(stream_doc.get("arrival_rate", 0.05)),
            duration_dist=stream_doc.get("duration", {"kind": "fixed", "value": 280.0}),
            unsafe_segment_rate=float(stream_doc.get("unsafe_segment_rate", 0.1)),
            locale_mix=stream_doc.get("locale_mix", {"en-US": 1.0}),
        )
        workers = _workers_from_doc(workers_doc)
        return Scenario(
            stream=stream,
            workers=workers,
            horizon=float(sc.get("horizon", 3600.0)),
            max_videos=int(sc.get("max_videos", 100)),
            gold_bank=gold_bank,
            locale_penalty=float(sc.get("locale_penalty", 0.0)),
            stress_mode=bool(sc.get("stress_mode", False)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"bad scenario: {exc}") from exc


def _workers_from_doc(workers_doc: dict) -> list[SimWorker]:
    explicit = workers_doc.get("roster")
    if explicit:
        out = []
        for i, row in enumerate(explicit):
            try:
                model = SimWorkerModel(
                    true_accuracy=float(row.get("accuracy", 0.8)),
                    yes_bias=float(row.get("yes_bias", 0.0)),
                    latency_mu_log=float(row.get("latency_mu_log", math.log(30.0))),
                    latency_sigma_log=float(row.get("latency_sigma_log", 0.8)),
                    availability=float(row.get("availability", 1.0)),
                )
                out.append(
                    SimWorker(
                        worker_id=row["worker_id"],
                        identity_class=row.get("identity_class", "signed"),
                        locale=row.get("locale", "en-US"),
                        model=model,
                    )
                )
            except (TypeError, ValueError, KeyError) as exc:
                raise ConfigError(f"bad roster entry #{i}: {exc}") from exc
        return out
    # Generated roster: seeded separately by the caller through sim.preset-style
    # helpers; the config file path only supports explicit rosters plus counts.
    from .sim import _mixed_workers
    import random

    count = int(workers_doc.get("count", 50))
    rng = random.Random(int(workers_doc.get("roster_seed", 0)))
    return _mixed_workers(
        count,
        rng,
        signed_fraction=float(workers_doc.get("signed_fraction", 0.7)),
        accuracy_mean=float(workers_doc.get("accuracy_mean", 0.8)),
        accuracy_sd=float(workers_doc.get("accuracy_sd", 0.05)),
        yes_bias_fraction=float(workers_doc.get("yes_bias_fraction", 0.0)),
        availability=float(workers_doc.get("availability", 0.95)),
        latency_mu_log=float(workers_doc.get("latency_mu_log", math.log(30.0))),
        latency_sigma_log=float(workers_doc.get("latency_sigma_log", 0.8)),
        locales=workers_doc.get("locale_mix"),
    )


def service_options_from_doc(doc: dict) -> dict:
    svc = _section(doc, "service")
    return {
        "host": svc.get("host", "127.0.0.1"),
        "port": int(svc.get("port", 8080)),
        "tick_interval": float(svc.get("tick_interval", 0.25)),
    }
