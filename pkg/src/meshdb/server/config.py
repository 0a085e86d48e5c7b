"""Service configuration: JSON file, MESH_* environment overrides, strict keys."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

ENV_PREFIX = "MESH_"

DEFAULT_PROCESSORS = [
    "load-nodes",
    "telemetry-collect",
    "telemetry-parse",
    "monitoring-commit",
    "compliance-validate",
    "datastream-sampler",
    "online-count",
    "topology-ingest",
    "downsample",
]


class ConfigError(Exception):
    code = "config-invalid"


@dataclass
class PoolDef:
    id: str
    prefix: str
    holddown_s: float = 30 * 86400


@dataclass
class PipelineDef:
    name: str
    interval_s: int = 60
    processors: list[str] = field(default_factory=lambda: list(DEFAULT_PROCESSORS))


@dataclass
class SimNodeProfile:
    """Behavior of the simulated agent fleet standing in for real devices."""

    count: int = 0
    modules: list[str] = field(
        default_factory=lambda: ["core.general", "core.resources", "core.traffic"]
    )
    wrap_width_bits: int = 32
    reboot_probability: float = 0.0
    push_fraction: float = 0.5
    report_interval_s: int = 10
    seed: int = 1

    def __post_init__(self):
        if self.count < 0:
            raise ConfigError("fleet count must be >= 0")
        if not 0.0 <= self.reboot_probability <= 1.0:
            raise ConfigError("reboot_probability must be in [0, 1]")
        if not 0.0 <= self.push_fraction <= 1.0:
            raise ConfigError("push_fraction must be in [0, 1]")
        if self.wrap_width_bits < 1:
            raise ConfigError("wrap_width_bits must be >= 1")

    @property
    def counter_max_value(self) -> int:
        return 2**self.wrap_width_bits - 1


@dataclass
class ServiceConfig:
    listen: str = "127.0.0.1:8000"
    data_dir: Optional[str] = None
    devices_dir: Optional[str] = None
    ui_dir: Optional[str] = None  # built web UI to serve at /
    pools: list[PoolDef] = field(default_factory=list)
    pipelines: list[PipelineDef] = field(
        default_factory=lambda: [PipelineDef("monitoring", 60)]
    )
    fleet: Optional[SimNodeProfile] = None
    tokens: dict[str, str] = field(default_factory=dict)
    rules: Optional[list[dict]] = None  # None selects the bundled defaults

    @property
    def listen_host(self) -> str:
        return self.listen.rsplit(":", 1)[0]

    @property
    def listen_port(self) -> int:
        return int(self.listen.rsplit(":", 1)[1])


_KNOWN_KEYS = {
    "listen",
    "data_dir",
    "devices_dir",
    "ui_dir",
    "pools",
    "pipelines",
    "fleet",
    "tokens",
    "rules",
}


def _reject_unknown(data: dict, known: set, where: str) -> None:
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


def load_config(
    path: Optional[str] = None,
    overrides: Optional[dict] = None,
    env: Optional[dict] = None,
) -> ServiceConfig:
    """File -> environment (MESH_LISTEN, MESH_DATA_DIR) -> explicit overrides."""
    data: dict = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except ValueError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from None
    env = env if env is not None else dict(os.environ)
    for key in ("listen", "data_dir", "devices_dir", "ui_dir"):
        env_key = ENV_PREFIX + key.upper()
        if env_key in env:
            data[key] = env[env_key]
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    return parse_config(data)


def parse_config(data: dict) -> ServiceConfig:
    _reject_unknown(data, _KNOWN_KEYS, "config")
    pools = []
    for rec in data.get("pools", []):
        _reject_unknown(rec, {"id", "prefix", "holddown_s"}, "pool")
        pools.append(PoolDef(rec["id"], rec["prefix"], rec.get("holddown_s", 30 * 86400)))
    pipelines = []
    for rec in data.get("pipelines", []):
        _reject_unknown(rec, {"name", "interval_s", "processors"}, "pipeline")
        pipelines.append(
            PipelineDef(
                rec["name"],
                rec.get("interval_s", 60),
                list(rec.get("processors", DEFAULT_PROCESSORS)),
            )
        )
    fleet = None
    if data.get("fleet") is not None:
        rec = data["fleet"]
        _reject_unknown(
            rec,
            {
                "count",
                "modules",
                "wrap_width_bits",
                "reboot_probability",
                "push_fraction",
                "report_interval_s",
                "seed",
            },
            "fleet",
        )
        fleet = SimNodeProfile(**rec)
    config = ServiceConfig(
        listen=data.get("listen", "127.0.0.1:8000"),
        data_dir=data.get("data_dir"),
        devices_dir=data.get("devices_dir"),
        ui_dir=data.get("ui_dir"),
        pools=pools,
        pipelines=pipelines or [PipelineDef("monitoring", 60)],
        fleet=fleet,
        tokens=dict(data.get("tokens", {})),
        rules=data.get("rules"),
    )
    try:
        config.listen_port
    except (ValueError, IndexError):
        raise ConfigError(f"listen must be host:port, got {config.listen!r}") from None
    return config
