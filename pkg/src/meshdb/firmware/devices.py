"""Declarative device descriptors: the hardware capability database.

A descriptor enumerates everything the transformation pipeline must know
about a hardware model: CPU architecture, radios with their protocols and
features, Ethernet switches with VLAN tables, ports under stable names like
``lan0``/``wan0``, and bundled antennas.  Descriptors may subclass another
model; child fields override parent fields and list-valued fields replace
wholesale, which keeps close hardware revisions cheap to describe.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

TOP_FIELDS = (
    "display_name",
    "manufacturer",
    "url",
    "architecture",
    "radios",
    "switches",
    "ethernet_ports",
    "antennas",
)


class DeviceError(Exception):
    code = "device-error"


class DuplicateModelError(DeviceError):
    code = "duplicate-model-id"


class UnknownModelError(DeviceError):
    code = "unknown-model"


class UnresolvedReferenceError(DeviceError):
    code = "unresolved-reference"


class CyclicInheritanceError(DeviceError):
    code = "cyclic-inheritance"


@dataclass(frozen=True)
class Radio:
    id: str
    name: str
    protocols: tuple[str, ...]
    features: tuple[str, ...] = ()
    antenna_connectors: tuple[str, ...] = ()


@dataclass(frozen=True)
class SwitchVlan:
    vlan_tag: int
    member_ports: tuple[int, ...]


@dataclass(frozen=True)
class Switch:
    id: str
    cpu_port: int
    vlans: tuple[SwitchVlan, ...]


@dataclass(frozen=True)
class EthernetPort:
    id: str
    switch: Optional[str] = None
    vlan_tag: Optional[int] = None


@dataclass(frozen=True)
class Antenna:
    id: str
    connector: str
    gain_dbi: float
    polarization: str


@dataclass(frozen=True)
class DeviceDescriptor:
    model_id: str
    display_name: str
    manufacturer: str
    url: str
    architecture: str
    radios: tuple[Radio, ...]
    switches: tuple[Switch, ...]
    ethernet_ports: tuple[EthernetPort, ...]
    antennas: tuple[Antenna, ...]

    def radio(self, radio_id: str) -> Optional[Radio]:
        return next((r for r in self.radios if r.id == radio_id), None)

    def port(self, port_id: str) -> Optional[EthernetPort]:
        return next((p for p in self.ethernet_ports if p.id == port_id), None)

    def switch(self, switch_id: str) -> Optional[Switch]:
        return next((s for s in self.switches if s.id == switch_id), None)

    def has_capability(self, capability: str) -> bool:
        """True when any radio supports the protocol or feature."""
        return any(
            capability in r.protocols or capability in r.features for r in self.radios
        )


def _build(model_id: str, raw: dict) -> DeviceDescriptor:
    return DeviceDescriptor(
        model_id=model_id,
        display_name=raw.get("display_name", model_id),
        manufacturer=raw.get("manufacturer", ""),
        url=raw.get("url", ""),
        architecture=raw.get("architecture", ""),
        radios=tuple(
            Radio(
                id=r["id"],
                name=r.get("name", r["id"]),
                protocols=tuple(r.get("protocols", ())),
                features=tuple(r.get("features", ())),
                antenna_connectors=tuple(r.get("antenna_connectors", ())),
            )
            for r in raw.get("radios", ())
        ),
        switches=tuple(
            Switch(
                id=s["id"],
                cpu_port=s["cpu_port"],
                vlans=tuple(
                    SwitchVlan(v["vlan_tag"], tuple(v["member_ports"]))
                    for v in s.get("vlans", ())
                ),
            )
            for s in raw.get("switches", ())
        ),
        ethernet_ports=tuple(
            EthernetPort(
                id=p["id"], switch=p.get("switch"), vlan_tag=p.get("vlan_tag")
            )
            for p in raw.get("ethernet_ports", ())
        ),
        antennas=tuple(
            Antenna(
                id=a["id"],
                connector=a["connector"],
                gain_dbi=a.get("gain_dbi", 0.0),
                polarization=a.get("polarization", "linear"),
            )
            for a in raw.get("antennas", ())
        ),
    )


class DeviceRegistry:
    """Raw descriptor records plus inheritance resolution and validation."""

    def __init__(self) -> None:
        self._raw: dict[str, dict] = {}
        self._parents: dict[str, Optional[str]] = {}

    def register(self, record: dict) -> str:
        """Register one descriptor record (the JSON file shape)."""
        model_id = record.get("model_id")
        if not model_id:
            raise DeviceError("descriptor needs a model_id")
        if model_id in self._raw:
            raise DuplicateModelError(f"model {model_id!r} already registered")
        parent = record.get("parent")
        if parent is not None:
            if parent == model_id:
                raise CyclicInheritanceError(f"model {model_id!r} cannot parent itself")
            if parent not in self._raw:
                raise UnknownModelError(f"parent model {parent!r} not registered")
            seen = {model_id}
            cur = parent
            while cur is not None:
                if cur in seen:
                    raise CyclicInheritanceError(f"inheritance cycle through {cur!r}")
                seen.add(cur)
                cur = self._parents[cur]
        raw = {k: record[k] for k in TOP_FIELDS if k in record}
        self._raw[model_id] = raw
        self._parents[model_id] = parent
        descriptor = self._materialize(model_id)
        self._validate(descriptor)
        return model_id

    def _merged(self, model_id: str) -> dict:
        chain = []
        cur: Optional[str] = model_id
        while cur is not None:
            chain.append(cur)
            cur = self._parents[cur]
        merged: dict = {}
        for ancestor in reversed(chain):  # child overrides, lists wholesale
            merged.update(self._raw[ancestor])
        return merged

    def _materialize(self, model_id: str) -> DeviceDescriptor:
        if model_id not in self._raw:
            raise UnknownModelError(f"no model {model_id!r}")
        return _build(model_id, self._merged(model_id))

    def _validate(self, d: DeviceDescriptor) -> None:
        if not d.architecture:
            raise UnresolvedReferenceError(f"{d.model_id}: architecture missing")
        for group, ids in (
            ("radio", [r.id for r in d.radios]),
            ("switch", [s.id for s in d.switches]),
            ("port", [p.id for p in d.ethernet_ports]),
        ):
            if len(ids) != len(set(ids)):
                raise UnresolvedReferenceError(f"{d.model_id}: duplicate {group} id")
        for switch in d.switches:
            for vlan in switch.vlans:
                if vlan.member_ports.count(switch.cpu_port) != 1:
                    raise UnresolvedReferenceError(
                        f"{d.model_id}: switch {switch.id!r} VLAN {vlan.vlan_tag} must "
                        f"contain the CPU port exactly once"
                    )
        switch_ids = {s.id for s in d.switches}
        for port in d.ethernet_ports:
            if port.switch is not None and port.switch not in switch_ids:
                raise UnresolvedReferenceError(
                    f"{d.model_id}: port {port.id!r} references unknown switch {port.switch!r}"
                )
        connectors = {c for r in d.radios for c in r.antenna_connectors}
        for antenna in d.antennas:
            if antenna.connector not in connectors:
                raise UnresolvedReferenceError(
                    f"{d.model_id}: antenna {antenna.id!r} connector "
                    f"{antenna.connector!r} not on any radio"
                )

    def resolve(self, model_id: str) -> DeviceDescriptor:
        return self._materialize(model_id)

    def models(self) -> list[str]:
        return sorted(self._raw)

    def load_directory(self, path: str) -> list[str]:
        """Register every ``*.json`` descriptor; parents may come in any order."""
        records = []
        for name in sorted(os.listdir(path)):
            if not name.endswith(".json"):
                continue
            with open(os.path.join(path, name), encoding="utf-8") as fh:
                records.append(json.load(fh))
        return self.register_all(records)

    def register_all(self, records: list[dict]) -> list[str]:
        pending = list(records)
        registered: list[str] = []
        while pending:
            progressed = False
            rest = []
            for record in pending:
                parent = record.get("parent")
                if parent is None or parent in self._raw:
                    registered.append(self.register(record))
                    progressed = True
                else:
                    rest.append(record)
            if not progressed:
                missing = sorted({r.get("parent") for r in rest})
                raise UnknownModelError(f"unresolvable parents: {missing}")
            pending = rest
        return registered
