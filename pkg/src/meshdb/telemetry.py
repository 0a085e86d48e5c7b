"""Agent telemetry: document format, push/pull ingestion, versioned dispatch.

Agents compile their state into one JSON document whose top level maps module
identifiers to bodies; every body carries a ``_meta.version`` so module
schemas can evolve independently.  The backend either pulls the document from
a node or nodes push it in; both transports stage the very same parsed
document, keyed by node, for the next monitoring run.  Dispatch routes each
module body to the parser registered for its version range, and a version
nobody claims degrades to a warning instead of poisoning the document.
"""

from __future__ import annotations

import hmac
import json
import threading
from dataclasses import dataclass
from typing import Callable, Optional
from urllib.parse import urlsplit

GENERAL_MODULE = "core.general"


class TelemetryError(Exception):
    code = "telemetry-error"


class MalformedJsonError(TelemetryError):
    code = "malformed-json"


class MissingMetaError(TelemetryError):
    code = "missing-meta"

    def __init__(self, module: str):
        super().__init__(f"module {module!r} carries no _meta.version")
        self.module = module


class MissingUuidError(TelemetryError):
    code = "missing-uuid"


class UuidMismatchError(TelemetryError):
    code = "uuid-mismatch"


class AuthFailureError(TelemetryError):
    code = "auth-failure"


class NodeUnreachableError(TelemetryError):
    code = "node-unreachable"


class ParserOverlapError(TelemetryError):
    code = "parser-overlap"


@dataclass(frozen=True)
class ModuleBody:
    version: int
    body: dict


@dataclass(frozen=True)
class TelemetryDocument:
    modules: dict[str, ModuleBody]

    @property
    def uuid(self) -> str:
        return self.modules[GENERAL_MODULE].body["uuid"]

    def to_wire(self) -> dict:
        return {
            module_id: {"_meta": {"version": mb.version}, **mb.body}
            for module_id, mb in self.modules.items()
        }


def parse_document(raw: bytes | str) -> TelemetryDocument:
    """Structural validation of one agent status document."""
    try:
        data = json.loads(raw)
    except (ValueError, UnicodeDecodeError) as exc:
        raise MalformedJsonError(str(exc)) from None
    if not isinstance(data, dict):
        raise MalformedJsonError("document top level must be an object")
    modules: dict[str, ModuleBody] = {}
    for module_id, entry in data.items():
        if not isinstance(entry, dict) or "_meta" not in entry or "version" not in entry["_meta"]:
            raise MissingMetaError(module_id)
        body = {k: v for k, v in entry.items() if k != "_meta"}
        modules[module_id] = ModuleBody(int(entry["_meta"]["version"]), body)
    general = modules.get(GENERAL_MODULE)
    if general is None or not general.body.get("uuid"):
        raise MissingUuidError("document carries no core.general uuid")
    return TelemetryDocument(modules)


@dataclass(frozen=True)
class StagedItem:
    """One monitoring registry write produced by a module parser."""

    registry_id: str
    item: str
    values: dict

    def to_dict(self) -> dict:
        return {"registry_id": self.registry_id, "item": self.item, "values": self.values}


@dataclass(frozen=True)
class ModuleParser:
    module_id: str
    version_min: int
    version_max: int
    parse: Callable[[dict], list[StagedItem]]


class ParserRegistry:
    """Versioned parsers; ranges for one module id may not overlap."""

    def __init__(self) -> None:
        self._parsers: dict[str, list[ModuleParser]] = {}

    def register(
        self,
        module_id: str,
        version_min: int,
        version_max: int,
        parse: Callable[[dict], list[StagedItem]],
    ) -> None:
        if version_min > version_max:
            raise TelemetryError("empty version range")
        for existing in self._parsers.get(module_id, ()):  # overlap check
            if version_min <= existing.version_max and existing.version_min <= version_max:
                raise ParserOverlapError(
                    f"{module_id}: [{version_min},{version_max}] overlaps "
                    f"[{existing.version_min},{existing.version_max}]"
                )
        self._parsers.setdefault(module_id, []).append(
            ModuleParser(module_id, version_min, version_max, parse)
        )

    def dispatch(self, doc: TelemetryDocument) -> tuple[list[StagedItem], list[dict]]:
        """Route each module body to the parser covering its version.

        Unparseable modules degrade to warnings; the k parseable ones still
        produce their writes.
        """
        items: list[StagedItem] = []
        warnings: list[dict] = []
        for module_id, mb in doc.modules.items():
            parser = next(
                (
                    p
                    for p in self._parsers.get(module_id, ())
                    if p.version_min <= mb.version <= p.version_max
                ),
                None,
            )
            if parser is None:
                reason = "unmatched-version" if module_id in self._parsers else "unknown-module"
                warnings.append(
                    {"module": module_id, "version": mb.version, "warning": reason}
                )
                continue
            try:
                items.extend(parser.parse(mb.body))
            except Exception as exc:  # parser bugs must not poison the document
                warnings.append(
                    {"module": module_id, "version": mb.version, "warning": str(exc)}
                )
        return items, warnings


@dataclass
class NodeSource:
    node_uuid: str
    mode: str = "push"  # "push" | "pull"
    pull_url: Optional[str] = None
    interval_s: int = 10
    auth_token: str = ""

    def __post_init__(self):
        if self.mode not in ("push", "pull"):
            raise TelemetryError(f"unknown source mode {self.mode!r}")
        if self.mode == "pull" and not self.pull_url:
            raise TelemetryError("pull sources need a pull_url")


@dataclass
class StagedDocument:
    document: TelemetryDocument
    received_at: float
    transport: str


class TelemetryStore:
    """Last-known-good staged document per node, plus the event log."""

    def __init__(self, max_events: int = 10_000):
        self._staged: dict[str, StagedDocument] = {}
        self._events: list[dict] = []
        self._quarantine: dict[str, StagedDocument] = {}
        self._max_events = max_events
        self._lock = threading.Lock()

    def stage(self, node_uuid: str, doc: TelemetryDocument, transport: str, now: float) -> None:
        with self._lock:
            self._staged[node_uuid] = StagedDocument(doc, now, transport)

    def staged(self, node_uuid: str) -> Optional[StagedDocument]:
        return self._staged.get(node_uuid)

    def staged_nodes(self) -> list[str]:
        return sorted(self._staged)

    def quarantine(self, node_uuid: str, doc: TelemetryDocument, now: float) -> None:
        with self._lock:
            self._quarantine[node_uuid] = StagedDocument(doc, now, "push")

    def quarantined(self) -> list[str]:
        return sorted(self._quarantine)

    def record_event(self, kind: str, node_uuid: str, now: float, detail: str = "") -> None:
        with self._lock:
            self._events.append(
                {"type": kind, "node": node_uuid, "ts": now, "detail": detail}
            )
            if len(self._events) > self._max_events:
                del self._events[: -self._max_events]

    def events(self, kind: Optional[str] = None) -> list[dict]:
        with self._lock:
            return [e for e in self._events if kind is None or e["type"] == kind]


Fetcher = Callable[[str, float], bytes]


class TelemetryService:
    """Pull collection plus push ingestion over one shared staging store."""

    def __init__(
        self,
        parsers: ParserRegistry,
        store: Optional[TelemetryStore] = None,
        tokens: Optional[dict[str, str]] = None,
        clock: Optional[Callable[[], float]] = None,
        timeout_s: float = 5.0,
    ):
        import time

        self.parsers = parsers
        self.store = store or TelemetryStore()
        self.tokens = tokens if tokens is not None else {}
        self.clock = clock or time.time
        self.timeout_s = timeout_s
        self._fetchers: dict[str, Fetcher] = {"http": self._http_fetch, "https": self._http_fetch}

    def register_fetcher(self, scheme: str, fetcher: Fetcher) -> None:
        self._fetchers[scheme] = fetcher

    @staticmethod
    def _http_fetch(url: str, timeout: float) -> bytes:
        import httpx

        response = httpx.get(url, timeout=timeout)
        response.raise_for_status()
        return response.content

    # -- operations ---------------------------------------------------------

    def pull(self, source: NodeSource) -> TelemetryDocument:
        """Fetch, verify identity and stage one pull-mode node's document."""
        if source.mode != "pull":
            raise TelemetryError(f"source for {source.node_uuid} is not pull-mode")
        scheme = urlsplit(source.pull_url).scheme
        fetcher = self._fetchers.get(scheme)
        if fetcher is None:
            raise TelemetryError(f"no transport for scheme {scheme!r}")
        now = self.clock()
        try:
            raw = fetcher(source.pull_url, self.timeout_s)
        except Exception as exc:
            self.store.record_event("node-unreachable", source.node_uuid, now, str(exc))
            raise NodeUnreachableError(str(exc)) from None
        doc = parse_document(raw)
        if doc.uuid != source.node_uuid:
            self.store.record_event(
                "uuid-mismatch", source.node_uuid, now, f"document claims {doc.uuid}"
            )
            raise UuidMismatchError(
                f"document for {source.node_uuid} claims uuid {doc.uuid}"
            )
        self.store.stage(source.node_uuid, doc, "pull", now)
        return doc

    def ingest_push(self, raw: bytes | str, token: Optional[str]) -> dict:
        """Authenticate and stage one pushed document; mixed mode is fine."""
        doc = parse_document(raw)
        node_uuid = doc.uuid
        now = self.clock()
        expected = self.tokens.get(node_uuid)
        if expected is None:
            # unknown node: hold the document for later claim instead of losing it
            self.store.quarantine(node_uuid, doc, now)
            self.store.record_event("quarantined-push", node_uuid, now)
            return {"status": "quarantined", "node": node_uuid}
        if token is None or not hmac.compare_digest(expected, token):
            self.store.record_event("auth-failure", node_uuid, now)
            raise AuthFailureError(f"bad token for node {node_uuid}")
        self.store.stage(node_uuid, doc, "push", now)
        return {"status": "accepted", "node": node_uuid}

    def dispatch_staged(self, node_uuid: str) -> tuple[list[StagedItem], list[dict]]:
        staged = self.store.staged(node_uuid)
        if staged is None:
            return [], []
        return self.parsers.dispatch(staged.document)


# -- stock parsers --------------------------------------------------------------


def _parse_general(body: dict) -> list[StagedItem]:
    values = {"uuid": body.get("uuid"), "hostname": body.get("hostname")}
    if "uptime" in body:
        values["uptime_s"] = body["uptime"]
    return [StagedItem("core.general", "GeneralMonitor", values)]


def _parse_resources(body: dict) -> list[StagedItem]:
    memory = body.get("memory", {})
    return [
        StagedItem(
            "core.resources",
            "ResourcesMonitor",
            {"total_kib": memory.get("total"), "free_kib": memory.get("free")},
        )
    ]


def _parse_traffic(body: dict) -> list[StagedItem]:
    return [StagedItem("core.traffic", "TrafficMonitor", {"tx_bytes": body.get("tx_bytes")})]


def _parse_topology(body: dict) -> list[StagedItem]:
    return [
        StagedItem("core.topology", "NeighborMonitor", {"neighbor": n})
        for n in body.get("neighbors", [])
    ]


def default_parsers() -> ParserRegistry:
    registry = ParserRegistry()
    registry.register("core.general", 1, 4, _parse_general)
    registry.register("core.resources", 1, 2, _parse_resources)
    registry.register("core.traffic", 1, 1, _parse_traffic)
    registry.register("core.topology", 1, 1, _parse_topology)
    return registry
