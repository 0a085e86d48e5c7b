"""Bundled monitoring processors.

These realize the standard run: load the registered nodes into the working
set, collect telemetry (pulling where configured, reading staged pushes
otherwise), parse and commit monitoring items, validate running state
against the stored configuration, and sample everything into the
time-series store.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional

from meshdb.datastream import DataStream
from meshdb.monitor import NetworkProcessor, NodeProcessor, WorkingSet
from meshdb.registry.store import RegistryStore
from meshdb.telemetry import NodeSource, TelemetryService


class LoadNodesProcessor(NetworkProcessor):
    """Working set := every registered node, ordered by uuid."""

    name = "load-nodes"

    def __init__(self, store: RegistryStore):
        self.store = store

    def process(self, working_set, context):
        return WorkingSet(n.uuid for n in self.store.list_nodes()), context


class TelemetryCollectProcessor(NetworkProcessor):
    """Pull due nodes concurrently and annotate freshness per node."""

    name = "telemetry-collect"

    def __init__(
        self,
        service: TelemetryService,
        sources: dict[str, NodeSource],
        clock: Callable[[], float] = time.time,
        max_inflight: int = 16,
        stale_factor: float = 2.0,
        default_stale_s: float = 30.0,
    ):
        self.service = service
        self.sources = sources
        self.clock = clock
        self.max_inflight = max_inflight
        self.stale_factor = stale_factor
        self.default_stale_s = default_stale_s

    def process(self, working_set, context):
        pulls = [
            self.sources[n]
            for n in working_set
            if n in self.sources and self.sources[n].mode == "pull"
        ]
        if pulls:
            with ThreadPoolExecutor(max_workers=self.max_inflight) as pool:
                def one(source):
                    try:
                        self.service.pull(source)
                    except Exception:  # noqa: BLE001 - recorded as an event already
                        pass

                list(pool.map(one, pulls))
        now = self.clock()
        for node in working_set:
            staged = self.service.store.staged(node)
            source = self.sources.get(node)
            horizon = (
                source.interval_s * self.stale_factor if source else self.default_stale_s
            )
            fresh = staged is not None and (now - staged.received_at) <= horizon
            part = context.node_partition(node)
            part["telemetry.fresh"] = fresh
            part["telemetry.received_at"] = staged.received_at if staged else None
        return working_set, context


class TelemetryParseProcessor(NodeProcessor):
    """Dispatch the staged document into monitoring item writes."""

    name = "telemetry-parse"

    def __init__(self, service: TelemetryService):
        self.service = service

    def process(self, node, view):
        items, warnings = self.service.dispatch_staged(node)
        view["monitoring.items"] = items
        view["monitoring.warnings"] = warnings


class MonitoringCommitProcessor(NetworkProcessor):
    """Write every node's staged monitoring items into the registry store."""

    name = "monitoring-commit"

    def __init__(self, store: RegistryStore):
        self.store = store

    def process(self, working_set, context):
        for node in working_set:
            items = context.node_partition(node).get("monitoring.items") or []
            if items:
                self.store.set_monitoring_items(node, [i.to_dict() for i in items])
        return working_set, context


class ComplianceProcessor(NodeProcessor):
    """Dynamic validation: compare the running state against stored config."""

    name = "compliance-validate"

    def __init__(
        self,
        store: RegistryStore,
        sink: Optional[Callable[[str, list[dict]], None]] = None,
    ):
        self.store = store
        self.sink = sink

    def process(self, node, view):
        warnings: list[dict] = []
        config = self.store.get_config(node)
        monitoring = self.store.get_document(node, "node.monitoring")
        configured_name = (config.get("info") or [{}])[0].get("name")
        reported = (monitoring.get("core.general") or [{}])[0].get("hostname")
        if configured_name and reported and configured_name != reported:
            warnings.append(
                {
                    "check": "hostname-mismatch",
                    "message": f"configured {configured_name!r} but node reports {reported!r}",
                }
            )
        if config and not view.get("telemetry.fresh", False):
            warnings.append(
                {"check": "silent-node", "message": "configured node reports no telemetry"}
            )
        view["compliance.warnings"] = warnings
        if self.sink is not None:
            self.sink(node, warnings)


class DatastreamSamplerProcessor(NodeProcessor):
    """Append the latest per-node values, maintaining the derived rate chain."""

    name = "datastream-sampler"

    def __init__(
        self,
        datastream: DataStream,
        clock: Callable[[], float] = time.time,
        counter_max_value: int = 2**32 - 1,
    ):
        self.datastream = datastream
        self.clock = clock
        self.counter_max_value = counter_max_value

    def _streams_for(self, node: str) -> dict[str, int]:
        ds = self.datastream
        uptime = ds.ensure_stream({"node": node, "metric": "uptime"})
        resets = ds.derive_reset(uptime, {"node": node, "metric": "resets"})
        tx = ds.ensure_stream({"node": node, "metric": "tx_bytes"})
        rate = ds.derive_counter(
            tx, resets, self.counter_max_value, {"node": node, "metric": "tx_rate"}
        )
        return {"uptime": uptime, "resets": resets, "tx": tx, "rate": rate}

    def process(self, node, view):
        now = self.clock()
        ds = self.datastream
        reachable = ds.ensure_stream({"node": node, "metric": "reachable"})
        fresh = bool(view.get("telemetry.fresh"))
        ds.append(reachable, now, 1 if fresh else 0)
        if not fresh:
            return
        values: dict[str, object] = {}
        for item in view.get("monitoring.items") or []:
            values.setdefault(item.registry_id, item.values)
        resources = values.get("core.resources")
        if resources and resources.get("free_kib") is not None:
            for key in ("free_kib", "total_kib"):
                sid = ds.ensure_stream({"node": node, "metric": f"memory_{key}"})
                ds.append(sid, now, resources[key])
        general = values.get("core.general")
        traffic = values.get("core.traffic")
        if general and general.get("uptime_s") is not None:
            chain = self._streams_for(node)
            ds.append(chain["uptime"], now, general["uptime_s"])
            if traffic and traffic.get("tx_bytes") is not None:
                ds.append(chain["tx"], now, traffic["tx_bytes"])


class OnlineCountProcessor(NetworkProcessor):
    """One sample per run: how many working-set nodes look alive."""

    name = "online-count"

    def __init__(self, datastream: DataStream, clock: Callable[[], float] = time.time):
        self.datastream = datastream
        self.clock = clock

    def process(self, working_set, context):
        count = sum(
            1
            for n in working_set
            if context.node_partition(n).get("telemetry.fresh")
        )
        sid = self.datastream.ensure_stream({"module": "monitor", "metric": "online-nodes"})
        self.datastream.append(sid, self.clock(), count)
        context.global_ns["online.count"] = count
        return working_set, context


class TopologyProcessor(NetworkProcessor):
    """Snapshot the reported neighbor graph into a graph stream."""

    name = "topology-ingest"

    def __init__(self, datastream: DataStream, clock: Callable[[], float] = time.time):
        self.datastream = datastream
        self.clock = clock

    def process(self, working_set, context):
        nodes = []
        edges = []
        online = set()
        for node in working_set:
            part = context.node_partition(node)
            if not part.get("telemetry.fresh"):
                continue
            online.add(node)
            nodes.append({"id": node})
        for node in online:
            for item in context.node_partition(node).get("monitoring.items") or []:
                if item.registry_id != "core.topology":
                    continue
                neighbor = item.values.get("neighbor")
                if neighbor in online:
                    edges.append({"from": node, "to": neighbor})
        graph = {"nodes": nodes, "edges": edges}
        sid = self.datastream.ensure_stream(
            {"module": "monitor", "metric": "topology"}, value_type="graph"
        )
        self.datastream.append(sid, self.clock(), graph)
        return working_set, context


class DownsampleProcessor(NetworkProcessor):
    """Advance the rollup horizon of every stream to the current run time."""

    name = "downsample"

    def __init__(self, datastream: DataStream, clock: Callable[[], float] = time.time):
        self.datastream = datastream
        self.clock = clock

    def process(self, working_set, context):
        now = self.clock()
        for stream in self.datastream.find_streams({}):
            self.datastream.downsample(stream.stream_id, now)
        return working_set, context
