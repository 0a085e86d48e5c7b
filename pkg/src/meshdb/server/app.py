"""Service composition root and the HTTP API.

``MeshApp`` wires registry, allocator pools, firmware, telemetry, monitoring
and the datastream store together from one ``ServiceConfig``;
``create_http_app`` exposes the whole thing as a JSON-over-HTTP service.
Errors leave in a uniform ``{"error": {"code", "message", "details"}}``
envelope.
"""

from __future__ import annotations

import logging
import os
import secrets
import time
import uuid as uuidlib
from typing import Callable, Optional

from fastapi import FastAPI, Query, Request, Response
from fastapi.responses import JSONResponse, PlainTextResponse

from meshdb import allocator as alloc
from meshdb import bootstrap, datastream as ds
from meshdb import monitor
from meshdb import telemetry as tele
from meshdb.monitor import stock
from meshdb.registry import FormState, RuleEngine, form_schema, query_nodes
from meshdb.registry import schema as rschema
from meshdb.registry import store as rstore
from meshdb.firmware import build as fwbuild
from meshdb.firmware import devices as fwdevices
from meshdb.firmware import transform as fwtransform
from meshdb.server.config import ServiceConfig

log = logging.getLogger(__name__)


class MeshApp:
    """Everything the service needs, composed once from configuration."""

    def __init__(self, config: ServiceConfig, clock: Optional[Callable[[], float]] = None):
        self.config = config
        self.clock = clock or time.time
        self.registry, self.store, self.devices, self.platforms = bootstrap.default_stack()
        if config.devices_dir:
            self.devices.load_directory(config.devices_dir)
            bootstrap.register_device_choices(self.registry, self.devices)
        self.datastream = ds.DataStream()
        self.tokens: dict[str, str] = dict(config.tokens)
        self.sources: dict[str, tele.NodeSource] = {}
        self.telemetry = tele.TelemetryService(
            tele.default_parsers(), tokens=self.tokens, clock=self.clock
        )
        self.pools = {
            p.id: alloc.Pool(p.id, p.prefix, p.holddown_s) for p in config.pools
        }
        self.build_queue = fwbuild.BuildQueue(self.devices, self.platforms)
        self.build_queue.register_builder(
            fwbuild.Builder("ar71xx-builder", frozenset({"ar71xx"}))
        )
        self.build_queue.register_builder(
            fwbuild.Builder("x86-builder", frozenset({"x86", "x86_64"}))
        )
        self.warnings: dict[str, list[dict]] = {}
        self.reports: list[monitor.RunReport] = []
        self.rules = RuleEngine(
            self.registry,
            rstore.CONFIG_POINT,
            config.rules if config.rules is not None else bootstrap.default_rules(),
            capability_resolver=self._capability,
        )
        counter_max = config.fleet.counter_max_value if config.fleet else 2**32 - 1
        self._counter_max = counter_max
        self.pipelines = {
            d.name: monitor.Pipeline(
                d.name, [self.make_processor(n) for n in d.processors], d.interval_s
            )
            for d in config.pipelines
        }
        self.scheduler: Optional[monitor.Scheduler] = None

    def _capability(self, model_id: str, capability: str) -> bool:
        try:
            return self.devices.resolve(model_id).has_capability(capability)
        except fwdevices.DeviceError:
            return False

    # -- processors -----------------------------------------------------------

    def make_processor(self, name: str):
        factories = {
            "load-nodes": lambda: stock.LoadNodesProcessor(self.store),
            "telemetry-collect": lambda: stock.TelemetryCollectProcessor(
                self.telemetry, self.sources, clock=self.clock
            ),
            "telemetry-parse": lambda: stock.TelemetryParseProcessor(self.telemetry),
            "monitoring-commit": lambda: stock.MonitoringCommitProcessor(self.store),
            "compliance-validate": lambda: stock.ComplianceProcessor(
                self.store, sink=self.warnings.__setitem__
            ),
            "datastream-sampler": lambda: stock.DatastreamSamplerProcessor(
                self.datastream, clock=self.clock, counter_max_value=self._counter_max
            ),
            "online-count": lambda: stock.OnlineCountProcessor(
                self.datastream, clock=self.clock
            ),
            "topology-ingest": lambda: stock.TopologyProcessor(
                self.datastream, clock=self.clock
            ),
            "downsample": lambda: stock.DownsampleProcessor(
                self.datastream, clock=self.clock
            ),
        }
        try:
            return factories[name]()
        except KeyError:
            raise monitor.MonitorError(f"unknown processor {name!r}") from None

    def run_pipeline(self, name: str) -> monitor.RunReport:
        report = monitor.run(self.pipelines[name], clock=self.clock)
        self.reports.append(report)
        if len(self.reports) > 1000:
            del self.reports[:-1000]
        return report

    # -- node management -----------------------------------------------------

    def create_node(
        self,
        node_uuid: Optional[str] = None,
        token: Optional[str] = None,
        mode: str = "push",
        pull_url: Optional[str] = None,
        interval_s: int = 10,
    ) -> dict:
        node_uuid = node_uuid or str(uuidlib.uuid4())
        node = self.store.create_node(node_uuid, created_at=self.clock())
        token = token or secrets.token_hex(16)
        self.tokens[node.uuid] = token
        self.sources[node.uuid] = tele.NodeSource(
            node.uuid, mode=mode, pull_url=pull_url, interval_s=interval_s, auth_token=token
        )
        return {"uuid": node.uuid, "token": token, "mode": mode}

    def node_summary(self, node_uuid: str) -> dict:
        node = self.store.get_node(node_uuid)
        staged = self.telemetry.store.staged(node_uuid)
        config = self.store.get_config(node_uuid)
        info = (config.get("info") or [{}])[0]
        source = self.sources.get(node_uuid)
        horizon = source.interval_s * 2 if source else 30
        last_seen = staged.received_at if staged else None
        return {
            "uuid": node.uuid,
            "created_at": node.created_at,
            "name": info.get("name"),
            "device": info.get("device"),
            "mode": source.mode if source else None,
            "last_seen": last_seen,
            "reachable": last_seen is not None and self.clock() - last_seen <= horizon,
            "warnings": self.warnings.get(node_uuid, []),
        }

    # -- scheduling / persistence ------------------------------------------------

    def start_scheduler(self) -> None:
        if self.scheduler is None:
            self.scheduler = monitor.Scheduler(
                list(self.pipelines.values()),
                runner=lambda p: self.run_pipeline_by(p),
            )
            self.scheduler.start()

    def run_pipeline_by(self, pipeline: monitor.Pipeline) -> monitor.RunReport:
        return self.run_pipeline(pipeline.name)

    def stop(self) -> None:
        if self.scheduler is not None:
            self.scheduler.stop()
            self.scheduler = None
        self.build_queue.shutdown()
        if self.config.data_dir:
            self.save_state()

    def save_state(self) -> None:
        data_dir = self.config.data_dir
        if not data_dir:
            return
        import json

        os.makedirs(data_dir, exist_ok=True)
        self.datastream.save(os.path.join(data_dir, "datastream.json"))
        self.store.save(os.path.join(data_dir, "registry.json"))
        with open(os.path.join(data_dir, "pools.json"), "w", encoding="utf-8") as fh:
            json.dump({pid: pool.to_dict() for pid, pool in self.pools.items()}, fh)
        with open(os.path.join(data_dir, "nodes.json"), "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "tokens": self.tokens,
                    "sources": [
                        {
                            "node_uuid": s.node_uuid,
                            "mode": s.mode,
                            "pull_url": s.pull_url,
                            "interval_s": s.interval_s,
                        }
                        for s in self.sources.values()
                    ],
                },
                fh,
            )

    def load_state(self) -> None:
        data_dir = self.config.data_dir
        if not data_dir:
            return
        import json

        ds_path = os.path.join(data_dir, "datastream.json")
        if os.path.exists(ds_path):
            self.datastream = ds.DataStream.load(ds_path)
        reg_path = os.path.join(data_dir, "registry.json")
        if os.path.exists(reg_path):
            self.store.load(reg_path)
        pools_path = os.path.join(data_dir, "pools.json")
        if os.path.exists(pools_path):
            with open(pools_path, encoding="utf-8") as fh:
                for pid, rec in json.load(fh).items():
                    self.pools[pid] = alloc.Pool.from_dict(rec)
        nodes_path = os.path.join(data_dir, "nodes.json")
        if os.path.exists(nodes_path):
            with open(nodes_path, encoding="utf-8") as fh:
                data = json.load(fh)
            self.tokens.update(data.get("tokens", {}))
            for rec in data.get("sources", []):
                self.sources[rec["node_uuid"]] = tele.NodeSource(
                    rec["node_uuid"],
                    mode=rec["mode"],
                    pull_url=rec.get("pull_url"),
                    interval_s=rec.get("interval_s", 10),
                    auth_token=self.tokens.get(rec["node_uuid"], ""),
                )


# -- HTTP layer ----------------------------------------------------------------

_STATUS_BY_CODE = {
    "unknown-node": 404,
    "unknown-stream": 404,
    "unknown-model": 404,
    "unknown-point": 404,
    "unknown-build": 404,
    "unknown-registry-id": 400,
    "unknown-field": 400,
    "auth-failure": 401,
    "node-exists": 409,
    "duplicate-choice": 409,
    "tag-conflict": 409,
    "pool-exhausted": 409,
    "config-invalid": 400,
}

_DOMAIN_ERRORS = (
    rschema.RegistryError,
    rstore.UnknownNodeError,
    rstore.NodeExistsError,
    alloc.AllocatorError,
    ds.DatastreamError,
    tele.TelemetryError,
    fwdevices.DeviceError,
    fwtransform.UnknownPlatformError,
    fwbuild.NoBuilderError,
    fwbuild.UnknownBuildError,
    monitor.MonitorError,
)


def _error_response(code: str, message: str, details: list | None = None, status: int = 400):
    return JSONResponse(
        {"error": {"code": code, "message": message, "details": details or []}},
        status_code=status,
    )


def create_http_app(mesh: MeshApp) -> FastAPI:
    app = FastAPI(title="meshdb", version="0.1.0")
    app.state.mesh = mesh

    @app.exception_handler(Exception)
    async def on_error(request: Request, exc: Exception):
        if isinstance(exc, _DOMAIN_ERRORS):
            code = getattr(exc, "code", "error")
            return _error_response(code, str(exc), status=_STATUS_BY_CODE.get(code, 400))
        if isinstance(exc, fwbuild.ValidationFailedError):
            return _error_response(
                exc.code, str(exc), [e.to_dict() for e in exc.errors], status=400
            )
        log.exception("unhandled error on %s", request.url.path)
        return _error_response("internal", str(exc), status=500)

    # -- nodes -------------------------------------------------------------

    @app.get("/api/nodes")
    def list_nodes():
        return [mesh.node_summary(n.uuid) for n in mesh.store.list_nodes()]

    @app.post("/api/nodes", status_code=201)
    async def create_node(request: Request):
        body = await request.json() if await request.body() else {}
        return mesh.create_node(
            node_uuid=body.get("uuid"),
            token=body.get("token"),
            mode=body.get("mode", "push"),
            pull_url=body.get("pull_url"),
            interval_s=body.get("interval_s", 10),
        )

    @app.get("/api/nodes/{node_uuid}")
    def get_node(node_uuid: str):
        return mesh.node_summary(node_uuid)

    @app.get("/api/nodes/{node_uuid}/config")
    def get_config(node_uuid: str):
        return mesh.store.get_config(node_uuid)

    @app.put("/api/nodes/{node_uuid}/config")
    async def put_config(node_uuid: str, request: Request):
        document = await request.json()
        errors = mesh.store.set_config(node_uuid, document)
        if errors:
            return _error_response(
                "validation-errors",
                "configuration has outstanding errors and was not saved",
                [e.to_dict() for e in errors],
                status=400,
            )
        return {"saved": True}

    @app.get("/api/nodes/{node_uuid}/state")
    def get_state(node_uuid: str):
        mesh.store.get_node(node_uuid)
        staged = mesh.telemetry.store.staged(node_uuid)
        return {
            "monitoring": mesh.store.get_document(node_uuid, rstore.MONITORING_POINT),
            "warnings": mesh.warnings.get(node_uuid, []),
            "last_seen": staged.received_at if staged else None,
            "transport": staged.transport if staged else None,
        }

    @app.post("/api/nodes/{node_uuid}/apply-defaults")
    async def apply_defaults(node_uuid: str, request: Request):
        body = await request.json()
        state = FormState.from_dict(body.get("state"))
        document, new_state, fired = mesh.rules.apply(
            body.get("config", {}), set(body.get("changed_fields", [])), state
        )
        return {"config": document, "state": new_state.to_dict(), "fired": fired}

    @app.get("/api/query")
    def run_query(point: str, path: str, op: str = "==", value: str = ""):
        import json as jsonlib

        try:
            typed = jsonlib.loads(value)  # numbers, lists, quoted strings
        except ValueError:
            typed = value
        return {
            "nodes": sorted(
                query_nodes(mesh.registry, mesh.store, point, path, op, typed)
            )
        }

    # -- forms -------------------------------------------------------------

    @app.get("/api/form-schema/{point}")
    def get_form_schema(point: str, device: Optional[str] = None, project: Optional[str] = None):
        context = {k: v for k, v in (("device", device), ("project", project)) if v}
        return form_schema(mesh.registry, point, context)

    # -- builds -------------------------------------------------------------

    @app.post("/api/nodes/{node_uuid}/build/{platform}", status_code=202)
    def trigger_build(node_uuid: str, platform: str):
        config = mesh.store.get_config(node_uuid)
        model_id = bootstrap.selected_device(config)
        if model_id is None:
            return _error_response(
                "validation-failed", "node has no device selected", status=400
            )
        build_id = mesh.build_queue.submit(node_uuid, config, model_id, platform)
        return {"build_id": build_id, "state": "queued"}

    @app.get("/api/builds/{build_id}")
    def build_status(build_id: str):
        return mesh.build_queue.status(build_id)

    @app.get("/api/builds/{build_id}/artifact")
    def build_artifact(build_id: str):
        data = mesh.build_queue.artifact(build_id)
        if data is None:
            return _error_response("unknown-build", "artifact not ready", status=404)
        return Response(content=data, media_type="application/x-tar")

    # -- telemetry -----------------------------------------------------------

    @app.post("/push/http")
    async def push(request: Request):
        token = None
        auth = request.headers.get("authorization", "")
        if auth.lower().startswith("bearer "):
            token = auth[7:]
        raw = await request.body()
        result = mesh.telemetry.ingest_push(raw, token)
        return result

    # -- datastream -----------------------------------------------------------

    @app.get("/api/streams")
    def list_streams(request: Request):
        tags = {
            key[5:]: value
            for key, value in request.query_params.items()
            if key.startswith("tags.")
        }
        return [s.describe() for s in mesh.datastream.find_streams(tags)]

    @app.get("/api/streams/{stream_id}/datapoints")
    def stream_datapoints(
        stream_id: int,
        granularity: str = "10s",
        frm: float = Query(0.0, alias="from"),
        to: float = 2**53,
    ):
        g = ds.parse_granularity(granularity)
        stream = mesh.datastream.get(stream_id)
        rows = mesh.datastream.query_datapoints(stream_id, g, frm, to)
        if g == stream.highest_granularity or stream.value_type == "graph":
            points = [{"t": t, "v": v} for t, v in rows]
        else:
            points = [b.to_record() for b in rows]
        return {"stream": stream_id, "granularity": ds.granularity_name(g), "points": points}

    @app.get("/api/streams/export")
    def export_streams(request: Request):
        import json as jsonlib

        tags = {
            key[5:]: value
            for key, value in request.query_params.items()
            if key.startswith("tags.")
        }
        ids = [s.stream_id for s in mesh.datastream.find_streams(tags)]
        body = "\n".join(
            jsonlib.dumps(rec) for rec in mesh.datastream.export_records(ids)
        )
        return PlainTextResponse(body, media_type="application/x-ndjson")

    # -- runs and pools ------------------------------------------------------------

    @app.get("/api/runs")
    def list_runs(limit: int = 50):
        return [r.to_dict() for r in mesh.reports[-limit:]]

    @app.get("/api/pools")
    def list_pools():
        return {
            pid: {
                "root_prefix": str(pool.root_prefix),
                "holddown_s": pool.holddown_s,
                "allocations": [
                    {"prefix": a.prefix, "owner": a.owner, "created_at": a.created_at}
                    for a in pool.allocations()
                ],
                "leaves": pool.leaves(),
            }
            for pid, pool in mesh.pools.items()
        }

    @app.post("/api/pools/{pool_id}/allocate", status_code=201)
    async def pool_allocate(pool_id: str, request: Request):
        body = await request.json()
        pool = mesh.pools.get(pool_id)
        if pool is None:
            return _error_response("unknown-pool", f"no pool {pool_id}", status=404)
        allocation = pool.allocate(
            int(body["prefix_len"]), body.get("owner", ""), now=mesh.clock()
        )
        return {"prefix": allocation.prefix, "owner": allocation.owner}

    @app.post("/api/pools/{pool_id}/free")
    async def pool_free(pool_id: str, request: Request):
        body = await request.json()
        pool = mesh.pools.get(pool_id)
        if pool is None:
            return _error_response("unknown-pool", f"no pool {pool_id}", status=404)
        allocation = next(
            (a for a in pool.allocations() if a.prefix == body["prefix"]), None
        )
        if allocation is None:
            return _error_response("unknown-allocation", body["prefix"], status=404)
        pool.free(allocation, now=mesh.clock())
        return {"freed": allocation.prefix}

    # -- optional built web UI -----------------------------------------------------

    if mesh.config.ui_dir and os.path.isdir(mesh.config.ui_dir):
        from fastapi.staticfiles import StaticFiles

        index = os.path.join(mesh.config.ui_dir, "index.html")

        @app.get("/", include_in_schema=False)
        def ui_index():
            from fastapi.responses import FileResponse

            return FileResponse(index)

        app.mount(
            "/dist",
            StaticFiles(directory=os.path.join(mesh.config.ui_dir, "dist")),
            name="ui",
        )

    return app


def serve(config: ServiceConfig) -> None:
    """Start the scheduler (and demo fleet, if configured) and serve HTTP."""
    import uvicorn

    driver = None
    if config.fleet and config.fleet.count > 0:
        from meshdb.clock import VirtualClock
        from meshdb.server.simfleet import FleetDriver, SimFleet

        clock = VirtualClock(time.time())
        mesh = MeshApp(config, clock=clock)
        mesh.load_state()
        fleet = SimFleet(mesh, config.fleet, clock, attach=True)
        driver = FleetDriver(fleet)
        driver.start()
    else:
        mesh = MeshApp(config)
        mesh.load_state()
    app = create_http_app(mesh)
    mesh.start_scheduler()
    try:
        uvicorn.run(app, host=config.listen_host, port=config.listen_port, log_level="info")
    finally:
        if driver is not None:
            driver.stop()
        mesh.stop()
