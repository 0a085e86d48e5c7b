"""Acceptance suite: every exit criterion at its stated tolerance and budget.

Each test is one criterion; the conftest hook prints a PASS/FAIL line per
criterion at the end of the run.  Time budgets are enforced inside the tests
themselves.
"""

from __future__ import annotations

import ipaddress
import json
import math
import pathlib
import random
import time

import pytest
from fastapi.testclient import TestClient

from meshdb.allocator import Pool, PoolExhaustedError
from meshdb.bootstrap import default_stack
from meshdb.clock import VirtualClock
from meshdb.datastream import GRANULARITY_LADDER, DataStream, bucket_start
from meshdb.firmware import Builder, BuildQueue, ValidationFailedError
from meshdb.monitor import Context, run
from meshdb.registry import query_nodes
from meshdb.server.app import MeshApp, create_http_app
from meshdb.server.config import PipelineDef, ServiceConfig, SimNodeProfile
from meshdb.server.simfleet import SimFleet, run_simulation
from test_monitor import compile_pipeline, random_spec, reference_run

FIXTURES = pathlib.Path(__file__).parent / "fixtures"
SAMPLE = (FIXTURES / "agent_status.json").read_bytes()
SAMPLE_UUID = "64840ad9-aac1-4494-b4d1-9de5d8cbedd9"


def fixture(name: str) -> dict:
    return json.loads((FIXTURES / name).read_text())


class Budget:
    def __init__(self, seconds: float):
        self.seconds = seconds

    def __enter__(self):
        self.t0 = time.monotonic()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.monotonic() - self.t0
        if exc[0] is None:
            assert self.elapsed < self.seconds, (
                f"runtime {self.elapsed:.2f}s exceeded the {self.seconds}s budget"
            )


def test_counter_derivative_fidelity():
    """212 -> 37 over 10s with max 255 is exactly 8.0/s; a reset nulls it."""
    with Budget(1.0):
        for with_reset, expected in ((False, 8.0), (True, None)):
            ds = DataStream()
            uptime = ds.ensure_stream({"m": "uptime"})
            counter = ds.ensure_stream({"m": "counter"})
            resets = ds.derive_reset(uptime, {"m": "resets"})
            rate = ds.derive_counter(counter, resets, 255, {"m": "rate"})
            ds.append(uptime, 0, 100)
            ds.append(counter, 0, 212)
            ds.append(uptime, 10, 3 if with_reset else 110)
            ds.append(counter, 10, 37)
            points = ds.query_datapoints(rate, 10, 0, 100)
            assert points == [(10, expected)]
            if not with_reset:
                assert points[0][1] == 8.0  # exact, not approximate


def test_downsample_brute_force_oracle_50_streams():
    """Every bucket at every granularity equals recomputation from raw points."""
    with Budget(60.0):
        rng = random.Random(2024)
        ds = DataStream()
        for snum in range(50):
            sid = ds.ensure_stream({"stream": str(snum)})
            ts = 0.0
            points = []
            for _ in range(10_000):
                ts += rng.uniform(0.5, 20.0)
                value = rng.choice(
                    (rng.randint(-10_000, 10_000), rng.uniform(-500.0, 500.0))
                )
                points.append((ts, value))
                ds.append(sid, ts, value)
            ds.downsample(sid, ts)
            last = ts
            for g in GRANULARITY_LADDER[1:]:
                groups: dict[float, list] = {}
                for t, v in points:
                    if bucket_start(t, g) + g <= last:
                        groups.setdefault(bucket_start(t, g), []).append(v)
                got = {b.bucket_ts: b for b in ds.query_datapoints(sid, g, 0, last + 1)}
                assert set(got) == set(groups)
                for b0, vals in groups.items():
                    bucket = got[b0]
                    assert bucket.count == len(vals)
                    assert bucket.sum == sum(vals)
                    assert bucket.min == min(vals)
                    assert bucket.max == max(vals)
                    mean = sum(vals) / len(vals)
                    squares = sum(v * v for v in vals)
                    stddev = math.sqrt(max(squares / len(vals) - mean * mean, 0.0))
                    assert bucket.mean == pytest.approx(mean, rel=1e-9, abs=1e-12)
                    assert bucket.sum_squares == pytest.approx(squares, rel=1e-9)
                    assert bucket.stddev == pytest.approx(stddev, rel=1e-9, abs=1e-9)


def test_pipeline_equivalence_100_randomized_pipelines():
    """Fused parallel execution equals the sequential reference interpreter."""
    with Budget(120.0):
        rng = random.Random(777)
        universe = [f"node-{i:02d}" for i in range(50)]
        for _ in range(100):
            spec = random_spec(rng, rng.randint(2, 8))
            ctx = Context()
            report = run(compile_pipeline(spec, universe), ctx, max_workers=8)
            assert report.ok
            ref_ws, ref_global, ref_nodes = reference_run(spec, universe)
            assert ctx.global_ns == ref_global
            assert {k: v for k, v in ctx.per_node.items() if v} == ref_nodes
            assert report.stages[-1].ws_after == len(ref_ws)


def _interval(prefix: str) -> tuple[int, int]:
    net = ipaddress.ip_network(prefix)
    start = int(net.network_address)
    return start, start + net.num_addresses


def test_allocator_safety_10000_step_trace():
    """No overlaps, no hold-down violations, full merge maximality at the end."""
    with Budget(30.0):
        rng = random.Random(4242)
        pool = Pool("trace", "10.0.0.0/16", holddown_s=300)
        live: dict[str, object] = {}
        live_iv: dict[str, tuple[int, int]] = {}
        freed_iv: list[tuple[int, int, float]] = []  # (start, end, freed_at)
        now = 0.0
        overlap_checks = 0
        for step in range(10_000):
            now += rng.uniform(0.5, 5.0)
            action = rng.random()
            if action < 0.55:
                try:
                    alloc = pool.allocate(rng.randint(20, 30), f"n{step}", now=now)
                except PoolExhaustedError:
                    continue
                start, end = _interval(alloc.prefix)
                for other_start, other_end in live_iv.values():
                    assert not (start < other_end and other_start < end), (
                        f"overlap: {alloc.prefix} collides with a live allocation"
                    )
                    overlap_checks += 1
                # expired entries can never be violated again; keep the rest
                freed_iv = [f for f in freed_iv if f[2] + pool.holddown_s > now]
                for fstart, fend, freed_at in freed_iv:
                    assert not (start < fend and fstart < end), (
                        f"hold-down violation: {alloc.prefix} reused a reserved block"
                    )
                live[alloc.prefix] = alloc
                live_iv[alloc.prefix] = (start, end)
            elif action < 0.85 and live:
                prefix = rng.choice(sorted(live))
                pool.free(live.pop(prefix), now=now)
                start, end = live_iv.pop(prefix)
                freed_iv.append((start, end, now))
            else:
                pool.expire(now=now)
        assert overlap_checks > 0
        for prefix in sorted(live):
            pool.free(live.pop(prefix), now=now)
        pool.expire(now=now + pool.holddown_s + 1)
        assert pool.leaves() == [("10.0.0.0/16", "free")]


def test_validation_gate_and_reproducible_build():
    """Bad fixtures are rejected with module-attributed errors; good one builds."""
    with Budget(5.0):
        registry, store, devices, platforms = default_stack()
        store.create_node("n1")
        for name in ("mismatch_80211a.json", "missing_package.json"):
            errors = store.set_config("n1", fixture(name))
            assert errors, f"{name} must be rejected at save time"
            assert all(e.module == "wireless" for e in errors)
            assert store.get_config("n1") == {}
        assert store.set_config("n1", fixture("valid_minimal.json")) == []
        queue = BuildQueue(devices, platforms)
        queue.register_builder(Builder("ar71xx-builder", frozenset({"ar71xx"})))
        try:
            digests = []
            for _ in range(2):
                build_id = queue.submit(
                    "n1", store.get_config("n1"), "tp-wr741ndv1", "openwrt"
                )
                status = queue.wait(build_id)
                assert status["state"] == "done"
                digests.append(status["bundle"]["digest"])
            assert digests[0] == digests[1]
            with pytest.raises(ValidationFailedError):
                queue.submit("n1", fixture("mismatch_80211a.json"), "tp-wr741ndv1", "openwrt")
        finally:
            queue.shutdown()


def _node_streams(app: MeshApp) -> dict:
    out = {}
    for stream in app.datastream.find_streams({"node": SAMPLE_UUID}):
        key = stream.tags["metric"]
        out[key] = list(zip(stream.timestamps, stream.values))
    return out


def test_status_document_round_trip_push_equals_pull():
    """The same document via push and via pull stages identical state."""
    results = {}
    for transport in ("push", "pull"):
        clock = VirtualClock(1000.0)
        config = ServiceConfig(pipelines=[PipelineDef("monitoring", 60)])
        app = MeshApp(config, clock=clock)
        if transport == "push":
            app.create_node(SAMPLE_UUID, token="tok", mode="push")
            http = TestClient(create_http_app(app))
            r = http.post(
                "/push/http", content=SAMPLE, headers={"Authorization": "Bearer tok"}
            )
            assert r.status_code == 200 and r.json()["status"] == "accepted"
        else:
            app.create_node(
                SAMPLE_UUID, token="tok", mode="pull", pull_url=f"sim://{SAMPLE_UUID}"
            )
            app.telemetry.register_fetcher("sim", lambda url, timeout: SAMPLE)
            app.telemetry.pull(app.sources[SAMPLE_UUID])
        items, warnings = app.telemetry.dispatch_staged(SAMPLE_UUID)
        assert warnings == []
        clock.set(1010.0)
        report = app.run_pipeline("monitoring")
        assert report.ok
        results[transport] = {
            "items": [i.to_dict() for i in items],
            "monitoring": app.store.get_document(SAMPLE_UUID, "node.monitoring"),
            "streams": _node_streams(app),
        }
        app.build_queue.shutdown()
    push, pull = results["push"], results["pull"]
    assert push == pull
    general = {i["registry_id"]: i["values"] for i in push["items"]}
    assert general["core.general"]["uuid"] == SAMPLE_UUID
    assert general["core.general"]["hostname"] == "test-4"
    assert general["core.resources"] == {"total_kib": 32768, "free_kib": 24611}
    assert push["streams"]["memory_free_kib"] == [(1010.0, 24611)]
    assert push["streams"]["memory_total_kib"] == [(1010.0, 32768)]


def test_desk_scale_400_node_network():
    """400 mixed-transport nodes, 15 simulated minutes, truthful online counts."""
    clock = VirtualClock(0.0)
    profile = SimNodeProfile(
        count=400,
        push_fraction=0.5,
        report_interval_s=10,
        reboot_probability=0.01,
        modules=["core.general", "core.resources", "core.traffic"],
        seed=99,
    )
    config = ServiceConfig(
        pipelines=[PipelineDef("monitoring", 60)], fleet=profile
    )
    app = MeshApp(config, clock=clock)
    fleet = SimFleet(app, profile, clock)
    try:
        result = run_simulation(app, fleet, clock, duration_s=15 * 60)
        assert result["runs"] == 15
        # one more full run over all 400 nodes, wall time measured for real
        next_t = clock() + 60
        fleet.advance_to(next_t)
        if clock() < next_t:
            clock.set(next_t)
        t0 = time.monotonic()
        report = app.run_pipeline("monitoring")
        wall = time.monotonic() - t0
        assert report.ok
        assert wall < 10.0, f"full 400-node run took {wall:.2f}s"
        online = app.datastream.find_streams({"metric": "online-nodes"})[0]
        truth = [fleet.expected_online(t) for t in online.timestamps[:15]]
        assert list(online.values[:15]) == truth
        assert set(online.values[:15]) == {400}
        staged = app.telemetry.store.staged_nodes()
        assert len(staged) == 400
    finally:
        app.build_queue.shutdown()


def test_registry_query_oracle_200_nodes():
    """50 random predicates over randomized subclass instances match brute force."""
    registry, store, devices, platforms = default_stack()
    store.validate_hook = None  # schema-only writes; transform not under test here
    rng = random.Random(31337)
    models = devices.models()
    names = ["alpha", "beta", "gamma", "delta"]
    for i in range(200):
        node = store.create_node(f"node-{i:03d}")
        wants_extended = rng.random() < 0.7
        if wants_extended:
            info = {
                "_item": "ExtendedInfoConfig",
                "name": rng.choice(names),
                "device": rng.choice(models),
                "version": rng.randint(1, 5),
            }
        else:
            info = {"_item": "InfoConfig", "name": rng.choice(names)}
        doc = {"info": [info]}
        if rng.random() < 0.5:
            doc["core.interfaces"] = [
                {"_item": "WifiRadioConfig", "radio": "wifi0", "channel": rng.choice([1, 8, 36])}
            ]
        assert store.set_config(node.uuid, doc) == []

    def brute(path_field, op, value):
        hits = set()
        for node_uuid, doc in store.documents("node.config").items():
            registry_id, field = path_field
            for inst in doc.get(registry_id, []):
                actual = inst.get(field)
                if actual is None:
                    continue
                if op == "==" and actual == value:
                    hits.add(node_uuid)
                elif op == "!=" and actual != value:
                    hits.add(node_uuid)
                elif op == "in" and actual in value:
                    hits.add(node_uuid)
        return hits

    fields = [
        (("info", "device"), "info.device", lambda: rng.choice(models)),
        (("info", "version"), "info.version", lambda: rng.randint(1, 5)),
        (("info", "name"), "info.name", lambda: rng.choice(names)),
        (
            ("core.interfaces", "channel"),
            "core.interfaces.channel",
            lambda: rng.choice([1, 8, 36]),
        ),
    ]
    for _ in range(50):
        key, path, gen = rng.choice(fields)
        op = rng.choice(["==", "!=", "in"])
        value = [gen() for _ in range(rng.randint(1, 3))] if op == "in" else gen()
        got = query_nodes(registry, store, "node.config", path, op, value)
        assert got == brute(key, op, value)
