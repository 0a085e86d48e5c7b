"""Simulated node fleet: deterministic agents standing in for real devices.

Every simulated node compiles the same status document a hardware agent
would, on its own schedule, and either pushes it through the ingestion
endpoint or serves it for pull under a ``sim://`` URL.  Counters advance and
wrap at the configured width; reboots reset them and drop the reported
uptime.  Consecutive reboots report strictly decreasing uptimes (the agent
is modeled as booting progressively later in the interval) so uptime-based
reset detection can observe every reboot; the fleet keeps a ground-truth
event log for assertions either way.
"""

from __future__ import annotations

import json
import random
import uuid as uuidlib
from dataclasses import dataclass, field

from meshdb.clock import VirtualClock
from meshdb.server.app import MeshApp
from meshdb.server.config import SimNodeProfile
from meshdb.telemetry import NodeSource


class FleetError(Exception):
    code = "node-registration-conflict"


@dataclass
class SimNode:
    uuid: str
    token: str
    mode: str
    interval_s: int
    modules: tuple[str, ...]
    wrap_mod: int
    reboot_probability: float
    rng: random.Random
    neighbors: list[str] = field(default_factory=list)
    uptime: float = 0.0
    counter: int = 0
    reboot_streak: int = 0
    next_report: float = 0.0
    last_report: float = -1.0
    online: bool = True

    def step(self, now: float) -> tuple[dict, bool]:
        """Advance state to one report instant; returns (document, rebooted)."""
        rebooted = False
        if self.last_report >= 0 and self.rng.random() < self.reboot_probability:
            rebooted = True
            self.reboot_streak += 1
            # progressively later boot inside the interval: uptime strictly drops
            self.uptime = 0.9 * self.interval_s * (0.5 ** (self.reboot_streak - 1))
            self.counter = self.rng.randrange(min(1000, self.wrap_mod))
        else:
            if self.last_report >= 0:
                self.reboot_streak = 0
                self.uptime += self.interval_s
            else:
                self.uptime = float(self.interval_s)
            self.counter = (self.counter + self.rng.randrange(1, 2**16)) % self.wrap_mod
        self.last_report = now
        doc: dict = {}
        if "core.general" in self.modules:
            doc["core.general"] = {
                "_meta": {"version": 4},
                "uuid": self.uuid,
                "hostname": f"sim-{self.uuid[:8]}",
                "uptime": self.uptime,
            }
        if "core.resources" in self.modules:
            free = 16000 + self.rng.randrange(0, 8000)
            doc["core.resources"] = {
                "_meta": {"version": 2},
                "memory": {"total": 32768, "free": free},
            }
        if "core.traffic" in self.modules:
            doc["core.traffic"] = {"_meta": {"version": 1}, "tx_bytes": self.counter}
        if "core.topology" in self.modules:
            doc["core.topology"] = {"_meta": {"version": 1}, "neighbors": self.neighbors}
        return doc, rebooted


class SimFleet:
    """Deterministic agent fleet bound to one MeshApp and a virtual clock."""

    def __init__(
        self,
        mesh: MeshApp,
        profile: SimNodeProfile,
        clock: VirtualClock,
        push_via=None,
        attach: bool = False,
    ):
        self.mesh = mesh
        self.profile = profile
        self.clock = clock
        # callable(raw_bytes, token) -> None; defaults to in-process ingestion
        self.push_via = push_via or (
            lambda raw, token: mesh.telemetry.ingest_push(raw, token)
        )
        self.nodes: dict[str, SimNode] = {}
        self.latest: dict[str, bytes] = {}
        self.reboot_log: list[tuple[str, float]] = []
        # (uuid, report time, uptime, counter): the ground truth for replay oracles
        self.report_log: list[tuple[str, float, float, int]] = []
        self._report_times: dict[str, list[float]] = {}
        rng = random.Random(profile.seed)
        uuids = []
        for index in range(profile.count):
            node_uuid = str(uuidlib.UUID(int=rng.getrandbits(128), version=4))
            uuids.append(node_uuid)
            mode = "push" if index < profile.count * profile.push_fraction else "pull"
            token = f"sim-token-{index}"
            try:
                self.mesh.create_node(
                    node_uuid,
                    token=token,
                    mode=mode,
                    pull_url=f"sim://{node_uuid}" if mode == "pull" else None,
                    interval_s=profile.report_interval_s,
                )
            except Exception as exc:
                if not attach or node_uuid not in self.mesh.store.nodes:
                    raise FleetError(f"node {node_uuid} already registered") from exc
                # attach to the pre-registered node, keeping its existing token
                token = self.mesh.tokens.get(node_uuid, token)
                self.mesh.tokens[node_uuid] = token
                self.mesh.sources[node_uuid] = NodeSource(
                    node_uuid,
                    mode=mode,
                    pull_url=f"sim://{node_uuid}" if mode == "pull" else None,
                    interval_s=profile.report_interval_s,
                    auth_token=token,
                )
            self.nodes[node_uuid] = SimNode(
                uuid=node_uuid,
                token=token,
                mode=mode,
                interval_s=profile.report_interval_s,
                modules=tuple(profile.modules),
                wrap_mod=2**profile.wrap_width_bits,
                reboot_probability=profile.reboot_probability,
                rng=random.Random(rng.getrandbits(64)),
                next_report=clock() + profile.report_interval_s,
            )
        # ring topology gives the graph stream something to show
        for i, node_uuid in enumerate(uuids):
            if len(uuids) > 1 and "core.topology" in profile.modules:
                self.nodes[node_uuid].neighbors = [uuids[(i + 1) % len(uuids)]]
        self.mesh.telemetry.register_fetcher("sim", self._serve_pull)

    # -- transports -----------------------------------------------------------

    def _serve_pull(self, url: str, timeout: float) -> bytes:
        node_uuid = url.removeprefix("sim://")
        node = self.nodes.get(node_uuid)
        if node is None or not node.online:
            raise ConnectionRefusedError(f"agent {url} not responding")
        raw = self.latest.get(node_uuid)
        if raw is None:
            # first contact before the first scheduled report: compile state now
            self._emit(node, self.clock())
            raw = self.latest[node_uuid]
        return raw

    def set_offline(self, node_uuid: str, offline: bool = True) -> None:
        self.nodes[node_uuid].online = not offline

    # -- time ---------------------------------------------------------------

    def _emit(self, node: SimNode, now: float) -> None:
        doc, rebooted = node.step(now)
        raw = json.dumps(doc).encode()
        self.latest[node.uuid] = raw
        self.report_log.append((node.uuid, now, node.uptime, node.counter))
        self._report_times.setdefault(node.uuid, []).append(now)
        if rebooted:
            self.reboot_log.append((node.uuid, now))
        node.next_report = now + node.interval_s
        if node.mode == "push":
            self.push_via(raw, node.token)

    def advance_to(self, t: float) -> None:
        """Emit every due report in time order up to and including t."""
        while True:
            due = [
                n for n in self.nodes.values() if n.online and n.next_report <= t
            ]
            if not due:
                break
            node = min(due, key=lambda n: (n.next_report, n.uuid))
            when = node.next_report
            if self.clock() < when:
                self.clock.set(when)
            self._emit(node, when)

    # -- ground truth ----------------------------------------------------------

    def expected_online(self, at: float, stale_factor: float = 2.0) -> int:
        """Ground-truth reachable count at time `at`, replayed from the log."""
        import bisect

        count = 0
        for node in self.nodes.values():
            times = self._report_times.get(node.uuid, ())
            idx = bisect.bisect_right(times, at)
            if idx == 0:
                continue
            if at - times[idx - 1] <= node.interval_s * stale_factor:
                count += 1
        return count


class FleetDriver:
    """Background thread pacing a simulated fleet against wall time.

    The fleet and the rest of the app share one virtual clock; the driver
    keeps dragging it forward to the current wall time, emitting due reports
    along the way, so demos behave like a live network while tests can drive
    the same fleet deterministically.
    """

    def __init__(self, fleet: SimFleet, period_s: float = 0.5):
        import threading

        self.fleet = fleet
        self.period_s = period_s
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._loop, daemon=True, name="sim-fleet")

    def start(self) -> None:
        self._thread.start()

    def _loop(self) -> None:
        import time

        while not self._stop.is_set():
            now = time.time()
            self.fleet.advance_to(now)
            if self.fleet.clock() < now:
                self.fleet.clock.set(now)
            self._stop.wait(self.period_s)

    def stop(self) -> None:
        self._stop.set()
        self._thread.join(timeout=5)


def run_simulation(
    mesh: MeshApp,
    fleet: SimFleet,
    clock: VirtualClock,
    duration_s: float,
    pipeline: str = "monitoring",
) -> dict:
    """Drive fleet emissions and monitoring runs over virtual time.

    Returns per-run online counts paired with the fleet's ground truth.
    """
    interval = mesh.pipelines[pipeline].interval_s
    t_end = clock() + duration_s
    samples = []
    next_run = clock() + interval
    while next_run <= t_end:
        fleet.advance_to(next_run)
        if clock() < next_run:
            clock.set(next_run)
        report = mesh.run_pipeline(pipeline)
        samples.append(
            {
                "t": next_run,
                "online": mesh_online(mesh),
                "truth": fleet.expected_online(next_run),
                "ok": report.ok,
            }
        )
        next_run += interval
    return {"samples": samples, "runs": len(samples)}


def mesh_online(mesh: MeshApp) -> int:
    streams = mesh.datastream.find_streams({"module": "monitor", "metric": "online-nodes"})
    if not streams:
        return 0
    stream = streams[0]
    return stream.values[-1] if stream.values else 0
