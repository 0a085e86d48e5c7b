"""Monitoring runs: processors over a working set and a shared context.

A run threads two pieces of state through an ordered processor list.
Network processors receive the whole working set plus the context and may
replace both; they are sequential barriers.  Node processors run once per
working-set node and may only write their own node's context partition,
which is what makes their parallel execution deterministic.  Consecutive
node processors are fused into one group executed per node, so each node's
slice of the pipeline runs back to back on a single worker.

An exception inside one node's processor is captured in the run report and
never disturbs other nodes; an exception in a network processor aborts the
remainder of the run because its output would have been the next stage's
input.
"""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Iterator, Optional


class MonitorError(Exception):
    code = "monitor-error"


class DuplicatePipelineError(MonitorError):
    code = "duplicate-name"


class WorkingSet:
    """Ordered set of node uuids; duplicates are impossible."""

    def __init__(self, nodes: Iterable[str] = ()):
        self._nodes: dict[str, None] = dict.fromkeys(nodes)

    def add(self, node: str) -> None:
        self._nodes.setdefault(node)

    def remove(self, node: str) -> None:
        self._nodes.pop(node, None)

    def __iter__(self) -> Iterator[str]:
        return iter(self._nodes)

    def __contains__(self, node: str) -> bool:
        return node in self._nodes

    def __len__(self) -> int:
        return len(self._nodes)

    def snapshot(self) -> tuple[str, ...]:
        return tuple(self._nodes)

    def __eq__(self, other) -> bool:
        return isinstance(other, WorkingSet) and self.snapshot() == other.snapshot()


class Context:
    """Global namespace plus one private partition per node."""

    def __init__(self) -> None:
        self.global_ns: dict[str, Any] = {}
        self.per_node: dict[str, dict[str, Any]] = {}

    def node_partition(self, node: str) -> dict[str, Any]:
        return self.per_node.setdefault(node, {})

    def view(self, node: str) -> "NodeContextView":
        return NodeContextView(self, node)


class NodeContextView:
    """What a node processor sees: read-only globals, its own partition."""

    __slots__ = ("_ctx", "node")

    def __init__(self, ctx: Context, node: str):
        self._ctx = ctx
        self.node = node

    def get_global(self, key: str, default: Any = None) -> Any:
        return self._ctx.global_ns.get(key, default)

    def get(self, key: str, default: Any = None) -> Any:
        return self._ctx.node_partition(self.node).get(key, default)

    def __getitem__(self, key: str) -> Any:
        return self._ctx.node_partition(self.node)[key]

    def __setitem__(self, key: str, value: Any) -> None:
        self._ctx.node_partition(self.node)[key] = value

    def __contains__(self, key: str) -> bool:
        return key in self._ctx.node_partition(self.node)


class NetworkProcessor:
    """Runs once per stage with the full working set; may replace W and C."""

    kind = "network"
    name = "network"

    def process(self, working_set: WorkingSet, context: Context) -> tuple[WorkingSet, Context]:
        raise NotImplementedError


class NodeProcessor:
    """Runs per node; writes only through the node's context view."""

    kind = "node"
    name = "node"

    def process(self, node: str, view: NodeContextView) -> None:
        raise NotImplementedError


def network_processor(name: str):
    """Wrap a (working_set, context) -> (working_set, context) function."""

    def deco(fn: Callable) -> NetworkProcessor:
        proc = NetworkProcessor()
        proc.name = name
        proc.process = fn  # type: ignore[method-assign]
        return proc

    return deco


def node_processor(name: str):
    def deco(fn: Callable) -> NodeProcessor:
        proc = NodeProcessor()
        proc.name = name
        proc.process = fn  # type: ignore[method-assign]
        return proc

    return deco


@dataclass
class Pipeline:
    name: str
    processors: list
    interval_s: int = 60

    def __post_init__(self):
        if not self.name:
            raise MonitorError("pipeline needs a nonempty name")
        if self.interval_s < 1:
            raise MonitorError("pipeline interval must be at least 1s")


@dataclass
class ExecutionGroup:
    kind: str  # "network" | "node"
    processors: list


def plan(pipeline: Pipeline) -> list[ExecutionGroup]:
    """Fuse maximal runs of consecutive node processors; network ones are barriers."""
    groups: list[ExecutionGroup] = []
    for proc in pipeline.processors:
        if proc.kind == "node" and groups and groups[-1].kind == "node":
            groups[-1].processors.append(proc)
        else:
            groups.append(ExecutionGroup(proc.kind, [proc]))
    return groups


@dataclass
class StageReport:
    processors: list[str]
    kind: str
    duration_s: float
    ws_before: int
    ws_after: int


@dataclass
class RunReport:
    pipeline: str
    started_at: float
    finished_at: float = 0.0
    stages: list[StageReport] = field(default_factory=list)
    node_errors: list[dict] = field(default_factory=list)
    aborted_by: Optional[str] = None
    skipped: bool = False

    @property
    def ok(self) -> bool:
        return self.aborted_by is None and not self.skipped

    def to_dict(self) -> dict:
        return {
            "pipeline": self.pipeline,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "stages": [
                {
                    "processors": s.processors,
                    "kind": s.kind,
                    "duration_s": s.duration_s,
                    "ws_before": s.ws_before,
                    "ws_after": s.ws_after,
                }
                for s in self.stages
            ],
            "node_errors": self.node_errors,
            "aborted_by": self.aborted_by,
            "skipped": self.skipped,
        }


def run(
    pipeline: Pipeline,
    initial_context: Optional[Context] = None,
    max_workers: int = 8,
    clock: Callable[[], float] = time.time,
) -> RunReport:
    """Execute one monitoring run: fused plan, parallel node groups."""
    report = RunReport(pipeline.name, started_at=clock())
    working_set = WorkingSet()
    context = initial_context if initial_context is not None else Context()
    groups = plan(pipeline)
    with ThreadPoolExecutor(max_workers=max_workers, thread_name_prefix="node-proc") as pool:
        for group in groups:
            names = [p.name for p in group.processors]
            before = len(working_set)
            t0 = time.perf_counter()
            if group.kind == "network":
                processor = group.processors[0]
                try:
                    working_set, context = processor.process(working_set, context)
                except Exception as exc:  # noqa: BLE001 - recorded, aborts the run
                    report.aborted_by = processor.name
                    report.node_errors.append(
                        {"node": None, "processor": processor.name, "error": str(exc)}
                    )
                    report.stages.append(
                        StageReport(names, "network", time.perf_counter() - t0, before, before)
                    )
                    break
            else:
                snapshot = working_set.snapshot()
                errors = _run_node_group(group, snapshot, context, pool)
                report.node_errors.extend(errors)
                assert working_set.snapshot() == snapshot, (
                    "node processors must not alter the working set"
                )
            report.stages.append(
                StageReport(
                    names, group.kind, time.perf_counter() - t0, before, len(working_set)
                )
            )
    report.finished_at = clock()
    return report


def _run_node_group(group, snapshot, context, pool) -> list[dict]:
    errors: list[dict] = []
    lock = threading.Lock()

    def run_node(node: str) -> None:
        view = context.view(node)
        for processor in group.processors:
            try:
                processor.process(node, view)
            except Exception as exc:  # noqa: BLE001 - isolate per node
                with lock:
                    errors.append(
                        {"node": node, "processor": processor.name, "error": str(exc)}
                    )

    list(pool.map(run_node, snapshot))
    return errors


# -- scheduling ------------------------------------------------------------------


def simulate_schedule(
    pipelines: list[Pipeline],
    until_s: float,
    durations: Optional[dict[str, float]] = None,
) -> dict[str, dict]:
    """Deterministic virtual-clock schedule: fire times and skipped ticks.

    Each pipeline is due every `interval_s` starting at t=interval_s; a tick
    due while the previous run of the same pipeline is still busy is skipped.
    Distinct pipelines never interfere.
    """
    _check_names(pipelines)
    durations = durations or {}
    out = {}
    for pipeline in pipelines:
        fires, skipped = [], []
        busy_until = 0.0
        due = float(pipeline.interval_s)
        while due <= until_s:
            if due < busy_until:
                skipped.append(due)
            else:
                fires.append(due)
                busy_until = due + durations.get(pipeline.name, 0.0)
            due += pipeline.interval_s
        out[pipeline.name] = {"fires": fires, "skipped": skipped}
    return out


def _check_names(pipelines: list[Pipeline]) -> None:
    names = [p.name for p in pipelines]
    if len(names) != len(set(names)):
        raise DuplicatePipelineError(f"pipeline names must be distinct: {names}")


class Scheduler:
    """Wall-clock scheduler; overlapping runs of one pipeline are skipped."""

    def __init__(
        self,
        pipelines: list[Pipeline],
        runner: Callable[[Pipeline], RunReport] = run,
        poll_s: float = 0.2,
        max_reports: int = 1000,
    ):
        _check_names(pipelines)
        self.pipelines = list(pipelines)
        self.runner = runner
        self.poll_s = poll_s
        self.reports: list[RunReport] = []
        self._max_reports = max_reports
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self._inflight: set[str] = set()
        self._pool = ThreadPoolExecutor(max_workers=max(len(pipelines), 1) or 1)

    def start(self) -> None:
        if self._thread is not None:
            return
        self._thread = threading.Thread(target=self._loop, daemon=True, name="scheduler")
        self._thread.start()

    def _loop(self) -> None:
        next_due = {p.name: time.monotonic() + p.interval_s for p in self.pipelines}
        while not self._stop.is_set():
            now = time.monotonic()
            for pipeline in self.pipelines:
                if now < next_due[pipeline.name]:
                    continue
                next_due[pipeline.name] = now + pipeline.interval_s
                with self._lock:
                    if pipeline.name in self._inflight:
                        report = RunReport(pipeline.name, started_at=time.time())
                        report.finished_at = report.started_at
                        report.skipped = True
                        self._record(report)
                        continue
                    self._inflight.add(pipeline.name)
                self._pool.submit(self._run_one, pipeline)
            self._stop.wait(self.poll_s)

    def _run_one(self, pipeline: Pipeline) -> None:
        try:
            report = self.runner(pipeline)
        except Exception as exc:  # noqa: BLE001 - scheduler must survive
            report = RunReport(pipeline.name, started_at=time.time())
            report.finished_at = time.time()
            report.aborted_by = str(exc)
        with self._lock:
            self._inflight.discard(pipeline.name)
        self._record(report)

    def _record(self, report: RunReport) -> None:
        with self._lock:
            self.reports.append(report)
            if len(self.reports) > self._max_reports:
                del self.reports[: -self._max_reports]

    def stop(self) -> None:
        """Graceful: in-flight runs drain before the pool shuts down."""
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
        self._pool.shutdown(wait=True)
