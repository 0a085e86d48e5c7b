"""Tagged append-only time-series store with moment downsampling and derived streams.

Datapoints enter a stream only at its highest granularity and are rolled up
into coarser epoch-aligned buckets that keep count, sum, sum of squares,
mean, min, max and (population) standard deviation.  Interactive band plots
can therefore query a bounded number of records for any zoom level, while raw
history is never discarded.

Streams may also be derived from other streams:

* ``reset`` emits an event whenever a monotone source (device uptime) drops,
* ``counter_derivative`` turns a wrapping counter into a rate, inserting a
  null whenever a reset event falls inside the sampling interval so reboots
  are not misread as counter wraps,
* ``sum`` adds several aligned streams pointwise, emitting null for buckets
  where any source is missing.

Derived points are produced while data streams in; a derived stream never
accepts external appends.
"""

from __future__ import annotations

import bisect
import json
import math
import threading
from dataclasses import dataclass
from typing import Any, Iterable, Iterator, Optional

#: Bucket lengths in seconds, ordered finest to coarsest; epoch aligned.
GRANULARITY_LADDER = (10, 60, 300, 1800, 10800, 86400)

GRANULARITY_NAMES = {
    "10s": 10,
    "1min": 60,
    "5min": 300,
    "30min": 1800,
    "3h": 10800,
    "1d": 86400,
}

_NAME_BY_SECONDS = {v: k for k, v in GRANULARITY_NAMES.items()}


def parse_granularity(value: int | str) -> int:
    """Accept either a ladder name ("30min") or its length in seconds."""
    if isinstance(value, str):
        if value in GRANULARITY_NAMES:
            return GRANULARITY_NAMES[value]
        if value.isdigit():
            value = int(value)
        else:
            raise UnknownGranularityError(value)
    if value not in GRANULARITY_LADDER:
        raise UnknownGranularityError(value)
    return int(value)


def granularity_name(seconds: int) -> str:
    return _NAME_BY_SECONDS[seconds]


class DatastreamError(Exception):
    code = "datastream-error"


class UnknownGranularityError(DatastreamError):
    code = "unknown-granularity"


class UnknownStreamError(DatastreamError):
    code = "unknown-stream"


class TagConflictError(DatastreamError):
    code = "tag-conflict"


class OutOfOrderTimestampError(DatastreamError):
    code = "out-of-order-timestamp"


class TypeMismatchError(DatastreamError):
    code = "type-mismatch"


class AppendToDerivedError(DatastreamError):
    code = "append-to-derived"


class GranularityTooFineError(DatastreamError):
    code = "granularity-finer-than-stream"


class GranularityMismatchError(DatastreamError):
    code = "granularity-mismatch"


@dataclass
class AggregateBucket:
    """Moment summary of the raw points falling into one time bucket."""

    bucket_ts: float
    count: int
    sum: float
    sum_squares: float
    mean: float
    min: float
    max: float
    stddev: float

    @classmethod
    def from_values(cls, bucket_ts: float, values: list) -> "AggregateBucket":
        count = len(values)
        total = sum(values)
        squares = sum(v * v for v in values)
        mean = total / count
        # Population variance; clamp tiny negative round-off.
        variance = max(squares / count - mean * mean, 0.0)
        return cls(
            bucket_ts=bucket_ts,
            count=count,
            sum=total,
            sum_squares=squares,
            mean=mean,
            min=min(values),
            max=max(values),
            stddev=math.sqrt(variance),
        )

    def to_record(self) -> dict:
        return {
            "t": self.bucket_ts,
            "c": self.count,
            "s": self.sum,
            "ss": self.sum_squares,
            "m": self.mean,
            "l": self.min,
            "u": self.max,
            "d": self.stddev,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "AggregateBucket":
        return cls(
            bucket_ts=rec["t"],
            count=rec["c"],
            sum=rec["s"],
            sum_squares=rec["ss"],
            mean=rec["m"],
            min=rec["l"],
            max=rec["u"],
            stddev=rec["d"],
        )


def validate_graph(value: Any) -> None:
    if not isinstance(value, dict) or "nodes" not in value or "edges" not in value:
        raise TypeMismatchError("graph value must be {'nodes': [...], 'edges': [...]}")
    ids = set()
    for node in value["nodes"]:
        if not isinstance(node, dict) or "id" not in node:
            raise TypeMismatchError("graph nodes need an 'id'")
        ids.add(node["id"])
    for edge in value["edges"]:
        if edge.get("from") not in ids or edge.get("to") not in ids:
            raise TypeMismatchError("graph edge endpoints must exist in nodes")


class Stream:
    """One independent append-only time series plus its rollup state."""

    __slots__ = (
        "stream_id",
        "tags",
        "value_type",
        "highest_granularity",
        "downsample_horizon",
        "derived_spec",
        "timestamps",
        "values",
        "buckets",
        "derive_state",
        "source_coverage",
    )

    def __init__(
        self,
        stream_id: int,
        tags: dict,
        value_type: str,
        highest_granularity: int,
        derived_spec: Optional[dict] = None,
    ):
        self.stream_id = stream_id
        self.tags = dict(tags)
        self.value_type = value_type
        self.highest_granularity = highest_granularity
        self.downsample_horizon: Optional[float] = None
        self.derived_spec = derived_spec
        self.timestamps: list[float] = []
        self.values: list[Any] = []
        # granularity seconds -> ordered bucket list (AggregateBucket or
        # (ts, graph snapshot) for graph streams)
        self.buckets: dict[int, list] = {}
        # per-operator incremental state, JSON-serializable
        self.derive_state: dict = {}
        # Latest source timestamp a derived stream has processed.  Consumers
        # (counter derivative) use it to know which intervals are settled.
        self.source_coverage: Optional[float] = None

    @property
    def is_derived(self) -> bool:
        return self.derived_spec is not None

    @property
    def last_ts(self) -> Optional[float]:
        return self.timestamps[-1] if self.timestamps else None

    def points_between(self, frm: float, to: float) -> list[tuple[float, Any]]:
        """Raw points with frm <= ts < to."""
        lo = bisect.bisect_left(self.timestamps, frm)
        hi = bisect.bisect_left(self.timestamps, to)
        return list(zip(self.timestamps[lo:hi], self.values[lo:hi]))

    def describe(self) -> dict:
        return {
            "id": self.stream_id,
            "tags": dict(self.tags),
            "value_type": self.value_type,
            "highest_granularity": granularity_name(self.highest_granularity),
            "downsample_horizon": self.downsample_horizon,
            "derived": dict(self.derived_spec) if self.derived_spec else None,
            "points": len(self.timestamps),
        }


def bucket_start(ts: float, granularity: int) -> float:
    return math.floor(ts / granularity) * granularity


class DataStream:
    """Store of tagged streams with lookup-or-create, rollups and derivation."""

    def __init__(self) -> None:
        self._lock = threading.RLock()
        self._streams: dict[int, Stream] = {}
        self._by_tags: dict[frozenset, int] = {}
        self._tag_index: dict[tuple[str, str], set[int]] = {}
        self._dependents: dict[int, list[int]] = {}
        self._next_id = 1

    # -- stream management -------------------------------------------------

    def ensure_stream(
        self,
        tags: dict,
        value_type: str = "numeric",
        highest_granularity: int | str = 10,
        derived_spec: Optional[dict] = None,
    ) -> int:
        """Return the stream with exactly these tags, creating it if needed."""
        if not tags:
            raise DatastreamError("tags must be nonempty")
        if value_type not in ("numeric", "graph"):
            raise TypeMismatchError(f"unknown value type {value_type!r}")
        granularity = parse_granularity(highest_granularity)
        key = frozenset((str(k), str(v)) for k, v in tags.items())
        with self._lock:
            existing = self._by_tags.get(key)
            if existing is not None:
                stream = self._streams[existing]
                if stream.value_type != value_type:
                    raise TagConflictError(
                        f"stream {existing} exists with value_type {stream.value_type}"
                    )
                if stream.highest_granularity != granularity:
                    raise TagConflictError(
                        f"stream {existing} exists with granularity "
                        f"{granularity_name(stream.highest_granularity)}"
                    )
                if (stream.derived_spec or None) != (derived_spec or None):
                    raise TagConflictError(f"stream {existing} has a different derivation")
                return existing
            if derived_spec is not None:
                self._check_derived_spec(derived_spec, granularity)
            stream_id = self._next_id
            self._next_id += 1
            stream = Stream(stream_id, tags, value_type, granularity, derived_spec)
            self._register(stream, key)
            return stream_id

    def _register(self, stream: Stream, key: frozenset) -> None:
        self._streams[stream.stream_id] = stream
        self._by_tags[key] = stream.stream_id
        for kv in key:
            self._tag_index.setdefault(kv, set()).add(stream.stream_id)
        if stream.derived_spec:
            for src in stream.derived_spec["sources"]:
                self._dependents.setdefault(src, []).append(stream.stream_id)

    def _check_derived_spec(self, spec: dict, granularity: int) -> None:
        op = spec.get("operator")
        sources = spec.get("sources", [])
        for src in sources:
            if src not in self._streams:
                raise UnknownStreamError(f"derivation source {src} does not exist")
        if op == "reset":
            if len(sources) != 1:
                raise DatastreamError("reset takes exactly one source")
        elif op == "counter_derivative":
            if len(sources) != 2:
                raise DatastreamError(
                    "counter_derivative takes [counter stream, reset-event stream]"
                )
            if not spec.get("params", {}).get("max_value"):
                raise DatastreamError("counter_derivative needs params.max_value > 0")
        elif op == "sum":
            if len(sources) < 2:
                raise DatastreamError("sum takes at least two sources")
            for src in sources:
                stream = self._streams[src]
                if stream.value_type != "numeric":
                    raise TypeMismatchError("sum sources must be numeric")
                if stream.highest_granularity != granularity:
                    raise GranularityMismatchError(
                        "sum sources must share the highest granularity"
                    )
        else:
            raise DatastreamError(f"unknown derivation operator {op!r}")

    def get(self, stream_id: int) -> Stream:
        try:
            return self._streams[stream_id]
        except KeyError:
            raise UnknownStreamError(f"no stream {stream_id}") from None

    def find_streams(self, tags: dict) -> list[Stream]:
        """All streams whose tag map contains `tags` as a subset."""
        with self._lock:
            if not tags:
                return list(self._streams.values())
            sets = []
            for k, v in tags.items():
                ids = self._tag_index.get((str(k), str(v)))
                if not ids:
                    return []
                sets.append(ids)
            hits = set.intersection(*sets)
            return [self._streams[i] for i in sorted(hits)]

    # -- derived stream helpers --------------------------------------------

    def derive_reset(self, source_id: int, tags: dict) -> int:
        """Event stream marking every decrease of a monotone source."""
        source = self.get(source_id)
        return self.ensure_stream(
            tags,
            "numeric",
            source.highest_granularity,
            derived_spec={"operator": "reset", "sources": [source_id], "params": {}},
        )

    def derive_counter(
        self, counter_id: int, reset_id: int, max_value: int, tags: dict
    ) -> int:
        """Rate stream from a wrapping counter guarded by a reset-event stream."""
        counter = self.get(counter_id)
        self.get(reset_id)
        if max_value <= 0:
            raise DatastreamError("max_value must be positive")
        return self.ensure_stream(
            tags,
            "numeric",
            counter.highest_granularity,
            derived_spec={
                "operator": "counter_derivative",
                "sources": [counter_id, reset_id],
                "params": {"max_value": max_value},
            },
        )

    def derive_sum(self, source_ids: list[int], tags: dict) -> int:
        if len(source_ids) < 2:
            raise DatastreamError("sum takes at least two sources")
        granularity = self.get(source_ids[0]).highest_granularity
        return self.ensure_stream(
            tags,
            "numeric",
            granularity,
            derived_spec={"operator": "sum", "sources": list(source_ids), "params": {}},
        )

    # -- appends and streaming derivation ----------------------------------

    def append(self, stream_id: int, ts: float, value: Any) -> None:
        with self._lock:
            stream = self.get(stream_id)
            if stream.is_derived:
                raise AppendToDerivedError(
                    f"stream {stream_id} is derived and rejects external appends"
                )
            self._append(stream, ts, value)

    def _append(self, stream: Stream, ts: float, value: Any) -> None:
        if stream.timestamps and ts <= stream.timestamps[-1]:
            raise OutOfOrderTimestampError(
                f"ts {ts} not after last {stream.timestamps[-1]} on stream {stream.stream_id}"
            )
        if stream.value_type == "numeric":
            if value is not None and not isinstance(value, (int, float)):
                raise TypeMismatchError(f"numeric stream got {type(value).__name__}")
            if value is not None and isinstance(value, float) and math.isnan(value):
                raise TypeMismatchError("NaN is not storable; use null in derived streams")
            if value is None and not stream.is_derived:
                raise TypeMismatchError("null values only appear in derived streams")
        else:
            validate_graph(value)
        stream.timestamps.append(ts)
        stream.values.append(value)
        self._propagate(stream, ts, value)

    def _propagate(self, source: Stream, ts: float, value: Any) -> None:
        for dep_id in self._dependents.get(source.stream_id, ()):  # streaming fan-out
            dep = self._streams[dep_id]
            op = dep.derived_spec["operator"]
            if op == "reset":
                self._feed_reset(dep, ts, value)
            elif op == "counter_derivative":
                self._feed_counter(dep, source.stream_id, ts, value)
            elif op == "sum":
                self._feed_sum(dep, source.stream_id, ts, value)

    def _feed_reset(self, dep: Stream, ts: float, value: Any) -> None:
        state = dep.derive_state
        prev = state.get("prev")
        if prev is not None and value is not None and value < prev:
            self._append(dep, ts, 1)
        if value is not None:
            state["prev"] = value
        dep.source_coverage = ts
        # A settled reset source may settle pending counter intervals.
        for consumer_id in self._dependents.get(dep.stream_id, ()):
            consumer = self._streams[consumer_id]
            if consumer.derived_spec["operator"] == "counter_derivative":
                self._drain_counter(consumer)

    def _feed_counter(self, dep: Stream, source_id: int, ts: float, value: Any) -> None:
        counter_id, reset_id = dep.derived_spec["sources"]
        if source_id == counter_id:
            dep.derive_state.setdefault("pending", []).append([ts, value])
        self._drain_counter(dep)

    def _reset_coverage(self, reset_stream: Stream) -> Optional[float]:
        if reset_stream.is_derived:
            return reset_stream.source_coverage
        return reset_stream.last_ts

    def _drain_counter(self, dep: Stream) -> None:
        counter_id, reset_id = dep.derived_spec["sources"]
        reset_stream = self._streams[reset_id]
        max_value = dep.derived_spec["params"]["max_value"]
        state = dep.derive_state
        pending = state.setdefault("pending", [])
        coverage = self._reset_coverage(reset_stream)
        while pending:
            t1, v1 = pending[0]
            if coverage is None or coverage < t1:
                break  # reset knowledge does not reach this sample yet
            pending.pop(0)
            prev = state.get("prev")
            state["prev"] = [t1, v1]
            if prev is None:
                continue
            t0, v0 = prev
            lo = bisect.bisect_right(reset_stream.timestamps, t0)
            hi = bisect.bisect_right(reset_stream.timestamps, t1)
            if hi > lo:  # a reset event inside (t0, t1]
                self._append(dep, t1, None)
            elif v1 >= v0:
                self._append(dep, t1, (v1 - v0) / (t1 - t0))
            else:  # classified as a counter wrap
                self._append(dep, t1, (max_value - v0 + v1) / (t1 - t0))

    def _feed_sum(self, dep: Stream, source_id: int, ts: float, value: Any) -> None:
        g = dep.highest_granularity
        sources = dep.derived_spec["sources"]
        partial = dep.derive_state.setdefault("partial", {})
        b = bucket_start(ts, g)
        partial.setdefault(str(int(b)), {})[str(source_id)] = value
        # A bucket settles once no source can still produce a point inside it;
        # every source only ever appends after its own last timestamp.
        lasts = [self._streams[s].last_ts for s in sources]
        if any(last is None for last in lasts):
            return
        floor = min(lasts)
        for key in sorted(partial, key=float):
            b0 = float(key)
            if b0 + g > floor:
                break
            entry = partial.pop(key)
            if len(entry) == len(sources) and all(v is not None for v in entry.values()):
                self._append(dep, b0, sum(entry.values()))
            else:
                self._append(dep, b0, None)

    # -- downsampling -------------------------------------------------------

    def downsample(self, stream_id: int, up_to_ts: float) -> int:
        """Roll complete buckets up to `up_to_ts` into every coarser granularity.

        A bucket is rolled up only once its end lies at or before the last
        appended timestamp, since later appends are guaranteed to be newer.
        Returns the number of buckets written.
        """
        with self._lock:
            stream = self.get(stream_id)
            if stream.last_ts is None:
                return 0
            effective = min(up_to_ts, stream.last_ts)
            horizon = stream.downsample_horizon
            if horizon is not None and effective <= horizon:
                return 0
            written = 0
            for g in GRANULARITY_LADDER:
                if g <= stream.highest_granularity:
                    continue
                written += self._downsample_granularity(stream, g, horizon, effective)
            stream.downsample_horizon = effective
            return written

    def _downsample_granularity(
        self, stream: Stream, g: int, horizon: Optional[float], up_to: float
    ) -> int:
        out = stream.buckets.setdefault(g, [])
        # Complete buckets satisfy horizon < bucket_end <= up_to; empty
        # buckets are simply absent, so walk only the stored points.
        if horizon is None:
            first_b = bucket_start(stream.timestamps[0], g)
        else:
            first_b = bucket_start(horizon, g)
        last_end = bucket_start(up_to, g)  # largest bucket end <= up_to
        if last_end - g < first_b:
            return 0
        ts = stream.timestamps
        lo = bisect.bisect_left(ts, first_b)
        hi = bisect.bisect_left(ts, last_end)
        written = 0
        idx = lo
        while idx < hi:
            b0 = bucket_start(ts[idx], g)
            j = bisect.bisect_left(ts, b0 + g, idx, hi)
            if stream.value_type == "numeric":
                vals = [v for v in stream.values[idx:j] if v is not None]
                if vals:
                    out.append(AggregateBucket.from_values(b0, vals))
                    written += 1
            else:
                out.append((b0, stream.values[j - 1]))  # last snapshot wins
                written += 1
            idx = j
        return written

    # -- queries ------------------------------------------------------------

    def query_datapoints(
        self, stream_id: int, granularity: int | str, frm: float, to: float
    ) -> list:
        """Raw points at the highest granularity, buckets at coarser ones; [frm, to)."""
        g = parse_granularity(granularity)
        with self._lock:
            stream = self.get(stream_id)
            if g < stream.highest_granularity:
                raise GranularityTooFineError(
                    f"stream stores {granularity_name(stream.highest_granularity)} at finest"
                )
            if g == stream.highest_granularity:
                return stream.points_between(frm, to)
            rows = stream.buckets.get(g, [])
            if stream.value_type == "numeric":
                return [b for b in rows if frm <= b.bucket_ts < to]
            return [(ts, snap) for ts, snap in rows if frm <= ts < to]

    def export_records(self, stream_ids: Optional[Iterable[int]] = None) -> Iterator[dict]:
        """Line-delimited export of raw points, one record per datapoint."""
        ids = sorted(stream_ids) if stream_ids is not None else sorted(self._streams)
        for sid in ids:
            stream = self._streams[sid]
            for ts, value in zip(stream.timestamps, stream.values):
                yield {"stream": sid, "tags": stream.tags, "t": ts, "v": value}

    # -- persistence ----------------------------------------------------------

    def to_dict(self) -> dict:
        with self._lock:
            streams = []
            for stream in self._streams.values():
                streams.append(
                    {
                        "id": stream.stream_id,
                        "tags": stream.tags,
                        "value_type": stream.value_type,
                        "highest_granularity": stream.highest_granularity,
                        "downsample_horizon": stream.downsample_horizon,
                        "derived_spec": stream.derived_spec,
                        "points": [list(p) for p in zip(stream.timestamps, stream.values)],
                        "buckets": {
                            str(g): [
                                b.to_record() if isinstance(b, AggregateBucket) else list(b)
                                for b in rows
                            ]
                            for g, rows in stream.buckets.items()
                        },
                        "derive_state": stream.derive_state,
                        "source_coverage": stream.source_coverage,
                    }
                )
            return {"next_id": self._next_id, "streams": streams}

    @classmethod
    def from_dict(cls, data: dict) -> "DataStream":
        store = cls()
        store._next_id = data["next_id"]
        for rec in data["streams"]:
            stream = Stream(
                rec["id"],
                rec["tags"],
                rec["value_type"],
                rec["highest_granularity"],
                rec["derived_spec"],
            )
            stream.downsample_horizon = rec["downsample_horizon"]
            for ts, value in rec["points"]:
                stream.timestamps.append(ts)
                stream.values.append(value)
            for g, rows in rec["buckets"].items():
                if stream.value_type == "numeric":
                    stream.buckets[int(g)] = [AggregateBucket.from_record(r) for r in rows]
                else:
                    stream.buckets[int(g)] = [tuple(r) for r in rows]
            stream.derive_state = rec["derive_state"]
            stream.source_coverage = rec["source_coverage"]
            key = frozenset((str(k), str(v)) for k, v in stream.tags.items())
            store._register(stream, key)
        return store

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path: str) -> "DataStream":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))
