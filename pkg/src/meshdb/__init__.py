"""Desk-scale management substrate for community mesh networks.

Subsystems:

* :mod:`meshdb.registry` -- extensible node configuration/monitoring schema,
  hierarchy-aware queries, form descriptors and declarative defaults.
* :mod:`meshdb.allocator` -- hierarchical buddy allocation of IP prefixes
  with hold-down reservations.
* :mod:`meshdb.firmware` -- device descriptors, platform transformation
  pipeline and firmware bundle builders.
* :mod:`meshdb.telemetry` -- agent status document parsing, push/pull
  ingestion and versioned module dispatch.
* :mod:`meshdb.monitor` -- monitoring runs over network/node processors with
  fusion, parallel per-node execution and scheduling.
* :mod:`meshdb.datastream` -- tagged append-only time series with moment
  downsampling and derived streams.
* :mod:`meshdb.server` -- HTTP service, CLI and simulated node fleet tying
  everything together.
"""

__version__ = "0.1.0"
