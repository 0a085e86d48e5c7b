"""HTTP service, service configuration and the simulated node fleet."""

from meshdb.server.config import ConfigError, PipelineDef, PoolDef, ServiceConfig, SimNodeProfile
from meshdb.server.app import MeshApp, create_http_app
from meshdb.server.simfleet import SimFleet, run_simulation

__all__ = [
    "ConfigError",
    "MeshApp",
    "PipelineDef",
    "PoolDef",
    "ServiceConfig",
    "SimFleet",
    "SimNodeProfile",
    "create_http_app",
    "run_simulation",
]
