"""Device descriptors, platform transformation pipeline and bundle builders."""

from meshdb.firmware.devices import (
    Antenna,
    CyclicInheritanceError,
    DeviceDescriptor,
    DeviceError,
    DeviceRegistry,
    DuplicateModelError,
    EthernetPort,
    Radio,
    Switch,
    SwitchVlan,
    UnknownModelError,
    UnresolvedReferenceError,
)
from meshdb.firmware.transform import (
    Platform,
    PlatformConfig,
    PlatformRegistry,
    Section,
    TransformError,
    TransformFailed,
    TransformModule,
    UnknownPlatformError,
    build_default_platforms,
)
from meshdb.firmware.build import (
    BuildQueue,
    Builder,
    FirmwareBundle,
    NoBuilderError,
    ValidationFailedError,
)

__all__ = [
    "Antenna",
    "BuildQueue",
    "Builder",
    "CyclicInheritanceError",
    "DeviceDescriptor",
    "DeviceError",
    "DeviceRegistry",
    "DuplicateModelError",
    "EthernetPort",
    "FirmwareBundle",
    "NoBuilderError",
    "Platform",
    "PlatformConfig",
    "PlatformRegistry",
    "Radio",
    "Section",
    "Switch",
    "SwitchVlan",
    "TransformError",
    "TransformFailed",
    "TransformModule",
    "UnknownModelError",
    "UnknownPlatformError",
    "UnresolvedReferenceError",
    "ValidationFailedError",
    "build_default_platforms",
]
