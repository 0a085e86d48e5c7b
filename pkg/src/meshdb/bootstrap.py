"""Base schema and stock component wiring.

Registers the minimal platform-independent configuration schema (node name,
device selection, interfaces, wireless virtual interfaces), the monitoring
schema populated from telemetry, the extension-point choices, the packaged
device descriptors and the stock runtime platforms.  Communities would grow
their own schema from here; everything below is itself just a set of
registrations.
"""

from __future__ import annotations

import importlib.resources

from meshdb.firmware.devices import DeviceRegistry
from meshdb.firmware.transform import PlatformRegistry, build_default_platforms
from meshdb.registry.schema import FieldSpec, Registry, SchemaItem
from meshdb.registry.store import CONFIG_POINT, MONITORING_POINT, RegistryStore

DEVICE_CHOICE_POINT = "core.general#device"
PLATFORM_CHOICE_POINT = "core.general#platform"


def build_registry() -> Registry:
    """Registration points, base schema items and extension-point choices."""
    registry = Registry()
    registry.create_point(CONFIG_POINT)
    registry.create_point(MONITORING_POINT)

    registry.register_item(
        CONFIG_POINT,
        SchemaItem(
            name="InfoConfig",
            registry_id="info",
            fields=[FieldSpec("name", "string", required=True)],
        ),
    )
    registry.register_item(
        CONFIG_POINT,
        SchemaItem(
            name="ExtendedInfoConfig",
            parent="InfoConfig",
            fields=[
                FieldSpec("device", "choice", choice_point=DEVICE_CHOICE_POINT),
                FieldSpec("version", "integer"),
            ],
        ),
    )
    registry.register_item(
        CONFIG_POINT,
        SchemaItem(
            name="ProjectConfig",
            registry_id="core.project",
            fields=[FieldSpec("project", "string")],
        ),
    )
    registry.register_item(
        CONFIG_POINT,
        SchemaItem(
            name="PlatformSelection",
            registry_id="core.platform",
            fields=[
                FieldSpec(
                    "platform",
                    "choice",
                    choice_point=PLATFORM_CHOICE_POINT,
                    default="openwrt",
                )
            ],
        ),
    )
    registry.register_item(
        CONFIG_POINT,
        SchemaItem(name="InterfaceConfig", registry_id="core.interfaces", multiplicity="many"),
    )
    registry.register_item(
        CONFIG_POINT,
        SchemaItem(
            name="EthernetInterfaceConfig",
            parent="InterfaceConfig",
            fields=[
                FieldSpec("port", "string", required=True),
                FieldSpec(
                    "role", "choice", choice_point="core.interfaces#role", default="lan"
                ),
            ],
        ),
    )
    registry.register_item(
        CONFIG_POINT,
        SchemaItem(
            name="WifiRadioConfig",
            parent="InterfaceConfig",
            fields=[
                FieldSpec("radio", "string", required=True),
                FieldSpec("channel", "integer"),
            ],
        ),
    )
    registry.register_item(
        CONFIG_POINT,
        SchemaItem(
            name="WifiVifConfig",
            registry_id="core.interfaces.wifi-vif",
            multiplicity="many",
            fields=[
                FieldSpec(
                    "radio", "item-reference", ref_item="core.interfaces", required=True
                ),
                FieldSpec("essid", "string"),
                FieldSpec(
                    "mode", "choice", choice_point="core.interfaces#vif_mode", default="mesh"
                ),
                FieldSpec(
                    "auth", "choice", choice_point="core.interfaces#auth", default="none"
                ),
            ],
        ),
    )

    registry.register_item(
        MONITORING_POINT,
        SchemaItem(
            name="GeneralMonitor",
            registry_id="core.general",
            fields=[
                FieldSpec("uuid", "string", required=True),
                FieldSpec("hostname", "string"),
                FieldSpec("uptime_s", "decimal"),
            ],
        ),
    )
    registry.register_item(
        MONITORING_POINT,
        SchemaItem(
            name="ResourcesMonitor",
            registry_id="core.resources",
            fields=[
                FieldSpec("total_kib", "integer"),
                FieldSpec("free_kib", "integer"),
            ],
        ),
    )
    registry.register_item(
        MONITORING_POINT,
        SchemaItem(
            name="TrafficMonitor",
            registry_id="core.traffic",
            fields=[FieldSpec("tx_bytes", "integer")],
        ),
    )
    registry.register_item(
        MONITORING_POINT,
        SchemaItem(
            name="NeighborMonitor",
            registry_id="core.topology",
            multiplicity="many",
            fields=[FieldSpec("neighbor", "string")],
        ),
    )

    for value, label in (("openwrt", "OpenWrt"), ("routeros", "MikroTik RouterOS")):
        registry.register_choice(PLATFORM_CHOICE_POINT, value, label)
    for value in ("lan", "wan", "mesh"):
        registry.register_choice("core.interfaces#role", value, value.upper())
    for value, label in (("mesh", "Mesh"), ("ap", "Access point"), ("sta", "Station")):
        registry.register_choice("core.interfaces#vif_mode", value, label)
    for value, label in (("none", "Open"), ("psk2", "WPA2-PSK"), ("eap", "WPA2-EAP")):
        registry.register_choice("core.interfaces#auth", value, label)
    return registry


def load_packaged_devices(devices: DeviceRegistry) -> list[str]:
    """Register the device descriptors shipped with the package."""
    root = importlib.resources.files("meshdb.firmware") / "devices"
    import json

    records = [
        json.loads(entry.read_text(encoding="utf-8"))
        for entry in sorted(root.iterdir(), key=lambda e: e.name)
        if entry.name.endswith(".json")
    ]
    return devices.register_all(records)


def register_device_choices(registry: Registry, devices: DeviceRegistry) -> None:
    """Expose every known device model as a selectable choice."""
    known = registry.choice_values(DEVICE_CHOICE_POINT)
    for model_id in devices.models():
        if model_id not in known:
            registry.register_choice(
                DEVICE_CHOICE_POINT, model_id, devices.resolve(model_id).display_name
            )


def default_stack() -> tuple[Registry, RegistryStore, DeviceRegistry, PlatformRegistry]:
    """Registry + store + devices + platforms, wired with the save gate."""
    registry = build_registry()
    store = RegistryStore(registry)
    devices = DeviceRegistry()
    load_packaged_devices(devices)
    register_device_choices(registry, devices)
    platforms = build_default_platforms()
    store.validate_hook = make_validate_hook(devices, platforms)
    return registry, store, devices, platforms


def selected_device(document: dict) -> str | None:
    infos = document.get("info", [])
    return infos[0].get("device") if infos else None


def selected_platform(document: dict) -> str:
    entries = document.get("core.platform", [])
    return (entries[0].get("platform") if entries else None) or "openwrt"


def default_rules() -> list[dict]:
    """Stock context-sensitive defaults: project-scoped wireless ESSIDs.

    Inside the demo project, radios that support several virtual interfaces
    get a mesh plus an access-point network; single-interface radios get mesh
    only.
    """
    clear = {"remove-instances": {"item": "WifiVifConfig"}}
    mesh = {
        "create-instance": {
            "item": "WifiVifConfig",
            "values": {"radio": 0, "essid": "mesh.example.net", "mode": "mesh"},
        }
    }
    ap = {
        "create-instance": {
            "item": "WifiVifConfig",
            "values": {"radio": 0, "essid": "open.example.net", "mode": "ap"},
        }
    }
    return [
        {
            "id": "project-wifi-defaults",
            "when": {"path": "core.project.project", "op": "eq", "value": "demo"},
            "then": [],
            "children": [
                {
                    "id": "multi-vif",
                    "when": {"capability": "multiple-vifs"},
                    "then": [clear, mesh, ap],
                },
                {
                    "id": "single-vif",
                    "when": {"not": {"capability": "multiple-vifs"}},
                    "then": [clear, mesh],
                },
            ],
        }
    ]


def make_validate_hook(devices: DeviceRegistry, platforms: PlatformRegistry):
    """Save gate: dry-run the transformation for the selected device/platform."""
    from meshdb.firmware.transform import UnknownPlatformError
    from meshdb.registry.store import ValidationIssue

    def hook(node, document) -> list[ValidationIssue]:
        model_id = selected_device(document)
        if model_id is None:
            return []  # nothing selected yet; schema checks already passed
        try:
            descriptor = devices.resolve(model_id)
            errors = platforms.validate(document, descriptor, selected_platform(document))
        except UnknownPlatformError as exc:
            return [ValidationIssue(exc.code, "core.platform.0.platform", str(exc))]
        except Exception as exc:  # unknown model and friends
            return [ValidationIssue("validation-errors", "info.0.device", str(exc))]
        return [
            ValidationIssue("validation-errors", e.path, e.message, module=e.module)
            for e in errors
        ]

    return hook
