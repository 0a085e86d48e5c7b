"""Platform-dependent transformation pipeline.

A runtime platform (OpenWrt, RouterOS) is defined by its ordered transform
modules: each module reads the platform-independent configuration plus the
resolved device descriptor and appends sections to the platform configuration
under construction, or emits errors.  All modules run so the user sees the
complete error list at once; any error aborts the transformation without
producing a platform config.  The whole pipeline is a pure function of its
inputs and renders to deterministic text.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from meshdb.firmware.devices import DeviceDescriptor


class UnknownPlatformError(Exception):
    code = "unknown-platform"


@dataclass(frozen=True)
class TransformError:
    module: str
    path: str
    message: str

    def to_dict(self) -> dict:
        return {"module": self.module, "path": self.path, "message": self.message}


class TransformFailed(Exception):
    def __init__(self, errors: list[TransformError]):
        super().__init__(f"{len(errors)} transformation error(s)")
        self.errors = errors


@dataclass
class Section:
    section_type: str
    name: str
    options: dict = field(default_factory=dict)


class PlatformConfig:
    """Ordered sections rendering to deterministic platform-native text."""

    def __init__(self, platform: str, style: str = "uci"):
        self.platform = platform
        self.style = style
        self.sections: list[Section] = []

    def add(self, section_type: str, name: str, **options) -> Section:
        section = Section(section_type, name, dict(options))
        self.sections.append(section)
        return section

    def render(self) -> str:
        if self.style == "uci":
            blocks = []
            for s in self.sections:
                lines = [f"config {s.section_type} '{s.name}'"]
                lines += [f"\toption {k} '{v}'" for k, v in s.options.items()]
                blocks.append("\n".join(lines))
            return "\n\n".join(blocks) + "\n"
        lines = []
        for s in self.sections:
            for k, v in s.options.items():
                lines.append(f"set {s.section_type}.{s.name}.{k}={v}")
        return "\n".join(lines) + "\n"


class TransformModule:
    """One stage of the pipeline; subclasses override apply()."""

    name = "module"
    priority = 50

    def apply(
        self,
        config: dict,
        descriptor: DeviceDescriptor,
        platform: "Platform",
        out: PlatformConfig,
        errors: list[TransformError],
    ) -> None:
        raise NotImplementedError

    def error(self, errors: list[TransformError], path: str, message: str) -> None:
        errors.append(TransformError(self.name, path, message))


@dataclass
class Platform:
    name: str
    packages: frozenset[str]
    render_style: str = "uci"
    modules: list[TransformModule] = field(default_factory=list)

    def add_module(self, module: TransformModule) -> None:
        self.modules.append(module)


class PlatformRegistry:
    def __init__(self) -> None:
        self.platforms: dict[str, Platform] = {}

    def register(self, platform: Platform) -> None:
        self.platforms[platform.name] = platform

    def get(self, name: str) -> Platform:
        try:
            return self.platforms[name]
        except KeyError:
            raise UnknownPlatformError(f"no platform {name!r}") from None

    def transform(
        self, config: dict, descriptor: DeviceDescriptor, platform_name: str
    ) -> PlatformConfig:
        platform = self.get(platform_name)
        out = PlatformConfig(platform.name, platform.render_style)
        errors: list[TransformError] = []
        for module in sorted(platform.modules, key=lambda m: m.priority):
            module.apply(config, descriptor, platform, out, errors)
        if errors:
            raise TransformFailed(errors)
        return out

    def validate(
        self, config: dict, descriptor: DeviceDescriptor, platform_name: str
    ) -> list[TransformError]:
        """Dry run: identical error behavior to transform, output discarded."""
        try:
            self.transform(config, descriptor, platform_name)
        except TransformFailed as exc:
            return exc.errors
        return []


# -- stock modules ------------------------------------------------------------


def _instances(config: dict, registry_id: str, item_name: str):
    for idx, instance in enumerate(config.get(registry_id, [])):
        if instance.get("_item") == item_name:
            yield idx, instance


class SystemTransform(TransformModule):
    name = "system"
    priority = 10

    def apply(self, config, descriptor, platform, out, errors):
        infos = config.get("info", [])
        if infos and infos[0].get("name"):
            out.add("system", "system", hostname=infos[0]["name"])


class NetworkTransform(TransformModule):
    """Maps named Ethernet ports onto the descriptor's switch/VLAN layout."""

    name = "network"
    priority = 20

    def apply(self, config, descriptor, platform, out, errors):
        emitted_vlans: set[tuple[str, int]] = set()
        for idx, iface in _instances(config, "core.interfaces", "EthernetInterfaceConfig"):
            path = f"core.interfaces.{idx}.port"
            port_id = iface.get("port")
            port = descriptor.port(port_id) if port_id else None
            if port is None:
                self.error(
                    errors, path, f"device {descriptor.model_id} has no port {port_id!r}"
                )
                continue
            role = iface.get("role", "lan")
            if port.switch is not None:
                switch = descriptor.switch(port.switch)
                vlan = next(
                    (v for v in switch.vlans if v.vlan_tag == port.vlan_tag), None
                )
                if vlan is None:
                    self.error(
                        errors,
                        path,
                        f"switch {switch.id!r} has no VLAN {port.vlan_tag} for port {port_id!r}",
                    )
                    continue
                if (switch.id, vlan.vlan_tag) not in emitted_vlans:
                    emitted_vlans.add((switch.id, vlan.vlan_tag))
                    out.add(
                        "switch_vlan",
                        f"{switch.id}_vlan{vlan.vlan_tag}",
                        device=switch.id,
                        vlan=vlan.vlan_tag,
                        ports=" ".join(str(p) for p in vlan.member_ports),
                    )
                ifname = f"{switch.id}.{vlan.vlan_tag}"
            else:
                ifname = port.id
            out.add("interface", role, ifname=ifname, role=role)


class WirelessTransform(TransformModule):
    """Radio and virtual-interface configuration with capability validation."""

    name = "wireless"
    priority = 30

    #: wireless auth mode -> packages that must exist on the platform
    auth_packages = {"none": (), "psk2": ("wpad-mini",), "eap": ("wpad-full",)}

    def apply(self, config, descriptor, platform, out, errors):
        vifs = list(enumerate(config.get("core.interfaces.wifi-vif", [])))
        for idx, rcfg in _instances(config, "core.interfaces", "WifiRadioConfig"):
            base = f"core.interfaces.{idx}"
            radio = descriptor.radio(rcfg.get("radio", ""))
            if radio is None:
                self.error(
                    errors,
                    f"{base}.radio",
                    f"device {descriptor.model_id} has no radio {rcfg.get('radio')!r}",
                )
                continue
            channel = rcfg.get("channel")
            if channel is not None and not self._channel_ok(radio, channel):
                self.error(
                    errors,
                    f"{base}.channel",
                    f"radio {radio.id!r} does not support channel {channel} "
                    f"(protocols: {', '.join(radio.protocols)})",
                )
            out.add("wifi-device", radio.id, channel=channel if channel is not None else "auto")
            attached = [(j, v) for j, v in vifs if v.get("radio") == idx]
            if len(attached) > 1 and "multiple-vifs" not in radio.features:
                self.error(
                    errors,
                    f"core.interfaces.wifi-vif",
                    f"radio {radio.id!r} supports a single virtual interface, "
                    f"{len(attached)} configured",
                )
            for j, vif in attached:
                auth = vif.get("auth", "none")
                for pkg in self.auth_packages.get(auth, ()):
                    if pkg not in platform.packages:
                        self.error(
                            errors,
                            f"core.interfaces.wifi-vif.{j}.auth",
                            f"auth {auth!r} requires package {pkg!r} which is not "
                            f"available on platform {platform.name!r}",
                        )
                out.add(
                    "wifi-iface",
                    f"{radio.id}_vif{j}",
                    device=radio.id,
                    mode=vif.get("mode", "mesh"),
                    ssid=vif.get("essid", ""),
                    encryption=auth,
                )

    @staticmethod
    def _channel_ok(radio, channel: int) -> bool:
        if 1 <= channel <= 14:
            return any(p in radio.protocols for p in ("802.11b", "802.11g"))
        if channel >= 36:
            return "802.11a" in radio.protocols
        return False


def build_default_platforms() -> PlatformRegistry:
    """The two stock runtime platforms with their transformation pipelines."""
    registry = PlatformRegistry()
    openwrt = Platform(
        "openwrt",
        packages=frozenset(
            {"base-files", "dnsmasq", "dropbear", "iw", "wpad-mini"}
        ),
        render_style="uci",
    )
    routeros = Platform(
        "routeros",
        packages=frozenset({"system", "wireless", "wpad-mini", "wpad-full"}),
        render_style="flat",
    )
    for platform in (openwrt, routeros):
        platform.add_module(SystemTransform())
        platform.add_module(NetworkTransform())
        platform.add_module(WirelessTransform())
        registry.register(platform)
    return registry
