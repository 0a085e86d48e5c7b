"""Device descriptor, transformation pipeline and build queue tests."""

from __future__ import annotations

import io
import json
import pathlib
import tarfile

import pytest

from meshdb.bootstrap import default_stack, load_packaged_devices
from meshdb.firmware import (
    Builder,
    BuildQueue,
    CyclicInheritanceError,
    DeviceRegistry,
    DuplicateModelError,
    NoBuilderError,
    TransformFailed,
    UnknownPlatformError,
    UnresolvedReferenceError,
    ValidationFailedError,
    build_default_platforms,
)

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


def fixture(name: str) -> dict:
    return json.loads((FIXTURES / name).read_text())


@pytest.fixture
def devices() -> DeviceRegistry:
    registry = DeviceRegistry()
    load_packaged_devices(registry)
    return registry


@pytest.fixture
def platforms():
    return build_default_platforms()


# -- descriptors ---------------------------------------------------------------


def test_register_base_descriptor_round_trips(devices):
    d = devices.resolve("tp-wr741ndv1")
    assert d.architecture == "ar71xx"
    assert [p.id for p in d.ethernet_ports] == ["wan0", "lan0", "lan1", "lan2", "lan3"]
    assert d.radios[0].protocols == ("802.11b", "802.11g", "802.11n")
    assert d.switches[0].cpu_port == 0


def test_child_with_no_overrides_equals_parent(devices):
    devices.register({"model_id": "tp-wr741ndv9", "parent": "tp-wr741ndv1"})
    parent = devices.resolve("tp-wr741ndv1")
    child = devices.resolve("tp-wr741ndv9")
    for field in ("display_name", "architecture", "radios", "switches", "ethernet_ports", "antennas"):
        assert getattr(child, field) == getattr(parent, field)
    assert child.model_id == "tp-wr741ndv9"


def test_child_overriding_radios_only_merges_field_wise(devices):
    override = {
        "model_id": "tp-wr741ndv5",
        "parent": "tp-wr741ndv1",
        "radios": [
            {
                "id": "wifi0",
                "name": "5GHz swap",
                "protocols": ["802.11a", "802.11n"],
                "features": ["multiple-vifs"],
                "antenna_connectors": ["a1"],
            }
        ],
    }
    devices.register(override)
    parent = devices.resolve("tp-wr741ndv1")
    child = devices.resolve("tp-wr741ndv5")
    # field-wise merge oracle: radios replaced wholesale, everything else inherited
    assert child.radios[0].protocols == ("802.11a", "802.11n")
    for field in ("display_name", "architecture", "switches", "ethernet_ports"):
        assert getattr(child, field) == getattr(parent, field)


def test_three_level_chain_folds_child_over_parent(devices):
    devices.register(
        {"model_id": "mid", "parent": "tp-wr741ndv1", "display_name": "Mid", "url": "u1"}
    )
    devices.register({"model_id": "leaf", "parent": "mid", "url": "u2"})
    leaf = devices.resolve("leaf")
    base = devices.resolve("tp-wr741ndv1")
    # left-to-right fold: base fields, then mid's overrides, then leaf's
    assert leaf.display_name == "Mid"
    assert leaf.url == "u2"
    assert leaf.radios == base.radios
    assert leaf.architecture == base.architecture


def test_duplicate_model_rejected(devices):
    with pytest.raises(DuplicateModelError):
        devices.register({"model_id": "tp-wr741ndv1", "architecture": "x"})


def test_unresolved_switch_reference_rejected():
    registry = DeviceRegistry()
    with pytest.raises(UnresolvedReferenceError):
        registry.register(
            {
                "model_id": "broken",
                "architecture": "x86",
                "ethernet_ports": [{"id": "lan0", "switch": "ghost", "vlan_tag": 1}],
            }
        )


def test_cpu_port_must_be_in_every_vlan_once():
    registry = DeviceRegistry()
    with pytest.raises(UnresolvedReferenceError):
        registry.register(
            {
                "model_id": "badswitch",
                "architecture": "x86",
                "switches": [
                    {"id": "sw0", "cpu_port": 0, "vlans": [{"vlan_tag": 1, "member_ports": [1, 2]}]}
                ],
            }
        )


def test_inheritance_cycles_impossible_by_registration_order():
    registry = DeviceRegistry()
    registry.register({"model_id": "a", "architecture": "x86"})
    with pytest.raises(CyclicInheritanceError):
        registry.register({"model_id": "a2", "parent": "a2"})
    # forward references are resolved by register_all, but cycles never are
    with pytest.raises(Exception):
        DeviceRegistry().register_all(
            [{"model_id": "x", "parent": "y"}, {"model_id": "y", "parent": "x"}]
        )


# -- transformation ---------------------------------------------------------------


def test_transform_80211a_channel_on_24ghz_radio_fails(devices, platforms):
    descriptor = devices.resolve("tp-wr741ndv1")
    with pytest.raises(TransformFailed) as exc:
        platforms.transform(fixture("mismatch_80211a.json"), descriptor, "openwrt")
    errors = exc.value.errors
    assert any(e.module == "wireless" and "channel" in e.path for e in errors)


def test_transform_empty_config_produces_baseline(devices, platforms):
    descriptor = devices.resolve("tp-wr741ndv1")
    out = platforms.transform({}, descriptor, "openwrt")
    assert out.sections == []
    assert platforms.validate({}, descriptor, "openwrt") == []


def test_transform_wan_port_maps_to_descriptor_switch_table(devices, platforms):
    descriptor = devices.resolve("mt-rb951g")
    config = {
        "info": [{"_item": "ExtendedInfoConfig", "name": "gw", "device": "mt-rb951g"}],
        "core.interfaces": [
            {"_item": "EthernetInterfaceConfig", "port": "wan0", "role": "wan"}
        ],
    }
    out = platforms.transform(config, descriptor, "openwrt")
    # oracle: recompute the mapping by direct descriptor lookup
    port = descriptor.port("wan0")
    switch = descriptor.switch(port.switch)
    vlan = next(v for v in switch.vlans if v.vlan_tag == port.vlan_tag)
    vlan_sections = [s for s in out.sections if s.section_type == "switch_vlan"]
    assert len(vlan_sections) == 1
    assert vlan_sections[0].options["device"] == switch.id
    assert vlan_sections[0].options["vlan"] == vlan.vlan_tag
    assert vlan_sections[0].options["ports"] == " ".join(str(p) for p in vlan.member_ports)
    iface = next(s for s in out.sections if s.section_type == "interface")
    assert iface.options["ifname"] == f"{switch.id}.{vlan.vlan_tag}"


def test_transform_unknown_port_reports_network_module(devices, platforms):
    descriptor = devices.resolve("ub-bullet-m2")
    config = {
        "core.interfaces": [
            {"_item": "EthernetInterfaceConfig", "port": "wan0", "role": "wan"}
        ]
    }
    errors = platforms.validate(config, descriptor, "openwrt")
    assert errors and errors[0].module == "network"


def test_validate_is_dry_run_of_transform(devices, platforms):
    descriptor = devices.resolve("tp-wr741ndv1")
    good = fixture("valid_minimal.json")
    assert platforms.validate(good, descriptor, "openwrt") == []
    platforms.transform(good, descriptor, "openwrt")  # must not raise
    bad = fixture("mismatch_80211a.json")
    errors = platforms.validate(bad, descriptor, "openwrt")
    with pytest.raises(TransformFailed) as exc:
        platforms.transform(bad, descriptor, "openwrt")
    assert exc.value.errors == errors


def test_validate_missing_package_for_auth_option(devices, platforms):
    descriptor = devices.resolve("tp-wr741ndv1")
    errors = platforms.validate(fixture("missing_package.json"), descriptor, "openwrt")
    assert any(
        e.module == "wireless" and "wpad-full" in e.message and "auth" in e.path
        for e in errors
    )
    # the same document is fine on routeros, whose package set includes it
    assert platforms.validate(fixture("missing_package.json"), descriptor, "routeros") == []


def test_unknown_platform(devices, platforms):
    descriptor = devices.resolve("tp-wr741ndv1")
    with pytest.raises(UnknownPlatformError):
        platforms.validate({}, descriptor, "plan9")


def test_transform_deterministic_output(devices, platforms):
    descriptor = devices.resolve("tp-wr741ndv1")
    doc = fixture("valid_minimal.json")
    a = platforms.transform(doc, descriptor, "openwrt").render()
    b = platforms.transform(doc, descriptor, "openwrt").render()
    assert a == b
    flat = platforms.transform(doc, descriptor, "routeros").render()
    assert flat != a and "set " in flat


def test_single_vif_radio_rejects_second_vif(devices, platforms):
    descriptor = devices.resolve("ub-bullet-m2")
    config = {
        "core.interfaces": [{"_item": "WifiRadioConfig", "radio": "wifi0", "channel": 8}],
        "core.interfaces.wifi-vif": [
            {"_item": "WifiVifConfig", "radio": 0, "essid": "a", "mode": "mesh"},
            {"_item": "WifiVifConfig", "radio": 0, "essid": "b", "mode": "ap"},
        ],
    }
    errors = platforms.validate(config, descriptor, "openwrt")
    assert any("single virtual interface" in e.message for e in errors)


# -- builds -----------------------------------------------------------------------


@pytest.fixture
def queue(devices, platforms):
    q = BuildQueue(devices, platforms)
    q.register_builder(Builder("ar71xx-builder", frozenset({"ar71xx"})))
    yield q
    q.shutdown()


def test_build_dispatches_by_architecture(queue):
    build_id = queue.submit("node-1", fixture("valid_minimal.json"), "tp-wr741ndv1", "openwrt")
    status = queue.wait(build_id)
    assert status["state"] == "done"
    assert status["builder_id"] == "ar71xx-builder"
    bundle = status["bundle"]
    assert bundle["architecture"] == "ar71xx"
    archive = queue.artifact(build_id)
    with tarfile.open(fileobj=io.BytesIO(archive)) as tar:
        names = tar.getnames()
        manifest = json.loads(tar.extractfile("manifest.json").read())
    assert sorted(names) == ["config.txt", "manifest.json"]
    assert manifest["digest"] == bundle["digest"]


def test_build_requires_builder_for_architecture(queue):
    config = {
        "info": [{"_item": "ExtendedInfoConfig", "name": "gw", "device": "mt-rb951g"}],
    }
    with pytest.raises(NoBuilderError):
        queue.submit("node-1", config, "mt-rb951g", "openwrt")


def test_build_rejects_invalid_config(queue):
    with pytest.raises(ValidationFailedError):
        queue.submit("node-1", fixture("mismatch_80211a.json"), "tp-wr741ndv1", "openwrt")


def test_build_digest_reproducible(queue):
    doc = fixture("valid_minimal.json")
    first = queue.wait(queue.submit("node-1", doc, "tp-wr741ndv1", "openwrt"))
    second = queue.wait(queue.submit("node-1", doc, "tp-wr741ndv1", "openwrt"))
    assert first["state"] == second["state"] == "done"
    assert first["bundle"]["digest"] == second["bundle"]["digest"]
    # the digest actually covers the rendered configuration
    other = json.loads(json.dumps(doc))
    other["core.interfaces"][0]["channel"] = 9
    third = queue.wait(queue.submit("node-1", other, "tp-wr741ndv1", "openwrt"))
    assert third["bundle"]["digest"] != first["bundle"]["digest"]


def test_default_stack_save_gate_wired():
    registry, store, devices, platforms = default_stack()
    store.create_node("n1")
    errors = store.set_config("n1", fixture("mismatch_80211a.json"))
    assert any(e.module == "wireless" for e in errors)
