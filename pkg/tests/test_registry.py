"""Registry tests: schema extension, queries vs brute force, validation gate, rules."""

from __future__ import annotations

import copy
import json
import random

import pytest

from meshdb.bootstrap import default_stack
from meshdb.registry import (
    CyclicParentError,
    DuplicateChoiceError,
    DuplicateFieldError,
    DuplicateRegistryIdError,
    FieldSpec,
    FormState,
    Registry,
    RuleEngine,
    RuleError,
    SchemaItem,
    UnknownFieldError,
    UnknownPointError,
    UnknownRegistryIdError,
    form_schema,
    query_nodes,
)
from meshdb.registry.store import RegistryStore


@pytest.fixture
def stack():
    return default_stack()


@pytest.fixture
def fig3_registry():
    """The two-module example schema: InfoCfg extended by ExtendedCfg."""
    registry = Registry()
    registry.create_point("node.config")
    registry.register_item(
        "node.config",
        SchemaItem(name="InfoCfg", registry_id="info", fields=[FieldSpec("name", "string")]),
    )
    registry.register_item(
        "node.config",
        SchemaItem(
            name="ExtendedCfg",
            parent="InfoCfg",
            fields=[
                FieldSpec("device", "choice", choice_point="core.general#device"),
                FieldSpec("version", "integer"),
            ],
        ),
    )
    registry.register_choice("core.general#device", "tp-wr741ndv4", "TP-Link WR741ND v4")
    registry.register_choice("core.general#device", "ub-bullet-m2", "Ubiquiti Bullet M2")
    return registry


# -- item registration ------------------------------------------------------


def test_subclass_extends_effective_field_set(fig3_registry):
    point = fig3_registry.point("node.config")
    extended = point.items["ExtendedCfg"]
    names = [f.name for f in point.effective_fields(extended)]
    assert names == ["name", "device", "version"]
    assert extended.registry_id == "info"


def test_register_item_self_parent_rejected():
    registry = Registry()
    registry.create_point("node.config")
    with pytest.raises(CyclicParentError):
        registry.register_item(
            "node.config", SchemaItem(name="Loop", registry_id="loop", parent="Loop")
        )


def test_register_item_duplicate_registry_id_rejected(fig3_registry):
    with pytest.raises(DuplicateRegistryIdError):
        fig3_registry.register_item(
            "node.config", SchemaItem(name="Rogue", registry_id="info")
        )


def test_register_item_unknown_point():
    registry = Registry()
    with pytest.raises(UnknownPointError):
        registry.register_item("nowhere", SchemaItem(name="X", registry_id="x"))


def test_sibling_subclasses_with_same_field_rejected(fig3_registry):
    with pytest.raises(DuplicateFieldError):
        fig3_registry.register_item(
            "node.config",
            SchemaItem(name="OtherCfg", parent="InfoCfg", fields=[FieldSpec("device", "string")]),
        )


def test_register_choice_duplicate(fig3_registry):
    with pytest.raises(DuplicateChoiceError):
        fig3_registry.register_choice("core.general#device", "tp-wr741ndv4", "again")


# -- form descriptors -----------------------------------------------------------


def test_form_schema_materializes_choices(fig3_registry):
    descriptor = form_schema(fig3_registry, "node.config")
    by_name = {i["name"]: i for i in descriptor["items"]}
    extended = by_name["ExtendedCfg"]
    assert [f["name"] for f in extended["fields"]] == ["name", "device", "version"]
    device = extended["fields"][1]
    # choices come straight from the choice registration table
    want = sorted(
        (c.value, c.label) for c in fig3_registry.choices_for("core.general#device")
    )
    assert [(c["value"], c["label"]) for c in device["choices"]] == want
    json.dumps(descriptor)  # must be serializable


def test_form_schema_empty_point():
    registry = Registry()
    registry.create_point("node.config")
    assert form_schema(registry, "node.config")["items"] == []


def test_form_schema_unknown_point():
    registry = Registry()
    with pytest.raises(UnknownPointError):
        form_schema(registry, "nope")


def test_form_schema_equals_reflection(stack):
    registry, _, _, _ = stack
    descriptor = form_schema(registry, "node.config")
    point = registry.point("node.config")
    assert {i["name"] for i in descriptor["items"]} == set(point.items)
    for entry in descriptor["items"]:
        item = point.items[entry["name"]]
        assert [f["name"] for f in entry["fields"]] == [
            s.name for s in point.effective_fields(item)
        ]


# -- queries -----------------------------------------------------------------


def _store_with_nodes(fig3_registry, devices_by_node: dict[str, str | None]):
    store = RegistryStore(fig3_registry)
    for node_uuid, device in devices_by_node.items():
        store.create_node(node_uuid)
        if device is None:
            doc = {"info": [{"_item": "InfoCfg", "name": node_uuid}]}
        else:
            doc = {"info": [{"_item": "ExtendedCfg", "name": node_uuid, "device": device}]}
        assert store.set_config(node_uuid, doc) == []
    return store


def test_query_matches_only_satisfying_instances(fig3_registry):
    store = _store_with_nodes(
        fig3_registry,
        {"node-a": "tp-wr741ndv4", "node-b": "ub-bullet-m2", "node-c": None},
    )
    got = query_nodes(fig3_registry, store, "node.config", "info.device", "==", "tp-wr741ndv4")
    assert got == {"node-a"}


def test_query_empty_database(fig3_registry):
    store = RegistryStore(fig3_registry)
    assert query_nodes(fig3_registry, store, "node.config", "info.device", "==", "x") == set()


def test_query_unknown_paths(fig3_registry):
    store = RegistryStore(fig3_registry)
    with pytest.raises(UnknownRegistryIdError):
        query_nodes(fig3_registry, store, "node.config", "nosuch.device", "==", "x")
    with pytest.raises(UnknownFieldError):
        query_nodes(fig3_registry, store, "node.config", "info.nosuch", "==", "x")


def test_query_randomized_matches_brute_force(fig3_registry):
    rng = random.Random(42)
    devices = ["tp-wr741ndv4", "ub-bullet-m2", None]
    assignment = {f"node-{i:03d}": rng.choice(devices) for i in range(200)}
    store = _store_with_nodes(fig3_registry, assignment)

    def brute(op, value):
        hits = set()
        for node, doc in store.documents("node.config").items():
            for inst in doc.get("info", []):
                actual = inst.get("device")
                if actual is None:
                    continue
                if op == "==" and actual == value:
                    hits.add(node)
                elif op == "!=" and actual != value:
                    hits.add(node)
                elif op == "in" and actual in value:
                    hits.add(node)
        return hits

    for _ in range(50):
        op = rng.choice(["==", "!=", "in"])
        value = (
            rng.sample(devices[:2], k=rng.randint(1, 2))
            if op == "in"
            else rng.choice(devices[:2])
        )
        got = query_nodes(fig3_registry, store, "node.config", "info.device", op, value)
        assert got == brute(op, value)


def test_query_subclass_transparency(stack):
    """Path through the root registry id sees fields defined on subclasses."""
    registry, store, _, _ = stack
    store.create_node("n1")
    assert (
        store.set_config(
            "n1",
            {
                "info": [
                    {"_item": "ExtendedInfoConfig", "name": "x", "device": "tp-wr741ndv4"}
                ]
            },
        )
        == []
    )
    got = query_nodes(registry, store, "node.config", "info.device", "==", "tp-wr741ndv4")
    assert got == {"n1"}


def test_query_through_item_reference(stack):
    registry, store, _, _ = stack
    store.create_node("n1")
    doc = {
        "info": [{"_item": "ExtendedInfoConfig", "name": "x", "device": "tp-wr741ndv1"}],
        "core.interfaces": [{"_item": "WifiRadioConfig", "radio": "wifi0", "channel": 8}],
        "core.interfaces.wifi-vif": [
            {"_item": "WifiVifConfig", "radio": 0, "essid": "mesh", "mode": "mesh"}
        ],
    }
    assert store.set_config("n1", doc) == []
    got = query_nodes(
        registry, store, "node.config", "core.interfaces.wifi-vif.radio.channel", "==", 8
    )
    assert got == {"n1"}


# -- validation gate -----------------------------------------------------------


def load_fixture(name: str) -> dict:
    import pathlib

    path = pathlib.Path(__file__).parent / "fixtures" / name
    return json.loads(path.read_text())


def test_set_config_valid_minimal_saves(stack):
    _, store, devices, platforms = stack
    store.create_node("n1")
    doc = load_fixture("valid_minimal.json")
    # oracle: the transformation dry run itself reports no errors
    descriptor = devices.resolve("tp-wr741ndv1")
    assert platforms.validate(doc, descriptor, "openwrt") == []
    assert store.set_config("n1", doc) == []
    assert store.get_config("n1") == doc


def test_set_config_80211a_mismatch_rejected_and_unchanged(stack):
    _, store, _, _ = stack
    store.create_node("n1")
    good = load_fixture("valid_minimal.json")
    assert store.set_config("n1", good) == []
    before = json.dumps(store.get_config("n1"), sort_keys=True)
    errors = store.set_config("n1", load_fixture("mismatch_80211a.json"))
    assert errors, "the 802.11a-only channel must be rejected"
    assert any(e.module == "wireless" for e in errors)
    after = json.dumps(store.get_config("n1"), sort_keys=True)
    assert before == after


def test_set_config_unknown_field_schema_violation(stack):
    _, store, _, _ = stack
    store.create_node("n1")
    doc = {"info": [{"_item": "InfoConfig", "name": "x", "bogus": 1}]}
    errors = store.set_config("n1", doc)
    assert any(e.code == "schema-violation" and "bogus" in e.path for e in errors)
    assert store.get_config("n1") == {}


def test_set_config_missing_required_field(stack):
    _, store, _, _ = stack
    store.create_node("n1")
    errors = store.set_config("n1", {"info": [{"_item": "InfoConfig"}]})
    assert any("name" in e.path for e in errors)


def test_set_config_choice_must_be_registered(stack):
    _, store, _, _ = stack
    store.create_node("n1")
    doc = {"info": [{"_item": "ExtendedInfoConfig", "name": "x", "device": "made-up"}]}
    errors = store.set_config("n1", doc)
    assert any(e.code == "schema-violation" and "device" in e.path for e in errors)


def test_one_to_one_multiplicity_enforced(stack):
    _, store, _, _ = stack
    store.create_node("n1")
    doc = {
        "info": [
            {"_item": "InfoConfig", "name": "a"},
            {"_item": "InfoConfig", "name": "b"},
        ]
    }
    errors = store.set_config("n1", doc)
    assert any("one-to-one" in e.message for e in errors)


# -- declarative defaults ---------------------------------------------------------


def wifi_default_rules() -> list[dict]:
    """Project-scoped ESSID defaults branching on radio VIF support."""
    clear = {"remove-instances": {"item": "WifiVifConfig"}}
    mesh_vif = {
        "create-instance": {
            "item": "WifiVifConfig",
            "values": {"radio": 0, "essid": "mesh.example.net", "mode": "mesh"},
        }
    }
    ap_vif = {
        "create-instance": {
            "item": "WifiVifConfig",
            "values": {"radio": 0, "essid": "open.example.net", "mode": "ap"},
        }
    }
    return [
        {
            "id": "project-wifi",
            "when": {"path": "core.project.project", "op": "eq", "value": "demo"},
            "then": [],
            "children": [
                {
                    "id": "multi-vif",
                    "when": {"capability": "multiple-vifs"},
                    "then": [clear, mesh_vif, ap_vif],
                },
                {
                    "id": "single-vif",
                    "when": {"not": {"capability": "multiple-vifs"}},
                    "then": [clear, mesh_vif],
                },
            ],
        }
    ]


def base_config(device: str) -> dict:
    return {
        "info": [{"_item": "ExtendedInfoConfig", "name": "n", "device": device}],
        "core.project": [{"_item": "ProjectConfig", "project": None}],
        "core.interfaces": [{"_item": "WifiRadioConfig", "radio": "wifi0", "channel": 8}],
    }


@pytest.fixture
def engine(stack):
    registry, _, devices, _ = stack

    def capability(model_id: str, name: str) -> bool:
        return devices.resolve(model_id).has_capability(name)

    return RuleEngine(
        registry,
        "node.config",
        wifi_default_rules(),
        device_path="info.device",
        capability_resolver=capability,
    )


def vif_modes(doc: dict) -> list[str]:
    return [v["mode"] for v in doc.get("core.interfaces.wifi-vif", [])]


def test_rules_multi_vif_radio_gets_mesh_and_ap(engine):
    config = base_config("tp-wr741ndv1")
    config["core.project"][0]["project"] = "demo"
    doc, state, fired = engine.apply(config, {"core.project.0.project"}, FormState())
    assert vif_modes(doc) == ["mesh", "ap"]
    assert "multi-vif" in fired


def test_rules_single_vif_radio_gets_one_mesh(engine):
    config = base_config("ub-bullet-m2")
    config["core.project"][0]["project"] = "demo"
    doc, state, fired = engine.apply(config, {"core.project.0.project"}, FormState())
    assert vif_modes(doc) == ["mesh"]
    assert "single-vif" in fired


def test_rules_empty_changed_fields_noop(engine):
    config = base_config("tp-wr741ndv1")
    config["core.project"][0]["project"] = "demo"
    doc, state, fired = engine.apply(config, set(), FormState())
    assert doc == config
    assert fired == []


def test_rules_idempotent_with_same_state(engine):
    config = base_config("tp-wr741ndv1")
    config["core.project"][0]["project"] = "demo"
    doc1, state1, fired1 = engine.apply(config, {"core.project.0.project"}, FormState())
    doc2, state2, fired2 = engine.apply(doc1, {"core.project.0.project"}, state1)
    assert fired1 and not fired2
    assert doc2 == doc1


def test_rules_locality_unrelated_change_leaves_doc_alone(engine):
    config = base_config("tp-wr741ndv1")
    config["core.project"][0]["project"] = "demo"
    doc1, state1, _ = engine.apply(config, {"core.project.0.project"}, FormState())
    doc1["info"][0]["name"] = "renamed"
    doc2, state2, fired = engine.apply(doc1, {"info.0.name"}, state1)
    assert doc2 == doc1
    assert fired == []


def test_rules_device_switch_reconfigures_vifs(engine):
    config = base_config("tp-wr741ndv1")
    config["core.project"][0]["project"] = "demo"
    doc, state, _ = engine.apply(config, {"core.project.0.project"}, FormState())
    assert vif_modes(doc) == ["mesh", "ap"]
    doc["info"][0]["device"] = "ub-bullet-m2"
    doc, state, fired = engine.apply(doc, {"info.0.device"}, state)
    assert vif_modes(doc) == ["mesh"]
    assert "single-vif" in fired


def test_rules_unknown_field_rejected_at_compile(stack):
    registry, _, _, _ = stack
    with pytest.raises(RuleError):
        RuleEngine(
            registry,
            "node.config",
            [{"id": "bad", "when": {"path": "info.nosuch", "op": "eq", "value": 1}}],
        )
    with pytest.raises(RuleError):
        RuleEngine(
            registry,
            "node.config",
            [{"id": "bad", "then": [{"set-default": {"path": "ghost.name", "value": 1}}]}],
        )


# Independent full evaluator: walks the raw rule definitions against the
# final document, ignoring all laziness machinery.
def full_evaluate(rule_defs, config, capability_of, device_path="info.device"):
    doc = copy.deepcopy(config)

    def first_value(path):
        segs = path.split(".")
        for cut in range(len(segs), 0, -1):
            rid = ".".join(segs[:cut])
            if rid in doc and segs[cut:]:
                insts = doc[rid]
                return insts[0].get(segs[cut]) if insts else None
        return None

    def ev(cond):
        if cond is None:
            return True
        if "all" in cond:
            return all(ev(c) for c in cond["all"])
        if "any" in cond:
            return any(ev(c) for c in cond["any"])
        if "not" in cond:
            return not ev(cond["not"])
        if "capability" in cond:
            model = first_value(device_path)
            return bool(model and capability_of(model, cond["capability"]))
        actual = first_value(cond["path"])
        op = cond.get("op", "eq")
        if op in ("eq", "=="):
            return actual == cond["value"]
        if op in ("ne", "!="):
            return actual is not None and actual != cond["value"]
        return actual in cond["value"]

    def act(action):
        if "set-default" in action:
            path, value = action["set-default"]["path"], action["set-default"]["value"]
            segs = path.split(".")
            rid, fieldname = ".".join(segs[:-1]), segs[-1]
            if doc.get(rid):
                doc[rid][0][fieldname] = value
        elif "create-instance" in action:
            name = action["create-instance"]["item"]
            rid = {"WifiVifConfig": "core.interfaces.wifi-vif"}[name]
            doc.setdefault(rid, []).append(
                {"_item": name, **action["create-instance"].get("values", {})}
            )
        elif "remove-instances" in action:
            name = action["remove-instances"]["item"]
            rid = {"WifiVifConfig": "core.interfaces.wifi-vif"}.get(name, name)
            doc.pop(rid, None)

    def walk(rule):
        if ev(rule.get("when")):
            for action in rule.get("then", []):
                act(action)
            for child in rule.get("children", []):
                walk(child)

    for rule in rule_defs:
        walk(rule)
    return doc


def test_rules_lazy_sequence_reaches_full_evaluation_fixpoint(stack):
    registry, _, devices, _ = stack

    def capability(model_id, name):
        return devices.resolve(model_id).has_capability(name)

    engine = RuleEngine(
        registry,
        "node.config",
        wifi_default_rules(),
        capability_resolver=capability,
    )
    rng = random.Random(17)
    projects = ["demo", "other", None]
    models = ["tp-wr741ndv1", "ub-bullet-m2", "ub-nanostation-m5"]
    for trial in range(30):
        doc = base_config(rng.choice(models))
        state = FormState()
        for _ in range(rng.randint(1, 8)):
            if rng.random() < 0.5:
                doc["core.project"][0]["project"] = rng.choice(projects)
                changed = {"core.project.0.project"}
            else:
                doc["info"][0]["device"] = rng.choice(models)
                changed = {"info.0.device"}
            doc, state, _ = engine.apply(doc, changed, state)
        # the lazy result is a fixpoint of plain non-lazy evaluation
        assert full_evaluate(wifi_default_rules(), doc, capability) == doc
