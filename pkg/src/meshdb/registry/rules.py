"""Declarative context-sensitive configuration defaults.

Rules form a tree: a node's condition guards both its actions and its
children, so project-specific defaults can branch further on capabilities of
the selected device (e.g. configure two virtual wireless interfaces when the
radio supports them, otherwise a single mesh-mode one).

Evaluation is lazy: a subtree is (re)examined only when a field referenced by
one of its condition expressions changed, or when an enclosing rule just
(re)fired.  Form state records which rules have been applied and the inputs
they saw, so changing an unrelated setting never overwrites earlier defaults
and re-applying with unchanged inputs is a no-op.

Rule definitions are plain JSON::

    {"id": "wifi-defaults",
     "when": {"path": "info.project", "op": "eq", "value": "demo"},
     "then": [{"set-default": {"path": "info.name", "value": "demo-node"}}],
     "children": [
        {"id": "multi",
         "when": {"capability": "multiple-vifs"},
         "then": [{"remove-instances": {"item": "core.interfaces.wifi-vif"}},
                  {"create-instance": {"item": "WifiVifConfig",
                                       "values": {"mode": "mesh"}}}]}]}

Conditions compose with ``all``/``any``/``not``; ``capability`` tests the
currently selected device through an injected resolver.
"""

from __future__ import annotations

import copy
import itertools
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from meshdb.registry.schema import Registry, RegistryError


class RuleError(RegistryError):
    code = "unknown-field-in-rule"


@dataclass
class FormState:
    """Per form-session memory of which rules ran and on which inputs."""

    evaluated_rules: set = field(default_factory=set)
    last_values: dict = field(default_factory=dict)

    def copy(self) -> "FormState":
        return FormState(set(self.evaluated_rules), dict(self.last_values))

    def to_dict(self) -> dict:
        return {
            "evaluated_rules": sorted(self.evaluated_rules),
            "last_values": dict(self.last_values),
        }

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> "FormState":
        if not data:
            return cls()
        return cls(set(data.get("evaluated_rules", [])), dict(data.get("last_values", {})))


@dataclass
class RuleNode:
    rule_id: str
    condition: Optional[dict]
    actions: list[dict]
    children: list["RuleNode"]
    refs: set = field(default_factory=set)
    subtree_refs: set = field(default_factory=set)


class RuleEngine:
    """Compiled rule tree bound to a registration point's schema."""

    def __init__(
        self,
        registry: Registry,
        point_name: str,
        rules: list[dict],
        device_path: str = "info.device",
        capability_resolver: Optional[Callable[[str, str], bool]] = None,
    ):
        self.registry = registry
        self.point_name = point_name
        self.device_path = device_path
        self.capability_resolver = capability_resolver
        self._ids = itertools.count()
        self.rules = [self._compile(r) for r in rules]

    # -- compilation -----------------------------------------------------------

    def _compile(self, spec: dict) -> RuleNode:
        rule_id = spec.get("id") or f"rule-{next(self._ids)}"
        condition = spec.get("when")
        refs: set = set()
        self._check_condition(condition, refs)
        actions = spec.get("then", [])
        for action in actions:
            self._check_action(action)
        children = [self._compile(c) for c in spec.get("children", [])]
        node = RuleNode(rule_id, condition, actions, children, refs)
        node.subtree_refs = set(refs)
        for child in children:
            node.subtree_refs |= child.subtree_refs
        return node

    def _check_path(self, path: str) -> None:
        try:
            self.registry.resolve_path(self.point_name, path)
        except RegistryError as exc:
            raise RuleError(f"rule references unknown field {path!r}: {exc}") from None

    def _check_condition(self, cond: Optional[dict], refs: set) -> None:
        if cond is None:
            return
        if "all" in cond or "any" in cond:
            for sub in cond.get("all", []) + cond.get("any", []):
                self._check_condition(sub, refs)
        elif "not" in cond:
            self._check_condition(cond["not"], refs)
        elif "capability" in cond:
            self._check_path(self.device_path)
            refs.add(self.device_path)
        elif "path" in cond:
            if cond.get("op", "eq") not in ("eq", "ne", "in", "==", "!="):
                raise RuleError(f"unknown condition operator {cond.get('op')!r}")
            self._check_path(cond["path"])
            refs.add(cond["path"])
        else:
            raise RuleError(f"unintelligible condition {cond!r}")

    def _check_action(self, action: dict) -> None:
        point = self.registry.point(self.point_name)
        if "set-default" in action:
            self._check_path(action["set-default"]["path"])
        elif "create-instance" in action:
            name = action["create-instance"]["item"]
            item = point.items.get(name)
            if item is None:
                raise RuleError(f"rule creates unknown item {name!r}")
            fields = {s.name for s in point.effective_fields(item)}
            for key in action["create-instance"].get("values", {}):
                if key not in fields:
                    raise RuleError(f"item {name!r} has no field {key!r}")
        elif "remove-instances" in action:
            name = action["remove-instances"]["item"]
            if name not in point.items and name not in point.roots:
                raise RuleError(f"rule removes unknown item {name!r}")
        else:
            raise RuleError(f"unintelligible action {action!r}")

    # -- document access ---------------------------------------------------------

    def _value(self, document: dict, path: str) -> Any:
        registry_id, specs = self.registry.resolve_path(self.point_name, path)
        instances = document.get(registry_id, [])
        instance = instances[0] if instances else None
        for i, spec in enumerate(specs):
            if instance is None:
                return None
            value = instance.get(spec.name)
            if i == len(specs) - 1:
                return value
            targets = document.get(spec.ref_item, [])
            instance = (
                targets[value] if isinstance(value, int) and 0 <= value < len(targets) else None
            )
        return None

    def _eval(self, cond: Optional[dict], document: dict) -> bool:
        if cond is None:
            return True
        if "all" in cond:
            return all(self._eval(c, document) for c in cond["all"])
        if "any" in cond:
            return any(self._eval(c, document) for c in cond["any"])
        if "not" in cond:
            return not self._eval(cond["not"], document)
        if "capability" in cond:
            model = self._value(document, self.device_path)
            if model is None or self.capability_resolver is None:
                return False
            return bool(self.capability_resolver(model, cond["capability"]))
        op = cond.get("op", "eq")
        actual = self._value(document, cond["path"])
        if op in ("eq", "=="):
            return actual == cond["value"]
        if op in ("ne", "!="):
            return actual is not None and actual != cond["value"]
        return actual in cond["value"]

    def _apply_action(self, action: dict, document: dict) -> None:
        point = self.registry.point(self.point_name)
        if "set-default" in action:
            path = action["set-default"]["path"]
            registry_id, specs = self.registry.resolve_path(self.point_name, path)
            instances = document.get(registry_id)
            if instances:
                instances[0][specs[0].name] = action["set-default"]["value"]
        elif "create-instance" in action:
            name = action["create-instance"]["item"]
            item = point.items[name]
            instance = {"_item": name, **action["create-instance"].get("values", {})}
            document.setdefault(item.registry_id, []).append(instance)
        elif "remove-instances" in action:
            name = action["remove-instances"]["item"]
            if name in point.roots:
                document.pop(name, None)
            else:
                registry_id = point.items[name].registry_id
                kept = [i for i in document.get(registry_id, []) if i.get("_item") != name]
                if registry_id in document:
                    document[registry_id] = kept

    # -- evaluation -----------------------------------------------------------

    @staticmethod
    def _normalize(path: str) -> str:
        """Form clients report instance-scoped paths; rules ignore the index."""
        return ".".join(seg for seg in path.split(".") if not seg.isdigit())

    def apply(
        self, config: dict, changed_fields: set, state: Optional[FormState] = None
    ) -> tuple[dict, FormState, list[str]]:
        """Run due rules; returns (document, new state, fired rule ids)."""
        state = state.copy() if state is not None else FormState()
        document = copy.deepcopy(config)
        changed = {self._normalize(p) for p in changed_fields}
        fired: list[str] = []
        if not changed:
            return document, state, fired
        for rule in self.rules:
            self._walk(rule, document, changed, state, fired, force=False)
        return document, state, fired

    def _walk(
        self,
        rule: RuleNode,
        document: dict,
        changed: set,
        state: FormState,
        fired: list,
        force: bool,
    ) -> None:
        if not force and not (rule.subtree_refs & changed):
            return
        if not self._eval(rule.condition, document):
            self._deactivate(rule, state)
            return
        inputs = {p: self._value(document, p) for p in rule.refs}
        rerun = rule.rule_id not in state.evaluated_rules or any(
            state.last_values.get(p) != v for p, v in inputs.items()
        )
        if rerun:
            for action in rule.actions:
                self._apply_action(action, document)
            fired.append(rule.rule_id)
        state.evaluated_rules.add(rule.rule_id)
        state.last_values.update(inputs)
        for child in rule.children:
            self._walk(child, document, changed, state, fired, force=force or rerun)

    def _deactivate(self, rule: RuleNode, state: FormState) -> None:
        state.evaluated_rules.discard(rule.rule_id)
        for child in rule.children:
            self._deactivate(child, state)
