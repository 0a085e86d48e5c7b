"""Node store: config documents, latest monitoring items, validation gate.

Documents are plain JSON-shaped dicts::

    {"<registry_id>": [ {"_item": "<most-derived item name>", ...fields...}, ... ]}

One-to-many instances are ordered by their position in the list; an
``item-reference`` field holds the integer index of the referenced instance
inside the target registry id's list.  ``set_config`` refuses to persist a
document with outstanding schema or transformation errors, leaving the
stored config untouched.
"""

from __future__ import annotations

import copy
import json
import threading
import time
import uuid as uuidlib
from dataclasses import dataclass, field
from typing import Callable, Optional

from meshdb.registry.schema import Registry

CONFIG_POINT = "node.config"
MONITORING_POINT = "node.monitoring"


@dataclass(frozen=True)
class Node:
    uuid: str
    created_at: float


@dataclass
class ValidationIssue:
    """One save-gate error; `module` names the transform module when set."""

    code: str
    path: str
    message: str
    module: Optional[str] = None

    def to_dict(self) -> dict:
        out = {"code": self.code, "path": self.path, "message": self.message}
        if self.module:
            out["module"] = self.module
        return out


class NodeExistsError(Exception):
    code = "node-exists"


class UnknownNodeError(Exception):
    code = "unknown-node"


class RegistryStore:
    """Nodes plus their per-point documents, with serialized per-node writes."""

    def __init__(self, registry: Registry):
        self.registry = registry
        self.nodes: dict[str, Node] = {}
        # (node uuid, point name) -> document
        self._documents: dict[tuple[str, str], dict] = {}
        self._write_locks: dict[str, threading.Lock] = {}
        self._lock = threading.Lock()
        # invoked by set_config as the save gate; returns ValidationIssue list
        self.validate_hook: Optional[Callable[[Node, dict], list[ValidationIssue]]] = None

    # -- nodes ---------------------------------------------------------------

    def create_node(self, node_uuid: Optional[str] = None, created_at: Optional[float] = None) -> Node:
        with self._lock:
            node_uuid = node_uuid or str(uuidlib.uuid4())
            if node_uuid in self.nodes:
                raise NodeExistsError(f"node {node_uuid} already exists")
            node = Node(node_uuid, created_at if created_at is not None else time.time())
            self.nodes[node_uuid] = node
            self._write_locks[node_uuid] = threading.Lock()
            return node

    def get_node(self, node_uuid: str) -> Node:
        try:
            return self.nodes[node_uuid]
        except KeyError:
            raise UnknownNodeError(f"no node {node_uuid}") from None

    def list_nodes(self) -> list[Node]:
        return sorted(self.nodes.values(), key=lambda n: n.uuid)

    # -- documents -------------------------------------------------------------

    def get_document(self, node_uuid: str, point_name: str) -> dict:
        self.get_node(node_uuid)
        return copy.deepcopy(self._documents.get((node_uuid, point_name), {}))

    def get_config(self, node_uuid: str) -> dict:
        return self.get_document(node_uuid, CONFIG_POINT)

    def set_config(self, node_uuid: str, document: dict) -> list[ValidationIssue]:
        """Validate and atomically replace a node's config; errors leave it untouched."""
        node = self.get_node(node_uuid)
        with self._write_locks[node_uuid]:
            errors = self.validate_document(CONFIG_POINT, document)
            if not errors and self.validate_hook is not None:
                errors = list(self.validate_hook(node, document))
            if errors:
                return errors
            self._documents[(node_uuid, CONFIG_POINT)] = copy.deepcopy(document)
            return []

    def set_monitoring_items(self, node_uuid: str, items: list[dict]) -> None:
        """Upsert latest monitoring state; one write replaces each registry id."""
        self.get_node(node_uuid)
        with self._write_locks[node_uuid]:
            doc = self._documents.setdefault((node_uuid, MONITORING_POINT), {})
            grouped: dict[str, list[dict]] = {}
            for item in items:
                instance = {"_item": item["item"], **item["values"]}
                grouped.setdefault(item["registry_id"], []).append(instance)
            doc.update(grouped)

    def documents(self, point_name: str) -> dict[str, dict]:
        """node uuid -> document for every node (missing docs are empty)."""
        return {
            n: self._documents.get((n, point_name), {}) for n in self.nodes
        }

    # -- schema validation -------------------------------------------------------

    def validate_document(self, point_name: str, document: dict) -> list[ValidationIssue]:
        point = self.registry.point(point_name)
        errors: list[ValidationIssue] = []
        if not isinstance(document, dict):
            return [ValidationIssue("schema-violation", "", "document must be an object")]
        for registry_id, instances in document.items():
            if registry_id not in point.roots:
                errors.append(
                    ValidationIssue(
                        "schema-violation", registry_id, "unknown registry id"
                    )
                )
                continue
            if not isinstance(instances, list):
                errors.append(
                    ValidationIssue(
                        "schema-violation", registry_id, "instances must be a list"
                    )
                )
                continue
            root = point.items[point.roots[registry_id]]
            if root.multiplicity == "one" and len(instances) > 1:
                errors.append(
                    ValidationIssue(
                        "schema-violation",
                        registry_id,
                        "one-to-one item allows at most one instance",
                    )
                )
            for idx, instance in enumerate(instances):
                errors.extend(
                    self._validate_instance(point_name, registry_id, idx, instance, document)
                )
        return errors

    def _validate_instance(
        self, point_name: str, registry_id: str, idx: int, instance: dict, document: dict
    ) -> list[ValidationIssue]:
        point = self.registry.point(point_name)
        errors: list[ValidationIssue] = []
        base_path = f"{registry_id}.{idx}"
        if not isinstance(instance, dict):
            return [ValidationIssue("schema-violation", base_path, "instance must be an object")]
        item_name = instance.get("_item") or point.roots[registry_id]
        item = point.items.get(item_name)
        if item is None or item.registry_id != registry_id:
            return [
                ValidationIssue(
                    "schema-violation",
                    base_path,
                    f"unknown item {item_name!r} for registry id {registry_id!r}",
                )
            ]
        specs = {s.name: s for s in point.effective_fields(item)}
        for key, value in instance.items():
            if key == "_item":
                continue
            spec = specs.get(key)
            path = f"{base_path}.{key}"
            if spec is None:
                errors.append(
                    ValidationIssue(
                        "schema-violation", path, f"no field {key!r} on item {item_name!r}"
                    )
                )
                continue
            errors.extend(self._check_value(spec, value, path, document))
        for spec in specs.values():
            if spec.required and instance.get(spec.name) is None:
                errors.append(
                    ValidationIssue(
                        "schema-violation",
                        f"{base_path}.{spec.name}",
                        f"required field {spec.name!r} missing",
                    )
                )
        return errors

    def _check_value(self, spec, value, path, document) -> list[ValidationIssue]:
        if value is None:
            return []
        bad = lambda msg: [ValidationIssue("schema-violation", path, msg)]  # noqa: E731
        if spec.kind == "string" and not isinstance(value, str):
            return bad("expected a string")
        if spec.kind == "integer" and (isinstance(value, bool) or not isinstance(value, int)):
            return bad("expected an integer")
        if spec.kind == "decimal" and (
            isinstance(value, bool) or not isinstance(value, (int, float))
        ):
            return bad("expected a number")
        if spec.kind == "boolean" and not isinstance(value, bool):
            return bad("expected a boolean")
        if spec.kind == "choice":
            if value not in self.registry.choice_values(spec.choice_point):
                return bad(f"{value!r} is not a registered choice of {spec.choice_point}")
        if spec.kind == "item-reference":
            if isinstance(value, bool) or not isinstance(value, int):
                return bad("item reference must be an instance index")
            targets = document.get(spec.ref_item, [])
            if not 0 <= value < len(targets):
                return bad(f"no instance {value} of {spec.ref_item!r}")
        return []

    # -- persistence ----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {"uuid": n.uuid, "created_at": n.created_at} for n in self.list_nodes()
            ],
            "documents": [
                {"node": node, "point": point, "document": doc}
                for (node, point), doc in self._documents.items()
            ],
        }

    def load_dict(self, data: dict) -> None:
        for rec in data["nodes"]:
            if rec["uuid"] not in self.nodes:
                self.create_node(rec["uuid"], rec["created_at"])
        for rec in data["documents"]:
            self._documents[(rec["node"], rec["point"])] = rec["document"]

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    def load(self, path: str) -> None:
        with open(path, encoding="utf-8") as fh:
            self.load_dict(json.load(fh))
