"""Hierarchy-aware queries over registry paths.

A path like ``info.device`` addresses the field through the root registry
id; whether ``device`` lives on the root item or on any registered subclass
is invisible to the caller.  Intermediate segments traverse item-reference
fields, e.g. ``core.interfaces.wifi-vif.radio.channel``.
"""

from __future__ import annotations

from typing import Any, Iterable

from meshdb.registry.schema import Registry, RegistryError
from meshdb.registry.store import RegistryStore

OPERATORS = ("==", "!=", "in")


class UnknownOperatorError(RegistryError):
    code = "unknown-operator"


def _matches(op: str, actual: Any, expected: Any) -> bool:
    if actual is None:
        return False
    if op == "==":
        return actual == expected
    if op == "!=":
        return actual != expected
    if op == "in":
        return actual in expected
    raise UnknownOperatorError(f"operator {op!r} not one of {OPERATORS}")


def _chase(document: dict, instance: dict, specs: list) -> Iterable[Any]:
    """Yield every value reachable by following the field chain from one instance."""
    spec, rest = specs[0], specs[1:]
    value = instance.get(spec.name)
    if not rest:
        yield value
        return
    if value is None:
        return
    targets = document.get(spec.ref_item, [])
    if isinstance(value, int) and 0 <= value < len(targets):
        yield from _chase(document, targets[value], rest)


def query_nodes(
    registry: Registry,
    store: RegistryStore,
    point_name: str,
    path: str,
    op: str,
    value: Any,
) -> set[str]:
    """Uuids of nodes holding an instance whose resolved field satisfies the predicate."""
    if op not in OPERATORS:
        raise UnknownOperatorError(f"operator {op!r} not one of {OPERATORS}")
    registry_id, specs = registry.resolve_path(point_name, path)
    hits: set[str] = set()
    for node_uuid, document in store.documents(point_name).items():
        for instance in document.get(registry_id, []):
            if any(_matches(op, v, value) for v in _chase(document, instance, specs)):
                hits.add(node_uuid)
                break
    return hits
