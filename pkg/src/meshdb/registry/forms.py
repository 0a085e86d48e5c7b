"""Form descriptor generation: the serializable reflection of a point's schema."""

from __future__ import annotations

from typing import Optional

from meshdb.registry.schema import Registry


def form_schema(registry: Registry, point_name: str, context: Optional[dict] = None) -> dict:
    """Descriptor of every instantiable item with inherited fields and choices.

    The web UI renders forms straight from this structure; choice lists are
    materialized so the client never needs schema access.
    """
    point = registry.point(point_name)
    items = []
    for name in sorted(point.items):
        item = point.items[name]
        fields = []
        for spec in point.effective_fields(item):
            entry = {
                "name": spec.name,
                "kind": spec.kind,
                "required": spec.required,
                "default": spec.default,
            }
            if spec.kind == "choice":
                entry["choice_point"] = spec.choice_point
                entry["choices"] = [
                    {"value": c.value, "label": c.label}
                    for c in sorted(
                        registry.choices_for(spec.choice_point), key=lambda c: c.value
                    )
                ]
            if spec.kind == "item-reference":
                entry["ref_item"] = spec.ref_item
            fields.append(entry)
        items.append(
            {
                "name": item.name,
                "registry_id": item.registry_id,
                "parent": item.parent,
                "multiplicity": item.multiplicity,
                "audience": item.audience,
                "fields": fields,
            }
        )
    return {"point": point_name, "context": context or {}, "items": items}
