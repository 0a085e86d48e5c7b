"""Schema item registration: points, class-like items, fields, choices."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

FIELD_KINDS = ("string", "integer", "decimal", "boolean", "choice", "item-reference")


class RegistryError(Exception):
    code = "registry-error"


class UnknownPointError(RegistryError):
    code = "unknown-point"


class UnknownItemError(RegistryError):
    code = "unknown-item"


class UnknownRegistryIdError(RegistryError):
    code = "unknown-registry-id"


class UnknownFieldError(RegistryError):
    code = "unknown-field"


class DuplicateRegistryIdError(RegistryError):
    code = "duplicate-registry-id"


class DuplicateItemError(RegistryError):
    code = "duplicate-item"


class DuplicateFieldError(RegistryError):
    code = "duplicate-field"


class CyclicParentError(RegistryError):
    code = "cyclic-parent"


class DuplicateChoiceError(RegistryError):
    code = "duplicate-choice"


@dataclass(frozen=True)
class FieldSpec:
    name: str
    kind: str
    choice_point: Optional[str] = None  # required for kind="choice"
    ref_item: Optional[str] = None  # registry_id target for kind="item-reference"
    required: bool = False
    default: object = None

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise RegistryError(f"unknown field kind {self.kind!r}")
        if self.kind == "choice" and not self.choice_point:
            raise RegistryError(f"choice field {self.name!r} needs a choice_point")
        if self.kind == "item-reference" and not self.ref_item:
            raise RegistryError(f"item-reference field {self.name!r} needs a ref_item")


@dataclass
class SchemaItem:
    """Class-like schema unit; subclasses extend the effective field set."""

    name: str
    registry_id: Optional[str] = None  # set on roots, inherited by subclasses
    parent: Optional[str] = None  # parent item name
    fields: list[FieldSpec] = field(default_factory=list)
    multiplicity: str = "one"  # "one" | "many"; root-defined
    audience: Optional[str] = None  # optional form descriptor tag


@dataclass(frozen=True)
class ChoiceRegistration:
    extension_point: str
    value: str
    label: str


class RegistrationPoint:
    """Named attachment surface owning a set of registered item kinds."""

    def __init__(self, name: str):
        self.name = name
        self.items: dict[str, SchemaItem] = {}  # by item name
        self.roots: dict[str, str] = {}  # registry_id -> root item name

    def family(self, registry_id: str) -> list[SchemaItem]:
        """Root plus all transitive subclasses for one registry id."""
        if registry_id not in self.roots:
            raise UnknownRegistryIdError(f"{self.name}: no registry id {registry_id!r}")
        return [i for i in self.items.values() if i.registry_id == registry_id]

    def effective_fields(self, item: SchemaItem) -> list[FieldSpec]:
        """Inherited fields ancestor-first, then the item's own."""
        chain = []
        cur: Optional[SchemaItem] = item
        while cur is not None:
            chain.append(cur)
            cur = self.items[cur.parent] if cur.parent else None
        out: list[FieldSpec] = []
        for ancestor in reversed(chain):
            out.extend(ancestor.fields)
        return out

    def family_fields(self, registry_id: str) -> dict[str, FieldSpec]:
        """Every field reachable anywhere in the family, by name."""
        out: dict[str, FieldSpec] = {}
        for item in self.family(registry_id):
            for spec in item.fields:
                out[spec.name] = spec
        return out


class Registry:
    """Registration points, schema items and extension-point choices."""

    def __init__(self) -> None:
        self.points: dict[str, RegistrationPoint] = {}
        self.choices: dict[str, dict[str, ChoiceRegistration]] = {}

    def create_point(self, name: str) -> RegistrationPoint:
        point = self.points.get(name)
        if point is None:
            point = RegistrationPoint(name)
            self.points[name] = point
        return point

    def point(self, name: str) -> RegistrationPoint:
        try:
            return self.points[name]
        except KeyError:
            raise UnknownPointError(f"no registration point {name!r}") from None

    def register_item(self, point_name: str, item: SchemaItem) -> str:
        point = self.point(point_name)
        if item.name in point.items:
            raise DuplicateItemError(f"item {item.name!r} already registered")
        if item.parent is not None:
            if item.parent == item.name:
                raise CyclicParentError(f"item {item.name!r} cannot parent itself")
            parent = point.items.get(item.parent)
            if parent is None:
                raise UnknownItemError(f"parent item {item.parent!r} not registered")
            # walk up defensively; registration order already precludes cycles
            seen = {item.name}
            cur = parent
            while cur is not None:
                if cur.name in seen:
                    raise CyclicParentError(f"cycle through {cur.name!r}")
                seen.add(cur.name)
                cur = point.items[cur.parent] if cur.parent else None
            if item.registry_id not in (None, parent.registry_id):
                raise DuplicateRegistryIdError(
                    f"subclass {item.name!r} cannot re-bind registry id"
                )
            item.registry_id = parent.registry_id
            item.multiplicity = parent.multiplicity
        else:
            if not item.registry_id:
                raise RegistryError(f"root item {item.name!r} needs a registry_id")
            if item.registry_id in point.roots:
                raise DuplicateRegistryIdError(
                    f"registry id {item.registry_id!r} already owned by "
                    f"{point.roots[item.registry_id]!r}"
                )
        # Two modules adding identically-named fields to one family would be
        # ambiguous in queries and documents; reject at registration time.
        taken = (
            point.family_fields(item.registry_id) if item.registry_id in point.roots else {}
        )
        fresh = set()
        for spec in item.fields:
            if spec.name in taken or spec.name in fresh:
                raise DuplicateFieldError(
                    f"field {spec.name!r} already defined in family {item.registry_id!r}"
                )
            fresh.add(spec.name)
        point.items[item.name] = item
        if item.parent is None:
            point.roots[item.registry_id] = item.name
        return item.name

    def register_choice(self, extension_point: str, value: str, label: str) -> None:
        bucket = self.choices.setdefault(extension_point, {})
        if value in bucket:
            raise DuplicateChoiceError(f"{extension_point}: {value!r} already registered")
        bucket[value] = ChoiceRegistration(extension_point, value, label)

    def choices_for(self, extension_point: str) -> list[ChoiceRegistration]:
        return list(self.choices.get(extension_point, {}).values())

    def choice_values(self, extension_point: str) -> set[str]:
        return set(self.choices.get(extension_point, {}))

    # -- path resolution -----------------------------------------------------

    def resolve_path(self, point_name: str, path: str) -> tuple[str, list[FieldSpec]]:
        """Split a registry path into (registry_id, field chain).

        Registry ids may contain dots, so the longest registered prefix wins;
        intermediate fields must be item references.
        """
        point = self.point(point_name)
        segments = path.split(".")
        registry_id = None
        for cut in range(len(segments), 0, -1):
            candidate = ".".join(segments[:cut])
            if candidate in point.roots:
                registry_id = candidate
                rest = segments[cut:]
                break
        if registry_id is None:
            raise UnknownRegistryIdError(f"{path!r} does not start with a registry id")
        if not rest:
            raise UnknownFieldError(f"{path!r} names no field")
        specs: list[FieldSpec] = []
        current = registry_id
        for i, seg in enumerate(rest):
            family = point.family_fields(current)
            spec = family.get(seg)
            if spec is None:
                raise UnknownFieldError(f"no field {seg!r} in family {current!r}")
            specs.append(spec)
            last = i == len(rest) - 1
            if not last:
                if spec.kind != "item-reference":
                    raise UnknownFieldError(
                        f"{seg!r} is not an item reference, cannot descend"
                    )
                current = spec.ref_item
        return registry_id, specs
