"""Extensible node configuration and monitoring schema registry.

Schema items are class-like and registered at named registration points
(``node.config``, ``node.monitoring``).  Other modules extend the schema by
subclassing existing items or by registering additional choices at named
extension points.  Queries address fields through the root item's registry
identifier regardless of which subclass actually defines them.
"""

from meshdb.registry.schema import (
    ChoiceRegistration,
    CyclicParentError,
    DuplicateChoiceError,
    DuplicateFieldError,
    DuplicateItemError,
    DuplicateRegistryIdError,
    FieldSpec,
    Registry,
    RegistryError,
    SchemaItem,
    UnknownFieldError,
    UnknownItemError,
    UnknownPointError,
    UnknownRegistryIdError,
)
from meshdb.registry.store import Node, RegistryStore, ValidationIssue
from meshdb.registry.query import query_nodes
from meshdb.registry.forms import form_schema
from meshdb.registry.rules import FormState, RuleEngine, RuleError, RuleNode

__all__ = [
    "ChoiceRegistration",
    "CyclicParentError",
    "DuplicateChoiceError",
    "DuplicateFieldError",
    "DuplicateItemError",
    "DuplicateRegistryIdError",
    "FieldSpec",
    "FormState",
    "Node",
    "Registry",
    "RegistryError",
    "RegistryStore",
    "RuleEngine",
    "RuleError",
    "RuleNode",
    "SchemaItem",
    "UnknownFieldError",
    "UnknownItemError",
    "UnknownPointError",
    "UnknownRegistryIdError",
    "ValidationIssue",
    "form_schema",
    "query_nodes",
]
