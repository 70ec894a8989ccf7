"""Domain types for mechanistic reasoning traces.

A trace explains one (perturbation, context) input as a free-text
rationale plus a DAG of typed action nodes. Argument values are stored
as plain ``str`` (quoted strings and bare enum tokens), ``Decimal``
(numbers, preserving the written decimal form), or lists of those.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Union

ArgScalar = Union[str, Decimal]
ArgValue = Union[ArgScalar, list]

ID_PATTERN = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")

#: The seven primitive categories.
CATEGORIES = (
    "system_initialization",
    "metabolic",
    "regulation",
    "functional",
    "interaction",
    "phenotype",
    "proteostasis",
)


def canon_enum(value: ArgValue) -> str:
    """Canonical lowercase form used for all enum comparisons."""
    return str(value).strip().lower()


@dataclass(frozen=True)
class ActionNode:
    """One mechanistic action: unique id, primitive name, argument map."""

    id: str
    primitive: str
    args: dict[str, ArgValue] = field(default_factory=dict)

    def arg_str(self, name: str, default: str = "") -> str:
        value = self.args.get(name)
        if value is None:
            return default
        return str(value)

    def arg_list(self, name: str) -> list[str]:
        """Entity-list argument as a list of strings (scalar promoted)."""
        value = self.args.get(name)
        if value is None:
            return []
        if isinstance(value, list):
            return [str(v) for v in value]
        return [str(value)]


@dataclass
class ReasoningTrace:
    """Parsed explanation: rationale text plus the action DAG."""

    trace_id: str
    perturbation: str
    context: str
    explain: str
    nodes: list[ActionNode] = field(default_factory=list)
    edges: list[tuple[str, str]] = field(default_factory=list)

    def node_by_id(self) -> dict[str, ActionNode]:
        return {n.id: n for n in self.nodes}

    def nodes_with_primitive(self, primitive: str) -> list[ActionNode]:
        return [n for n in self.nodes if n.primitive == primitive]


@dataclass
class StructuralReport:
    """Outcome of structural validation of one trace."""

    syntactic_ok: bool
    schema_violations: list[tuple[str, str]] = field(default_factory=list)
    graph_violations: list[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return self.syntactic_ok and not self.schema_violations and not self.graph_violations

    def to_record(self, trace_id: str) -> dict:
        return {
            "trace_id": trace_id,
            "syntactic_ok": self.syntactic_ok,
            "schema_violations": [
                {"node_id": nid, "message": msg} for nid, msg in self.schema_violations
            ],
            "graph_violations": list(self.graph_violations),
            "valid": self.valid,
        }
