"""Action-primitive catalog: argument schemas and per-node validation.

The catalog is data, not code: a TSV with one row per (primitive,
argument) shipped as package data, so the validator, the verifiers, and
the prompt renderer all read the same source of truth.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from importlib import resources
from pathlib import Path

from vctrace.errors import CatalogMissError, TableFormatError
from vctrace.ioutil import read_tsv
from vctrace.model import CATEGORIES, ID_PATTERN, ActionNode, canon_enum

VALUE_KINDS = ("entity", "text", "number", "enum", "entity_list")

_NUMBER_RE = re.compile(r"-?\d+(\.\d+)?([eE][+-]?\d+)?\Z")


@dataclass(frozen=True)
class ArgSpec:
    name: str
    required: bool
    kind: str
    enum_values: frozenset[str] = frozenset()


@dataclass(frozen=True)
class ArgumentSchema:
    """Argument contract of one primitive."""

    primitive: str
    category: str
    args: tuple[ArgSpec, ...] = ()

    @property
    def required(self) -> set[str]:
        return {a.name for a in self.args if a.required}

    @property
    def optional(self) -> set[str]:
        return {a.name for a in self.args if not a.required}

    def spec_for(self, name: str) -> ArgSpec | None:
        for a in self.args:
            if a.name == name:
                return a
        return None

    def canonical_arg_order(self) -> list[str]:
        """Required args alphabetically, then optional alphabetically."""
        return sorted(self.required) + sorted(self.optional)


class SchemaRegistry:
    """Immutable lookup from primitive name to its ArgumentSchema."""

    def __init__(self, schemas: dict[str, ArgumentSchema]):
        self._schemas = dict(schemas)

    def __len__(self) -> int:
        return len(self._schemas)

    def __contains__(self, primitive: str) -> bool:
        return primitive in self._schemas

    def primitives(self) -> list[str]:
        return sorted(self._schemas)

    def schema_for(self, primitive: str) -> ArgumentSchema:
        try:
            return self._schemas[primitive]
        except KeyError:
            raise CatalogMissError(f"unknown action primitive: {primitive!r}") from None

    def validate_node(self, node: ActionNode) -> list[str]:
        """Schema violations for one node; empty list means clean.

        Checks: known primitive, well-formed id, required args present, no
        unknown args, enum membership (case-insensitive), numbers parse,
        entity_list values are lists of nonempty strings.
        """
        violations: list[str] = []
        if not ID_PATTERN.match(node.id):
            violations.append(f"malformed node id: {node.id!r}")
        if node.primitive not in self._schemas:
            violations.append(f"unknown primitive: {node.primitive!r}")
            return violations
        schema = self._schemas[node.primitive]
        for name in sorted(schema.required - set(node.args)):
            violations.append(f"missing required arg: {name}")
        for name in sorted(set(node.args) - schema.required - schema.optional):
            violations.append(f"unknown arg: {name}")
        for name in sorted(set(node.args) & (schema.required | schema.optional)):
            spec = schema.spec_for(name)
            value = node.args[name]
            violations.extend(_check_value(name, spec, value))
        return violations

    def describe_action_space(self) -> str:
        """Deterministic plain-text rendering of the catalog (for prompts)."""
        lines = []
        for primitive in self.primitives():
            schema = self._schemas[primitive]
            parts = []
            for name in schema.canonical_arg_order():
                spec = schema.spec_for(name)
                kind = spec.kind
                if spec.kind == "enum":
                    kind = "enum{" + ",".join(sorted(spec.enum_values)) + "}"
                marker = "" if spec.required else "?"
                parts.append(f"{name}{marker}:{kind}")
            lines.append(f"{primitive} [{schema.category}]({', '.join(parts)})")
        return "\n".join(lines)


def _check_value(name: str, spec: ArgSpec, value) -> list[str]:
    if spec.kind == "entity_list":
        if not isinstance(value, list):
            return [f"arg {name}: expected a list"]
        out = []
        for i, item in enumerate(value):
            if isinstance(item, list):
                out.append(f"arg {name}[{i}]: nested list not allowed")
            elif not str(item).strip():
                out.append(f"arg {name}[{i}]: empty entry")
        return out
    if isinstance(value, list):
        return [f"arg {name}: unexpected list"]
    if spec.kind == "enum":
        if canon_enum(value) not in spec.enum_values:
            allowed = ", ".join(sorted(spec.enum_values))
            return [f"arg {name}: value {str(value)!r} not in enum {{{allowed}}}"]
        return []
    if spec.kind == "number":
        if isinstance(value, Decimal):
            return []
        text = str(value).strip()
        if not _NUMBER_RE.match(text):
            return [f"arg {name}: {text!r} is not a number"]
        try:
            Decimal(text)
        except InvalidOperation:
            return [f"arg {name}: {text!r} is not a number"]
        return []
    # entity / text: any nonempty scalar
    if not str(value).strip():
        return [f"arg {name}: empty value"]
    return []


def load_schema_tsv(path: str | Path) -> SchemaRegistry:
    """Load a schema registry from TSV, enforcing catalog invariants."""
    rows = read_tsv(
        path, ["primitive", "category", "arg_name", "required", "kind", "enum_values"]
    )
    by_primitive: dict[str, list[ArgSpec]] = {}
    categories: dict[str, str] = {}
    for row in rows:
        primitive = row["primitive"]
        category = row["category"]
        if category not in CATEGORIES:
            raise TableFormatError(
                f"primitive {primitive}: unknown category {category!r}"
            )
        if primitive in categories and categories[primitive] != category:
            raise TableFormatError(f"primitive {primitive}: conflicting categories")
        categories[primitive] = category
        if row["required"] not in ("0", "1"):
            raise TableFormatError(
                f"primitive {primitive}, arg {row['arg_name']}: required must be 0 or 1"
            )
        if row["kind"] not in VALUE_KINDS:
            raise TableFormatError(
                f"primitive {primitive}, arg {row['arg_name']}: unknown kind {row['kind']!r}"
            )
        if row["arg_name"] == "id":
            raise TableFormatError(
                f"primitive {primitive}: 'id' is node syntax, not an argument"
            )
        enum_values = frozenset(
            canon_enum(v) for v in row["enum_values"].split("|") if v
        )
        if row["kind"] == "enum" and not enum_values:
            raise TableFormatError(
                f"primitive {primitive}, arg {row['arg_name']}: enum without values"
            )
        spec = ArgSpec(
            name=row["arg_name"],
            required=row["required"] == "1",
            kind=row["kind"],
            enum_values=enum_values,
        )
        specs = by_primitive.setdefault(primitive, [])
        if any(s.name == spec.name for s in specs):
            raise TableFormatError(
                f"primitive {primitive}: duplicate arg {spec.name!r}"
            )
        specs.append(spec)

    schemas = {
        primitive: ArgumentSchema(
            primitive=primitive,
            category=categories[primitive],
            args=tuple(specs),
        )
        for primitive, specs in by_primitive.items()
    }
    return SchemaRegistry(schemas)


_default: SchemaRegistry | None = None


def default_registry() -> SchemaRegistry:
    """The packaged 20-primitive catalog (loaded once, cached)."""
    global _default
    if _default is None:
        ref = resources.files("vctrace").joinpath("data/action_schema.tsv")
        with resources.as_file(ref) as path:
            _default = load_schema_tsv(path)
    return _default
