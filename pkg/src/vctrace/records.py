"""Canonical JSONL record form of traces.

One object per line: trace_id, perturbation, context, explain, nodes
(array of {id, primitive, args}), edges (array of [src, dst]). Scalar
argument values are serialized as JSON strings to keep decimal numbers
byte-stable; on load, number-kind args are re-typed to Decimal using the
schema registry, so a load/dump cycle is byte-identical.
"""

from __future__ import annotations

from decimal import Decimal
from typing import Iterable, Iterator

from vctrace.model import ActionNode, ArgValue, ReasoningTrace
from vctrace.schema import SchemaRegistry


def trace_to_record(trace: ReasoningTrace, registry: SchemaRegistry) -> dict:
    nodes = []
    for node in trace.nodes:
        order = _arg_order(node, registry)
        args = {name: _to_json_value(node.args[name]) for name in order}
        nodes.append({"id": node.id, "primitive": node.primitive, "args": args})
    return {
        "trace_id": trace.trace_id,
        "perturbation": trace.perturbation,
        "context": trace.context,
        "explain": trace.explain,
        "nodes": nodes,
        "edges": [[src, dst] for src, dst in trace.edges],
    }


def record_to_trace(record: dict, registry: SchemaRegistry) -> ReasoningTrace:
    nodes = []
    for obj in record.get("nodes", []):
        primitive = str(obj["primitive"])
        args: dict[str, ArgValue] = {}
        for name, value in obj.get("args", {}).items():
            args[name] = _from_json_value(value, primitive, name, registry)
        nodes.append(ActionNode(id=str(obj["id"]), primitive=primitive, args=args))
    return ReasoningTrace(
        trace_id=str(record["trace_id"]),
        perturbation=str(record["perturbation"]),
        context=str(record["context"]),
        explain=str(record.get("explain", "")),
        nodes=nodes,
        edges=[(str(e[0]), str(e[1])) for e in record.get("edges", [])],
    )


def traces_to_records(
    traces: Iterable[ReasoningTrace], registry: SchemaRegistry
) -> Iterator[dict]:
    for trace in traces:
        yield trace_to_record(trace, registry)


def _arg_order(node: ActionNode, registry: SchemaRegistry) -> list[str]:
    if node.primitive in registry:
        schema = registry.schema_for(node.primitive)
        known = [n for n in schema.canonical_arg_order() if n in node.args]
        extras = sorted(set(node.args) - set(known))
        return known + extras
    return sorted(node.args)


def _to_json_value(value: ArgValue):
    if isinstance(value, list):
        return [_to_json_value(v) for v in value]
    return str(value)


def _from_json_value(value, primitive: str, name: str, registry: SchemaRegistry) -> ArgValue:
    if isinstance(value, list):
        return [_from_json_value(v, primitive, name, registry) for v in value]
    text = str(value)
    if primitive in registry:
        spec = registry.schema_for(primitive).spec_for(name)
        if spec is not None and spec.kind == "number":
            try:
                return Decimal(text)
            except ArithmeticError:
                return text
    return text
