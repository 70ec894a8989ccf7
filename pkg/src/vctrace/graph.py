"""Structural DAG validation and deterministic topological ordering."""

from __future__ import annotations

from collections import defaultdict

from vctrace.errors import CycleError
from vctrace.model import ReasoningTrace, StructuralReport
from vctrace.schema import SchemaRegistry


def validate_graph(trace: ReasoningTrace, registry: SchemaRegistry) -> StructuralReport:
    """Full structural check of one parsed trace.

    Graph violations cover duplicate ids, dangling edge endpoints, cycles,
    and the empty trace; schema violations come from per-node validation.
    syntactic_ok is True here because the trace already parsed.
    """
    report = StructuralReport(syntactic_ok=True)

    if not trace.nodes:
        report.graph_violations.append("empty trace: no action nodes")
        return report

    seen: set[str] = set()
    for node in trace.nodes:
        if node.id in seen:
            report.graph_violations.append(f"duplicate node id: {node.id}")
        seen.add(node.id)

    for src, dst in trace.edges:
        for endpoint in (src, dst):
            if endpoint not in seen:
                report.graph_violations.append(f"dangling edge endpoint: {endpoint}")

    if not any(v.startswith("duplicate") or v.startswith("dangling") for v in report.graph_violations):
        try:
            topological_order(trace)
        except CycleError as exc:
            report.graph_violations.append(str(exc))

    for node in trace.nodes:
        for message in registry.validate_node(node):
            report.schema_violations.append((node.id, message))

    return report


def topological_order(trace: ReasoningTrace) -> list[str]:
    """Node ids with every edge source before its destination.

    Stable Kahn's algorithm: among ready nodes, original node order wins.
    Raises CycleError naming the nodes of one strongly connected remainder.
    """
    order_index = {node.id: i for i, node in enumerate(trace.nodes)}
    indegree: dict[str, int] = {node.id: 0 for node in trace.nodes}
    out_edges: dict[str, list[str]] = defaultdict(list)
    for src, dst in trace.edges:
        out_edges[src].append(dst)
        indegree[dst] += 1

    ready = sorted(
        (nid for nid, deg in indegree.items() if deg == 0),
        key=order_index.__getitem__,
    )
    result: list[str] = []
    while ready:
        nid = ready.pop(0)
        result.append(nid)
        changed = False
        for dst in out_edges[nid]:
            indegree[dst] -= 1
            if indegree[dst] == 0:
                ready.append(dst)
                changed = True
        if changed:
            ready.sort(key=order_index.__getitem__)

    if len(result) < len(trace.nodes):
        stuck = [nid for nid, deg in indegree.items() if deg > 0]
        in_edges: dict[str, list[str]] = defaultdict(list)
        for src, dst in trace.edges:
            in_edges[dst].append(src)
        raise CycleError(_one_cycle(stuck, in_edges))
    return result


def _one_cycle(candidates: list[str], in_edges: dict[str, list[str]]) -> list[str]:
    """Walk backward within the stuck set until a node repeats.

    Every stuck node keeps at least one stuck predecessor (otherwise Kahn's
    would have released it), so the walk cannot dead-end.
    """
    remaining = set(candidates)
    node = candidates[0]
    path: list[str] = []
    position: dict[str, int] = {}
    while node not in position:
        position[node] = len(path)
        path.append(node)
        node = next(p for p in in_edges[node] if p in remaining)
    cycle = path[position[node]:]
    cycle.reverse()
    return cycle
