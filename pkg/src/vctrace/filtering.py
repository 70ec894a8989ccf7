"""Verifier-based filtering: discard on DTI failure, prune contradicted
DE gene arguments.

The asymmetry is deliberate: a sub-threshold binding invalidates the
causal root, so the whole trace goes; a wrong gene is a local claim, so
only that argument goes. Unknown verdicts never remove anything, and
nodes or arguments without a contradicted verdict are never touched.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from vctrace.model import ActionNode, ReasoningTrace
from vctrace.verifiers import CONTRADICTED, Verdict


@dataclass(frozen=True)
class FilterConfig:
    tau: float = 0.5
    de_prune: bool = True

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0,1]")


@dataclass
class FilterOutcome:
    decision: str  # kept | refined | discarded
    reason: str = ""
    pruned: list[tuple[str, str]] = field(default_factory=list)
    removed_nodes: list[str] = field(default_factory=list)

    def to_record(self, trace_id: str) -> dict:
        return {
            "trace_id": trace_id,
            "decision": self.decision,
            "reason": self.reason,
            "details": {
                "pruned": [{"node_id": n, "gene": g} for n, g in self.pruned],
                "removed_nodes": list(self.removed_nodes),
            },
        }


def filter_trace(
    trace: ReasoningTrace,
    verdicts: dict[str, list[Verdict]],
    config: FilterConfig,
    registry=None,
) -> tuple[FilterOutcome, ReasoningTrace | None]:
    """Apply DTI discard then DE pruning to one trace.

    Returns the outcome and the surviving trace (None when discarded).
    Node removal deletes incident edges without synthesizing transitive
    replacements; the result may be a disconnected DAG, which is fine.
    When a registry is given the surviving trace is re-validated and a
    failure raises (an invariant breach, not a data error).
    """
    for node_verdicts in verdicts.values():
        for v in node_verdicts:
            if v.verifier == "dti" and v.score is not None and v.score < config.tau:
                return FilterOutcome("discarded", "dti_below_threshold"), None

    pruned: list[tuple[str, str]] = []
    removed: list[str] = []
    new_nodes: list[ActionNode] = []
    for node in trace.nodes:
        if node.primitive != "regulates_expression" or not config.de_prune:
            new_nodes.append(node)
            continue
        contradicted = {
            v.subject.casefold()
            for v in verdicts.get(node.id, [])
            if v.verifier == "de" and v.status == CONTRADICTED and v.subject
        }
        if not contradicted:
            new_nodes.append(node)
            continue
        genes = node.arg_list("genes")
        kept_genes = [g for g in genes if g.casefold() not in contradicted]
        pruned.extend((node.id, g) for g in genes if g.casefold() in contradicted)
        if not kept_genes:
            removed.append(node.id)
            continue
        new_args = dict(node.args)
        new_args["genes"] = kept_genes
        new_nodes.append(ActionNode(id=node.id, primitive=node.primitive, args=new_args))

    if not new_nodes:
        return FilterOutcome(
            "discarded", "empty_after_pruning"
        ), None

    if not pruned and not removed:
        return FilterOutcome("kept"), trace

    removed_set = set(removed)
    new_edges = [
        (src, dst)
        for src, dst in trace.edges
        if src not in removed_set and dst not in removed_set
    ]
    refined = replace(trace, nodes=new_nodes, edges=new_edges)
    if registry is not None:
        from vctrace.graph import validate_graph

        report = validate_graph(refined, registry)
        if not report.valid:
            raise AssertionError(
                f"filtering broke trace {trace.trace_id!r}: "
                f"{report.graph_violations or report.schema_violations}"
            )
    outcome = FilterOutcome(
        "refined", "de_pruned", pruned=pruned, removed_nodes=removed
    )
    return outcome, refined


@dataclass
class FilterStats:
    n_traces: int = 0
    n_kept: int = 0
    n_refined: int = 0
    n_discarded: int = 0
    reasons: dict[str, int] = field(default_factory=dict)
    dti_discard_fraction: float | None = None
    de_refined_action_fraction: float | None = None
    de_refined_trace_fraction: float | None = None
    coverage: float | None = None

    def to_record(self, tau: float) -> dict:
        return {
            "tau": tau,
            "n_traces": self.n_traces,
            "n_kept": self.n_kept,
            "n_refined": self.n_refined,
            "n_discarded": self.n_discarded,
            "reasons": dict(sorted(self.reasons.items())),
            "dti_discard_fraction": self.dti_discard_fraction,
            "de_refined_action_fraction": self.de_refined_action_fraction,
            "de_refined_trace_fraction": self.de_refined_trace_fraction,
            "coverage": self.coverage,
        }


def filter_corpus(
    traces: list[ReasoningTrace],
    verdicts_by_trace: dict[str, dict[str, list[Verdict]]],
    config: FilterConfig,
    registry=None,
) -> tuple[list[ReasoningTrace], list[tuple[str, FilterOutcome]], FilterStats]:
    """Filter a corpus and accumulate the statistics the stats file reports.

    The DE-refined action fraction counts regulates_expression nodes with
    at least one contradicted gene among those holding any de verdict
    (pruning removes exactly the contradicted genes, so the two notions
    coincide); the trace-level variant counts traces instead. Coverage is
    the fraction of traces containing a binds_to or regulates_expression
    node.
    """
    stats = FilterStats()
    kept: list[ReasoningTrace] = []
    outcomes: list[tuple[str, FilterOutcome]] = []
    n_covered = 0
    n_de_actions = 0
    n_de_actions_refined = 0
    n_de_traces = 0
    n_de_traces_refined = 0

    for trace in traces:
        stats.n_traces += 1
        verdicts = verdicts_by_trace.get(trace.trace_id, {})
        if any(
            n.primitive in ("binds_to", "regulates_expression") for n in trace.nodes
        ):
            n_covered += 1
        de_nodes_with_verdicts = {
            node.id
            for node in trace.nodes
            if node.primitive == "regulates_expression"
            and any(v.verifier == "de" for v in verdicts.get(node.id, []))
        }
        n_de_actions += len(de_nodes_with_verdicts)
        if de_nodes_with_verdicts:
            n_de_traces += 1

        outcome, refined = filter_trace(trace, verdicts, config, registry=registry)
        outcomes.append((trace.trace_id, outcome))

        dti_discarded = outcome.reason == "dti_below_threshold"
        if config.de_prune and not dti_discarded:
            touched_nodes = {
                nid
                for nid in de_nodes_with_verdicts
                if any(
                    v.verifier == "de" and v.status == CONTRADICTED
                    for v in verdicts.get(nid, [])
                )
            }
            n_de_actions_refined += len(touched_nodes)
            if touched_nodes:
                n_de_traces_refined += 1

        if outcome.decision == "discarded":
            stats.n_discarded += 1
            stats.reasons[outcome.reason] = stats.reasons.get(outcome.reason, 0) + 1
            continue
        if outcome.decision == "refined":
            stats.n_refined += 1
            stats.reasons[outcome.reason] = stats.reasons.get(outcome.reason, 0) + 1
        else:
            stats.n_kept += 1
        kept.append(refined)

    if stats.n_traces:
        dti_discards = stats.reasons.get("dti_below_threshold", 0)
        stats.dti_discard_fraction = dti_discards / stats.n_traces
        stats.coverage = n_covered / stats.n_traces
    if n_de_actions:
        stats.de_refined_action_fraction = n_de_actions_refined / n_de_actions
    if n_de_traces:
        stats.de_refined_trace_fraction = n_de_traces_refined / n_de_traces
    return kept, outcomes, stats
