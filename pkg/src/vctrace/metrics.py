"""Corpus quality metrics: validity, verifiability, DTI score, DE score.

Undefined metrics (zero denominator) are reported as None, never 0.0:
an empty denominator is the absence of a judgment, not a bad one. Both
micro and macro verifiability are reported because the averaging unit is
a modeling choice.
"""

from __future__ import annotations

from dataclasses import dataclass

from vctrace.lexicon import Lexicon
from vctrace.model import ReasoningTrace
from vctrace.schema import SchemaRegistry
from vctrace.verifiers import SUPPORTED, Verdict


@dataclass
class MetricsReport:
    validity: float | None
    verifiability_micro: float | None
    verifiability_macro: float | None
    dti_score: float | None
    de_score: float | None
    n_traces: int
    n_valid: int
    n_entity_args: int
    n_dti_verdicts: int
    n_de_traces: int

    def to_record(self) -> dict:
        return {
            "validity": self.validity,
            "verifiability_micro": self.verifiability_micro,
            "verifiability_macro": self.verifiability_macro,
            "dti_score": self.dti_score,
            "de_score": self.de_score,
            "n_traces": self.n_traces,
            "n_valid": self.n_valid,
            "n_entity_args": self.n_entity_args,
            "n_dti_verdicts": self.n_dti_verdicts,
            "n_de_traces": self.n_de_traces,
        }

    def to_table(self) -> str:
        """Aligned text table: Validity, Verifiability, DTI, DE."""
        headers = ["Validity", "Verifiability", "DTI", "DE"]
        values = [
            _cell(self.validity),
            _cell(self.verifiability_micro),
            _cell(self.dti_score),
            _cell(self.de_score),
        ]
        widths = [max(len(h), len(v)) for h, v in zip(headers, values)]
        head = "  ".join(h.ljust(w) for h, w in zip(headers, widths))
        row = "  ".join(v.ljust(w) for v, w in zip(values, widths))
        return f"{head}\n{row}"


def _cell(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def validity(parse_valid_flags: list[bool]) -> float | None:
    """Fraction of raw records that parsed and validated structurally."""
    if not parse_valid_flags:
        return None
    return sum(1 for ok in parse_valid_flags if ok) / len(parse_valid_flags)


def entity_args_of(trace: ReasoningTrace, registry: SchemaRegistry) -> list[str]:
    """All values of entity/entity_list-kind args, in node order."""
    values: list[str] = []
    for node in trace.nodes:
        if node.primitive not in registry:
            continue
        schema = registry.schema_for(node.primitive)
        for spec in schema.args:
            if spec.name not in node.args:
                continue
            if spec.kind == "entity":
                values.append(node.arg_str(spec.name))
            elif spec.kind == "entity_list":
                values.extend(node.arg_list(spec.name))
    return values


def verifiability(
    traces: list[ReasoningTrace], lexicon: Lexicon, registry: SchemaRegistry
) -> tuple[float | None, float | None, int]:
    """(micro, macro, n_entity_args) over valid traces.

    Micro pools all entity-kind args; macro averages per-trace fractions,
    skipping traces with no entity-kind args.
    """
    total = 0
    resolvable = 0
    per_trace: list[float] = []
    for trace in traces:
        args = entity_args_of(trace, registry)
        if not args:
            continue
        hits = sum(1 for a in args if lexicon.resolve(a).resolved)
        total += len(args)
        resolvable += hits
        per_trace.append(hits / len(args))
    micro = resolvable / total if total else None
    macro = sum(per_trace) / len(per_trace) if per_trace else None
    return micro, macro, total


def dti_score(verdicts: list[Verdict]) -> tuple[float | None, int]:
    """(mean of known dti scores, count); unknowns are excluded."""
    scores = [v.score for v in verdicts if v.verifier == "dti" and v.score is not None]
    if not scores:
        return None, 0
    return sum(scores) / len(scores), len(scores)


def de_score(
    traces: list[ReasoningTrace], verdicts_by_trace: dict[str, list[Verdict]]
) -> tuple[float | None, int]:
    """Fraction of DE-bearing traces with at least one supported DE verdict."""
    n_bearing = 0
    n_good = 0
    for trace in traces:
        if not trace.nodes_with_primitive("regulates_expression"):
            continue
        n_bearing += 1
        trace_verdicts = verdicts_by_trace.get(trace.trace_id, [])
        if any(
            v.verifier == "de" and v.status == SUPPORTED for v in trace_verdicts
        ):
            n_good += 1
    if not n_bearing:
        return None, 0
    return n_good / n_bearing, n_bearing


def build_report(
    parse_valid_flags: list[bool],
    valid_traces: list[ReasoningTrace],
    verdicts_by_trace: dict[str, list[Verdict]],
    lexicon: Lexicon | None,
    registry: SchemaRegistry,
) -> MetricsReport:
    micro, macro, n_args = (None, None, 0)
    if lexicon is not None:
        micro, macro, n_args = verifiability(valid_traces, lexicon, registry)
    flat = [v for vs in verdicts_by_trace.values() for v in vs]
    dti, n_dti = dti_score(flat)
    de, n_de = de_score(valid_traces, verdicts_by_trace)
    return MetricsReport(
        validity=validity(parse_valid_flags),
        verifiability_micro=micro,
        verifiability_macro=macro,
        dti_score=dti,
        de_score=de,
        n_traces=len(parse_valid_flags),
        n_valid=len(valid_traces),
        n_entity_args=n_args,
        n_dti_verdicts=n_dti,
        n_de_traces=n_de,
    )
