"""Two-stage generation pipeline: report generator then explanation
constructor, followed by validation, verification, and filtering.

Prompts live in external template files with {placeholder} syntax so
they can be swapped without code changes. With the stub or replay
providers the whole pipeline is deterministic: identical inputs and
fixtures produce byte-identical outputs.
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from vctrace.errors import PipelineError
from vctrace.filtering import FilterConfig, filter_trace
from vctrace.graph import validate_graph
from vctrace.knowledge import DocumentStore, KnowledgeGraph, SimilarityProvider
from vctrace.lexicon import Lexicon
from vctrace.metrics import dti_score, validity
from vctrace.model import ReasoningTrace
from vctrace.parser import parse_trace
from vctrace.providers import GenerationProvider, prompt_digest
from vctrace.records import trace_to_record
from vctrace.schema import SchemaRegistry
from vctrace.verifiers import SUPPORTED, VerifierSuite

SECTION_KEYS = ("kg", "gene_db", "literature", "encyclopedia")

_PLACEHOLDER_RE = re.compile(r"\{(\w+)\}")


@dataclass(frozen=True)
class PerturbationInput:
    perturbation: str
    context: str
    trace_id: str | None = None

    def __post_init__(self):
        if not self.perturbation or not self.context:
            raise ValueError("perturbation and context must be nonempty")


@dataclass
class Report:
    input: PerturbationInput
    sections: dict[str, str]
    body: str
    prompt_digest: str

    def to_record(self) -> dict:
        return {
            "perturbation": self.input.perturbation,
            "context": self.input.context,
            "sections": dict(self.sections),
            "body": self.body,
            "prompt_digest": self.prompt_digest,
        }


def load_template(templates_dir: str | Path | None, name: str) -> str:
    """Template from the configured directory, else the packaged default."""
    if templates_dir is not None:
        path = Path(templates_dir) / name
        if path.exists():
            return path.read_text(encoding="utf-8")
    ref = resources.files("vctrace").joinpath(f"data/templates/{name}")
    return ref.read_text(encoding="utf-8")


def template_placeholders(template: str) -> set[str]:
    return set(_PLACEHOLDER_RE.findall(template))


def fill_template(template: str, values: dict[str, str], stage: str) -> str:
    missing = template_placeholders(template) - set(values)
    if missing:
        raise PipelineError(stage, f"template missing values for: {', '.join(sorted(missing))}")

    def _sub(match: re.Match) -> str:
        return values[match.group(1)]

    return _PLACEHOLDER_RE.sub(_sub, template)


@dataclass
class PipelineComponents:
    """Everything the pipeline stages need, wired once."""

    registry: SchemaRegistry
    lexicon: Lexicon
    kg: KnowledgeGraph
    documents: DocumentStore
    provider: GenerationProvider
    verifier_suite: VerifierSuite
    filter_config: FilterConfig = field(default_factory=FilterConfig)
    similarity: SimilarityProvider | None = None
    templates_dir: str | Path | None = None
    max_neighbors: int = 100
    top_k_docs: int = 5
    one_step: bool = False
    include_sections: bool = False


def retrieve_sections(c: PipelineComponents, inp: PerturbationInput) -> dict[str, str]:
    """Entity extraction plus per-source retrieval for one input."""
    text = f"{inp.perturbation} {inp.context}"
    hits = c.lexicon.extract_entities(text)
    surfaces: list[str] = []
    seen: set[str] = set()
    for surface, _resolved, _span in hits:
        key = surface.casefold()
        if key not in seen:
            seen.add(key)
            surfaces.append(surface)

    kg_blocks = []
    gene_blocks = []
    if surfaces and c.kg.nodes:
        for surface in surfaces:
            node, method = c.kg.lookup_node(surface, provider=c.similarity)
            context_text = c.kg.neighborhood_context(node, c.max_neighbors)
            kg_blocks.append(f"[match: {method}] {context_text}")
    for _surface, resolved, _span in hits:
        if resolved.resolved and resolved.entity_type == "gene":
            entry = c.lexicon.entry(resolved.entity_id)
            gene_text = c.documents.gene_context(entry.canonical)
            if gene_text:
                gene_blocks.append(gene_text)

    literature = c.documents.search_documents(
        surfaces, "literature", c.top_k_docs, provider=c.similarity
    ) if surfaces else []
    encyclopedia = c.documents.search_documents(
        surfaces, "encyclopedia", c.top_k_docs, provider=c.similarity
    ) if surfaces else []

    return {
        "kg": "\n\n".join(kg_blocks),
        "gene_db": "\n\n".join(dict.fromkeys(gene_blocks)),
        "literature": "\n\n".join(f"{d.title}\n{d.body}" for d in literature),
        "encyclopedia": "\n\n".join(f"{d.title}\n{d.body}" for d in encyclopedia),
    }


def generate_report(c: PipelineComponents, inp: PerturbationInput) -> Report:
    """Retrieval, prompt assembly, and provider-written report body."""
    sections = retrieve_sections(c, inp)
    template = load_template(c.templates_dir, "report_prompt.txt")
    prompt = fill_template(
        template,
        {
            "perturbation": inp.perturbation,
            "context": inp.context,
            **sections,
        },
        stage="report",
    )
    try:
        body = c.provider.generate(prompt)
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError("report", str(exc)) from exc
    return Report(
        input=inp, sections=sections, body=body, prompt_digest=prompt_digest(prompt)
    )


def construct_explanation(
    c: PipelineComponents,
    inp: PerturbationInput,
    report: Report | None,
    sections: dict[str, str] | None = None,
) -> str:
    """Provider text for the structured explanation (verbatim)."""
    if c.one_step:
        template = load_template(c.templates_dir, "constructor_one_step_prompt.txt")
        values = {
            "perturbation": inp.perturbation,
            "context": inp.context,
            "action_space": c.registry.describe_action_space(),
            **(sections or {k: "" for k in SECTION_KEYS}),
        }
    else:
        body = report.body
        if c.include_sections:
            extra = "\n\n".join(
                f"== {k} ==\n{report.sections.get(k, '')}" for k in SECTION_KEYS
            )
            body = f"{body}\n\n{extra}"
        template = load_template(c.templates_dir, "constructor_prompt.txt")
        values = {
            "perturbation": inp.perturbation,
            "context": inp.context,
            "action_space": c.registry.describe_action_space(),
            "report": body,
        }
    prompt = fill_template(template, values, stage="construct")
    try:
        return c.provider.generate(prompt)
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError("construct", str(exc)) from exc


@dataclass
class PipelineItem:
    """Everything produced for one input, for the collector to persist."""

    index: int
    input: PerturbationInput
    trace_id: str
    report: Report | None = None
    raw_text: str | None = None
    error_stage: str | None = None
    error: str | None = None
    parse_errors: list = field(default_factory=list)
    structural_report: dict | None = None
    trace: ReasoningTrace | None = None
    verdicts: dict = field(default_factory=dict)
    filter_decision: str | None = None
    filter_record: dict | None = None
    final_trace: ReasoningTrace | None = None


def process_input(c: PipelineComponents, index: int, inp: PerturbationInput) -> PipelineItem:
    trace_id = inp.trace_id or f"trace_{index:05d}"
    item = PipelineItem(index=index, input=inp, trace_id=trace_id)
    try:
        if c.one_step:
            sections = retrieve_sections(c, inp)
            item.raw_text = construct_explanation(c, inp, None, sections=sections)
        else:
            item.report = generate_report(c, inp)
            item.raw_text = construct_explanation(c, inp, item.report)
    except PipelineError as exc:
        item.error_stage = exc.stage
        item.error = str(exc)
        return item

    outcome = parse_trace(
        item.raw_text, trace_id, inp.perturbation, inp.context
    )
    if not outcome.ok:
        item.parse_errors = outcome.syntax_errors
        return item
    trace = outcome.trace
    report = validate_graph(trace, c.registry)
    item.structural_report = report.to_record(trace_id)
    if not report.valid:
        return item
    item.trace = trace
    item.verdicts = c.verifier_suite.verify_trace(trace, c.registry)
    filter_outcome, final = filter_trace(
        trace, item.verdicts, c.filter_config, registry=c.registry
    )
    item.filter_decision = filter_outcome.decision
    item.filter_record = filter_outcome.to_record(trace_id)
    item.final_trace = final
    return item


def run_pipeline(
    c: PipelineComponents,
    inputs: list[PerturbationInput],
    jobs: int = 1,
) -> tuple[list[PipelineItem], dict]:
    """Process all inputs (optionally in parallel) and summarize stages.

    Items come back in input order regardless of jobs. Per-input failures
    are recorded on the item; only configuration problems raise.
    """
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            items = list(
                pool.map(lambda pair: process_input(c, *pair), enumerate(inputs))
            )
    else:
        items = [process_input(c, i, inp) for i, inp in enumerate(inputs)]
    items.sort(key=lambda item: item.index)

    n_generated = sum(1 for it in items if it.raw_text is not None)
    n_parsed = sum(1 for it in items if it.structural_report is not None)
    n_valid = sum(1 for it in items if it.trace is not None)
    n_kept = sum(1 for it in items if it.final_trace is not None)
    flat_verdicts = [
        v for it in items for vs in it.verdicts.values() for v in vs
    ]
    parse_valid_flags = [it.trace is not None for it in items]
    dti, n_dti = dti_score(flat_verdicts)
    de_bearing = [
        it for it in items
        if it.trace is not None and it.trace.nodes_with_primitive("regulates_expression")
    ]
    de = None
    if de_bearing:
        de = sum(
            1
            for it in de_bearing
            if any(
                v.verifier == "de" and v.status == SUPPORTED
                for vs in it.verdicts.values()
                for v in vs
            )
        ) / len(de_bearing)

    summary = {
        "stages": {
            "inputs": len(items),
            "generated": n_generated,
            "parsed": n_parsed,
            "valid": n_valid,
            "kept": n_kept,
        },
        "metrics": {
            "validity": validity(parse_valid_flags) if items else None,
            "dti_score": dti,
            "n_dti_verdicts": n_dti,
            "de_score": de,
            "n_de_traces": len(de_bearing),
        },
        "provider_mode": getattr(c.provider, "mode", "unknown"),
        "one_step": c.one_step,
        "tau": c.filter_config.tau,
    }
    return items, summary


def kept_records(items: list[PipelineItem], registry: SchemaRegistry):
    for item in items:
        if item.final_trace is not None:
            yield trace_to_record(item.final_trace, registry)


def reject_records(items: list[PipelineItem]):
    for item in items:
        if item.final_trace is not None:
            continue
        if item.error is not None:
            reason = f"pipeline_error:{item.error_stage}"
            details = {"error": item.error}
        elif item.parse_errors:
            reason = "syntax_error"
            details = {
                "syntax_errors": [
                    {"line": line, "message": msg} for line, msg in item.parse_errors
                ]
            }
        elif item.trace is None:
            reason = "structurally_invalid"
            details = {"report": item.structural_report}
        else:
            reason = (item.filter_record or {}).get("reason", "filtered")
            details = item.filter_record or {}
        yield {
            "trace_id": item.trace_id,
            "perturbation": item.input.perturbation,
            "context": item.input.context,
            "reason": reason,
            "details": details,
        }
