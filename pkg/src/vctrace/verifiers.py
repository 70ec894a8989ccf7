"""Per-action verifiers: DTI, DE, LOC, PHENO.

Each verifier maps one action node to a Verdict (score in [0,1] plus a
supported/contradicted/unknown status). DTI scores come from a pluggable
scorer (a TSV table stub for tests, an HTTP client for deployments); DE
checks claims against a ground-truth table keyed by (perturbation,
context, gene); LOC checks compartment annotations; PHENO checks
positive-only phenotype associations, also along trace ancestors.
"""

from __future__ import annotations

import json
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

from vctrace.errors import ScorerError, TableFormatError
from vctrace.ioutil import read_tsv
from vctrace.lexicon import Lexicon
from vctrace.model import ActionNode, ReasoningTrace, canon_enum

SUPPORTED = "supported"
CONTRADICTED = "contradicted"
UNKNOWN = "unknown"


@dataclass(frozen=True)
class Verdict:
    node_id: str
    verifier: str  # dti | de | loc | pheno
    status: str  # supported | contradicted | unknown
    score: float | None = None
    subject: str | None = None  # e.g. the specific gene of a list

    def to_record(self, trace_id: str) -> dict:
        return {
            "trace_id": trace_id,
            "node_id": self.node_id,
            "verifier": self.verifier,
            "status": self.status,
            "score": self.score,
            "subject": self.subject,
        }


# --- DTI ---------------------------------------------------------------------


class DTIScorer(Protocol):
    def score(self, compound_id: str, protein_id: str) -> float | None: ...


class TableDTIScorer:
    """Deterministic lookup backend; scores validated into [0,1] at load."""

    def __init__(self, table: dict[tuple[str, str], float]):
        self._table = {
            (c.casefold(), p.casefold()): s for (c, p), s in table.items()
        }

    def score(self, compound_id: str, protein_id: str) -> float | None:
        return self._table.get((compound_id.casefold(), protein_id.casefold()))


class HttpDTIScorer:
    """POSTs {compound_id, protein_id} and reads {score} back."""

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint
        self.timeout = timeout

    def score(self, compound_id: str, protein_id: str) -> float | None:
        payload = json.dumps(
            {"compound_id": compound_id, "protein_id": protein_id}
        ).encode("utf-8")
        request = urllib.request.Request(
            self.endpoint, data=payload, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                body = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise ScorerError(f"DTI scorer request failed: {exc}") from exc
        score = body.get("score")
        if score is None:
            return None
        score = float(score)
        if not 0.0 <= score <= 1.0:
            raise ScorerError(f"DTI scorer returned out-of-range score {score}")
        return score


def load_dti_table(path: str | Path) -> TableDTIScorer:
    rows = read_tsv(path, ["compound_id", "protein_id", "score"])
    table = {}
    for row in rows:
        try:
            score = float(row["score"])
        except ValueError:
            raise TableFormatError(f"{path}: bad score {row['score']!r}") from None
        if not 0.0 <= score <= 1.0:
            raise TableFormatError(f"{path}: score {score} outside [0,1]")
        table[(row["compound_id"], row["protein_id"])] = score
    return TableDTIScorer(table)


def verify_dti(
    node: ActionNode, scorer: DTIScorer, lexicon: Lexicon | None = None
) -> Verdict:
    """Binding-plausibility verdict for one binds_to node.

    Unknown when either entity is unresolvable or the scorer has no
    entry; never contradicted (thresholding is the filter's job).
    Transport failures raise ScorerError rather than returning unknown.
    """
    if node.primitive != "binds_to":
        raise ValueError("verify_dti requires a binds_to node")
    actor = node.arg_str("actor")
    target = node.arg_str("target")
    compound_id, protein_id = actor, target
    if lexicon is not None:
        actor_res = lexicon.resolve(actor, type_hint="compound")
        target_res = lexicon.resolve(target, type_hint="protein")
        if not target_res.resolved:
            target_res = lexicon.resolve(target, type_hint="gene")
        if not actor_res.resolved or not target_res.resolved:
            return Verdict(node.id, "dti", UNKNOWN)
        compound_id, protein_id = actor_res.entity_id, target_res.entity_id
    score = scorer.score(compound_id, protein_id)
    if score is None:
        return Verdict(node.id, "dti", UNKNOWN)
    return Verdict(node.id, "dti", SUPPORTED, score=score)


# --- DE ----------------------------------------------------------------------


class DEGroundTruth:
    """(perturbation, context, gene) -> (log2fc, p_adj, label)."""

    def __init__(self, rows: dict[tuple[str, str, str], tuple[float, float, str]]):
        self._rows = {}
        for (pert, ctx, gene), (log2fc, p_adj, label) in rows.items():
            if label not in ("up", "down", "ns"):
                raise TableFormatError(f"bad DE label {label!r}")
            if label == "up" and not log2fc > 0:
                raise TableFormatError(f"label up with log2fc {log2fc} for {gene}")
            if label == "down" and not log2fc < 0:
                raise TableFormatError(f"label down with log2fc {log2fc} for {gene}")
            self._rows[(pert.casefold(), ctx.casefold(), gene.casefold())] = (
                log2fc, p_adj, label,
            )

    def __len__(self) -> int:
        return len(self._rows)

    def label_for(self, perturbation: str, context: str, gene: str) -> str | None:
        row = self._rows.get(
            (perturbation.casefold(), context.casefold(), gene.casefold())
        )
        return row[2] if row else None


def load_de_ground_truth(path: str | Path) -> DEGroundTruth:
    rows = read_tsv(
        path, ["perturbation_id", "context_id", "gene", "log2fc", "p_adj", "label"]
    )
    table = {}
    for row in rows:
        key = (row["perturbation_id"], row["context_id"], row["gene"])
        if row["label"] == "ns":
            # numerics may be NA for all-zero genes; the verifier only
            # consults the label
            table[key] = (0.0, 1.0, "ns")
            continue
        try:
            log2fc = float(row["log2fc"])
            p_adj = float(row["p_adj"])
        except ValueError:
            raise TableFormatError(
                f"{path}: non-numeric log2fc/p_adj for labeled gene {row['gene']}"
            ) from None
        if not 0.0 <= p_adj <= 1.0:
            raise TableFormatError(f"{path}: p_adj {p_adj} outside [0,1]")
        table[key] = (log2fc, p_adj, row["label"])
    return DEGroundTruth(table)


def verify_de(
    node: ActionNode, gt: DEGroundTruth, perturbation: str, context: str
) -> list[Verdict]:
    """One verdict per claimed gene of a regulates_expression node.

    Supported when the ground-truth label matches the claimed direction;
    contradicted when it is the opposite direction or ns (a directional
    claim about an unregulated gene is wrong, not merely unproven);
    unknown when the gene is absent from the table.
    """
    if node.primitive != "regulates_expression":
        raise ValueError("verify_de requires a regulates_expression node")
    claimed = canon_enum(node.arg_str("direction"))
    verdicts = []
    for gene in node.arg_list("genes"):
        label = gt.label_for(perturbation, context, gene)
        if label is None:
            verdicts.append(Verdict(node.id, "de", UNKNOWN, subject=gene))
        elif label == claimed:
            verdicts.append(Verdict(node.id, "de", SUPPORTED, score=1.0, subject=gene))
        else:
            verdicts.append(
                Verdict(node.id, "de", CONTRADICTED, score=0.0, subject=gene)
            )
    return verdicts


# --- LOC ---------------------------------------------------------------------


class LocalizationTable:
    """protein/entity -> set of annotated compartments (case-folded)."""

    def __init__(self, annotations: dict[str, set[str]]):
        self._annotations = {
            k.casefold(): {c.casefold() for c in v} for k, v in annotations.items()
        }

    def compartments(self, entity: str) -> set[str] | None:
        return self._annotations.get(entity.casefold())


def load_localization_table(path: str | Path) -> LocalizationTable:
    rows = read_tsv(path, ["protein_id", "compartment", "source"])
    annotations: dict[str, set[str]] = {}
    for row in rows:
        annotations.setdefault(row["protein_id"], set()).add(row["compartment"])
    return LocalizationTable(annotations)


def verify_loc(node: ActionNode, annotations: LocalizationTable) -> Verdict:
    """Check claimed compartments against curated annotations.

    Supported when every claimed compartment (from_loc/to_loc, whichever
    are present) is annotated; contradicted when the entity has
    annotations but none of the claims match; unknown when the entity is
    unannotated, no compartment is claimed, or the claims match partially.
    """
    if node.primitive != "localizes_to":
        raise ValueError("verify_loc requires a localizes_to node")
    entity = node.arg_str("entity")
    claimed = [
        node.arg_str(k).casefold() for k in ("from_loc", "to_loc") if k in node.args
    ]
    known = annotations.compartments(entity)
    if known is None or not claimed:
        return Verdict(node.id, "loc", UNKNOWN)
    matches = sum(1 for c in claimed if c in known)
    if matches == len(claimed):
        return Verdict(node.id, "loc", SUPPORTED, score=1.0)
    if matches == 0:
        return Verdict(node.id, "loc", CONTRADICTED, score=0.0)
    return Verdict(node.id, "loc", UNKNOWN)


# --- PHENO ---------------------------------------------------------------------


class PhenotypeTable:
    """Positive-only (entity, phenotype) association pairs."""

    def __init__(self, pairs: set[tuple[str, str]]):
        self._pairs = {(e.casefold(), p.casefold()) for e, p in pairs}

    def associated(self, entity: str, phenotype: str) -> bool:
        return (entity.casefold(), phenotype.casefold()) in self._pairs


def load_phenotype_table(path: str | Path) -> PhenotypeTable:
    rows = read_tsv(path, ["entity_id", "phenotype_id"])
    return PhenotypeTable({(r["entity_id"], r["phenotype_id"]) for r in rows})


def trace_ancestors(trace: ReasoningTrace, node_id: str) -> list[ActionNode]:
    """Nodes with a directed path to node_id (excluding the node itself)."""
    parents: dict[str, set[str]] = {}
    for src, dst in trace.edges:
        parents.setdefault(dst, set()).add(src)
    seen: set[str] = set()
    stack = list(parents.get(node_id, ()))
    while stack:
        current = stack.pop()
        if current in seen:
            continue
        seen.add(current)
        stack.extend(parents.get(current, ()))
    by_id = trace.node_by_id()
    return [by_id[nid] for nid in sorted(seen) if nid in by_id]


def _entity_args(node: ActionNode, registry) -> list[str]:
    """Values of entity and entity_list args of one node."""
    values: list[str] = []
    if node.primitive not in registry:
        return values
    schema = registry.schema_for(node.primitive)
    for spec in schema.args:
        if spec.name not in node.args:
            continue
        if spec.kind == "entity":
            values.append(node.arg_str(spec.name))
        elif spec.kind == "entity_list":
            values.extend(node.arg_list(spec.name))
    return values


def verify_pheno(
    node: ActionNode,
    trace: ReasoningTrace,
    pheno_db: PhenotypeTable,
    registry,
) -> Verdict:
    """Phenotype-association verdict, honoring downstream targets.

    Supported when (actor, phenotype) is associated, or when any entity
    argument of a trace ancestor carries the association. Never
    contradicted: the association store is positive-only.
    """
    if node.primitive not in ("induces_phenotype", "alleviates_phenotype"):
        raise ValueError("verify_pheno requires a phenotype node")
    phenotype = node.arg_str("phenotype")
    actor = node.arg_str("actor")
    if pheno_db.associated(actor, phenotype):
        return Verdict(node.id, "pheno", SUPPORTED, score=1.0)
    for ancestor in trace_ancestors(trace, node.id):
        for entity in _entity_args(ancestor, registry):
            if pheno_db.associated(entity, phenotype):
                return Verdict(node.id, "pheno", SUPPORTED, score=1.0)
    return Verdict(node.id, "pheno", UNKNOWN)


# --- dispatch ------------------------------------------------------------------


@dataclass
class VerifierSuite:
    """All configured verifiers; any table may be absent (verdicts skip)."""

    scorer: DTIScorer | None = None
    de_gt: DEGroundTruth | None = None
    loc_table: LocalizationTable | None = None
    pheno_table: PhenotypeTable | None = None
    lexicon: Lexicon | None = None

    def verify_trace(self, trace: ReasoningTrace, registry) -> dict[str, list[Verdict]]:
        """Dispatch each node to its verifier; unhandled nodes get none.

        Verifier errors (e.g. scorer transport failures) propagate tagged
        with the offending node id.
        """
        out: dict[str, list[Verdict]] = {}
        for node in trace.nodes:
            verdicts: list[Verdict] = []
            if node.primitive == "binds_to" and self.scorer is not None:
                try:
                    verdicts.append(verify_dti(node, self.scorer, self.lexicon))
                except ScorerError as exc:
                    raise ScorerError(f"node {node.id}: {exc}") from exc
            elif node.primitive == "regulates_expression" and self.de_gt is not None:
                verdicts.extend(
                    verify_de(node, self.de_gt, trace.perturbation, trace.context)
                )
            elif node.primitive == "localizes_to" and self.loc_table is not None:
                verdicts.append(verify_loc(node, self.loc_table))
            elif (
                node.primitive in ("induces_phenotype", "alleviates_phenotype")
                and self.pheno_table is not None
            ):
                verdicts.append(verify_pheno(node, trace, self.pheno_table, registry))
            if verdicts:
                out[node.id] = verdicts
        return out
