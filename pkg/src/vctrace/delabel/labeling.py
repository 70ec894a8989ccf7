"""From counts to QA examples: pseudobulk, per-gene DE, labels, splits.

The flow for each (perturbation, context) pair: pseudobulk cell counts,
median-of-ratios size factors, NB GLM per gene, Wald test, BH
adjustment, up/down/ns labels at adjusted p < alpha, then the
top-25/top-25/100-random example construction and a
perturbation-disjoint train/test split.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from vctrace.delabel import kernels
from vctrace.delabel.glm import STATUS_ALL_ZERO, STATUS_NAMES
from vctrace.errors import TableFormatError
from vctrace.ioutil import read_tsv

log = logging.getLogger(__name__)

LOG2 = math.log(2.0)


@dataclass(frozen=True)
class SampleMeta:
    sample_id: str
    perturbation_id: str
    context_id: str
    condition: str  # treated | control
    replicate: str

    @property
    def group_key(self) -> tuple[str, str, str, str]:
        return (self.perturbation_id, self.context_id, self.condition, self.replicate)


@dataclass
class CountsMatrix:
    genes: list[str]
    samples: list[str]
    counts: np.ndarray  # genes x samples, nonnegative

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.float64)
        if self.counts.shape != (len(self.genes), len(self.samples)):
            raise ValueError("counts shape does not match gene/sample labels")
        if np.any(self.counts < 0):
            raise ValueError("counts must be nonnegative")


@dataclass
class DEResult:
    gene: str
    log2fc: float
    se: float
    wald_z: float
    p: float
    p_adj: float
    label: str  # up | down | ns
    status: str  # ok | all_zero | non_converged


@dataclass(frozen=True)
class QAExample:
    perturbation_id: str
    context_id: str
    gene: str
    task: str  # de | doc
    label: int

    def to_record(self) -> dict:
        return {
            "perturbation_id": self.perturbation_id,
            "context_id": self.context_id,
            "gene": self.gene,
            "task": self.task,
            "label": self.label,
        }


def pseudobulk(
    counts: CountsMatrix, meta: list[SampleMeta]
) -> tuple[CountsMatrix, list[SampleMeta]]:
    """Sum columns per (perturbation, context, condition, replicate) group.

    Group order is deterministic (sorted keys); groups with zero member
    cells are dropped with a warning.
    """
    by_sample = {m.sample_id: m for m in meta}
    missing = [s for s in counts.samples if s not in by_sample]
    if missing:
        raise TableFormatError(f"samples without metadata: {', '.join(missing[:5])}")
    groups: dict[tuple, list[int]] = {}
    for col, sample_id in enumerate(counts.samples):
        groups.setdefault(by_sample[sample_id].group_key, []).append(col)
    for m in meta:
        if m.group_key not in groups:
            log.warning("group %s has zero cells; dropped", "|".join(m.group_key))
    keys = sorted(groups)
    if not keys:
        return CountsMatrix(list(counts.genes), [], np.zeros((len(counts.genes), 0))), []
    summed = np.column_stack(
        [counts.counts[:, groups[k]].sum(axis=1) for k in keys]
    )
    out_meta = [
        SampleMeta(
            sample_id="|".join(k),
            perturbation_id=k[0],
            context_id=k[1],
            condition=k[2],
            replicate=k[3],
        )
        for k in keys
    ]
    out = CountsMatrix(list(counts.genes), [m.sample_id for m in out_meta], summed)
    return out, out_meta


def run_de(
    counts: CountsMatrix, meta: list[SampleMeta], alpha: float = 0.05
) -> dict[tuple[str, str], list[DEResult]]:
    """Per-(perturbation, context) differential expression, all genes.

    Each pair needs >=2 treated and >=2 control samples. Genes without a
    p-value (all_zero, or non-converged without a usable standard error)
    are excluded from the BH family and labeled ns.
    """
    by_sample = {m.sample_id: m for m in meta}
    pairs: dict[tuple[str, str], list[int]] = {}
    for col, sample_id in enumerate(counts.samples):
        m = by_sample[sample_id]
        pairs.setdefault((m.perturbation_id, m.context_id), []).append(col)

    results: dict[tuple[str, str], list[DEResult]] = {}
    for pair in sorted(pairs):
        cols = pairs[pair]
        sub = counts.counts[:, cols]
        conditions = [by_sample[counts.samples[c]].condition for c in cols]
        treated = np.array([c == "treated" for c in conditions], dtype=bool)
        if treated.sum() < 2 or (~treated).sum() < 2:
            raise TableFormatError(
                f"pair {pair}: need >=2 treated and >=2 control samples"
            )
        sf = kernels.size_factors(sub)
        fit = kernels.nb_glm_fit_many(sub, sf, treated)
        z, p = kernels.wald_test_many(fit["beta1"], fit["se1"])
        usable = (fit["status"] != STATUS_ALL_ZERO) & np.isfinite(p)
        p_adj = np.full(len(counts.genes), np.nan)
        if np.any(usable):
            p_adj[usable] = kernels.bh_adjust(p[usable])
        rows = []
        for g, gene in enumerate(counts.genes):
            log2fc = fit["beta1"][g] / LOG2
            label = "ns"
            if usable[g] and p_adj[g] < alpha:
                if log2fc > 0:
                    label = "up"
                elif log2fc < 0:
                    label = "down"
            rows.append(
                DEResult(
                    gene=gene,
                    log2fc=float(log2fc),
                    se=float(fit["se1"][g]),
                    wald_z=float(z[g]),
                    p=float(p[g]),
                    p_adj=float(p_adj[g]),
                    label=label,
                    status=STATUS_NAMES[int(fit["status"][g])],
                )
            )
        results[pair] = rows
    return results


def label_genes(results: list[DEResult], alpha: float = 0.05) -> list[DEResult]:
    """Relabel results at a different significance threshold (strict <)."""
    out = []
    for r in results:
        label = "ns"
        if not math.isnan(r.p_adj) and r.p_adj < alpha:
            if r.log2fc > 0:
                label = "up"
            elif r.log2fc < 0:
                label = "down"
        out.append(
            DEResult(r.gene, r.log2fc, r.se, r.wald_z, r.p, r.p_adj, label, r.status)
        )
    return out


@dataclass
class BuildReport:
    n_up: int
    n_down: int
    n_ns: int
    shortfall: dict[str, int] = field(default_factory=dict)


def pair_seed(seed: int, perturbation_id: str, context_id: str) -> int:
    """Stable per-pair RNG seed, independent of pair iteration order."""
    digest = hashlib.sha256(
        f"{seed}:{perturbation_id}:{context_id}".encode("utf-8")
    ).digest()
    return int.from_bytes(digest[:8], "big")


def build_examples(
    results: list[DEResult],
    perturbation_id: str,
    context_id: str,
    seed: int,
    top_n: int = 25,
    n_nonreg: int = 100,
) -> tuple[list[QAExample], BuildReport]:
    """Top-N up, top-N down (by |log2fc|, ties by gene), N_nonreg random ns.

    The ns pool excludes all-zero genes (they carry no signal). DE-task
    labels are 1 for selected up/down genes and 0 for sampled ns genes;
    DOC-task examples exist only for up/down genes (1 = up, 0 = down).
    """
    ups = sorted(
        (r for r in results if r.label == "up"),
        key=lambda r: (-abs(r.log2fc), r.gene),
    )[:top_n]
    downs = sorted(
        (r for r in results if r.label == "down"),
        key=lambda r: (-abs(r.log2fc), r.gene),
    )[:top_n]
    ns_pool = sorted(
        r.gene for r in results if r.label == "ns" and r.status != "all_zero"
    )
    rng = np.random.default_rng(pair_seed(seed, perturbation_id, context_id))
    k = min(n_nonreg, len(ns_pool))
    ns_genes = sorted(rng.choice(len(ns_pool), size=k, replace=False).tolist())
    sampled_ns = [ns_pool[i] for i in ns_genes]

    examples: list[QAExample] = []
    for r in ups:
        examples.append(QAExample(perturbation_id, context_id, r.gene, "de", 1))
        examples.append(QAExample(perturbation_id, context_id, r.gene, "doc", 1))
    for r in downs:
        examples.append(QAExample(perturbation_id, context_id, r.gene, "de", 1))
        examples.append(QAExample(perturbation_id, context_id, r.gene, "doc", 0))
    for gene in sampled_ns:
        examples.append(QAExample(perturbation_id, context_id, gene, "de", 0))

    n_up_all = sum(1 for r in results if r.label == "up")
    n_down_all = sum(1 for r in results if r.label == "down")
    shortfall = {}
    if n_up_all < top_n:
        shortfall["up"] = top_n - n_up_all
    if n_down_all < top_n:
        shortfall["down"] = top_n - n_down_all
    if len(ns_pool) < n_nonreg:
        shortfall["ns"] = n_nonreg - len(ns_pool)
    report = BuildReport(
        n_up=len(ups), n_down=len(downs), n_ns=len(sampled_ns), shortfall=shortfall
    )
    return examples, report


def split_by_perturbation(
    examples: list[QAExample],
    seed: int,
    test_fraction: float = 0.2,
    n_test: int | None = None,
) -> tuple[list[QAExample], list[QAExample]]:
    """Perturbation-disjoint split; optionally subsample the test side.

    Perturbation ids are shuffled with the seed and the first
    ceil(test_fraction * n) become the test side; every example follows
    its perturbation. When n_test is given, that many test-side examples
    are sampled uniformly (all of them when fewer are available).
    """
    if not examples:
        raise ValueError("no examples to split")
    perts = sorted({e.perturbation_id for e in examples})
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(perts))
    n_test_perts = math.ceil(test_fraction * len(perts))
    test_perts = {perts[i] for i in order[:n_test_perts]}
    train = [e for e in examples if e.perturbation_id not in test_perts]
    test = [e for e in examples if e.perturbation_id in test_perts]
    if n_test is not None and len(test) > n_test:
        pick = sorted(rng.choice(len(test), size=n_test, replace=False).tolist())
        test = [test[i] for i in pick]
    return train, test


def leakage_overlap(
    test_examples: list[QAExample], traces_by_pair: dict[tuple[str, str], object]
) -> dict[str, float | None]:
    """Fraction of test examples whose gene appears in the same pair's
    trace regulates_expression gene arguments, per task.

    A missing trace for a pair contributes to the denominator only.
    Gene comparison is case-insensitive.
    """
    gene_sets: dict[tuple[str, str], set[str]] = {}
    for pair, trace in traces_by_pair.items():
        genes: set[str] = set()
        for node in getattr(trace, "nodes", []):
            if node.primitive == "regulates_expression":
                genes.update(g.casefold() for g in node.arg_list("genes"))
        gene_sets[pair] = genes
    out: dict[str, float | None] = {}
    for task in ("de", "doc"):
        subset = [e for e in test_examples if e.task == task]
        if not subset:
            out[task] = None
            continue
        hits = sum(
            1
            for e in subset
            if e.gene.casefold()
            in gene_sets.get((e.perturbation_id, e.context_id), set())
        )
        out[task] = hits / len(subset)
    return out


# --- file I/O ----------------------------------------------------------------


def load_counts_tsv(path: str | Path) -> CountsMatrix:
    """Counts TSV: first column 'gene', remaining columns are sample ids."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if not header or header[0] != "gene":
            raise TableFormatError(f"{path}: first column must be 'gene'")
        samples = header[1:]
        if len(set(samples)) != len(samples):
            raise TableFormatError(f"{path}: duplicate sample columns")
        genes = []
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != len(header):
                raise TableFormatError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(fields)}"
                )
            genes.append(fields[0])
            try:
                rows.append([float(v) for v in fields[1:]])
            except ValueError:
                raise TableFormatError(f"{path}:{lineno}: non-numeric count") from None
    counts = np.array(rows, dtype=np.float64) if rows else np.zeros((0, len(samples)))
    return CountsMatrix(genes=genes, samples=samples, counts=counts)


def load_sample_meta_tsv(path: str | Path) -> list[SampleMeta]:
    rows = read_tsv(
        path, ["sample_id", "perturbation_id", "context_id", "condition", "replicate"]
    )
    seen = set()
    meta = []
    for row in rows:
        if row["sample_id"] in seen:
            raise TableFormatError(f"{path}: duplicate sample_id {row['sample_id']!r}")
        seen.add(row["sample_id"])
        if row["condition"] not in ("treated", "control"):
            raise TableFormatError(
                f"{path}: condition must be treated|control, got {row['condition']!r}"
            )
        meta.append(
            SampleMeta(
                sample_id=row["sample_id"],
                perturbation_id=row["perturbation_id"],
                context_id=row["context_id"],
                condition=row["condition"],
                replicate=row["replicate"],
            )
        )
    return meta


DE_TSV_HEADER = [
    "perturbation_id", "context_id", "gene", "log2fc", "se",
    "wald_z", "p", "p_adj", "label", "status",
]


def de_results_rows(results: dict[tuple[str, str], list[DEResult]]):
    """Rows for the DE output TSV (doubles as verifier ground truth)."""
    for (pert, ctx) in sorted(results):
        for r in results[(pert, ctx)]:
            yield [
                pert, ctx, r.gene,
                _fmt(r.log2fc), _fmt(r.se), _fmt(r.wald_z), _fmt(r.p), _fmt(r.p_adj),
                r.label, r.status,
            ]


def _fmt(x: float) -> str:
    return "NA" if math.isnan(x) else repr(float(x))
