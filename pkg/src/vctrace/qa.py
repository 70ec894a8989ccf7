"""Statistical baselines for the perturbation-QA task and F1 evaluation.

Baselines: seeded random, per-(context, gene, task) training-label mean,
and Tanimoto k-nearest-neighbor over precomputed compound fingerprints.
All are deterministic given their inputs and seed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from vctrace.delabel.labeling import QAExample
from vctrace.errors import TableFormatError
from vctrace.ioutil import read_tsv


@dataclass(frozen=True)
class Fingerprint:
    compound_id: str
    n_bits: int
    bits: bytes  # most-significant-bit-first packing

    def popcount(self) -> int:
        return int(np.bitwise_count(np.frombuffer(self.bits, dtype=np.uint8)).sum())


@dataclass(frozen=True)
class Prediction:
    example: QAExample
    predicted: int
    score: float | None = None

    def to_record(self) -> dict:
        rec = self.example.to_record()
        rec["predicted"] = self.predicted
        rec["score"] = self.score
        return rec


def load_fingerprints_tsv(path: str | Path) -> dict[str, Fingerprint]:
    """Fingerprints TSV: compound_id, n_bits, hex-encoded bits (MSB first)."""
    rows = read_tsv(path, ["compound_id", "n_bits", "bits_hex"])
    out: dict[str, Fingerprint] = {}
    n_bits_seen: set[int] = set()
    for row in rows:
        try:
            n_bits = int(row["n_bits"])
            bits = bytes.fromhex(row["bits_hex"])
        except ValueError:
            raise TableFormatError(
                f"{path}: bad fingerprint row for {row['compound_id']!r}"
            ) from None
        if len(bits) * 8 < n_bits:
            raise TableFormatError(
                f"{path}: {row['compound_id']}: hex shorter than n_bits"
            )
        if row["compound_id"] in out:
            raise TableFormatError(f"{path}: duplicate compound {row['compound_id']!r}")
        n_bits_seen.add(n_bits)
        out[row["compound_id"]] = Fingerprint(row["compound_id"], n_bits, bits)
    if len(n_bits_seen) > 1:
        raise TableFormatError(f"{path}: mixed n_bits values {sorted(n_bits_seen)}")
    return out


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    """|a AND b| / |a OR b|; both-empty pairs score 0.0 with a warning."""
    if a.n_bits != b.n_bits:
        raise ValueError("fingerprints have different n_bits")
    va = np.frombuffer(a.bits, dtype=np.uint8)
    vb = np.frombuffer(b.bits, dtype=np.uint8)
    inter = int(np.bitwise_count(va & vb).sum())
    union = int(np.bitwise_count(va | vb).sum())
    if union == 0:
        warnings.warn("tanimoto of two empty fingerprints; returning 0.0")
        return 0.0
    return inter / union


def predict_random(examples: list[QAExample], seed: int) -> list[Prediction]:
    """Seeded fair coin per example."""
    rng = np.random.default_rng(seed)
    flips = rng.integers(0, 2, size=len(examples))
    return [
        Prediction(example=e, predicted=int(f), score=0.5)
        for e, f in zip(examples, flips)
    ]


def _mean_index(train: list[QAExample]) -> tuple[dict, dict]:
    by_key: dict[tuple[str, str, str], list[int]] = {}
    by_task: dict[str, list[int]] = {}
    for e in train:
        by_key.setdefault((e.context_id, e.gene, e.task), []).append(e.label)
        by_task.setdefault(e.task, []).append(e.label)
    return by_key, by_task


def predict_mean(
    test: list[QAExample], train: list[QAExample]
) -> list[Prediction]:
    """Mean training label for the same (context, gene, task).

    Test compounds are unseen by construction of the split, so the mean
    pools across training compounds; keys with no training rows fall back
    to the global task base rate. Predicted label is 1 iff score > 0.5.
    """
    if not train:
        raise ValueError("mean baseline needs a nonempty training set")
    by_key, by_task = _mean_index(train)
    out = []
    for e in test:
        labels = by_key.get((e.context_id, e.gene, e.task))
        if not labels:
            labels = by_task.get(e.task, [])
        if labels:
            score = sum(labels) / len(labels)
        else:
            score = sum(x.label for x in train) / len(train)
        out.append(Prediction(example=e, predicted=int(score > 0.5), score=score))
    return out


def predict_knn(
    test: list[QAExample],
    train: list[QAExample],
    fingerprints: dict[str, Fingerprint],
    k: int = 5,
) -> list[Prediction]:
    """Majority vote over labels of the k most fingerprint-similar
    training compounds for the same (context, gene, task).

    Compounds rank by Tanimoto descending with compound_id breaking ties.
    An empty label pool among the top k extends to the next-nearest
    compounds until labels appear (global task base rate when the pool is
    exhausted); vote ties copy the nearest contributing compound's label.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not train:
        raise ValueError("knn baseline needs a nonempty training set")
    train_compounds = sorted({e.perturbation_id for e in train})
    missing = [c for c in train_compounds if c not in fingerprints]
    missing += [
        c for c in sorted({e.perturbation_id for e in test}) if c not in fingerprints
    ]
    if missing:
        raise TableFormatError(
            f"missing fingerprint for compound(s): {', '.join(sorted(set(missing)))}"
        )
    labels_by_compound: dict[tuple[str, str, str, str], list[int]] = {}
    for e in train:
        labels_by_compound.setdefault(
            (e.perturbation_id, e.context_id, e.gene, e.task), []
        ).append(e.label)
    by_task: dict[str, list[int]] = {}
    for e in train:
        by_task.setdefault(e.task, []).append(e.label)

    ranking_cache: dict[str, list[str]] = {}

    def ranking_for(compound: str) -> list[str]:
        if compound not in ranking_cache:
            fp = fingerprints[compound]
            ranking_cache[compound] = sorted(
                train_compounds,
                key=lambda c: (-tanimoto(fp, fingerprints[c]), c),
            )
        return ranking_cache[compound]

    out = []
    for e in test:
        ranking = ranking_for(e.perturbation_id)
        votes: list[int] = []
        nearest_label: int | None = None
        pool_size = min(k, len(ranking))
        while True:
            votes = []
            nearest_label = None
            for compound in ranking[:pool_size]:
                labels = labels_by_compound.get(
                    (compound, e.context_id, e.gene, e.task)
                )
                if labels:
                    votes.extend(labels)
                    if nearest_label is None:
                        nearest_label = _majority(labels, labels[0])
            if votes or pool_size >= len(ranking):
                break
            pool_size += 1
        if votes:
            predicted = _majority(votes, nearest_label)
            score = sum(votes) / len(votes)
        else:
            base = by_task.get(e.task, [])
            score = sum(base) / len(base) if base else 0.0
            predicted = int(score > 0.5)
        out.append(Prediction(example=e, predicted=predicted, score=score))
    return out


def _majority(votes: list[int], tiebreak: int) -> int:
    ones = sum(votes)
    zeros = len(votes) - ones
    if ones > zeros:
        return 1
    if zeros > ones:
        return 0
    return tiebreak


def f1_score(predictions: list[int], labels: list[int]) -> float:
    """F1 = 2TP / (2TP + FP + FN); defined as 0.0 on a zero denominator."""
    if len(predictions) != len(labels):
        raise ValueError("predictions and labels differ in length")
    tp = sum(1 for p, y in zip(predictions, labels) if p == 1 and y == 1)
    fp = sum(1 for p, y in zip(predictions, labels) if p == 1 and y == 0)
    fn = sum(1 for p, y in zip(predictions, labels) if p == 0 and y == 1)
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 0.0
    return 2 * tp / denom


def evaluate(predictions: list[Prediction]) -> dict:
    """F1 per (context, task), per-task overall, and per-context overall."""
    groups: dict[tuple[str, str], list[Prediction]] = {}
    for p in predictions:
        groups.setdefault((p.example.context_id, p.example.task), []).append(p)
    cells = {}
    for (context, task) in sorted(groups):
        preds = groups[(context, task)]
        cells[f"{context}/{task}"] = f1_score(
            [p.predicted for p in preds], [p.example.label for p in preds]
        )
    by_task = {}
    for task in sorted({p.example.task for p in predictions}):
        preds = [p for p in predictions if p.example.task == task]
        by_task[task] = f1_score(
            [p.predicted for p in preds], [p.example.label for p in preds]
        )
    by_context = {}
    for context in sorted({p.example.context_id for p in predictions}):
        preds = [p for p in predictions if p.example.context_id == context]
        by_context[context] = f1_score(
            [p.predicted for p in preds], [p.example.label for p in preds]
        )
    overall = f1_score(
        [p.predicted for p in predictions], [p.example.label for p in predictions]
    )
    return {
        "cells": cells,
        "by_task": by_task,
        "by_context": by_context,
        "overall": overall,
        "n": len(predictions),
    }


def evaluation_table(report: dict) -> str:
    """Aligned text table: contexts as rows, tasks as columns."""
    cells = report["cells"]
    contexts = sorted({key.split("/")[0] for key in cells})
    tasks = sorted({key.split("/")[1] for key in cells})
    headers = ["context"] + tasks + ["all"]
    rows = []
    for context in contexts:
        row = [context]
        for task in tasks:
            value = cells.get(f"{context}/{task}")
            row.append("n/a" if value is None else f"{value:.4f}")
        row.append(f"{report['by_context'][context]:.4f}")
        rows.append(row)
    total_row = ["all"] + [
        f"{report['by_task'][t]:.4f}" if t in report["by_task"] else "n/a"
        for t in tasks
    ] + [f"{report['overall']:.4f}"]
    rows.append(total_row)
    widths = [
        max(len(headers[i]), *(len(r[i]) for r in rows)) for i in range(len(headers))
    ]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    for row in rows:
        lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)))
    return "\n".join(lines)
