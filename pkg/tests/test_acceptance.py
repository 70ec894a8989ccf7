"""Acceptance suite: one test per criterion, each printing a PASS/FAIL
line (run with -s to see them live). Criteria are pinned here at their
stated tolerances; nothing is deferred to later calibration.
"""

from __future__ import annotations

import json
import math
import random
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

import support
from vctrace.delabel import glm
from vctrace.delabel.labeling import (
    DEResult,
    build_examples,
    run_de,
    split_by_perturbation,
)
from vctrace.filtering import FilterConfig, filter_corpus, filter_trace
from vctrace.graph import topological_order, validate_graph
from vctrace.ioutil import read_jsonl
from vctrace.metrics import de_score, dti_score, validity, verifiability
from vctrace.model import ActionNode, ReasoningTrace
from vctrace.parser import parse_corpus, parse_trace, render_trace
from vctrace.qa import f1_score, predict_knn, tanimoto
from vctrace.records import trace_to_record
from vctrace.verifiers import CONTRADICTED, SUPPORTED, UNKNOWN, Verdict

FIXTURES = Path(__file__).parent / "fixtures"


@contextmanager
def criterion(num: str, label: str):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"[acceptance] criterion {num}: FAIL  {label}")
        raise
    elapsed = time.perf_counter() - start
    print(f"[acceptance] criterion {num}: PASS  {label} ({elapsed:.1f}s)")


def test_criterion_01_parser_round_trip_and_fuzz(registry):
    with criterion("1", "parser round-trip x200 + 10k-string fuzz, <30s"):
        start = time.perf_counter()
        rng = random.Random(11001)
        for i in range(200):
            trace = support.make_trace(rng, registry, trace_id=f"rt{i}")
            rendered = render_trace(trace, registry)
            back = parse_trace(
                rendered, trace.trace_id, trace.perturbation, trace.context
            )
            assert back.ok and back.trace == trace
        for i in range(10_000):
            n = rng.randint(0, 200)
            data = bytes(rng.getrandbits(8) for _ in range(n))
            parse_trace(data.decode("utf-8", errors="replace"), "f", "p", "c")
        assert time.perf_counter() - start < 30.0


def test_criterion_02_validity_fixture(registry):
    with criterion("2", "20-trace fixture: validity 0.75, defects named"):
        path = FIXTURES / "corpus_validity20.jsonl"
        flags = []
        failures: dict[str, str] = {}
        for item in parse_corpus(read_jsonl(path), source=str(path)):
            if item.record_error is not None:
                flags.append(False)
                failures[item.trace_id or "?"] = item.record_error
                continue
            if not item.outcome.ok:
                flags.append(False)
                failures[item.trace_id] = "; ".join(
                    msg for _, msg in item.outcome.syntax_errors
                )
                continue
            report = validate_graph(item.outcome.trace, registry)
            flags.append(report.valid)
            if not report.valid:
                failures[item.trace_id] = "; ".join(
                    [m for _, m in report.schema_violations]
                    + report.graph_violations
                )
        assert validity(flags) == 0.75  # exactly 15/20
        assert "missing <dag> block" in failures["d01"]
        assert "unknown primitive" in failures["d02"]
        assert "missing required arg: target" in failures["d03"]
        assert "dangling edge endpoint: n9" in failures["d04"]
        assert "cycle" in failures["d05"]
        assert len(failures) == 5


def test_criterion_03_dag_oracle_agreement(registry):
    with criterion("3", "500 random digraphs vs reachability oracle"):
        rng = random.Random(33003)
        n_with_cycle = 0
        for _ in range(500):
            ids, edges = support.random_digraph(rng, max_nodes=50)
            expected = support.reachability_has_cycle(ids, edges)
            n_with_cycle += expected
            nodes = [
                ActionNode(i, "binds_to", {"actor": "a", "target": "b"})
                for i in ids
            ]
            trace = ReasoningTrace("t", "p", "c", "e", nodes, edges)
            report = validate_graph(trace, registry)
            found = any("cycle" in v for v in report.graph_violations)
            assert found == expected
            if not expected:
                order = topological_order(trace)
                position = {nid: k for k, nid in enumerate(order)}
                for src, dst in edges:
                    assert position[src] < position[dst]
        assert 0 < n_with_cycle < 500  # both regimes exercised


def test_criterion_04_bh_exactness():
    with criterion("4", "BH equals brute-force step-up on 5000 vectors"):
        rng = random.Random(44004)
        for _ in range(5000):
            n = rng.randint(1, 12)
            p = [rng.random() for _ in range(n)]
            got = glm.bh_adjust(p)
            want = support.brute_force_bh(p)
            assert np.all(np.abs(got - np.array(want)) <= 1e-12)
        hand = glm.bh_adjust([0.01, 0.02, 0.03, 0.04])
        assert np.allclose(hand, [0.04, 0.04, 0.04, 0.04], atol=1e-15)


def test_criterion_05a_poisson_limit_analytic():
    with criterion("5a", "NB GLM analytic case: log2fc=1 within 1e-6"):
        start = time.perf_counter()
        control = np.array([10.0, 12.0, 11.0, 13.0, 9.0, 11.0])
        counts = np.concatenate([control, 2.0 * control])[None, :]
        sf = np.ones(12)
        treated = np.array([False] * 6 + [True] * 6)
        fit = glm.nb_glm_fit_many(counts, sf, treated)
        assert fit["status"][0] == glm.STATUS_OK
        assert abs(fit["beta1"][0] / math.log(2) - 1.0) < 1e-6
        counts_eq = np.concatenate([control, control])[None, :]
        fit_eq = glm.nb_glm_fit_many(counts_eq, sf, treated)
        _, p = glm.wald_test(fit_eq["beta1"][0], fit_eq["se1"][0])
        assert abs(p - 1.0) < 1e-9
        assert time.perf_counter() - start < 60.0


def test_criterion_05b_simulation_recovery():
    # NB counts with variance mu + alpha*mu^2 at alpha=0.1, 6v6, true
    # log2fc=1. Note: the Fisher information of this design bounds the
    # sd of any unbiased estimator at sqrt(2*alpha/6)/ln2 ~ 0.263 log2
    # units, so the expected within-±0.25 fraction is ~0.66; the stated
    # 90% bar is not reachable by any per-gene estimator.
    with criterion("5b", "NB GLM recovery: >=90% within ±0.25 (alpha=0.1, 6v6)"):
        start = time.perf_counter()
        rng = np.random.default_rng(55005)
        n_genes = 200
        dispersion = 0.1
        r = 1.0 / dispersion
        mu0 = rng.uniform(50.0, 500.0, size=n_genes)
        counts = np.hstack(
            [
                rng.negative_binomial(r, r / (r + mu0[:, None]), size=(n_genes, 6)),
                rng.negative_binomial(
                    r, r / (r + 2.0 * mu0[:, None]), size=(n_genes, 6)
                ),
            ]
        ).astype(float)
        sf = np.ones(12)
        treated = np.array([False] * 6 + [True] * 6)
        fit = glm.nb_glm_fit_many(counts, sf, treated)
        ok = fit["status"] == glm.STATUS_OK
        log2fc = fit["beta1"][ok] / math.log(2)
        fraction = float(np.mean(np.abs(log2fc - 1.0) <= 0.25))
        assert time.perf_counter() - start < 60.0
        assert fraction >= 0.90, (
            f"within-tolerance fraction {fraction:.3f} < 0.90. Known "
            "limitation: with 6v6 samples at dispersion 0.1, the Fisher "
            "information caps any per-gene estimator's sd at ~0.26 log2 "
            "units, so the expected fraction is ~0.66. The bar is kept "
            "as stated rather than loosened."
        )


def test_criterion_05c_null_calibration():
    with criterion("5c", "null simulation raw p<0.05 in [0.02, 0.08]"):
        start = time.perf_counter()
        rng = np.random.default_rng(2027)
        n_genes = 2000
        dispersion = 0.05
        r = 1.0 / dispersion
        mu0 = rng.uniform(50.0, 500.0, size=n_genes)
        counts = rng.negative_binomial(
            r, r / (r + mu0[:, None]), size=(n_genes, 20)
        ).astype(float)
        sf = np.ones(20)
        treated = np.array([False] * 10 + [True] * 10)
        fit = glm.nb_glm_fit_many(counts, sf, treated)
        ok = fit["status"] == glm.STATUS_OK
        _, p = glm.wald_test_many(fit["beta1"][ok], fit["se1"][ok])
        fraction = float(np.mean(p < 0.05))
        assert 0.02 <= fraction <= 0.08, fraction
        assert time.perf_counter() - start < 60.0


def _de_row(gene, log2fc, p_adj, label, status="ok"):
    return DEResult(gene, log2fc, 0.1, 0.0, p_adj / 2, p_adj, label, status)


def test_criterion_06_labeling_protocol():
    with criterion("6", "25/25/100 counting, strict alpha, disjoint splits"):
        rng = random.Random(66006)
        for _ in range(30):
            n_up = rng.randint(0, 60)
            n_down = rng.randint(0, 60)
            n_ns = rng.randint(0, 300)
            rows = (
                [_de_row(f"U{i:03d}", 1 + rng.random(), 0.01, "up") for i in range(n_up)]
                + [_de_row(f"D{i:03d}", -1 - rng.random(), 0.01, "down") for i in range(n_down)]
                + [_de_row(f"N{i:03d}", 0.0, 0.9, "ns") for i in range(n_ns)]
            )
            rng.shuffle(rows)
            examples, _ = build_examples(rows, "p", "c", seed=1)
            n_de = sum(1 for e in examples if e.task == "de")
            assert n_de == min(25, n_up) + min(25, n_down) + min(100, n_ns)

        # strict p_adj < alpha on a real GLM run
        rng_np = np.random.default_rng(606)
        from vctrace.delabel.labeling import CountsMatrix, SampleMeta

        n_genes = 150
        mu0 = np.full(n_genes, 120.0)
        l2fc = np.zeros(n_genes)
        l2fc[:10] = 3.0
        l2fc[10:18] = -3.0
        r = 50.0
        counts = np.hstack(
            [
                rng_np.negative_binomial(r, r / (r + mu0[:, None]), size=(n_genes, 4)),
                rng_np.negative_binomial(
                    r, r / (r + (mu0 * 2.0 ** l2fc)[:, None]), size=(n_genes, 4)
                ),
            ]
        ).astype(float)
        matrix = CountsMatrix(
            genes=[f"G{i:03d}" for i in range(n_genes)],
            samples=[f"s{i}" for i in range(8)],
            counts=counts,
        )
        metas = [
            SampleMeta(f"s{i}", "pa", "cx", "control" if i < 4 else "treated", f"r{i % 4}")
            for i in range(8)
        ]
        results = run_de(matrix, metas, alpha=0.05)[("pa", "cx")]
        for row in results:
            if row.label != "ns":
                assert row.p_adj < 0.05

        # 100 seeded splits, zero perturbation overlap each time
        from vctrace.delabel.labeling import QAExample

        examples = [
            QAExample(f"p{i % 13}", "c", f"G{i}", "de", i % 2) for i in range(400)
        ]
        for seed in range(100):
            train, test = split_by_perturbation(examples, seed=seed)
            assert not (
                {e.perturbation_id for e in train}
                & {e.perturbation_id for e in test}
            )


def _binds_de_trace(tid):
    nodes = [
        ActionNode("n1", "binds_to", {"actor": "a", "target": "b"}),
        ActionNode(
            "n2", "regulates_expression",
            {"actor": "b", "genes": ["A", "B"], "direction": "up"},
        ),
    ]
    return ReasoningTrace(tid, "p", "c", "e", nodes, [("n1", "n2")])


def test_criterion_07_filtering_semantics(registry):
    with criterion("7", "0.30 discard fraction, surgical pruning, tau monotone"):
        # engineered 30% sub-tau corpus
        traces = [_binds_de_trace(f"t{i}") for i in range(10)]
        verdicts = {
            f"t{i}": {
                "n1": [Verdict("n1", "dti", SUPPORTED, score=0.2 if i < 3 else 0.9)]
            }
            for i in range(10)
        }
        _, _, stats = filter_corpus(traces, verdicts, FilterConfig(tau=0.5), registry)
        assert stats.dti_discard_fraction == 0.30

        # pruning touches only contradicted genes (byte-level diff)
        trace = _binds_de_trace("t")
        v = {
            "n1": [Verdict("n1", "dti", SUPPORTED, score=0.9)],
            "n2": [
                Verdict("n2", "de", SUPPORTED, score=1.0, subject="A"),
                Verdict("n2", "de", CONTRADICTED, score=0.0, subject="B"),
            ],
        }
        before = trace_to_record(trace, registry)
        _, refined = filter_trace(trace, v, FilterConfig(tau=0.5), registry)
        after = trace_to_record(refined, registry)
        for node_before, node_after in zip(before["nodes"], after["nodes"]):
            if node_before["id"] == "n2":
                assert node_after["args"]["genes"] == ["A"]
                node_before["args"]["genes"] = ["A"]  # only allowed change
            assert json.dumps(node_before, sort_keys=True) == json.dumps(
                node_after, sort_keys=True
            )
        assert before["edges"] == after["edges"]

        # kept(tau=0.7) subset of kept(tau=0.3) on randomized verdicts
        rng = random.Random(77007)
        for _ in range(25):
            traces = [_binds_de_trace(f"t{i}") for i in range(15)]
            verdicts = {}
            for i in range(15):
                score = None if rng.random() < 0.2 else round(rng.random(), 3)
                status = UNKNOWN if score is None else SUPPORTED
                verdicts[f"t{i}"] = {
                    "n1": [Verdict("n1", "dti", status, score=score)]
                }
            kept_hi, _, _ = filter_corpus(
                traces, verdicts, FilterConfig(tau=0.7), registry
            )
            kept_lo, _, _ = filter_corpus(
                traces, verdicts, FilterConfig(tau=0.3), registry
            )
            assert {t.trace_id for t in kept_hi} <= {t.trace_id for t in kept_lo}


def test_criterion_08_metrics_fixture(registry, lexicon):
    with criterion("8", "hand-computed metrics on 10-trace fixture, 1e-9"):
        # 10 records: 8 structurally valid, 2 broken -> validity 0.8
        traces = []
        for i in range(8):
            nodes = [
                ActionNode("n1", "binds_to", {"actor": "sorafenib", "target": "BRAF"}),
            ]
            if i < 4:  # 4 DE-bearing traces
                nodes.append(
                    ActionNode(
                        "n2", "regulates_expression",
                        {"actor": "BRAF", "genes": ["DUSP6"], "direction": "down"},
                    )
                )
            traces.append(
                ReasoningTrace(f"m{i}", "sorafenib", "HepG2/C3A", "e", nodes,
                               [("n1", "n2")] if i < 4 else [])
            )
        flags = [True] * 8 + [False] * 2
        assert abs(validity(flags) - 0.8) < 1e-9

        # verifiability: traces m0..m7: binds_to has 2 entity args each;
        # m0..m3 add regulates_expression with actor + 1 gene = 2 more.
        # Make m7's target unresolvable.
        traces[7].nodes[0] = ActionNode(
            "n1", "binds_to", {"actor": "sorafenib", "target": "XYZZY-42"}
        )
        micro, macro, n_args = verifiability(traces, lexicon, registry)
        # args: 4 traces x 4 args + 4 traces x 2 args = 24; 1 unresolvable
        assert n_args == 24
        assert abs(micro - 23 / 24) < 1e-9
        expected_macro = (4 * 1.0 + 3 * 1.0 + 0.5) / 8
        assert abs(macro - expected_macro) < 1e-9

        mean, n = dti_score(
            [
                Verdict("n1", "dti", SUPPORTED, score=0.8),
                Verdict("n1", "dti", SUPPORTED, score=0.6),
            ]
        )
        assert abs(mean - 0.7) < 1e-9 and n == 2

        verdicts_by_trace = {
            "m0": [Verdict("n2", "de", SUPPORTED, score=1.0, subject="DUSP6")],
            "m1": [Verdict("n2", "de", CONTRADICTED, score=0.0, subject="DUSP6")],
            "m2": [Verdict("n2", "de", SUPPORTED, score=1.0, subject="DUSP6")],
            "m3": [Verdict("n2", "de", UNKNOWN, subject="DUSP6")],
        }
        score, n_de = de_score(traces, verdicts_by_trace)
        assert n_de == 4 and abs(score - 0.5) < 1e-9


def test_criterion_09_baseline_oracles():
    with criterion("9", "tanimoto/kNN/F1 vs brute force x1000 each"):
        rng = random.Random(99009)
        # tanimoto
        for _ in range(1000):
            n = rng.choice([8, 16, 32])
            a = "".join(rng.choice("01") for _ in range(n))
            b = "".join(rng.choice("01") for _ in range(n))
            got = tanimoto(support.fp_of(a), support.fp_of(b))
            assert got == support.brute_tanimoto_bits(a, b)
        # kNN
        from vctrace.delabel.labeling import QAExample

        for _ in range(1000):
            n_compounds = rng.randint(2, 10)
            compounds = [f"c{i}" for i in range(n_compounds)]
            fps = {
                c: support.fp_of("".join(rng.choice("01") for _ in range(16)), c)
                for c in compounds + ["probe"]
            }
            train = [
                QAExample(c, "x", g, "de", rng.randint(0, 1))
                for c in compounds
                for g in ("G1", "G2")
                if rng.random() < 0.75
            ]
            if not train:
                continue
            k = rng.randint(1, 4)
            test_e = QAExample("probe", "x", rng.choice(("G1", "G2")), "de", 1)
            got = predict_knn([test_e], train, fps, k=k)[0].predicted
            assert got == support.brute_knn_predict(test_e, train, fps, k)
        # F1
        for _ in range(1000):
            n = rng.randint(1, 40)
            preds = [rng.randint(0, 1) for _ in range(n)]
            labels = [rng.randint(0, 1) for _ in range(n)]
            assert f1_score(preds, labels) == support.brute_f1(preds, labels)
        assert f1_score([1] * 50 + [0] * 25, [1] * 25 + [0] * 25 + [1] * 25) == 0.5


def test_criterion_10_pipeline_replay_determinism(tmp_path):
    with criterion("10", "replay pipeline x2: validity 1.0, byte-identical, <10s"):
        from vctrace.cli import main

        start = time.perf_counter()
        cache = tmp_path / "cache"
        cache.mkdir()
        config = tmp_path / "config.toml"
        config.write_text(
            "\n".join(
                f'{key} = "{FIXTURES / name}"'
                for key, name in (
                    ("lexicon", "lexicon.tsv"),
                    ("kg_nodes", "kg_nodes.tsv"),
                    ("kg_edges", "kg_edges.tsv"),
                    ("documents", "documents.jsonl"),
                    ("dti_table", "dti_table.tsv"),
                    ("de_ground_truth", "de_ground_truth.tsv"),
                )
            )
            + f'\nreplay_cache = "{cache}"\n',
            encoding="utf-8",
        )
        inputs = str(FIXTURES / "pipeline_inputs.jsonl")
        assert main([
            "--config", str(config), "pipeline", "--inputs", inputs,
            "--out", str(tmp_path / "prime"), "--provider", "stub",
        ]) == 0
        outputs = {}
        for run in ("a", "b"):
            out = tmp_path / f"run-{run}"
            assert main([
                "--config", str(config), "pipeline", "--inputs", inputs,
                "--out", str(out), "--provider", "replay",
            ]) == 0
            outputs[run] = {
                p.name: p.read_bytes()
                for p in sorted(out.iterdir())
                if p.suffix in (".json", ".jsonl")
            }
        assert outputs["a"] == outputs["b"]
        summary = json.loads(outputs["a"]["summary.json"])
        assert summary["metrics"]["validity"] == 1.0
        assert summary["stages"]["inputs"] == 5
        assert time.perf_counter() - start < 10.0
