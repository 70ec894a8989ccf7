"""Command-line entry point.

One binary, subcommand style: validate, verify, filter, metrics, label,
qa-eval, pipeline. Exit codes: 0 success, 1 invariant breach, 2
usage/config/I-O problems (machine-readable error JSON on stderr). All
file outputs are written atomically and the effective configuration is
echoed into every output directory.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from vctrace import __version__
from vctrace.config import GlobalConfig, load_config
from vctrace.errors import ConfigError, VCTraceError
from vctrace.filtering import FilterConfig, filter_corpus
from vctrace.graph import validate_graph
from vctrace.ioutil import atomic_write, read_jsonl, write_jsonl, write_tsv
from vctrace.knowledge import load_documents, load_kg
from vctrace.lexicon import Lexicon, load_lexicon_tsv
from vctrace.metrics import build_report
from vctrace.model import ReasoningTrace
from vctrace.parser import parse_corpus
from vctrace.pipeline import (
    PerturbationInput,
    PipelineComponents,
    kept_records,
    reject_records,
    run_pipeline,
)
from vctrace.providers import HttpProvider, RecordingProvider, ReplayProvider, StubProvider
from vctrace.records import record_to_trace, trace_to_record
from vctrace.schema import SchemaRegistry, default_registry, load_schema_tsv
from vctrace.verifiers import (
    HttpDTIScorer,
    Verdict,
    VerifierSuite,
    load_de_ground_truth,
    load_dti_table,
    load_localization_table,
    load_phenotype_table,
)


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        _apply_flag_overrides(cfg, args)
        cfg.validate()
        return args.handler(args, cfg)
    except AssertionError as exc:
        _emit_error("invariant", exc)
        return 1
    except VCTraceError as exc:
        _emit_error(type(exc).__name__, exc)
        return 2
    except (ValueError, KeyError) as exc:
        _emit_error("bad_input", exc)
        return 2
    except OSError as exc:
        _emit_error("io", exc)
        return 2


def _emit_error(kind: str, exc: BaseException) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": str(exc)}) + "\n")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vctrace",
        description="Structured mechanistic reasoning traces for virtual cells.",
    )
    parser.add_argument("--version", action="version", version=f"vctrace {__version__}")
    parser.add_argument("--config", default=None, help="TOML config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse + structurally validate a raw corpus")
    p.add_argument("--input", required=True, help="raw corpus JSONL")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser("verify", help="run verifiers over a canonical corpus")
    p.add_argument("--corpus", required=True, help="canonical corpus JSONL")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("filter", help="apply verifier-based filtering")
    p.add_argument("--corpus", required=True, help="canonical corpus JSONL")
    p.add_argument("--verdicts", required=True, help="verdicts JSONL")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--tau", type=float, default=None, help="DTI discard threshold")
    p.add_argument("--no-de-prune", action="store_true", help="disable DE pruning")
    p.set_defaults(handler=cmd_filter)

    p = sub.add_parser("metrics", help="compute corpus quality metrics")
    p.add_argument("--input", required=True, help="raw corpus JSONL")
    p.add_argument("--verdicts", required=True, help="verdicts JSONL")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=cmd_metrics)

    p = sub.add_parser("label", help="DE analysis, labeling, examples, splits")
    p.add_argument("--counts", required=True, help="counts TSV (gene x samples)")
    p.add_argument("--meta", required=True, help="sample metadata TSV")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--alpha", type=float, default=None, help="significance threshold")
    p.add_argument("--top-n", type=int, default=None, help="top DE genes per direction")
    p.add_argument("--n-nonreg", type=int, default=None, help="random ns genes per pair")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--test-fraction", type=float, default=None)
    p.add_argument("--n-test", type=int, default=None, help="test examples to sample")
    p.set_defaults(handler=cmd_label)

    p = sub.add_parser("qa-eval", help="run statistical baselines and report F1")
    p.add_argument("--train", required=True, help="training examples JSONL")
    p.add_argument("--test", required=True, help="test examples JSONL")
    p.add_argument("--fingerprints", required=True, help="fingerprints TSV")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--k", type=int, default=None, help="kNN neighborhood size")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(handler=cmd_qa_eval)

    p = sub.add_parser("pipeline", help="generate, validate, verify, and filter traces")
    p.add_argument("--inputs", required=True, help="inputs JSONL (perturbation, context)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--provider", default=None, choices=["stub", "replay", "live"])
    p.add_argument("--one-step", action="store_true", help="skip report generation")
    p.add_argument("--include-sections", action="store_true",
                   help="feed retrieval sections to the constructor too")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--jobs", type=int, default=None, help="worker cap")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(handler=cmd_pipeline)

    return parser


def _apply_flag_overrides(cfg: GlobalConfig, args: argparse.Namespace) -> None:
    for flag, key in (
        ("tau", "tau"), ("alpha", "alpha"), ("top_n", "top_n"),
        ("n_nonreg", "n_nonreg"), ("seed", "seed"), ("k", "k"),
        ("test_fraction", "test_fraction"), ("n_test", "n_test"),
        ("provider", "provider"), ("jobs", "jobs"),
    ):
        if getattr(args, flag, None) is not None:
            setattr(cfg, key, getattr(args, flag))


def _registry(cfg: GlobalConfig) -> SchemaRegistry:
    if cfg.schema_file:
        return load_schema_tsv(cfg.schema_file)
    return default_registry()


def _lexicon(cfg: GlobalConfig) -> Lexicon | None:
    return load_lexicon_tsv(cfg.lexicon) if cfg.lexicon else None


def _load_corpus(path: str, registry: SchemaRegistry) -> list[ReasoningTrace]:
    traces = []
    for lineno, obj, error in read_jsonl(path):
        if error:
            raise VCTraceError(f"{path}:{lineno}: {error}")
        traces.append(record_to_trace(obj, registry))
    return traces


def _load_verdicts(path: str) -> dict[str, dict[str, list[Verdict]]]:
    out: dict[str, dict[str, list[Verdict]]] = {}
    for lineno, obj, error in read_jsonl(path):
        if error:
            raise VCTraceError(f"{path}:{lineno}: {error}")
        verdict = Verdict(
            node_id=str(obj["node_id"]),
            verifier=str(obj["verifier"]),
            status=str(obj["status"]),
            score=None if obj.get("score") is None else float(obj["score"]),
            subject=obj.get("subject"),
        )
        out.setdefault(str(obj["trace_id"]), {}).setdefault(
            verdict.node_id, []
        ).append(verdict)
    return out


def _load_examples(path: str):
    from vctrace.delabel.labeling import QAExample

    examples = []
    for lineno, obj, error in read_jsonl(path):
        if error:
            raise VCTraceError(f"{path}:{lineno}: {error}")
        examples.append(
            QAExample(
                perturbation_id=str(obj["perturbation_id"]),
                context_id=str(obj["context_id"]),
                gene=str(obj["gene"]),
                task=str(obj["task"]),
                label=int(obj["label"]),
            )
        )
    return examples


# --- subcommands ---------------------------------------------------------------


def cmd_validate(args, cfg: GlobalConfig) -> int:
    registry = _registry(cfg)
    if not Path(args.input).exists():
        raise ConfigError(f"input not found: {args.input}")
    out_dir = Path(args.out)
    canonical = []
    reports = []
    n_records = 0
    n_valid = 0
    for item in parse_corpus(read_jsonl(args.input), source=str(args.input)):
        n_records += 1
        if item.record_error is not None:
            reports.append(
                {
                    "trace_id": item.trace_id,
                    "source_ref": item.source_ref,
                    "record_error": item.record_error,
                    "valid": False,
                }
            )
            continue
        outcome = item.outcome
        if not outcome.ok:
            reports.append(
                {
                    "trace_id": item.trace_id,
                    "source_ref": item.source_ref,
                    "syntax_errors": [
                        {"line": line, "message": msg}
                        for line, msg in outcome.syntax_errors
                    ],
                    "valid": False,
                }
            )
            continue
        report = validate_graph(outcome.trace, registry)
        record = report.to_record(item.trace_id)
        record["source_ref"] = item.source_ref
        reports.append(record)
        if report.valid:
            n_valid += 1
            canonical.append(trace_to_record(outcome.trace, registry))
    write_jsonl(out_dir / "canonical.jsonl", canonical)
    write_jsonl(out_dir / "reports.jsonl", reports)
    cfg.echo(out_dir)
    if n_records:
        print(f"validity: {n_valid / n_records:.4f} ({n_valid}/{n_records} valid)")
    else:
        print("validity: n/a (0 records)")
    return 0


def _verifier_suite(cfg: GlobalConfig) -> VerifierSuite:
    scorer = None
    if cfg.dti_endpoint:
        scorer = HttpDTIScorer(cfg.dti_endpoint)
    elif cfg.dti_table:
        scorer = load_dti_table(cfg.dti_table)
    return VerifierSuite(
        scorer=scorer,
        de_gt=load_de_ground_truth(cfg.de_ground_truth) if cfg.de_ground_truth else None,
        loc_table=load_localization_table(cfg.loc_table) if cfg.loc_table else None,
        pheno_table=load_phenotype_table(cfg.pheno_table) if cfg.pheno_table else None,
        lexicon=_lexicon(cfg),
    )


def cmd_verify(args, cfg: GlobalConfig) -> int:
    registry = _registry(cfg)
    suite = _verifier_suite(cfg)
    traces = _load_corpus(args.corpus, registry)
    out_dir = Path(args.out)
    records = []
    for trace in traces:
        verdicts = suite.verify_trace(trace, registry)
        for node_id in sorted(verdicts):
            for v in verdicts[node_id]:
                records.append(v.to_record(trace.trace_id))
    write_jsonl(out_dir / "verdicts.jsonl", records)
    cfg.echo(out_dir)
    print(f"verdicts: {len(records)} over {len(traces)} traces")
    return 0


def cmd_filter(args, cfg: GlobalConfig) -> int:
    registry = _registry(cfg)
    traces = _load_corpus(args.corpus, registry)
    verdicts = _load_verdicts(args.verdicts)
    config = FilterConfig(tau=cfg.tau, de_prune=not args.no_de_prune)
    kept, outcomes, stats = filter_corpus(traces, verdicts, config, registry=registry)
    out_dir = Path(args.out)
    write_jsonl(out_dir / "kept.jsonl", (trace_to_record(t, registry) for t in kept))
    write_jsonl(
        out_dir / "rejects.jsonl",
        (
            outcome.to_record(trace_id)
            for trace_id, outcome in outcomes
            if outcome.decision == "discarded"
        ),
    )
    stats_record = stats.to_record(tau=config.tau)
    with atomic_write(out_dir / "stats.json") as fh:
        json.dump(stats_record, fh, indent=2, sort_keys=True)
        fh.write("\n")
    cfg.echo(out_dir)
    print(json.dumps(stats_record, indent=2, sort_keys=True))
    return 0


def cmd_metrics(args, cfg: GlobalConfig) -> int:
    registry = _registry(cfg)
    lexicon = _lexicon(cfg)
    if not Path(args.input).exists():
        raise ConfigError(f"input not found: {args.input}")
    verdicts_nested = _load_verdicts(args.verdicts)
    verdicts_flat = {
        trace_id: [v for vs in nodes.values() for v in vs]
        for trace_id, nodes in verdicts_nested.items()
    }
    flags = []
    valid_traces = []
    for item in parse_corpus(read_jsonl(args.input), source=str(args.input)):
        if item.record_error is not None or not item.outcome.ok:
            flags.append(False)
            continue
        report = validate_graph(item.outcome.trace, registry)
        flags.append(report.valid)
        if report.valid:
            valid_traces.append(item.outcome.trace)
    report = build_report(flags, valid_traces, verdicts_flat, lexicon, registry)
    out_dir = Path(args.out)
    with atomic_write(out_dir / "metrics.json") as fh:
        json.dump(report.to_record(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    cfg.echo(out_dir)
    print(report.to_table())
    return 0


def cmd_label(args, cfg: GlobalConfig) -> int:
    from vctrace.delabel.labeling import (
        DE_TSV_HEADER,
        build_examples,
        de_results_rows,
        load_counts_tsv,
        load_sample_meta_tsv,
        pseudobulk,
        run_de,
        split_by_perturbation,
    )

    counts = load_counts_tsv(args.counts)
    meta = load_sample_meta_tsv(args.meta)
    bulk, bulk_meta = pseudobulk(counts, meta)
    results = run_de(bulk, bulk_meta, alpha=cfg.alpha)
    out_dir = Path(args.out)
    write_tsv(out_dir / "de_results.tsv", DE_TSV_HEADER, de_results_rows(results))

    examples = []
    reports = {}
    for (pert, ctx), rows in sorted(results.items()):
        built, build_report_ = build_examples(
            rows, pert, ctx, seed=cfg.seed, top_n=cfg.top_n, n_nonreg=cfg.n_nonreg
        )
        examples.extend(built)
        reports[f"{pert}|{ctx}"] = {
            "n_up": build_report_.n_up,
            "n_down": build_report_.n_down,
            "n_ns": build_report_.n_ns,
            "shortfall": build_report_.shortfall,
        }
    write_jsonl(out_dir / "examples.jsonl", (e.to_record() for e in examples))
    if examples:
        train, test = split_by_perturbation(
            examples, seed=cfg.seed, test_fraction=cfg.test_fraction, n_test=cfg.n_test
        )
    else:
        train, test = [], []
    write_jsonl(out_dir / "train.jsonl", (e.to_record() for e in train))
    write_jsonl(out_dir / "test.jsonl", (e.to_record() for e in test))
    summary = {
        "pairs": reports,
        "n_examples": len(examples),
        "n_train": len(train),
        "n_test": len(test),
        "alpha": cfg.alpha,
        "top_n": cfg.top_n,
        "n_nonreg": cfg.n_nonreg,
        "seed": cfg.seed,
    }
    with atomic_write(out_dir / "label_summary.json") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    cfg.echo(out_dir)
    print(
        f"pairs: {len(reports)}  examples: {len(examples)}  "
        f"train: {len(train)}  test: {len(test)}"
    )
    return 0


def cmd_qa_eval(args, cfg: GlobalConfig) -> int:
    from vctrace.qa import (
        evaluate,
        evaluation_table,
        load_fingerprints_tsv,
        predict_knn,
        predict_mean,
        predict_random,
    )

    train = _load_examples(args.train)
    test = _load_examples(args.test)
    fingerprints = load_fingerprints_tsv(args.fingerprints)
    out_dir = Path(args.out)
    predictions = {
        "random": predict_random(test, seed=cfg.seed),
        "mean": predict_mean(test, train),
        "knn": predict_knn(test, train, fingerprints, k=cfg.k),
    }
    report = {}
    for name, preds in predictions.items():
        write_jsonl(
            out_dir / f"predictions_{name}.jsonl", (p.to_record() for p in preds)
        )
        report[name] = evaluate(preds)
    with atomic_write(out_dir / "qa_report.json") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    cfg.echo(out_dir)
    for name in ("random", "mean", "knn"):
        print(f"== {name} ==")
        print(evaluation_table(report[name]))
    return 0


def cmd_pipeline(args, cfg: GlobalConfig) -> int:
    registry = _registry(cfg)
    lexicon = _lexicon(cfg)
    if lexicon is None:
        raise ConfigError("pipeline requires a lexicon path in config")
    if not (cfg.kg_nodes and cfg.kg_edges):
        raise ConfigError("pipeline requires kg_nodes and kg_edges paths in config")
    if not cfg.documents:
        raise ConfigError("pipeline requires a documents path in config")
    kg = load_kg(cfg.kg_nodes, cfg.kg_edges)
    documents = load_documents(cfg.documents)

    if cfg.provider == "stub":
        provider = StubProvider()
    elif cfg.provider == "replay":
        if not cfg.replay_cache:
            raise ConfigError("replay provider requires replay_cache in config")
        provider = ReplayProvider(cfg.replay_cache)
    else:
        if not cfg.endpoint:
            raise ConfigError("live provider requires endpoint in config")
        provider = HttpProvider(cfg.endpoint)
    if cfg.provider != "replay" and cfg.replay_cache:
        provider = RecordingProvider(provider, cfg.replay_cache)

    components = PipelineComponents(
        registry=registry,
        lexicon=lexicon,
        kg=kg,
        documents=documents,
        provider=provider,
        verifier_suite=_verifier_suite(cfg),
        filter_config=FilterConfig(tau=cfg.tau),
        templates_dir=cfg.templates_dir,
        max_neighbors=cfg.max_neighbors,
        top_k_docs=cfg.top_k_docs,
        one_step=args.one_step,
        include_sections=args.include_sections,
    )

    inputs = []
    for lineno, obj, error in read_jsonl(args.inputs):
        if error:
            raise VCTraceError(f"{args.inputs}:{lineno}: {error}")
        inputs.append(
            PerturbationInput(
                perturbation=str(obj["perturbation"]),
                context=str(obj["context"]),
                trace_id=obj.get("trace_id"),
            )
        )

    items, summary = run_pipeline(components, inputs, jobs=cfg.jobs)
    out_dir = Path(args.out)
    write_jsonl(out_dir / "kept.jsonl", kept_records(items, registry))
    write_jsonl(out_dir / "rejects.jsonl", reject_records(items))
    write_jsonl(
        out_dir / "reports.jsonl",
        (it.report.to_record() for it in items if it.report is not None),
    )
    write_jsonl(
        out_dir / "verdicts.jsonl",
        (
            v.to_record(it.trace_id)
            for it in items
            for node_id in sorted(it.verdicts)
            for v in it.verdicts[node_id]
        ),
    )
    with atomic_write(out_dir / "summary.json") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    cfg.echo(out_dir)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
