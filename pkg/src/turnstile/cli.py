"""Pipeline driver: corpus in, findings, labels, rules, and reports out.

Stages write their artifacts into one output directory (``--out`` or
``TURNSTILE_OUT``) and later stages read them back, so each stage can be
re-run alone.  ``all`` runs the whole pipeline in order.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import filters as filters_mod
from . import rulegen, store, synth, taxonomy
from .asttools import AstDirectory, MissingAstError
from .graphs import CorpusError, PageRecord, load_corpus, load_graph
from .signatures import (
    MIN_SIGNATURE_EDGES,
    MIN_SIGNATURE_NODES,
    extract_signatures,
)
from .store import ScriptInstance, ScriptRecord, SignatureRow

__all__ = ["main", "PipelineError"]


class PipelineError(Exception):
    """A stage cannot run; the message says what to do about it."""


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("TURNSTILE_OUT") or "out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _require(out: Path, filename: str, stage: str) -> Path:
    path = out / filename
    if not path.is_file():
        raise PipelineError(
            f"missing {filename} in {out}; run `turnstile {stage}` first"
        )
    return path


def _jobs(args) -> int:
    if getattr(args, "jobs", None):
        return max(1, args.jobs)
    return min(os.cpu_count() or 1, 8)


def _map_pages(pages, worker, jobs: int, initializer=None, initargs=()):
    """Run ``worker`` over pages, preserving page order."""
    if jobs <= 1 or len(pages) <= 1:
        if initializer is not None:
            initializer(*initargs)
        return [worker(page) for page in pages]
    with ProcessPoolExecutor(
        max_workers=jobs, initializer=initializer, initargs=initargs
    ) as pool:
        return list(pool.map(worker, pages, chunksize=8))


# --------------------------------------------------------------------------
# ingest


def _ingest_page(page: PageRecord) -> "dict":
    graph = load_graph(page)
    return {
        "page_url": page.page_url,
        "graph": page.graph_path.name,
        "nodes": len(graph.nodes),
        "edges": len(graph.edges),
        "scripts": sum(1 for n in graph.nodes.values() if n.script_id is not None),
    }


def cmd_ingest(args) -> int:
    out = _out_dir(args)
    pages = load_corpus(args.corpus)
    rows = _map_pages(pages, _ingest_page, _jobs(args))
    store.write_jsonl(out / "ingest.jsonl", rows)
    nodes = sum(r["nodes"] for r in rows)
    edges = sum(r["edges"] for r in rows)
    print(f"ingested {len(rows)} pages ({nodes} nodes, {edges} edges)")
    return 0


# --------------------------------------------------------------------------
# label

_WORKER_FSET: "filters_mod.FilterSet | None" = None


def _label_init(filter_paths, exclude_path) -> None:
    global _WORKER_FSET
    _WORKER_FSET = filters_mod.load_filter_files(filter_paths, exclude_path)


def _label_page(page: PageRecord):
    graph = load_graph(page)
    labels = filters_mod.label_scripts(graph, _WORKER_FSET)
    rows = []
    for unit, decision in labels.items():
        rows.append(
            (
                page.page_url,
                unit.script_id,
                unit.source_kind.value,
                unit.source_hash,
                unit.url,
                decision.blocked,
                decision.rule.raw if decision.blocked and decision.rule else None,
            )
        )
    return rows


def cmd_label(args) -> int:
    out = _out_dir(args)
    _require(out, "ingest.jsonl", "ingest")
    pages = load_corpus(args.corpus)
    per_page = _map_pages(
        pages,
        _label_page,
        _jobs(args),
        initializer=_label_init,
        initargs=(list(args.filters), args.exclude_rules),
    )
    records: dict[tuple[str, bool], ScriptRecord] = {}
    for rows in per_page:
        for page_url, script_id, kind, source_hash, url, blocked, rule in rows:
            record = records.setdefault(
                (source_hash, blocked),
                ScriptRecord(source_hash=source_hash, blocked=blocked),
            )
            record.instances.append(
                ScriptInstance(
                    page_url=page_url,
                    script_id=script_id,
                    source_kind=store.SourceKind(kind),
                    url=url,
                )
            )
            if rule:
                record.rules.add(rule)
    store.write_scripts(list(records.values()), out / "scripts.jsonl")
    fset = filters_mod.load_filter_files(list(args.filters), args.exclude_rules)
    blocked = sum(1 for (_, b) in records if b)
    print(
        f"labeled {len(records)} script records ({blocked} blocked partitions) "
        f"across {len(pages)} pages; filter list: {len(fset.block_rules)} block, "
        f"{len(fset.exception_rules)} exception, {len(fset.skipped)} skipped, "
        f"{len(fset.excluded)} excluded"
    )
    return 0


# --------------------------------------------------------------------------
# extract

_EXTRACT_PARAMS = (MIN_SIGNATURE_EDGES, MIN_SIGNATURE_NODES, False)


def _extract_init(min_edges, min_nodes, keep_canonical) -> None:
    global _EXTRACT_PARAMS
    _EXTRACT_PARAMS = (min_edges, min_nodes, keep_canonical)


def _extract_page(page: PageRecord):
    min_edges, min_nodes, keep_canonical = _EXTRACT_PARAMS
    graph = load_graph(page)
    extraction = extract_signatures(
        graph, min_edges=min_edges, min_nodes=min_nodes, keep_canonical=keep_canonical
    )
    rows: list[SignatureRow] = []
    for small, bucket in ((False, extraction.signatures), (True, extraction.small)):
        for unit, sigs in bucket.items():
            for sig in sorted(sigs, key=lambda s: s.hash):
                rows.append(
                    SignatureRow(
                        page_url=page.page_url,
                        script_id=unit.script_id,
                        source_hash=unit.source_hash,
                        hash=sig.hash,
                        edge_count=sig.edge_count,
                        node_count=sig.node_count,
                        privacy_kinds=tuple(sorted(sig.privacy_kinds)),
                        small=small,
                        canonical=sig.canonical,
                    )
                )
    return rows, extraction.execute_walls, extraction.turn_count


def cmd_extract(args) -> int:
    out = _out_dir(args)
    _require(out, "ingest.jsonl", "ingest")
    pages = load_corpus(args.corpus)
    results = _map_pages(
        pages,
        _extract_page,
        _jobs(args),
        initializer=_extract_init,
        initargs=(args.min_edges, args.min_nodes, args.debug_canonical),
    )
    rows = [row for page_rows, _, _ in results for row in page_rows]
    execute_walls = sum(r[1] for r in results)
    turns = sum(r[2] for r in results)
    main_rows = [r for r in rows if not r.small]
    small_rows = [r for r in rows if r.small]
    store.write_signature_rows(main_rows, out / "signatures.jsonl")
    store.write_signature_rows(small_rows, out / "small_signatures.jsonl")
    print(
        f"extracted {turns} turns over {len(pages)} pages: "
        f"{len(main_rows)} signature rows, {len(small_rows)} small rows, "
        f"{execute_walls} execute boundaries"
    )
    return 0


# --------------------------------------------------------------------------
# later stages


def _load_index_checked(out: Path) -> store.CorpusIndex:
    _require(out, "ingest.jsonl", "ingest")
    _require(out, "scripts.jsonl", "label")
    _require(out, "signatures.jsonl", "extract")
    _require(out, "small_signatures.jsonl", "extract")
    return store.load_index(out)


def cmd_groundtruth(args) -> int:
    out = _out_dir(args)
    index = _load_index_checked(out)
    gts = store.build_ground_truth(
        index, mode=args.gt_mode, min_edges=args.min_edges, min_nodes=args.min_nodes
    )
    store.write_ground_truth(gts, out / "groundtruth.jsonl")
    print(
        f"ground truth ({gts.mode}): {len(gts.signatures)} signatures, "
        f"{len(gts.small)} small"
    )
    return 0


def cmd_match(args) -> int:
    out = _out_dir(args)
    index = _load_index_checked(out)
    gts = store.load_ground_truth(_require(out, "groundtruth.jsonl", "groundtruth"))
    findings = store.find_evasions(index, gts)
    store.write_findings(findings, out / "findings.jsonl")
    sources = len({f.evaded_source for f in findings})
    print(f"matched {len(findings)} findings over {sources} evaded scripts")
    return 0


def cmd_classify(args) -> int:
    out = _out_dir(args)
    findings = store.load_findings(_require(out, "findings.jsonl", "match"))
    asts = AstDirectory(Path(args.corpus) / "asts")
    labels = taxonomy.classify_all(findings, asts, args.common_min_nodes)
    rows = []
    for finding in findings:
        label = labels[finding.finding_id]
        rows.append(
            {
                "finding": finding.finding_id,
                "evaded_source": finding.evaded_source,
                "technique": label.technique.value,
                "evidence": {
                    "matched_source": label.evidence.matched_source,
                    "relation": label.evidence.relation,
                    "common_subtree_size": label.evidence.common_subtree_size,
                    "min_nodes": label.evidence.min_nodes,
                },
            }
        )
    store.write_jsonl(out / "technique_labels.jsonl", rows)
    store.write_findings(findings, out / "findings.jsonl")
    table = taxonomy.tabulate(findings, labels)
    store.atomic_write_text(out / "taxonomy.txt", taxonomy.render_taxonomy_text(table))
    store.atomic_write_text(out / "taxonomy.csv", taxonomy.render_taxonomy_csv(table))
    print(taxonomy.render_taxonomy_text(table), end="")
    return 0


def _load_labels(out: Path) -> "dict[str, taxonomy.TechniqueLabel]":
    labels = {}
    for row in store.read_jsonl(out / "technique_labels.jsonl"):
        evidence = row.get("evidence", {})
        labels[row["finding"]] = taxonomy.TechniqueLabel(
            technique=taxonomy.Technique(row["technique"]),
            evidence=taxonomy.Evidence(
                matched_source=evidence.get("matched_source"),
                relation=evidence.get("relation"),
                common_subtree_size=evidence.get("common_subtree_size"),
                min_nodes=evidence.get("min_nodes", 0),
            ),
        )
    return labels


def cmd_rules(args) -> int:
    out = _out_dir(args)
    index = _load_index_checked(out)
    findings = store.load_findings(_require(out, "findings.jsonl", "match"))
    _require(out, "technique_labels.jsonl", "classify")
    labels = _load_labels(out)
    result = rulegen.generate_rules(findings, labels, index)
    corpus_name = Path(args.corpus).name if args.corpus else out.name
    rulegen.write_rule_file(result, out / "generated_rules.txt", corpus_name)
    guard_rows = [
        {"rule": r.raw, "url": r.url, "sources": list(r.sources), "suppressed": False}
        for r in result.rules
    ] + [
        {
            "rule": r.raw,
            "url": r.url,
            "conflict_url": r.conflict_url,
            "suppressed": True,
        }
        for r in result.suppressed
    ]
    store.write_jsonl(out / "rules_guard.jsonl", guard_rows)
    print(f"wrote {len(result.rules)} rules ({len(result.suppressed)} suppressed)")
    return 0


def cmd_report(args) -> int:
    out = _out_dir(args)
    index = _load_index_checked(out)
    gts = store.load_ground_truth(_require(out, "groundtruth.jsonl", "groundtruth"))
    findings = store.load_findings(_require(out, "findings.jsonl", "match"))
    ranks = store.load_ranks(args.ranks) if args.ranks else None
    report = store.build_report(index, gts, findings, ranks)
    store.atomic_write_text(
        out / "report.json",
        json.dumps(dataclasses.asdict(report), indent=2, sort_keys=True) + "\n",
    )
    store.atomic_write_text(out / "report.txt", store.render_report(report))
    print(
        f"report: {report.pages_with_evasion}/{report.pages_total} pages with "
        f"evasion ({report.incidence_pct}%)"
    )
    return 0


def cmd_baseline(args) -> int:
    out = _out_dir(args)
    index = _load_index_checked(out)
    findings = store.load_findings(_require(out, "findings.jsonl", "match"))
    by_source = None
    if (out / "technique_labels.jsonl").is_file():
        labels = _load_labels(out)
        by_source = {
            source: technique.value
            for source, technique in taxonomy.best_technique_by_source(
                findings, labels
            ).items()
        }
    baseline = store.compare_hash_baseline(index, findings, by_source)
    store.atomic_write_text(
        out / "baseline.json",
        json.dumps(dataclasses.asdict(baseline), indent=2, sort_keys=True) + "\n",
    )
    print(
        f"hash baseline: misses {baseline.unique_missed}/{baseline.unique_total} "
        f"unique evaded scripts ({baseline.unique_miss_rate_pct}%)"
    )
    return 0


def cmd_synth(args) -> int:
    params = synth.SynthParams(
        pages=args.pages,
        trackers=args.trackers,
        moving=args.moving,
        inlining=args.inlining,
        bundling=args.bundling,
        common_code=args.common_code,
        noise=args.noise,
        moving_mutated_fraction=args.mutated_fraction,
    )
    manifest = synth.gen_corpus(args.seed, params, args.corpus)
    expected = manifest["expected"]
    print(
        f"synthesized {args.pages} pages, {args.trackers} trackers, "
        f"{expected['evaded_instances_total']} planted evasions "
        f"-> {args.corpus}"
    )
    return 0


def cmd_all(args) -> int:
    for step in (
        cmd_ingest,
        cmd_label,
        cmd_extract,
        cmd_groundtruth,
        cmd_match,
        cmd_classify,
        cmd_rules,
        cmd_report,
        cmd_baseline,
    ):
        code = step(args)
        if code:
            return code
    return 0


# --------------------------------------------------------------------------
# argument wiring


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="turnstile",
        description="Detect filter-list evasion with per-turn behavior signatures.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    out_p = argparse.ArgumentParser(add_help=False)
    out_p.add_argument(
        "--out",
        default=None,
        help="artifact directory (default: $TURNSTILE_OUT or ./out)",
    )
    corpus_p = argparse.ArgumentParser(add_help=False)
    corpus_p.add_argument("--corpus", required=True, help="corpus directory")
    jobs_p = argparse.ArgumentParser(add_help=False)
    jobs_p.add_argument("--jobs", type=int, default=None, help="worker processes")
    floors_p = argparse.ArgumentParser(add_help=False)
    floors_p.add_argument("--min-edges", type=int, default=MIN_SIGNATURE_EDGES)
    floors_p.add_argument("--min-nodes", type=int, default=MIN_SIGNATURE_NODES)

    p = sub.add_parser("ingest", parents=[out_p, corpus_p, jobs_p],
                       help="validate corpus graphs")
    p.set_defaults(func=cmd_ingest)

    label_flags = argparse.ArgumentParser(add_help=False)
    label_flags.add_argument(
        "--filters", action="append", required=True, help="filter list file (repeatable)"
    )
    label_flags.add_argument(
        "--exclude-rules", default=None, help="file of raw rules to exclude"
    )
    p = sub.add_parser("label", parents=[out_p, corpus_p, jobs_p, label_flags],
                       help="judge scripts against filter lists")
    p.set_defaults(func=cmd_label)

    extract_flags = argparse.ArgumentParser(add_help=False)
    extract_flags.add_argument("--debug-canonical", action="store_true",
                               help="keep canonical text alongside each signature")
    p = sub.add_parser("extract", parents=[out_p, corpus_p, jobs_p, floors_p, extract_flags],
                       help="extract behavior signatures")
    p.set_defaults(func=cmd_extract)

    gt_flags = argparse.ArgumentParser(add_help=False)
    gt_flags.add_argument("--gt-mode", choices=("measurement", "defense"),
                          default="measurement")
    p = sub.add_parser("groundtruth", parents=[out_p, floors_p, gt_flags],
                       help="collect blocked-script signatures")
    p.set_defaults(func=cmd_groundtruth)

    p = sub.add_parser("match", parents=[out_p], help="find evading scripts")
    p.set_defaults(func=cmd_match)

    classify_flags = argparse.ArgumentParser(add_help=False)
    classify_flags.add_argument("--common-min-nodes", type=int,
                                default=taxonomy.DEFAULT_COMMON_SUBTREE_MIN_NODES)
    p = sub.add_parser("classify", parents=[out_p, corpus_p, classify_flags],
                       help="label evasion techniques")
    p.set_defaults(func=cmd_classify)

    rules_corpus = argparse.ArgumentParser(add_help=False)
    rules_corpus.add_argument("--corpus", default=None, help="corpus directory (for naming)")
    p = sub.add_parser("rules", parents=[out_p, rules_corpus],
                       help="generate block rules for moved scripts")
    p.set_defaults(func=cmd_rules)

    report_flags = argparse.ArgumentParser(add_help=False)
    report_flags.add_argument("--ranks", default=None, help="rank,domain CSV")
    p = sub.add_parser("report", parents=[out_p, report_flags],
                       help="summarize populations, incidence, and moves")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("baseline", parents=[out_p],
                       help="compare against exact-hash blocking")
    p.set_defaults(func=cmd_baseline)

    synth_flags = argparse.ArgumentParser(add_help=False)
    synth_flags.add_argument("--seed", type=int, required=True)
    synth_flags.add_argument("--pages", type=int, default=40)
    synth_flags.add_argument("--trackers", type=int, default=3)
    synth_flags.add_argument("--moving", type=int, default=10)
    synth_flags.add_argument("--inlining", type=int, default=10)
    synth_flags.add_argument("--bundling", type=int, default=10)
    synth_flags.add_argument("--common-code", type=int, default=10)
    synth_flags.add_argument("--noise", type=float, default=0.25)
    synth_flags.add_argument("--mutated-fraction", type=float, default=0.4)
    p = sub.add_parser("synth", parents=[synth_flags],
                       help="generate a synthetic corpus with a manifest")
    p.add_argument("--corpus", required=True, help="destination directory")
    p.set_defaults(func=cmd_synth)

    all_flags = argparse.ArgumentParser(add_help=False)
    all_flags.add_argument("--debug-canonical", action="store_true")
    all_flags.add_argument("--gt-mode", choices=("measurement", "defense"),
                           default="measurement")
    all_flags.add_argument("--common-min-nodes", type=int,
                           default=taxonomy.DEFAULT_COMMON_SUBTREE_MIN_NODES)
    all_flags.add_argument("--ranks", default=None)
    p = sub.add_parser(
        "all",
        parents=[out_p, corpus_p, jobs_p, floors_p, label_flags, all_flags],
        help="run the whole pipeline",
    )
    p.set_defaults(func=cmd_all)
    return parser


def main(argv: "list[str] | None" = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (PipelineError, CorpusError, MissingAstError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
