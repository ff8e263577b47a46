"""Synthetic corpus generation and its construction-time manifest."""

from __future__ import annotations

import json
import random
from urllib.parse import urlsplit

import pytest

from turnstile.asttools import (
    ast_hash,
    common_significant_subtrees,
    load_ast_file,
    subtree_contains,
)
from turnstile.filters import RequestContext, parse_rule, rule_matches
from turnstile.graphs import EdgeKind, load_corpus, parse_graphml
from turnstile.signatures import (
    DETERMINISTIC_EDGE_KINDS,
    extract_signatures,
)
from turnstile.synth import (
    SynthParams,
    gen_corpus,
    perturb_nondeterministic,
    synthetic_graph,
    template_edges,
    tracker_template,
)

PARAMS = SynthParams(
    pages=8,
    trackers=2,
    moving=2,
    inlining=2,
    bundling=2,
    common_code=2,
    noise=0.2,
)


# --------------------------------------------------------------------------
# templates


def test_template_edges_counts():
    ops = template_edges(13, 4)
    assert len(ops) == 13
    intro_targets = [dst for _, _, dst in ops[:4]]
    assert intro_targets == ["CJ", "WA", "IMG", "RES"]


def test_template_variants_differ_only_in_padding():
    a = template_edges(10, 4, variant=0)
    b = template_edges(10, 4, variant=1)
    assert a[:4] == b[:4]
    assert a != b
    assert len(a) == len(b) == 10


def test_template_delete_padding():
    ops = template_edges(8, 2, delete_pad=True)
    assert any(kind is EdgeKind.STORAGE_DELETE for kind, _, _ in ops)


@pytest.mark.parametrize(
    ("edges", "nodes", "message"),
    [
        (5, 0, "nodes must be between 1 and 8"),
        (20, 9, "nodes must be between 1 and 8"),
        (3, 4, "a turn cannot touch more distinct nodes than it has edges"),
    ],
)
def test_template_rejects_bad_shapes(edges, nodes, message):
    with pytest.raises(ValueError, match=message):
        template_edges(edges, nodes)


def test_tracker_templates_straddle_nothing():
    # Tracker turns always sit at or above the signature floor.
    for k in range(6):
        ops = tracker_template(k)
        assert len(ops) == 13 + k
        roles = {dst for _, _, dst in ops} | {src for _, src, _ in ops if src}
        assert len(roles) == (4 if k < 3 else 5)
        assert all(kind in DETERMINISTIC_EDGE_KINDS for kind, _, _ in ops)


# --------------------------------------------------------------------------
# standalone graphs


def test_synthetic_graph_is_seed_deterministic():
    a = synthetic_graph(42)
    b = synthetic_graph(42)
    assert a == b
    assert synthetic_graph(43) != a


def test_synthetic_graph_exercises_both_buckets():
    # Across a few seeds both the main store and the small side channel
    # should see traffic; otherwise extraction tests prove nothing.
    main = small = 0
    for seed in range(30):
        extraction = extract_signatures(synthetic_graph(seed))
        main += sum(len(s) for s in extraction.signatures.values())
        small += sum(len(s) for s in extraction.small.values())
    assert main > 0 and small > 0


def test_perturbation_keeps_deterministic_stamps():
    graph = synthetic_graph(7)
    shaken = perturb_nondeterministic(graph, random.Random(99))
    det_before = [
        (e.id, e.order) for e in graph.edges if e.kind in DETERMINISTIC_EDGE_KINDS
    ]
    det_after = [
        (e.id, e.order) for e in shaken.edges if e.kind in DETERMINISTIC_EDGE_KINDS
    ]
    assert det_before == det_after
    assert sorted(e.order for e in shaken.edges) == sorted(
        e.order for e in graph.edges
    )
    nondet_ids = {e.id for e in graph.edges if e.kind not in DETERMINISTIC_EDGE_KINDS}
    assert {e.id for e in shaken.edges if e.kind not in DETERMINISTIC_EDGE_KINDS} == (
        nondet_ids
    )


# --------------------------------------------------------------------------
# corpus generation


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    manifest = gen_corpus(11, PARAMS, out)
    return out, manifest


def test_corpus_layout(corpus):
    out, manifest = corpus
    assert (out / "manifest.json").is_file()
    assert (out / "pages.jsonl").is_file()
    assert (out / "filters.txt").is_file()
    assert len(list((out / "graphs").glob("*.graphml"))) == PARAMS.pages
    assert json.loads((out / "manifest.json").read_text(encoding="utf-8")) == manifest
    rows = [
        json.loads(line)
        for line in (out / "pages.jsonl").read_text(encoding="utf-8").splitlines()
    ]
    assert [r["page_url"] for r in rows] == [
        f"https://site{p:04d}.example/" for p in range(PARAMS.pages)
    ]
    for row in rows:
        assert (out / row["graph"]).is_file()
        for source_path in row["scripts"].values():
            assert (out / source_path).is_file()


def test_corpus_graphs_parse_and_validate(corpus):
    out, _ = corpus
    pages = load_corpus(out)
    assert len(pages) == PARAMS.pages
    first = parse_graphml((out / "graphs" / "page0000.graphml").read_text(encoding="utf-8"))
    assert first.page_url == "https://site0000.example/"
    assert any(n.kind.value == "script" for n in first.nodes.values())


def test_corpus_is_byte_reproducible(tmp_path):
    a_dir = tmp_path / "a"
    b_dir = tmp_path / "b"
    manifest_a = gen_corpus(5, PARAMS, a_dir)
    manifest_b = gen_corpus(5, PARAMS, b_dir)
    assert manifest_a == manifest_b
    files_a = sorted(p.relative_to(a_dir) for p in a_dir.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b_dir) for p in b_dir.rglob("*") if p.is_file())
    assert files_a == files_b
    for rel in files_a:
        assert (a_dir / rel).read_bytes() == (b_dir / rel).read_bytes(), rel


def test_corpus_differs_across_seeds(tmp_path):
    manifest_a = gen_corpus(5, PARAMS, tmp_path / "a")
    manifest_b = gen_corpus(6, PARAMS, tmp_path / "b")
    assert manifest_a != manifest_b


@pytest.mark.parametrize(
    ("params", "message"),
    [
        (SynthParams(pages=0), "need at least one page and one tracker"),
        (SynthParams(trackers=0), "need at least one page and one tracker"),
        (
            SynthParams(pages=10, moving=5, inlining=5, bundling=5, common_code=5),
            "at most one planted evasion per page; add pages",
        ),
    ],
)
def test_corpus_params_validated(tmp_path, params, message):
    with pytest.raises(ValueError, match=message):
        gen_corpus(1, params, tmp_path)


def test_manifest_plants_every_evasion_once(corpus):
    _, manifest = corpus
    planted = manifest["planted"]
    assert len(planted) == PARAMS.evasion_total()
    pages = [p["page"] for p in planted]
    assert all(pages)
    assert len(set(pages)) == len(pages)
    by_technique = {}
    for p in planted:
        by_technique.setdefault(p["technique"], []).append(p)
    assert {k: len(v) for k, v in by_technique.items()} == {
        "Moving": 2,
        "Inlining": 2,
        "Bundling": 2,
        "CommonCode": 2,
    }
    mutated = [p for p in by_technique["Moving"] if p["mutated"]]
    assert len(mutated) == round(PARAMS.moving * PARAMS.moving_mutated_fraction)


def test_manifest_expected_counts(corpus):
    _, manifest = corpus
    planted = manifest["planted"]
    expected = manifest["expected"]
    tracker_hashes = {t["source_hash"] for t in manifest["trackers"]}
    moving_hashes = {p["source_hash"] for p in planted if p["technique"] == "Moving"}
    other_hashes = {p["source_hash"] for p in planted if p["technique"] != "Moving"}
    assert expected["findings"]["Moving"]["unique"] == len(moving_hashes)
    assert expected["findings"]["Moving"]["instances"] == 2
    assert expected["evaded_unique_total"] == len(moving_hashes | other_hashes)
    assert expected["evaded_instances_total"] == len(planted)
    assert expected["pages_with_evasion"] == len({p["page"] for p in planted})
    assert expected["finding_pairs"] == len(
        {(p["source_hash"], p["tracker"]) for p in planted}
    )
    assert expected["ground_truth_signatures"]["defense"] == PARAMS.trackers
    assert expected["ground_truth_signatures"]["measurement"] == len(
        {p["tracker"] for p in planted}
    )
    # Verbatim moved copies keep the tracker's own hash: the baseline catches
    # exactly those, and everything else is a miss.
    verbatim = {
        p["source_hash"]
        for p in planted
        if p["technique"] == "Moving" and not p["mutated"]
    }
    assert verbatim <= tracker_hashes
    assert expected["baseline"]["caught_sources"] == sorted(verbatim)
    assert set(expected["baseline"]["missed_sources"]) == (
        moving_hashes | other_hashes
    ) - verbatim


def test_planted_sources_and_trees_exist(corpus):
    out, manifest = corpus
    for p in manifest["planted"] + manifest["trackers"]:
        source_hash = p["source_hash"]
        assert (out / "sources" / f"{source_hash}.js").is_file()
        assert (out / "asts" / f"{source_hash}.ast.json").is_file()


def test_planted_trees_embody_their_technique(corpus):
    out, manifest = corpus
    trackers = {t["k"]: t["source_hash"] for t in manifest["trackers"]}

    def tree(source_hash):
        return load_ast_file(out / "asts" / f"{source_hash}.ast.json")

    for p in manifest["planted"]:
        planted_tree = tree(p["source_hash"])
        tracker_tree = tree(trackers[p["tracker"]])
        if p["technique"] in ("Moving", "Inlining"):
            assert ast_hash(planted_tree) == ast_hash(tracker_tree)
        elif p["technique"] == "Bundling":
            assert subtree_contains(planted_tree, tracker_tree)
            assert ast_hash(planted_tree) != ast_hash(tracker_tree)
        else:  # CommonCode
            assert not subtree_contains(planted_tree, tracker_tree)
            assert common_significant_subtrees(planted_tree, tracker_tree)


def test_mutated_moving_copies_change_bytes_not_trees(corpus):
    out, manifest = corpus
    trackers = {t["k"]: t["source_hash"] for t in manifest["trackers"]}
    mutated = [
        p for p in manifest["planted"] if p["technique"] == "Moving" and p["mutated"]
    ]
    assert mutated
    for p in mutated:
        original = trackers[p["tracker"]]
        assert p["source_hash"] != original
        moved_text = (out / "sources" / f"{p['source_hash']}.js").read_text(
            encoding="utf-8"
        )
        original_text = (out / "sources" / f"{original}.js").read_text(encoding="utf-8")
        assert moved_text != original_text
        assert (out / "asts" / f"{p['source_hash']}.ast.json").read_bytes() == (
            out / "asts" / f"{original}.ast.json"
        ).read_bytes()


def test_filter_rules_block_trackers_only(corpus):
    out, manifest = corpus
    lines = [
        line
        for line in (out / "filters.txt").read_text(encoding="utf-8").splitlines()
        if line and not line.startswith("!")
    ]
    assert lines == [t["rule"] for t in manifest["trackers"]]
    for tracker, line in zip(manifest["trackers"], lines):
        rule = parse_rule(line)
        ctx = RequestContext(
            url=tracker["url"],
            document_domain="site0000.example",
            resource_is_script=True,
        )
        assert rule_matches(rule, ctx)  # type: ignore[arg-type]


def test_expected_rules_cover_every_moved_url(corpus):
    _, manifest = corpus
    moved_urls = {
        p["url"] for p in manifest["planted"] if p["technique"] == "Moving"
    }
    assert all(moved_urls)
    expected = set(manifest["expected"]["rules"])
    for url in moved_urls:
        parts = urlsplit(url)
        assert f"||{parts.netloc}{parts.path}$script" in expected
