"""Synthetic corpora with known ground truth.

The generator plants trackers (blocked by the emitted filter rules) and
evasions of four kinds (moved, inlined, bundled, shared-library copies),
then records exactly what the pipeline should find in ``manifest.json``.
Expected counts come from construction bookkeeping, never from running the
detector, so the manifest is usable as an independent oracle.  Generation
is a pure function of the seed and parameters: two runs write identical
bytes.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .asttools import AstNode, AstTree, ast_size, dumps_ast, node
from .graphs import (
    EdgeKind,
    ExecutionGraph,
    GraphEdge,
    GraphNode,
    NodeKind,
    SourceKind,
    serialize_graphml,
)
from .signatures import NONDETERMINISTIC_EDGE_KINDS
from .store import atomic_write_text

__all__ = [
    "SynthParams",
    "gen_corpus",
    "perturb_nondeterministic",
    "synthetic_graph",
    "tracker_template",
    "template_edges",
]


@dataclass(frozen=True)
class SynthParams:
    """Corpus shape knobs.

    ``noise`` is the chance of injecting an asynchronous (actor-less,
    nondeterministic) edge before each scripted action.
    ``moving_mutated_fraction`` controls how many moved copies get a
    source-text mutation that changes their hash but not their tree.
    """

    pages: int = 40
    trackers: int = 3
    moving: int = 10
    inlining: int = 10
    bundling: int = 10
    common_code: int = 10
    noise: float = 0.25
    moving_mutated_fraction: float = 0.4
    small_family_every: int = 3
    solo_every: int = 7

    def evasion_total(self) -> int:
        return self.moving + self.inlining + self.bundling + self.common_code


# --------------------------------------------------------------------------
# Behavior templates

# Node roles a turn can touch, in introduction order.
_ROLES = ("CJ", "WA", "IMG", "RES", "LS", "SS", "JB", "TXT")

_ROLE_KINDS = {
    "CJ": NodeKind.COOKIE_JAR,
    "WA": NodeKind.WEB_API,
    "IMG": NodeKind.DOM_ELEMENT,
    "RES": NodeKind.RESOURCE,
    "LS": NodeKind.LOCAL_STORAGE,
    "SS": NodeKind.SESSION_STORAGE,
    "JB": NodeKind.JS_BUILTIN,
    "TXT": NodeKind.DOM_TEXT,
}

_INTRO_OPS = {
    "CJ": (EdgeKind.STORAGE_READ, None, "CJ"),
    "WA": (EdgeKind.JS_CALL, None, "WA"),
    "IMG": (EdgeKind.CREATE_NODE, None, "IMG"),
    "RES": (EdgeKind.REQUEST_START, "IMG", "RES"),
    "LS": (EdgeKind.STORAGE_READ, None, "LS"),
    "SS": (EdgeKind.STORAGE_WRITE, None, "SS"),
    "JB": (EdgeKind.JS_CALL, None, "JB"),
    "TXT": (EdgeKind.CREATE_NODE, None, "TXT"),
}


def template_edges(
    edges: int, nodes: int, variant: int = 0, delete_pad: bool = False
) -> "list[tuple[EdgeKind, str | None, str]]":
    """Ops for one turn touching ``nodes`` distinct nodes over ``edges`` edges.

    Each op is ``(edge kind, source role or None for the script, target
    role)``.  The first ``nodes`` ops introduce the nodes; the rest pad with
    a cycle rotated by ``variant`` so equal-size templates can still differ.
    """
    if not 1 <= nodes <= len(_ROLES):
        raise ValueError(f"nodes must be between 1 and {len(_ROLES)}")
    if edges < nodes:
        raise ValueError("a turn cannot touch more distinct nodes than it has edges")
    roles = _ROLES[:nodes]
    if "RES" in roles and "IMG" not in roles:
        raise ValueError("request targets need a requesting element")
    ops = [_INTRO_OPS[role] for role in roles]
    pad = [
        (EdgeKind.STORAGE_READ, None, "CJ"),
        (EdgeKind.MODIFY_ATTRIBUTE, None, "IMG")
        if "IMG" in roles
        else (EdgeKind.STORAGE_WRITE, None, "CJ"),
        (EdgeKind.JS_CALL, None, "WA") if "WA" in roles else (EdgeKind.STORAGE_READ, None, "CJ"),
    ]
    if delete_pad:
        pad[0] = (EdgeKind.STORAGE_DELETE, None, "CJ")
    rotation = variant % len(pad)
    pad = pad[rotation:] + pad[:rotation]
    i = 0
    while len(ops) < edges:
        ops.append(pad[i % len(pad)])
        i += 1
    return ops


def tracker_template(k: int) -> "list[tuple[EdgeKind, str | None, str]]":
    """Tracker ``k``'s turn: 13 + k edges, 4 or 5 distinct nodes."""
    return template_edges(13 + k, 4 if k < 3 else 5, variant=k)


_SMALL_TEMPLATE = template_edges(5, 4)
_SOLO_TEMPLATE = template_edges(14, 4, variant=1, delete_pad=True)
_NONPRIV_TEMPLATE: "list[tuple[EdgeKind, str | None, str]]" = [
    (EdgeKind.CREATE_NODE, None, "IMG"),
    (EdgeKind.MODIFY_ATTRIBUTE, None, "IMG"),
    (EdgeKind.INSERT_NODE, None, "IMG"),
    (EdgeKind.MODIFY_ATTRIBUTE, None, "IMG"),
]


# --------------------------------------------------------------------------
# Graph assembly


class _PageBuilder:
    """Accumulates one page's nodes and edges with fresh ids and orders."""

    def __init__(self, page_url: str, rng: random.Random, noise: float) -> None:
        self.page_url = page_url
        self.rng = rng
        self.noise = noise
        self.nodes: list[GraphNode] = []
        self.edges: list[GraphEdge] = []
        self._order = 0
        self.parser = self.add_node(NodeKind.PARSER)
        self.html = self.add_node(NodeKind.DOM_ELEMENT, tag_name="html")
        self.add_edge(EdgeKind.CREATE_NODE, self.parser, self.html)
        self.jars = {
            "CJ": self.add_node(NodeKind.COOKIE_JAR),
            "WA": self.add_node(NodeKind.WEB_API),
            "LS": self.add_node(NodeKind.LOCAL_STORAGE),
            "SS": self.add_node(NodeKind.SESSION_STORAGE),
            "JB": self.add_node(NodeKind.JS_BUILTIN),
        }
        self._last_resource: "str | None" = None

    def add_node(self, kind: NodeKind, **fields) -> str:
        node_id = f"n{len(self.nodes)}"
        self.nodes.append(GraphNode(id=node_id, kind=kind, **fields))
        return node_id

    def add_edge(
        self,
        kind: EdgeKind,
        src: str,
        dst: str,
        actor: "int | None" = None,
        attrs: "tuple[tuple[str, str], ...]" = (),
    ) -> None:
        self._order += 1
        self.edges.append(
            GraphEdge(
                id=f"e{len(self.edges)}",
                kind=kind,
                src=src,
                dst=dst,
                order=self._order,
                actor_script_id=actor,
                attrs=attrs,
            )
        )

    def maybe_noise(self, script_node: str) -> None:
        """Asynchronous events land between actions without an actor."""
        while self.rng.random() < self.noise:
            if self._last_resource is not None and self.rng.random() < 0.5:
                self.add_edge(EdgeKind.REQUEST_COMPLETE, self._last_resource, script_node)
            else:
                self.add_edge(EdgeKind.TIMER_FIRE, self.jars["JB"], script_node)

    def add_script(
        self,
        script_id: int,
        source_kind: SourceKind,
        source_hash: str,
        url: "str | None" = None,
    ) -> str:
        script_node = self.add_node(
            NodeKind.SCRIPT,
            script_id=script_id,
            source_kind=source_kind,
            source_hash=source_hash,
            url=url,
        )
        self.add_edge(EdgeKind.EXECUTE, self.parser, script_node)
        return script_node

    def wall(self) -> None:
        """Parser work on the main thread, ending any open turn."""
        text = self.add_node(NodeKind.DOM_TEXT)
        self.add_edge(EdgeKind.CREATE_NODE, self.parser, text)

    def run_turn(
        self,
        script_id: int,
        script_node: str,
        ops: "list[tuple[EdgeKind, str | None, str]]",
    ) -> None:
        local: dict[str, str] = dict(self.jars)
        for kind, src_role, dst_role in ops:
            self.maybe_noise(script_node)
            for role in (src_role, dst_role):
                if role is not None and role not in local:
                    local[role] = self.add_node(
                        _ROLE_KINDS[role],
                        tag_name="img" if role == "IMG" else None,
                    )
                    if role == "RES":
                        self._last_resource = local[role]
            src = script_node if src_role is None else local[src_role]
            self.add_edge(kind, src, local[dst_role], actor=script_id)

    def graph(self) -> ExecutionGraph:
        return ExecutionGraph.from_parts(self.page_url, self.nodes, self.edges)


def synthetic_graph(seed: int, scripts: int = 3, noise: float = 0.3) -> ExecutionGraph:
    """One standalone page graph for exercising extraction.

    Scripts take one or two turns each, with sizes straddling the signature
    floor, separated by parser walls and sprinkled with asynchronous noise.
    """
    rng = random.Random(seed)
    builder = _PageBuilder(f"https://seed{seed}.example/", rng, noise)
    for sid in range(1, scripts + 1):
        script_node = builder.add_script(
            sid,
            SourceKind.INLINE,
            hashlib.sha256(f"seed{seed}:{sid}".encode()).hexdigest(),
        )
        turns = rng.randint(1, 2)
        for _ in range(turns):
            edges = rng.randint(4, 18)
            nodes = rng.randint(3, min(6, edges))
            builder.run_turn(
                sid, script_node, template_edges(edges, nodes, variant=rng.randint(0, 2))
            )
            builder.wall()
    for _ in range(rng.randint(0, 3)):
        builder.add_edge(
            EdgeKind.TIMER_FIRE, builder.jars["JB"], builder.html
        )
    return builder.graph()


def perturb_nondeterministic(graph: ExecutionGraph, rng: random.Random) -> ExecutionGraph:
    """Permute nondeterministic edges among their own order slots.

    Deterministic edges keep their stamps, so scripted behavior is
    untouched; only the arrival order of asynchronous events changes, as it
    would across real page loads.
    """
    nondet_positions = [
        i for i, e in enumerate(graph.edges) if e.kind in NONDETERMINISTIC_EDGE_KINDS
    ]
    orders = [graph.edges[i].order for i in nondet_positions]
    shuffled = orders[:]
    rng.shuffle(shuffled)
    edges = list(graph.edges)
    for pos, new_order in zip(nondet_positions, shuffled):
        old = edges[pos]
        edges[pos] = GraphEdge(
            id=old.id,
            kind=old.kind,
            src=old.src,
            dst=old.dst,
            order=new_order,
            actor_script_id=old.actor_script_id,
            attrs=old.attrs,
            other_type=old.other_type,
        )
    return ExecutionGraph.from_parts(graph.page_url, list(graph.nodes.values()), edges)


# --------------------------------------------------------------------------
# Sources and trees


def _sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _tracker_ast(k: int) -> AstTree:
    body = [
        node(
            "ExpressionStatement",
            node(
                "CallExpression",
                node("MemberExpression", node("Identifier"), node("Identifier")),
                node("Literal"),
            ),
        )
        for _ in range(10 + k)
    ]
    root = node(
        "Program",
        node("VariableDeclaration", node("VariableDeclarator", node("Identifier"), node("Literal"))),
        node("FunctionDeclaration", node("Identifier"), node("BlockStatement", *body)),
        node("ExpressionStatement", node("CallExpression", node("Identifier"))),
    )
    return AstTree(root=root, size=ast_size(root))


def _tracker_function(k: int) -> AstNode:
    return _tracker_ast(k).root.children[1]


def _bundle_ast(k: int, j: int) -> AstTree:
    tracker = _tracker_ast(k)
    extra = 1 + j % 3
    pre = [
        node(
            "VariableDeclaration",
            node("VariableDeclarator", node("Identifier"), node("ObjectExpression")),
        )
        for _ in range(extra)
    ]
    post = [
        node(
            "ExpressionStatement",
            node(
                "AssignmentExpression",
                node("MemberExpression", node("Identifier"), node("Identifier")),
                node("Literal"),
            ),
        )
    ]
    root = node("Program", *pre, *tracker.root.children, *post)
    return AstTree(root=root, size=ast_size(root))


def _common_ast(k: int, j: int) -> AstTree:
    shared = _tracker_function(k)
    wrapper = node(
        "ExpressionStatement",
        node(
            "CallExpression",
            node("FunctionExpression", node("BlockStatement", shared)),
        ),
    )
    tail = [
        node(
            "IfStatement",
            node("Identifier"),
            node(
                "BlockStatement",
                node("ExpressionStatement", node("CallExpression", node("Identifier"))),
            ),
        )
    ]
    pre = [
        node(
            "VariableDeclaration",
            node("VariableDeclarator", node("Identifier"), node("ArrayExpression")),
        )
        for _ in range(1 + j % 2)
    ]
    root = node("Program", *pre, wrapper, *tail)
    return AstTree(root=root, size=ast_size(root))


def _benign_ast(statements: int) -> AstTree:
    root = node(
        "Program",
        *[
            node("ExpressionStatement", node("CallExpression", node("Identifier")))
            for _ in range(statements)
        ],
    )
    return AstTree(root=root, size=ast_size(root))


def _tracker_source(k: int) -> str:
    lines = [
        f"var endpoint = 'https://tracker{k}.example/collect';",
        "function report(payload) {",
    ]
    for i in range(10 + k):
        lines.append(f"  window.navigator.sendBeacon(endpoint, 'f{i}=' + payload[{i}]);")
    lines += ["}", "report(document.cookie.split(';'));", ""]
    return "\n".join(lines)


def _benign_source(tag: str, statements: int) -> str:
    lines = [f"consent_widget_{tag}();" for _ in range(statements)]
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Corpus generation


@dataclass
class _Planted:
    technique: str
    tracker: int
    source_hash: str
    source_kind: str
    page: str
    url: "str | None" = None
    mutated: bool = False


@dataclass
class _Bookkeeping:
    sources: "dict[str, str]" = field(default_factory=dict)  # hash -> text
    trees: "dict[str, AstTree]" = field(default_factory=dict)
    planted: "list[_Planted]" = field(default_factory=list)


def _plan_evasions(params: SynthParams, trackers: "list[dict]", book: _Bookkeeping):
    """Fix every evasion's source, kind, and tree before pages are built."""
    plan = []
    mutated_count = round(params.moving * params.moving_mutated_fraction)
    for j in range(params.moving):
        k = j % params.trackers
        base = book.sources[trackers[k]["source_hash"]]
        mutated = j < mutated_count
        text = base + f"// relocated build {j}\n" if mutated else base
        source_hash = _sha256_text(text)
        book.sources[source_hash] = text
        book.trees[source_hash] = _tracker_ast(k)
        plan.append(
            _Planted(
                technique="Moving",
                tracker=k,
                source_hash=source_hash,
                source_kind="external",
                page="",
                mutated=mutated,
            )
        )
    for j in range(params.inlining):
        k = j % params.trackers
        base = book.sources[trackers[k]["source_hash"]]
        text = base + f"// inlined copy {j}\n"
        source_hash = _sha256_text(text)
        book.sources[source_hash] = text
        book.trees[source_hash] = _tracker_ast(k)
        plan.append(
            _Planted(
                technique="Inlining",
                tracker=k,
                source_hash=source_hash,
                source_kind="inline",
                page="",
            )
        )
    for j in range(params.bundling):
        k = j % params.trackers
        base = book.sources[trackers[k]["source_hash"]]
        text = f"var vendorBundle{j} = {{}};\n" + base + "vendorBundle.flush();\n"
        source_hash = _sha256_text(text)
        book.sources[source_hash] = text
        book.trees[source_hash] = _bundle_ast(k, j)
        plan.append(
            _Planted(
                technique="Bundling",
                tracker=k,
                source_hash=source_hash,
                source_kind="external",
                page="",
            )
        )
    for j in range(params.common_code):
        k = j % params.trackers
        text = (
            f"var shared{j} = [];\n(function() {{\n"
            + book.sources[trackers[k]["source_hash"]]
            + "})();\nif (shared) { init(); }\n"
        )
        source_hash = _sha256_text(text)
        book.sources[source_hash] = text
        book.trees[source_hash] = _common_ast(k, j)
        plan.append(
            _Planted(
                technique="CommonCode",
                tracker=k,
                source_hash=source_hash,
                source_kind="external",
                page="",
            )
        )
    return plan


def gen_corpus(seed: int, params: SynthParams, out_dir: "str | Path") -> dict:
    """Write a corpus under ``out_dir`` and return its manifest."""
    if params.pages < 1 or params.trackers < 1:
        raise ValueError("need at least one page and one tracker")
    if params.evasion_total() > params.pages:
        raise ValueError("at most one planted evasion per page; add pages")
    rng = random.Random(seed)
    out = Path(out_dir)
    (out / "graphs").mkdir(parents=True, exist_ok=True)
    (out / "sources").mkdir(exist_ok=True)
    (out / "asts").mkdir(exist_ok=True)

    book = _Bookkeeping()
    trackers = []
    for k in range(params.trackers):
        text = _tracker_source(k)
        source_hash = _sha256_text(text)
        book.sources[source_hash] = text
        book.trees[source_hash] = _tracker_ast(k)
        trackers.append(
            {
                "k": k,
                "url": f"https://tracker{k}.example/t{k}.js",
                "source_hash": source_hash,
                "rule": f"||tracker{k}.example/t{k}.js",
            }
        )

    smallfam_text = _benign_source("metrics", 3)
    smallfam_hash = _sha256_text(smallfam_text)
    book.sources[smallfam_hash] = smallfam_text
    book.trees[smallfam_hash] = _benign_ast(3)
    dom_text = _benign_source("layout", 5)
    dom_hash = _sha256_text(dom_text)
    book.sources[dom_hash] = dom_text
    book.trees[dom_hash] = _benign_ast(5)
    solo_text = _benign_source("storefront", 7)
    solo_hash = _sha256_text(solo_text)
    book.sources[solo_hash] = solo_text
    book.trees[solo_hash] = _benign_ast(7)

    plan = _plan_evasions(params, trackers, book)
    placement = rng.sample(range(params.pages), k=len(plan))

    evasion_by_page: dict[int, _Planted] = {}
    for planted, page_index in zip(plan, placement):
        evasion_by_page[page_index] = planted

    pages_rows = []
    for p in range(params.pages):
        page_url = f"https://site{p:04d}.example/"
        builder = _PageBuilder(page_url, rng, params.noise)
        scripts_on_page: dict[str, str] = {}
        sid = 0

        def place(
            source_hash: str,
            kind: SourceKind,
            url: "str | None",
            turns: "list[list[tuple[EdgeKind, str | None, str]]]",
        ) -> None:
            nonlocal sid
            sid += 1
            script_node = builder.add_script(sid, kind, source_hash, url)
            for turn_ops in turns:
                builder.run_turn(sid, script_node, turn_ops)
                builder.wall()
            scripts_on_page[source_hash] = f"sources/{source_hash}.js"

        k = p % params.trackers
        place(
            trackers[k]["source_hash"],
            SourceKind.EXTERNAL,
            trackers[k]["url"],
            [tracker_template(k), _SMALL_TEMPLATE],
        )
        place(dom_hash, SourceKind.INLINE, None, [_NONPRIV_TEMPLATE])
        if p % params.small_family_every == 0:
            place(smallfam_hash, SourceKind.INLINE, None, [_SMALL_TEMPLATE])
        if p % params.solo_every == 0:
            place(
                solo_hash,
                SourceKind.EXTERNAL,
                f"{page_url}js/storefront.js",
                [_SOLO_TEMPLATE],
            )
        planted = evasion_by_page.get(p)
        if planted is not None:
            planted.page = page_url
            ek = planted.tracker
            turns = [tracker_template(ek), _SMALL_TEMPLATE]
            kind = SourceKind(planted.source_kind)
            url = None
            if kind is SourceKind.EXTERNAL:
                name = {
                    "Moving": "moved",
                    "Bundling": "bundle",
                    "CommonCode": "lib",
                }[planted.technique]
                url = f"{page_url}js/{name}{len(book.planted)}.js"
                planted.url = url
            if planted.technique == "Bundling":
                turns = [_NONPRIV_TEMPLATE, tracker_template(ek), _SMALL_TEMPLATE]
            elif planted.technique == "CommonCode":
                turns = [_NONPRIV_TEMPLATE, tracker_template(ek)]
            place(planted.source_hash, kind, url, turns)
            book.planted.append(planted)
        builder.wall()
        graph = builder.graph()
        atomic_write_text(out / "graphs" / f"page{p:04d}.graphml", serialize_graphml(graph))
        pages_rows.append(
            {
                "page_url": page_url,
                "graph": f"graphs/page{p:04d}.graphml",
                "scripts": dict(sorted(scripts_on_page.items())),
            }
        )

    for source_hash in sorted(book.sources):
        atomic_write_text(out / "sources" / f"{source_hash}.js", book.sources[source_hash])
        atomic_write_text(
            out / "asts" / f"{source_hash}.ast.json", dumps_ast(book.trees[source_hash]) + "\n"
        )
    atomic_write_text(
        out / "pages.jsonl",
        "\n".join(json.dumps(row, sort_keys=True) for row in pages_rows) + "\n",
    )
    atomic_write_text(
        out / "filters.txt",
        "! Synthetic corpus block rules\n" + "\n".join(t["rule"] for t in trackers) + "\n",
    )
    manifest = _manifest(seed, params, trackers, book)
    atomic_write_text(
        out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )
    return manifest


def _manifest(
    seed: int, params: SynthParams, trackers: "list[dict]", book: _Bookkeeping
) -> dict:
    planted_rows = [asdict(p) for p in book.planted]
    trackers_with_evasion = sorted({p.tracker for p in book.planted})

    per_technique: dict[str, dict[str, int]] = {}
    moving_unique: set[str] = set()
    for p in book.planted:
        bucket = per_technique.setdefault(p.technique, {"unique": 0, "instances": 0})
        bucket["instances"] += 1
        if p.technique == "Moving":
            moving_unique.add(p.source_hash)
        else:
            bucket["unique"] += 1
    if "Moving" in per_technique:
        per_technique["Moving"]["unique"] = len(moving_unique)

    rules = sorted(
        {
            _expected_rule(p.url)
            for p in book.planted
            if p.technique == "Moving" and p.url
        }
    )
    caught = sorted(
        {
            p.source_hash
            for p in book.planted
            if p.technique == "Moving" and not p.mutated
        }
    )
    missed = sorted(
        {p.source_hash for p in book.planted} - set(caught)
    )
    finding_pairs = len({(p.source_hash, p.tracker) for p in book.planted})
    expected = {
        "ground_truth_signatures": {
            "measurement": len(trackers_with_evasion),
            "defense": params.trackers,
        },
        "small_ground_truth_signatures": {
            "measurement": 1 if params.pages >= 1 else 0,
            "defense": 1,
        },
        "findings": per_technique,
        "finding_pairs": finding_pairs,
        "evaded_unique_total": len(
            moving_unique
            | {p.source_hash for p in book.planted if p.technique != "Moving"}
        ),
        "evaded_instances_total": len(book.planted),
        "pages_with_evasion": len({p.page for p in book.planted}),
        "rules": rules,
        "baseline": {
            "caught_sources": caught,
            "missed_sources": missed,
        },
    }
    return {
        "seed": seed,
        "params": asdict(params),
        "trackers": trackers,
        "planted": planted_rows,
        "expected": expected,
    }


def _expected_rule(url: str) -> str:
    from urllib.parse import urlsplit

    parts = urlsplit(url)
    return f"||{parts.netloc.lower()}{parts.path or '/'}$script"
