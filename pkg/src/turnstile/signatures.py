"""Per-event-loop-turn behavior signatures for scripts.

A signature digests what one script did during one event-loop turn,
keeping only deterministic actions (DOM structure and attribute changes,
storage traffic, timer registration, calls into builtins and web APIs,
request launches) so the same code produces the same signature across page
loads.  Asynchronous completions, timer firings, and other nondeterministic
events never influence it.  Only turns touching storage or starting a
request are signed: behavior with no privacy-relevant action is not worth
tracking and would drown the store in trivia.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from ._kernels import NO_ACTOR, scan_runs
from .graphs import (
    EdgeKind,
    ExecutionGraph,
    GraphEdge,
    NodeKind,
    ScriptUnit,
    list_scripts,
)

__all__ = [
    "DETERMINISTIC_EDGE_KINDS",
    "NONDETERMINISTIC_EDGE_KINDS",
    "PRIVACY_EDGE_KINDS",
    "MIN_SIGNATURE_EDGES",
    "MIN_SIGNATURE_NODES",
    "EmptySignatureError",
    "EventLoopTurn",
    "BehaviorSignature",
    "SignatureExtraction",
    "is_deterministic",
    "is_privacy_relevant",
    "extract_turns",
    "canonicalize",
    "signature_of",
    "extract_signatures",
]

DETERMINISTIC_EDGE_KINDS = frozenset(
    {
        EdgeKind.CREATE_NODE,
        EdgeKind.INSERT_NODE,
        EdgeKind.MODIFY_ATTRIBUTE,
        EdgeKind.REMOVE_ATTRIBUTE,
        EdgeKind.DELETE_NODE,
        EdgeKind.STORAGE_READ,
        EdgeKind.STORAGE_WRITE,
        EdgeKind.STORAGE_DELETE,
        EdgeKind.TIMER_REGISTER,
        EdgeKind.JS_CALL,
        EdgeKind.JS_RESULT,
        EdgeKind.REQUEST_START,
    }
)

NONDETERMINISTIC_EDGE_KINDS = frozenset(EdgeKind) - DETERMINISTIC_EDGE_KINDS

PRIVACY_EDGE_KINDS = frozenset(
    {
        EdgeKind.STORAGE_READ,
        EdgeKind.STORAGE_WRITE,
        EdgeKind.STORAGE_DELETE,
        EdgeKind.REQUEST_START,
    }
)

_STORAGE_PRIVACY = frozenset(
    {EdgeKind.STORAGE_READ, EdgeKind.STORAGE_WRITE, EdgeKind.STORAGE_DELETE}
)

# Below either floor a signature is too generic to identify a script.
MIN_SIGNATURE_EDGES = 13
MIN_SIGNATURE_NODES = 4


class EmptySignatureError(Exception):
    """Raised when a turn has no deterministic edge to canonicalize."""


def is_deterministic(kind: EdgeKind) -> bool:
    return kind in DETERMINISTIC_EDGE_KINDS


def is_privacy_relevant(edge: GraphEdge) -> bool:
    """Storage access or request launch performed by a script."""
    return edge.kind in PRIVACY_EDGE_KINDS and edge.actor_script_id is not None


@dataclass(frozen=True)
class EventLoopTurn:
    """The consecutive actions one script took before yielding the thread.

    ``edges`` is every member edge of the run ascending by order, including
    nondeterministic ones; canonicalization filters those out.
    ``node_kinds`` resolves every node id the edges reference.
    """

    script_id: int
    edges: "tuple[GraphEdge, ...]"
    node_kinds: "dict[str, NodeKind]"

    @property
    def edge_orders(self) -> "tuple[int, ...]":
        return tuple(e.order for e in self.edges)


@dataclass(frozen=True)
class BehaviorSignature:
    """Digest of one turn's deterministic behavior."""

    hash: str
    edge_count: int
    node_count: int
    privacy_kinds: "frozenset[str]"
    canonical: "str | None" = field(default=None, compare=False, repr=False)


@dataclass
class SignatureExtraction:
    """Signatures of one page, split at the size floor.

    ``small`` holds signatures below the edge or node floor; they are kept
    in a side channel rather than dropped so their population can still be
    measured.  ``execute_walls`` counts script-attributed execute edges
    treated as turn boundaries.
    """

    signatures: "dict[ScriptUnit, set[BehaviorSignature]]"
    small: "dict[ScriptUnit, set[BehaviorSignature]]"
    execute_walls: int
    turn_count: int


def _classify_edges(graph: ExecutionGraph) -> "tuple[np.ndarray, np.ndarray, int]":
    """Actor and wall arrays for the run scan, plus the execute-wall count.

    Edge classes: members are actor-attributed non-execute edges; walls are
    actor-less deterministic edges (parser and other non-script work on the
    main thread) and every execute edge that names an acting script (the
    actor started another script, ending its own turn); the rest, actor-less
    nondeterministic edges, are transparent because the asynchronous events
    they record happened off the script's turn.
    """
    n = len(graph.edges)
    actor = np.full(n, NO_ACTOR, dtype=np.int64)
    wall = np.zeros(n, dtype=np.bool_)
    execute_walls = 0
    for i, edge in enumerate(graph.edges):
        if edge.actor_script_id is not None:
            if edge.kind is EdgeKind.EXECUTE:
                wall[i] = True
                execute_walls += 1
            else:
                actor[i] = edge.actor_script_id
        elif edge.kind in DETERMINISTIC_EDGE_KINDS:
            wall[i] = True
    return actor, wall, execute_walls


def _scan_turns(graph: ExecutionGraph) -> "tuple[list[EventLoopTurn], int]":
    actor, wall, execute_walls = _classify_edges(graph)
    run_id, run_count = scan_runs(actor, wall)
    runs: list[list[GraphEdge]] = [[] for _ in range(run_count)]
    for i, edge in enumerate(graph.edges):
        rid = int(run_id[i])
        if rid >= 0:
            runs[rid].append(edge)
    turns: list[EventLoopTurn] = []
    for run in runs:
        if not any(is_privacy_relevant(e) for e in run):
            continue
        node_ids = {e.src for e in run} | {e.dst for e in run}
        turns.append(
            EventLoopTurn(
                script_id=run[0].actor_script_id,  # type: ignore[arg-type]
                edges=tuple(run),
                node_kinds={nid: graph.nodes[nid].kind for nid in node_ids},
            )
        )
    return turns, execute_walls


def extract_turns(graph: ExecutionGraph) -> "list[EventLoopTurn]":
    """Every privacy-relevant event-loop turn of the page, in page order."""
    turns, _ = _scan_turns(graph)
    return turns


def canonicalize(turn: EventLoopTurn) -> str:
    """Canonical text form of a turn's deterministic behavior.

    One ``E:`` line per deterministic edge ascending by order, then one
    ``N:`` line per distinct non-script node in order of first appearance.
    """
    lines: list[str] = []
    seen_nodes: list[str] = []
    seen_set: set[str] = set()
    for edge in turn.edges:
        if edge.kind not in DETERMINISTIC_EDGE_KINDS:
            continue
        src_kind = turn.node_kinds[edge.src]
        dst_kind = turn.node_kinds[edge.dst]
        lines.append(f"E:{edge.kind.value}|S:{src_kind.value}|D:{dst_kind.value}")
        for nid in (edge.src, edge.dst):
            if turn.node_kinds[nid] is not NodeKind.SCRIPT and nid not in seen_set:
                seen_set.add(nid)
                seen_nodes.append(nid)
    if not lines:
        raise EmptySignatureError(
            f"turn of script {turn.script_id} has no deterministic edges"
        )
    lines.extend(f"N:{turn.node_kinds[nid].value}" for nid in seen_nodes)
    return "\n".join(lines)


def signature_of(turn: EventLoopTurn, keep_canonical: bool = False) -> BehaviorSignature:
    """Hash one turn into a signature."""
    canonical = canonicalize(turn)
    digest = hashlib.sha256(canonical.encode("utf-8")).hexdigest()
    edge_count = 0
    nodes: set[str] = set()
    kinds: set[str] = set()
    for edge in turn.edges:
        if edge.kind not in DETERMINISTIC_EDGE_KINDS:
            continue
        edge_count += 1
        for nid in (edge.src, edge.dst):
            if turn.node_kinds[nid] is not NodeKind.SCRIPT:
                nodes.add(nid)
        if edge.kind in _STORAGE_PRIVACY:
            kinds.add("storage")
        elif edge.kind is EdgeKind.REQUEST_START:
            kinds.add("network")
    return BehaviorSignature(
        hash=digest,
        edge_count=edge_count,
        node_count=len(nodes),
        privacy_kinds=frozenset(kinds),
        canonical=canonical if keep_canonical else None,
    )


def extract_signatures(
    graph: ExecutionGraph,
    min_edges: int = MIN_SIGNATURE_EDGES,
    min_nodes: int = MIN_SIGNATURE_NODES,
    keep_canonical: bool = False,
) -> SignatureExtraction:
    """Signatures of every script on a page, split at the size floor."""
    units = {u.script_id: u for u in list_scripts(graph)}
    turns, execute_walls = _scan_turns(graph)
    main: dict[ScriptUnit, set[BehaviorSignature]] = {}
    small: dict[ScriptUnit, set[BehaviorSignature]] = {}
    for turn in turns:
        signature = signature_of(turn, keep_canonical=keep_canonical)
        unit = units[turn.script_id]
        bucket = main
        if signature.edge_count < min_edges or signature.node_count < min_nodes:
            bucket = small
        bucket.setdefault(unit, set()).add(signature)
    return SignatureExtraction(
        signatures=main,
        small=small,
        execute_walls=execute_walls,
        turn_count=len(turns),
    )
