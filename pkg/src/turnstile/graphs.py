"""Page execution graphs: typed nodes, order-stamped edges, GraphML I/O.

A graph records everything one page load did: scripts, DOM mutations,
storage traffic, network requests.  Every edge carries a unique ``order``
stamp giving the total order of events, and optionally an ``actor script
id`` naming the script whose JavaScript frame performed the action.  A page
corpus is a directory of ``*.graphml`` files plus a ``pages.jsonl`` index
mapping page URLs to graphs and script sources.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from xml.etree import ElementTree

__all__ = [
    "NodeKind",
    "EdgeKind",
    "SourceKind",
    "STORAGE_NODE_KINDS",
    "GraphNode",
    "GraphEdge",
    "ExecutionGraph",
    "ScriptUnit",
    "GraphParseError",
    "GraphValidationError",
    "CorpusError",
    "PageRecord",
    "parse_graphml",
    "serialize_graphml",
    "edges_in_order",
    "list_scripts",
    "load_corpus",
    "load_graph",
]

_GRAPHML_NS = "http://graphml.graphdrawing.org/xmlns"


class GraphParseError(Exception):
    """Raised when a GraphML document cannot be decoded."""


class GraphValidationError(Exception):
    """Raised when a decoded graph violates a structural invariant."""


class CorpusError(Exception):
    """Raised when a corpus directory or its index is unusable."""


class _WireEnum(Enum):
    """Enum whose wire spelling swaps hyphens for spaces."""

    @property
    def wire_name(self) -> str:
        return self.value.replace("-", " ")

    @classmethod
    def from_wire(cls, text: str):
        try:
            return cls(text.strip().replace(" ", "-"))
        except ValueError:
            return None


class NodeKind(_WireEnum):
    SCRIPT = "script"
    DOM_ELEMENT = "dom-element"
    DOM_TEXT = "dom-text"
    RESOURCE = "resource"
    COOKIE_JAR = "cookie-jar"
    LOCAL_STORAGE = "local-storage"
    SESSION_STORAGE = "session-storage"
    INDEXED_DB = "indexed-db"
    JS_BUILTIN = "js-builtin"
    WEB_API = "web-api"
    PARSER = "parser"
    FRAME_OWNER = "frame-owner"
    REMOTE_FRAME = "remote-frame"
    OTHER = "other"


class EdgeKind(_WireEnum):
    CREATE_NODE = "create-node"
    INSERT_NODE = "insert-node"
    MODIFY_ATTRIBUTE = "modify-attribute"
    REMOVE_ATTRIBUTE = "remove-attribute"
    DELETE_NODE = "delete-node"
    STORAGE_READ = "storage-read"
    STORAGE_WRITE = "storage-write"
    STORAGE_DELETE = "storage-delete"
    TIMER_REGISTER = "timer-register"
    TIMER_FIRE = "timer-fire"
    JS_CALL = "js-call"
    JS_RESULT = "js-result"
    REQUEST_START = "request-start"
    REQUEST_COMPLETE = "request-complete"
    REQUEST_ERROR = "request-error"
    EXECUTE = "execute"
    REMOTE_FRAME_ACTIVITY = "remote-frame-activity"
    OTHER = "other"


class SourceKind(_WireEnum):
    EXTERNAL = "external"
    INLINE = "inline"
    ATTRIBUTE = "attribute"
    JS_URL = "js-url"


STORAGE_NODE_KINDS = frozenset(
    {
        NodeKind.COOKIE_JAR,
        NodeKind.LOCAL_STORAGE,
        NodeKind.SESSION_STORAGE,
        NodeKind.INDEXED_DB,
    }
)

_STORAGE_EDGE_KINDS = frozenset(
    {EdgeKind.STORAGE_READ, EdgeKind.STORAGE_WRITE, EdgeKind.STORAGE_DELETE}
)

_NODE_KEYS = ("node type", "script id", "url", "tag name", "source kind", "source hash")
_EDGE_KEYS = ("edge type", "order", "actor script id")


@dataclass(frozen=True)
class GraphNode:
    """One vertex of an execution graph.

    ``other_type`` keeps the wire spelling of node types outside the known
    vocabulary so serialization round-trips them unchanged.
    """

    id: str
    kind: NodeKind
    script_id: "int | None" = None
    url: "str | None" = None
    tag_name: "str | None" = None
    source_kind: "SourceKind | None" = None
    source_hash: "str | None" = None
    other_type: "str | None" = None


@dataclass(frozen=True)
class GraphEdge:
    """One order-stamped event.

    ``attrs`` holds secondary payload keys (request url, attr name, storage
    key, value, and anything else a recorder emitted) as sorted pairs.
    """

    id: str
    kind: EdgeKind
    src: str
    dst: str
    order: int
    actor_script_id: "int | None" = None
    attrs: "tuple[tuple[str, str], ...]" = ()
    other_type: "str | None" = None

    def attr(self, key: str) -> "str | None":
        for k, v in self.attrs:
            if k == key:
                return v
        return None


@dataclass(frozen=True)
class ScriptUnit:
    """Identity of one script execution on one page."""

    page_url: str
    script_id: int
    source_kind: SourceKind
    source_hash: str
    url: "str | None" = None


@dataclass(frozen=True)
class ExecutionGraph:
    """A validated page execution graph.

    Immutable after construction; ``edges`` is sorted ascending by order
    stamp.  Build instances through :meth:`from_parts` so the structural
    invariants are checked.
    """

    page_url: str
    nodes: "dict[str, GraphNode]"
    edges: "tuple[GraphEdge, ...]"

    @classmethod
    def from_parts(
        cls,
        page_url: str,
        nodes: "list[GraphNode] | tuple[GraphNode, ...]",
        edges: "list[GraphEdge] | tuple[GraphEdge, ...]",
    ) -> "ExecutionGraph":
        node_map: dict[str, GraphNode] = {}
        for node in nodes:
            if node.id in node_map:
                raise GraphValidationError(f"node {node.id}: duplicate node id")
            node_map[node.id] = node
        _validate_scripts(node_map)
        ordered = tuple(sorted(edges, key=lambda e: e.order))
        _validate_edges(node_map, ordered)
        return cls(page_url=page_url, nodes=node_map, edges=ordered)

    def script_ids(self) -> "dict[int, GraphNode]":
        return {
            n.script_id: n
            for n in self.nodes.values()
            if n.kind is NodeKind.SCRIPT and n.script_id is not None
        }


def _validate_scripts(nodes: "dict[str, GraphNode]") -> None:
    seen_script_ids: dict[int, str] = {}
    for node in nodes.values():
        if node.kind is not NodeKind.SCRIPT:
            continue
        if node.script_id is None:
            raise GraphValidationError(f"script node {node.id}: missing script id")
        if node.script_id in seen_script_ids:
            raise GraphValidationError(
                f"script node {node.id}: script id {node.script_id} already used "
                f"by node {seen_script_ids[node.script_id]}"
            )
        seen_script_ids[node.script_id] = node.id
        if node.source_hash is None:
            raise GraphValidationError(f"script node {node.id}: missing source hash")
        if node.source_kind is None:
            raise GraphValidationError(f"script node {node.id}: missing source kind")
        if node.source_kind is SourceKind.EXTERNAL and not node.url:
            raise GraphValidationError(
                f"script node {node.id}: external script without url"
            )


def _validate_edges(
    nodes: "dict[str, GraphNode]", edges: "tuple[GraphEdge, ...]"
) -> None:
    script_ids = {
        n.script_id for n in nodes.values() if n.kind is NodeKind.SCRIPT
    }
    seen_orders: dict[int, str] = {}
    for edge in edges:
        if edge.src not in nodes:
            raise GraphValidationError(f"edge {edge.id}: unknown source node {edge.src}")
        if edge.dst not in nodes:
            raise GraphValidationError(f"edge {edge.id}: unknown target node {edge.dst}")
        if edge.order in seen_orders:
            raise GraphValidationError(
                f"edge {edge.id}: order {edge.order} already used by edge "
                f"{seen_orders[edge.order]}"
            )
        seen_orders[edge.order] = edge.id
        if edge.actor_script_id is not None and edge.actor_script_id not in script_ids:
            raise GraphValidationError(
                f"edge {edge.id}: actor script id {edge.actor_script_id} "
                "does not name a script node"
            )
        if edge.kind in _STORAGE_EDGE_KINDS:
            dst_kind = nodes[edge.dst].kind
            if dst_kind not in STORAGE_NODE_KINDS:
                raise GraphValidationError(
                    f"edge {edge.id}: {edge.kind.wire_name} edge targets "
                    f"{dst_kind.wire_name} node {edge.dst}"
                )


def edges_in_order(graph: ExecutionGraph) -> "tuple[GraphEdge, ...]":
    """All edges ascending by order stamp."""
    return graph.edges


def list_scripts(graph: ExecutionGraph) -> "tuple[ScriptUnit, ...]":
    """Script units of the page, ascending by script id."""
    units = []
    for node in graph.nodes.values():
        if node.kind is not NodeKind.SCRIPT:
            continue
        units.append(
            ScriptUnit(
                page_url=graph.page_url,
                script_id=node.script_id,  # type: ignore[arg-type]
                source_kind=node.source_kind,  # type: ignore[arg-type]
                source_hash=node.source_hash,  # type: ignore[arg-type]
                url=node.url,
            )
        )
    return tuple(sorted(units, key=lambda u: u.script_id))


def _strip_ns(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _parse_int(text: str, where: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise GraphParseError(f"{where}: expected integer, got {text!r}") from None


def parse_graphml(document: str, page_url: str = "") -> ExecutionGraph:
    """Decode and validate one GraphML document.

    ``page_url`` overrides any page URL recorded in the document's
    ``<desc>`` element; pass the value from the corpus index when loading a
    corpus page.
    """
    try:
        root = ElementTree.fromstring(document)
    except ElementTree.ParseError as exc:
        raise GraphParseError(f"malformed GraphML: {exc}") from exc
    if _strip_ns(root.tag) != "graphml":
        raise GraphParseError(f"expected graphml root element, got {_strip_ns(root.tag)}")

    key_names: dict[str, str] = {}
    for child in root:
        if _strip_ns(child.tag) == "key":
            key_id = child.get("id")
            name = child.get("attr.name")
            if key_id and name:
                key_names[key_id] = name

    graph_el = next((c for c in root if _strip_ns(c.tag) == "graph"), None)
    if graph_el is None:
        raise GraphParseError("document has no graph element")

    doc_url = ""
    nodes: list[GraphNode] = []
    edges: list[GraphEdge] = []
    edge_count = 0
    for el in graph_el:
        tag = _strip_ns(el.tag)
        if tag == "desc":
            doc_url = (el.text or "").strip()
        elif tag == "node":
            nodes.append(_parse_node(el, key_names))
        elif tag == "edge":
            edges.append(_parse_edge(el, key_names, edge_count))
            edge_count += 1
    return ExecutionGraph.from_parts(page_url or doc_url, nodes, edges)


def _data_of(el: ElementTree.Element, key_names: "dict[str, str]") -> "dict[str, str]":
    data: dict[str, str] = {}
    for child in el:
        if _strip_ns(child.tag) != "data":
            continue
        key_id = child.get("key", "")
        name = key_names.get(key_id, key_id)
        data[name] = child.text or ""
    return data


def _parse_node(el: ElementTree.Element, key_names: "dict[str, str]") -> GraphNode:
    node_id = el.get("id")
    if not node_id:
        raise GraphParseError("node element without id")
    data = _data_of(el, key_names)
    type_text = data.get("node type")
    if type_text is None:
        raise GraphParseError(f"node {node_id}: missing node type")
    kind = NodeKind.from_wire(type_text)
    other_type = None
    if kind is None:
        kind = NodeKind.OTHER
        other_type = type_text
    script_id = None
    if "script id" in data:
        script_id = _parse_int(data["script id"], f"node {node_id}: script id")
    source_kind = None
    if "source kind" in data:
        source_kind = SourceKind.from_wire(data["source kind"])
        if source_kind is None:
            raise GraphParseError(
                f"node {node_id}: unknown source kind {data['source kind']!r}"
            )
    return GraphNode(
        id=node_id,
        kind=kind,
        script_id=script_id,
        url=data.get("url"),
        tag_name=data.get("tag name"),
        source_kind=source_kind,
        source_hash=data.get("source hash"),
        other_type=other_type,
    )


def _parse_edge(
    el: ElementTree.Element, key_names: "dict[str, str]", index: int
) -> GraphEdge:
    edge_id = el.get("id") or f"e{index}"
    src = el.get("source")
    dst = el.get("target")
    if not src or not dst:
        raise GraphParseError(f"edge {edge_id}: missing source or target")
    data = _data_of(el, key_names)
    type_text = data.pop("edge type", None)
    if type_text is None:
        raise GraphParseError(f"edge {edge_id}: missing edge type")
    kind = EdgeKind.from_wire(type_text)
    other_type = None
    if kind is None:
        kind = EdgeKind.OTHER
        other_type = type_text
    order_text = data.pop("order", None)
    if order_text is None:
        raise GraphParseError(f"edge {edge_id}: missing order")
    order = _parse_int(order_text, f"edge {edge_id}: order")
    actor = None
    if "actor script id" in data:
        actor = _parse_int(
            data.pop("actor script id"), f"edge {edge_id}: actor script id"
        )
    attrs = tuple(sorted(data.items()))
    return GraphEdge(
        id=edge_id,
        kind=kind,
        src=src,
        dst=dst,
        order=order,
        actor_script_id=actor,
        attrs=attrs,
        other_type=other_type,
    )


def serialize_graphml(graph: ExecutionGraph) -> str:
    """Encode a graph as GraphML; inverse of :func:`parse_graphml`."""
    extra_keys = sorted(
        {k for edge in graph.edges for k, _ in edge.attrs} - set(_EDGE_KEYS)
    )
    root = ElementTree.Element("graphml", {"xmlns": _GRAPHML_NS})
    key_ids: dict[tuple[str, str], str] = {}
    for domain, names in (("node", _NODE_KEYS), ("edge", tuple(_EDGE_KEYS) + tuple(extra_keys))):
        for name in names:
            key_id = f"d{len(key_ids)}"
            key_ids[(domain, name)] = key_id
            ElementTree.SubElement(
                root,
                "key",
                {"id": key_id, "for": domain, "attr.name": name, "attr.type": "string"},
            )
    graph_el = ElementTree.SubElement(
        root, "graph", {"id": "G", "edgedefault": "directed"}
    )
    if graph.page_url:
        desc = ElementTree.SubElement(graph_el, "desc")
        desc.text = graph.page_url

    def put(parent: ElementTree.Element, domain: str, name: str, value: str) -> None:
        data = ElementTree.SubElement(parent, "data", {"key": key_ids[(domain, name)]})
        data.text = value

    for node in graph.nodes.values():
        el = ElementTree.SubElement(graph_el, "node", {"id": node.id})
        put(el, "node", "node type", node.other_type or node.kind.wire_name)
        if node.script_id is not None:
            put(el, "node", "script id", str(node.script_id))
        if node.url is not None:
            put(el, "node", "url", node.url)
        if node.tag_name is not None:
            put(el, "node", "tag name", node.tag_name)
        if node.source_kind is not None:
            put(el, "node", "source kind", node.source_kind.wire_name)
        if node.source_hash is not None:
            put(el, "node", "source hash", node.source_hash)
    for edge in graph.edges:
        el = ElementTree.SubElement(
            graph_el, "edge", {"id": edge.id, "source": edge.src, "target": edge.dst}
        )
        put(el, "edge", "edge type", edge.other_type or edge.kind.wire_name)
        put(el, "edge", "order", str(edge.order))
        if edge.actor_script_id is not None:
            put(el, "edge", "actor script id", str(edge.actor_script_id))
        for k, v in edge.attrs:
            put(el, "edge", k, v)
    ElementTree.indent(root)
    return ElementTree.tostring(root, encoding="unicode", xml_declaration=True) + "\n"


@dataclass(frozen=True)
class PageRecord:
    """One row of a corpus index: a page and its recorded artifacts."""

    page_url: str
    graph_path: Path
    script_sources: "dict[str, Path]" = field(default_factory=dict)


def load_corpus(corpus_dir: "str | Path") -> "list[PageRecord]":
    """Read ``pages.jsonl`` and check that every referenced file exists."""
    root = Path(corpus_dir)
    index = root / "pages.jsonl"
    if not index.is_file():
        raise CorpusError(f"{root}: no pages.jsonl index")
    records: list[PageRecord] = []
    seen_urls: set[str] = set()
    for lineno, line in enumerate(index.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{index}:{lineno}: invalid JSON: {exc}") from exc
        page_url = row.get("page_url")
        graph_rel = row.get("graph")
        if not page_url or not graph_rel:
            raise CorpusError(f"{index}:{lineno}: record needs page_url and graph")
        if page_url in seen_urls:
            raise CorpusError(f"{index}:{lineno}: duplicate page_url {page_url}")
        seen_urls.add(page_url)
        graph_path = root / graph_rel
        if not graph_path.is_file():
            raise CorpusError(f"{index}:{lineno}: missing graph file {graph_path}")
        sources: dict[str, Path] = {}
        for source_hash, rel in (row.get("scripts") or {}).items():
            path = root / rel
            if not path.is_file():
                raise CorpusError(f"{index}:{lineno}: missing script source {path}")
            sources[source_hash] = path
        records.append(
            PageRecord(page_url=page_url, graph_path=graph_path, script_sources=sources)
        )
    if not records:
        raise CorpusError(f"{index}: corpus index is empty")
    return records


def load_graph(page: PageRecord) -> ExecutionGraph:
    """Parse the graph file behind one corpus record."""
    text = page.graph_path.read_text(encoding="utf-8")
    return parse_graphml(text, page_url=page.page_url)
