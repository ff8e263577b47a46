"""Type-only syntax trees: loading, hashing, and shared-structure queries.

Trees arrive as JSON in a two-key interchange form, ``{"t": <node type>,
"c": [<children>]}``, carrying no identifiers, literals, or positions.
That makes structural comparisons immune to renaming and to comment or
whitespace edits.  All traversals are iterative: real-world scripts nest
deeply enough to blow the interpreter's recursion limit.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

__all__ = [
    "DEFAULT_COMMON_SUBTREE_MIN_NODES",
    "AstNode",
    "AstTree",
    "AstLoadError",
    "MissingAstError",
    "CommonSubtree",
    "DigestIndex",
    "AstDirectory",
    "node",
    "load_ast",
    "load_ast_file",
    "to_interchange",
    "dumps_ast",
    "ast_size",
    "ast_hash",
    "digest_index",
    "subtree_contains",
    "common_significant_subtrees",
]

# Shared subtrees smaller than this are boilerplate, not evidence that two
# scripts share code.
DEFAULT_COMMON_SUBTREE_MIN_NODES = 50


class AstLoadError(Exception):
    """Raised when an interchange document is not a valid type-only tree."""


class MissingAstError(Exception):
    """Raised when a corpus has no tree for a requested script."""

    def __init__(self, source_hash: str, root: "Path | None" = None) -> None:
        self.source_hash = source_hash
        where = f" in {root}" if root else ""
        super().__init__(f"no syntax tree for script {source_hash}{where}")


@dataclass(eq=False)
class AstNode:
    """One tree node.  Structural comparisons go through digests."""

    node_type: str
    children: "list[AstNode]" = field(default_factory=list)


@dataclass(eq=False)
class AstTree:
    root: AstNode
    size: int


def node(node_type: str, *children: AstNode) -> AstNode:
    """Convenience constructor for building trees in code."""
    return AstNode(node_type, list(children))


def _iter_nodes(root: AstNode):
    """Preorder iteration without recursion."""
    stack = [root]
    while stack:
        current = stack.pop()
        yield current
        stack.extend(reversed(current.children))


def ast_size(root: AstNode) -> int:
    return sum(1 for _ in _iter_nodes(root))


def load_ast(document: "str | bytes | dict") -> AstTree:
    """Decode and validate one interchange document.

    Errors name the offending position as a JSON path like ``$.c[2].c[0]``.
    """
    if isinstance(document, (str, bytes)):
        try:
            obj = json.loads(document)
        except json.JSONDecodeError as exc:
            raise AstLoadError(f"invalid JSON: {exc}") from exc
    else:
        obj = document

    size = 0
    root_holder: list[AstNode] = []
    # (object to decode, its JSON path, list receiving the decoded node)
    stack: list[tuple[object, str, list[AstNode]]] = [(obj, "$", root_holder)]
    while stack:
        value, path, sink = stack.pop()
        if not isinstance(value, dict):
            raise AstLoadError(f"{path}: expected object, got {type(value).__name__}")
        unknown = set(value) - {"t", "c"}
        if unknown:
            raise AstLoadError(f"{path}: unknown key {sorted(unknown)[0]!r}")
        if "t" not in value:
            raise AstLoadError(f"{path}: missing node type key 't'")
        node_type = value["t"]
        if not isinstance(node_type, str) or not node_type:
            raise AstLoadError(f"{path}: node type must be a non-empty string")
        if "\x00" in node_type or "\n" in node_type:
            raise AstLoadError(f"{path}: node type contains a forbidden character")
        children_value = value.get("c", [])
        if not isinstance(children_value, list):
            raise AstLoadError(f"{path}: 'c' must be a list")
        decoded = AstNode(node_type)
        sink.append(decoded)
        size += 1
        # Reversed so children decode (and land in the list) left to right.
        for i in range(len(children_value) - 1, -1, -1):
            stack.append((children_value[i], f"{path}.c[{i}]", decoded.children))
    if size == 0:
        raise AstLoadError("$: empty document")
    return AstTree(root=root_holder[0], size=size)


def load_ast_file(path: "str | Path") -> AstTree:
    path = Path(path)
    try:
        return load_ast(path.read_text(encoding="utf-8"))
    except AstLoadError as exc:
        raise AstLoadError(f"{path}: {exc}") from exc


def to_interchange(tree: AstTree) -> dict:
    root_obj: dict = {"t": tree.root.node_type, "c": []}
    stack = [(tree.root, root_obj)]
    while stack:
        current, obj = stack.pop()
        for child in current.children:
            child_obj: dict = {"t": child.node_type, "c": []}
            obj["c"].append(child_obj)
            stack.append((child, child_obj))
    return root_obj


def dumps_ast(tree: AstTree) -> str:
    return json.dumps(to_interchange(tree), separators=(",", ":"))


def ast_hash(tree: AstTree) -> str:
    """SHA-256 over preorder node types joined by newlines.

    Identical source text always yields identical trees and hence equal
    hashes; the converse does not hold, which is exactly the slack needed
    to catch renamed or recommented copies.
    """
    digest = hashlib.sha256()
    first = True
    for current in _iter_nodes(tree.root):
        if not first:
            digest.update(b"\n")
        digest.update(current.node_type.encode("utf-8"))
        first = False
    return digest.hexdigest()


@dataclass
class DigestIndex:
    """Merkle digests of every subtree of one tree.

    The digest of a node is ``sha256(type || NUL || child digests)``; with
    NUL banned from type names and digests of fixed width, equal digests
    mean structurally equal subtrees (up to hash collisions).
    """

    tree: AstTree
    root_digest: bytes
    by_node: "dict[int, bytes]"  # id(node) -> digest
    sizes: "dict[bytes, int]"
    counts: "Counter[bytes]"


def digest_index(tree: AstTree) -> DigestIndex:
    by_node: dict[int, bytes] = {}
    node_sizes: dict[int, int] = {}
    sizes: dict[bytes, int] = {}
    counts: Counter[bytes] = Counter()
    stack: list[tuple[AstNode, bool]] = [(tree.root, False)]
    while stack:
        current, expanded = stack.pop()
        if not expanded:
            stack.append((current, True))
            for child in current.children:
                stack.append((child, False))
            continue
        hasher = hashlib.sha256(current.node_type.encode("utf-8"))
        hasher.update(b"\x00")
        size = 1
        for child in current.children:
            hasher.update(by_node[id(child)])
            size += node_sizes[id(child)]
        digest = hasher.digest()
        by_node[id(current)] = digest
        node_sizes[id(current)] = size
        sizes[digest] = size
        counts[digest] += 1
    return DigestIndex(
        tree=tree,
        root_digest=by_node[id(tree.root)],
        by_node=by_node,
        sizes=sizes,
        counts=counts,
    )


def subtree_contains(haystack: AstTree, needle: AstTree) -> bool:
    """Whether the needle program is embedded whole somewhere in haystack.

    True when the needle root's children appear, in order and contiguously,
    among the children of some haystack node.  An empty needle program is
    contained in anything; equal trees contain each other.
    """
    needle_digests = digest_index(needle)
    window = [needle_digests.by_node[id(c)] for c in needle.root.children]
    if not window:
        return True
    haystack_digests = digest_index(haystack)
    k = len(window)
    for current in _iter_nodes(haystack.root):
        children = current.children
        if len(children) < k:
            continue
        row = [haystack_digests.by_node[id(c)] for c in children]
        for start in range(len(row) - k + 1):
            if row[start : start + k] == window:
                return True
    return False


@dataclass(frozen=True)
class CommonSubtree:
    """One structurally identical subtree occurring in both trees."""

    digest: str
    size: int
    count_a: int
    count_b: int


def common_significant_subtrees(
    a: AstTree, b: AstTree, min_nodes: int = DEFAULT_COMMON_SUBTREE_MIN_NODES
) -> "list[CommonSubtree]":
    """All distinct subtrees of at least ``min_nodes`` present in both trees.

    Nested shared subtrees each get their own row.  Sorted largest first,
    then by digest for a stable order.
    """
    index_a = digest_index(a)
    index_b = digest_index(b)
    shared = []
    for digest, size in index_a.sizes.items():
        if size >= min_nodes and digest in index_b.sizes:
            shared.append(
                CommonSubtree(
                    digest=digest.hex(),
                    size=size,
                    count_a=index_a.counts[digest],
                    count_b=index_b.counts[digest],
                )
            )
    shared.sort(key=lambda c: (-c.size, c.digest))
    return shared


class AstDirectory:
    """Lazy loader for a corpus ``asts/`` directory, caching by script."""

    def __init__(self, root: "str | Path") -> None:
        self.root = Path(root)
        self._trees: dict[str, AstTree] = {}
        self._indexes: dict[str, DigestIndex] = {}
        self._hashes: dict[str, str] = {}

    def path_for(self, source_hash: str) -> Path:
        return self.root / f"{source_hash}.ast.json"

    def tree(self, source_hash: str) -> AstTree:
        if source_hash not in self._trees:
            path = self.path_for(source_hash)
            if not path.is_file():
                raise MissingAstError(source_hash, self.root)
            self._trees[source_hash] = load_ast_file(path)
        return self._trees[source_hash]

    def digests(self, source_hash: str) -> DigestIndex:
        if source_hash not in self._indexes:
            self._indexes[source_hash] = digest_index(self.tree(source_hash))
        return self._indexes[source_hash]

    def tree_hash(self, source_hash: str) -> str:
        if source_hash not in self._hashes:
            self._hashes[source_hash] = ast_hash(self.tree(source_hash))
        return self._hashes[source_hash]
