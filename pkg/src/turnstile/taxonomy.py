"""Labeling how an evading script relates to the blocked code it matched.

Four techniques, checked in precedence order against every blocked
candidate sharing the signature:

* Moving: externally hosted, syntax tree identical to a blocked script.
* Inlining: embedded in the page, tree identical to a blocked script.
* Bundling: a blocked program appears whole inside the evading tree.
* CommonCode: the two trees only share a significant subtree.

Identity is judged on type-only trees, so renamings and comment or
whitespace edits do not break it.  Anything matching no candidate
structurally stays Unclassified.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from enum import Enum

from .asttools import (
    DEFAULT_COMMON_SUBTREE_MIN_NODES,
    AstDirectory,
    common_significant_subtrees,
    subtree_contains,
)
from .graphs import SourceKind
from .store import EvasionFinding

__all__ = [
    "Technique",
    "Evidence",
    "TechniqueLabel",
    "TaxonomyRow",
    "TaxonomyTable",
    "classify",
    "classify_all",
    "best_technique_by_source",
    "tabulate",
    "render_taxonomy_text",
    "render_taxonomy_csv",
]


class Technique(Enum):
    MOVING = "Moving"
    INLINING = "Inlining"
    BUNDLING = "Bundling"
    COMMON_CODE = "CommonCode"
    UNCLASSIFIED = "Unclassified"


_PRECEDENCE = (
    Technique.MOVING,
    Technique.INLINING,
    Technique.BUNDLING,
    Technique.COMMON_CODE,
    Technique.UNCLASSIFIED,
)

_RANK = {t: i for i, t in enumerate(_PRECEDENCE)}


@dataclass(frozen=True)
class Evidence:
    """Which blocked script matched and how."""

    matched_source: "str | None"
    relation: "str | None"  # "exact" | "contains" | "common-subtree"
    common_subtree_size: "int | None"
    min_nodes: int


@dataclass(frozen=True)
class TechniqueLabel:
    technique: Technique
    evidence: Evidence


def classify(
    finding: EvasionFinding,
    asts: AstDirectory,
    common_min_nodes: int = DEFAULT_COMMON_SUBTREE_MIN_NODES,
) -> TechniqueLabel:
    """Label one finding against its blocked candidates.

    Candidates are visited in sorted order and the strongest relation wins,
    so the label does not depend on candidate enumeration order.  A missing
    tree for any involved script is an error: a silently skipped candidate
    would quietly weaken every label.
    """
    evaded_tree = asts.tree(finding.evaded_source)
    evaded_hash = asts.tree_hash(finding.evaded_source)
    best = TechniqueLabel(
        Technique.UNCLASSIFIED,
        Evidence(None, None, None, common_min_nodes),
    )
    for candidate in sorted(finding.blocked_matches):
        candidate_tree = asts.tree(candidate)
        if evaded_hash == asts.tree_hash(candidate):
            technique = (
                Technique.MOVING
                if finding.source_kind is SourceKind.EXTERNAL
                else Technique.INLINING
            )
            label = TechniqueLabel(
                technique, Evidence(candidate, "exact", None, common_min_nodes)
            )
        elif subtree_contains(evaded_tree, candidate_tree):
            label = TechniqueLabel(
                Technique.BUNDLING,
                Evidence(candidate, "contains", None, common_min_nodes),
            )
        else:
            shared = common_significant_subtrees(
                evaded_tree, candidate_tree, common_min_nodes
            )
            if not shared:
                continue
            label = TechniqueLabel(
                Technique.COMMON_CODE,
                Evidence(candidate, "common-subtree", shared[0].size, common_min_nodes),
            )
        if _RANK[label.technique] < _RANK[best.technique]:
            best = label
        if best.technique is Technique.MOVING:
            break
    return best


def classify_all(
    findings: "list[EvasionFinding]",
    asts: AstDirectory,
    common_min_nodes: int = DEFAULT_COMMON_SUBTREE_MIN_NODES,
) -> "dict[str, TechniqueLabel]":
    """Label every finding, keyed by finding id, and stamp the findings."""
    labels: dict[str, TechniqueLabel] = {}
    for finding in findings:
        label = classify(finding, asts, common_min_nodes)
        labels[finding.finding_id] = label
        finding.technique = label.technique.value
    return labels


def best_technique_by_source(
    findings: "list[EvasionFinding]", labels: "dict[str, TechniqueLabel]"
) -> "dict[str, Technique]":
    """Strongest technique seen for each evaded source across its findings."""
    best: dict[str, Technique] = {}
    for finding in findings:
        technique = labels[finding.finding_id].technique
        current = best.get(finding.evaded_source)
        if current is None or _RANK[technique] < _RANK[current]:
            best[finding.evaded_source] = technique
    return best


@dataclass(frozen=True)
class TaxonomyRow:
    technique: str
    instances: int
    instances_pct: float
    unique: int
    unique_pct: float


@dataclass
class TaxonomyTable:
    rows: "list[TaxonomyRow]"
    instances_total: int
    unique_total: int


def tabulate(
    findings: "list[EvasionFinding]", labels: "dict[str, TechniqueLabel]"
) -> TaxonomyTable:
    """Count evading scripts per technique, unique and by page instance.

    Each evaded source counts once under its strongest technique;
    instances are its distinct (source, page) sightings.
    """
    best = best_technique_by_source(findings, labels)
    pages_by_source: dict[str, set[str]] = {}
    for finding in findings:
        pages_by_source.setdefault(finding.evaded_source, set()).update(finding.pages)
    unique: dict[Technique, int] = {t: 0 for t in _PRECEDENCE}
    instances: dict[Technique, int] = {t: 0 for t in _PRECEDENCE}
    for source, technique in best.items():
        unique[technique] += 1
        instances[technique] += len(pages_by_source[source])
    unique_total = sum(unique.values())
    instances_total = sum(instances.values())
    rows = [
        TaxonomyRow(
            technique=t.value,
            instances=instances[t],
            instances_pct=round(100.0 * instances[t] / instances_total, 2)
            if instances_total
            else 0.0,
            unique=unique[t],
            unique_pct=round(100.0 * unique[t] / unique_total, 2) if unique_total else 0.0,
        )
        for t in _PRECEDENCE
    ]
    return TaxonomyTable(
        rows=rows, instances_total=instances_total, unique_total=unique_total
    )


def render_taxonomy_text(table: TaxonomyTable) -> str:
    headers = ("Technique", "Instances", "% Instances", "Unique", "% Unique")
    widths = [len(h) for h in headers]
    body = []
    for row in table.rows:
        cells = (
            row.technique,
            str(row.instances),
            f"{row.instances_pct:.2f}",
            str(row.unique),
            f"{row.unique_pct:.2f}",
        )
        body.append(cells)
        widths = [max(w, len(c)) for w, c in zip(widths, cells)]
    total = ("Total", str(table.instances_total), "", str(table.unique_total), "")
    widths = [max(w, len(c)) for w, c in zip(widths, total)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip(),
        "  ".join("-" * w for w in widths),
    ]
    for cells in body + [total]:
        lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(cells)).rstrip())
    return "\n".join(lines) + "\n"


def render_taxonomy_csv(table: TaxonomyTable) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["technique", "instances", "instances_pct", "unique", "unique_pct"])
    for row in table.rows:
        writer.writerow(
            [row.technique, row.instances, row.instances_pct, row.unique, row.unique_pct]
        )
    writer.writerow(["Total", table.instances_total, "", table.unique_total, ""])
    return buffer.getvalue()
