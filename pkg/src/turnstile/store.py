"""Corpus-wide bookkeeping: script records, ground truth, findings, reports.

Scripts are tracked per source hash, partitioned by whether the instances
behind a record were blocked.  The partitioning matters: a byte-identical
copy of a blocked script served from a new address shares its source hash
with the original, and only separate blocked and unblocked records let the
copy count as an evasion while the original counts as ground truth.

Ground truth is the set of signatures observed from blocked scripts; an
evasion finding is an unblocked script producing a ground-truth signature.
"""

from __future__ import annotations

import json
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import urlsplit

from . import psl
from .graphs import SourceKind

__all__ = [
    "UNRANKED_RANK",
    "ScriptInstance",
    "ScriptRecord",
    "SignatureRow",
    "CorpusIndex",
    "GroundTruthEntry",
    "GroundTruthSet",
    "EvasionFinding",
    "PopulationTable",
    "BucketRow",
    "RankDelta",
    "DomainRow",
    "Report",
    "BaselineReport",
    "atomic_write_text",
    "write_jsonl",
    "read_jsonl",
    "write_scripts",
    "load_scripts",
    "write_signature_rows",
    "load_signature_rows",
    "write_ground_truth",
    "load_ground_truth",
    "write_findings",
    "load_findings",
    "load_index",
    "build_ground_truth",
    "find_evasions",
    "load_ranks",
    "rank_of",
    "build_report",
    "render_report",
    "compare_hash_baseline",
]

# Rank assigned to domains absent from a popularity ranking.
UNRANKED_RANK = 1_000_000

_KIND_PRIORITY = (
    SourceKind.EXTERNAL,
    SourceKind.INLINE,
    SourceKind.ATTRIBUTE,
    SourceKind.JS_URL,
)


def atomic_write_text(path: "str | Path", text: str) -> None:
    """Write via a sibling temp file and rename, so readers never see halves."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_jsonl(path: "str | Path", rows) -> None:
    lines = [json.dumps(row, sort_keys=True, separators=(",", ":")) for row in rows]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def read_jsonl(path: "str | Path") -> "list[dict]":
    rows = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
    return rows


@dataclass(frozen=True)
class ScriptInstance:
    """One occurrence of a script on one page, as the filters judged it."""

    page_url: str
    script_id: int
    source_kind: SourceKind
    url: "str | None" = None


@dataclass
class ScriptRecord:
    """All same-judgement occurrences of one source hash across the corpus."""

    source_hash: str
    blocked: bool
    instances: "list[ScriptInstance]" = field(default_factory=list)
    rules: "set[str]" = field(default_factory=set)
    signatures: "set[str]" = field(default_factory=set)

    @property
    def urls(self) -> "set[str]":
        return {i.url for i in self.instances if i.url}

    @property
    def pages(self) -> "set[str]":
        return {i.page_url for i in self.instances}

    @property
    def source_kinds(self) -> "set[SourceKind]":
        return {i.source_kind for i in self.instances}

    @property
    def primary_kind(self) -> SourceKind:
        """Most actionable source kind across instances.

        External wins over inline and the rest: a copy hosted anywhere as a
        fetchable resource is one the technique taxonomy treats as moved.
        """
        kinds = self.source_kinds
        for kind in _KIND_PRIORITY:
            if kind in kinds:
                return kind
        return SourceKind.INLINE


@dataclass(frozen=True)
class SignatureRow:
    """One (page, script, signature) observation."""

    page_url: str
    script_id: int
    source_hash: str
    hash: str
    edge_count: int
    node_count: int
    privacy_kinds: "tuple[str, ...]"
    small: bool
    canonical: "str | None" = None


@dataclass
class CorpusIndex:
    """Joined view of script records and signature observations."""

    pages: "list[str]"
    blocked: "dict[str, ScriptRecord]"
    unblocked: "dict[str, ScriptRecord]"
    rows: "list[SignatureRow]"

    def __post_init__(self) -> None:
        self._blocked_instances = {
            (i.page_url, i.script_id)
            for record in self.blocked.values()
            for i in record.instances
        }
        known = set(self._blocked_instances)
        for record in self.unblocked.values():
            known.update((i.page_url, i.script_id) for i in record.instances)
        for row in self.rows:
            key = (row.page_url, row.script_id)
            if key not in known:
                raise ValueError(
                    f"signature row for unlabeled script {row.script_id} on "
                    f"{row.page_url}; label and extract stages disagree"
                )
            record = (self.blocked if key in self._blocked_instances else self.unblocked).get(
                row.source_hash
            )
            if record is not None:
                record.signatures.add(row.hash)

    def row_blocked(self, row: SignatureRow) -> bool:
        return (row.page_url, row.script_id) in self._blocked_instances

    def instance_kind(self, row: SignatureRow) -> SourceKind:
        record = (self.blocked if self.row_blocked(row) else self.unblocked)[
            row.source_hash
        ]
        for instance in record.instances:
            if (instance.page_url, instance.script_id) == (row.page_url, row.script_id):
                return instance.source_kind
        return record.primary_kind


@dataclass
class GroundTruthEntry:
    """One tracked signature and the sources observed producing it."""

    hash: str
    blocked_sources: "set[str]"
    evading_sources: "set[str]"
    edge_count: int
    node_count: int
    privacy_kinds: "tuple[str, ...]"


@dataclass
class GroundTruthSet:
    """Signatures of blocked behavior, with the sub-floor side channel."""

    mode: str
    min_edges: int
    min_nodes: int
    signatures: "dict[str, GroundTruthEntry]"
    small: "dict[str, GroundTruthEntry]"


def build_ground_truth(
    index: CorpusIndex,
    mode: str = "measurement",
    min_edges: int = 13,
    min_nodes: int = 4,
) -> GroundTruthSet:
    """Collect signatures produced by blocked scripts.

    Measurement mode keeps only signatures also produced by an unblocked
    script (the ones that can witness an evasion); defense mode keeps every
    blocked signature, the set a deployed blocker would carry.
    """
    if mode not in ("measurement", "defense"):
        raise ValueError(f"unknown ground-truth mode {mode!r}")
    if not index.pages:
        raise ValueError("corpus has no pages; nothing to build ground truth from")
    main: dict[str, GroundTruthEntry] = {}
    small: dict[str, GroundTruthEntry] = {}
    by_hash: dict[str, list[SignatureRow]] = defaultdict(list)
    for row in index.rows:
        by_hash[row.hash].append(row)
    for sig_hash in sorted(by_hash):
        rows = by_hash[sig_hash]
        meta = rows[0]
        is_small = meta.edge_count < min_edges or meta.node_count < min_nodes
        if is_small != meta.small:
            raise ValueError(
                f"signature {sig_hash} was extracted under different size floors "
                f"({meta.edge_count} edges, {meta.node_count} nodes, "
                f"small={meta.small}); re-run extraction with "
                f"min_edges={min_edges} min_nodes={min_nodes}"
            )
        if not meta.privacy_kinds:
            raise ValueError(f"signature {sig_hash} has no privacy-relevant action")
        blocked_sources = {r.source_hash for r in rows if index.row_blocked(r)}
        evading_sources = {r.source_hash for r in rows if not index.row_blocked(r)}
        if not blocked_sources:
            continue
        if mode == "measurement" and not evading_sources:
            continue
        entry = GroundTruthEntry(
            hash=sig_hash,
            blocked_sources=blocked_sources,
            evading_sources=evading_sources,
            edge_count=meta.edge_count,
            node_count=meta.node_count,
            privacy_kinds=tuple(sorted(set(meta.privacy_kinds))),
        )
        (small if is_small else main)[sig_hash] = entry
    return GroundTruthSet(
        mode=mode,
        min_edges=min_edges,
        min_nodes=min_nodes,
        signatures=main,
        small=small,
    )


@dataclass
class EvasionFinding:
    """One unblocked script caught producing a tracked signature."""

    signature: str
    evaded_source: str
    source_kind: SourceKind
    urls: "tuple[str, ...]"
    blocked_matches: "tuple[str, ...]"
    pages: "tuple[str, ...]"
    technique: "str | None" = None

    @property
    def finding_id(self) -> str:
        return f"{self.evaded_source}:{self.signature}"


def find_evasions(index: CorpusIndex, gts: GroundTruthSet) -> "list[EvasionFinding]":
    """Match unblocked scripts against the ground-truth signature set."""
    # Pages where each (source, signature) pair was produced unblocked.
    produced: dict[tuple[str, str], set[str]] = defaultdict(set)
    for row in index.rows:
        if not row.small and not index.row_blocked(row):
            produced[(row.source_hash, row.hash)].add(row.page_url)
    findings: list[EvasionFinding] = []
    for sig_hash in sorted(gts.signatures):
        entry = gts.signatures[sig_hash]
        for source_hash in sorted(entry.evading_sources):
            pages = produced.get((source_hash, sig_hash))
            if not pages:
                continue
            record = index.unblocked[source_hash]
            findings.append(
                EvasionFinding(
                    signature=sig_hash,
                    evaded_source=source_hash,
                    source_kind=record.primary_kind,
                    urls=tuple(sorted(record.urls)),
                    blocked_matches=tuple(sorted(entry.blocked_sources)),
                    pages=tuple(sorted(pages)),
                )
            )
    findings.sort(key=lambda f: (f.evaded_source, f.signature))
    return findings


# --------------------------------------------------------------------------
# Persistence


def write_scripts(records: "list[ScriptRecord]", path: "str | Path") -> None:
    rows = []
    for record in sorted(records, key=lambda r: (r.source_hash, r.blocked)):
        rows.append(
            {
                "source_hash": record.source_hash,
                "blocked": record.blocked,
                "source_kind": record.primary_kind.value,
                "urls": sorted(record.urls),
                "pages": sorted(record.pages),
                "rules": sorted(record.rules),
                "instances": [
                    {
                        "page_url": i.page_url,
                        "script_id": i.script_id,
                        "source_kind": i.source_kind.value,
                        "url": i.url,
                    }
                    for i in sorted(
                        record.instances, key=lambda i: (i.page_url, i.script_id)
                    )
                ],
            }
        )
    write_jsonl(path, rows)


def load_scripts(path: "str | Path") -> "list[ScriptRecord]":
    records = []
    for row in read_jsonl(path):
        records.append(
            ScriptRecord(
                source_hash=row["source_hash"],
                blocked=row["blocked"],
                rules=set(row.get("rules", ())),
                instances=[
                    ScriptInstance(
                        page_url=i["page_url"],
                        script_id=i["script_id"],
                        source_kind=SourceKind(i["source_kind"]),
                        url=i.get("url"),
                    )
                    for i in row.get("instances", ())
                ],
            )
        )
    return records


def write_signature_rows(rows: "list[SignatureRow]", path: "str | Path") -> None:
    out = []
    for row in sorted(rows, key=lambda r: (r.page_url, r.script_id, r.hash)):
        rec = {
            "page_url": row.page_url,
            "script_id": row.script_id,
            "source_hash": row.source_hash,
            "hash": row.hash,
            "edge_count": row.edge_count,
            "node_count": row.node_count,
            "privacy_kinds": sorted(row.privacy_kinds),
        }
        if row.canonical is not None:
            rec["canonical"] = row.canonical
        out.append(rec)
    write_jsonl(path, out)


def load_signature_rows(path: "str | Path", small: bool) -> "list[SignatureRow]":
    rows = []
    for rec in read_jsonl(path):
        rows.append(
            SignatureRow(
                page_url=rec["page_url"],
                script_id=rec["script_id"],
                source_hash=rec["source_hash"],
                hash=rec["hash"],
                edge_count=rec["edge_count"],
                node_count=rec["node_count"],
                privacy_kinds=tuple(rec["privacy_kinds"]),
                small=small,
                canonical=rec.get("canonical"),
            )
        )
    return rows


def write_ground_truth(gts: GroundTruthSet, path: "str | Path") -> None:
    rows: list[dict] = [
        {
            "record": "meta",
            "mode": gts.mode,
            "min_edges": gts.min_edges,
            "min_nodes": gts.min_nodes,
        }
    ]
    for small, entries in ((False, gts.signatures), (True, gts.small)):
        for sig_hash in sorted(entries):
            entry = entries[sig_hash]
            rows.append(
                {
                    "record": "signature",
                    "hash": entry.hash,
                    "small": small,
                    "blocked_sources": sorted(entry.blocked_sources),
                    "evading_sources": sorted(entry.evading_sources),
                    "edge_count": entry.edge_count,
                    "node_count": entry.node_count,
                    "privacy_kinds": list(entry.privacy_kinds),
                }
            )
    write_jsonl(path, rows)


def load_ground_truth(path: "str | Path") -> GroundTruthSet:
    rows = read_jsonl(path)
    if not rows or rows[0].get("record") != "meta":
        raise ValueError(f"{path}: first record must be the meta record")
    meta = rows[0]
    gts = GroundTruthSet(
        mode=meta["mode"],
        min_edges=meta["min_edges"],
        min_nodes=meta["min_nodes"],
        signatures={},
        small={},
    )
    for row in rows[1:]:
        if row.get("record") != "signature":
            raise ValueError(f"{path}: unexpected record type {row.get('record')!r}")
        entry = GroundTruthEntry(
            hash=row["hash"],
            blocked_sources=set(row["blocked_sources"]),
            evading_sources=set(row["evading_sources"]),
            edge_count=row["edge_count"],
            node_count=row["node_count"],
            privacy_kinds=tuple(row["privacy_kinds"]),
        )
        (gts.small if row["small"] else gts.signatures)[entry.hash] = entry
    return gts


def write_findings(findings: "list[EvasionFinding]", path: "str | Path") -> None:
    rows = []
    for f in findings:
        rows.append(
            {
                "finding": f.finding_id,
                "signature": f.signature,
                "evaded_source": f.evaded_source,
                "source_kind": f.source_kind.value,
                "urls": list(f.urls),
                "blocked_matches": list(f.blocked_matches),
                "pages": list(f.pages),
                "technique": f.technique,
            }
        )
    write_jsonl(path, rows)


def load_findings(path: "str | Path") -> "list[EvasionFinding]":
    findings = []
    for row in read_jsonl(path):
        findings.append(
            EvasionFinding(
                signature=row["signature"],
                evaded_source=row["evaded_source"],
                source_kind=SourceKind(row["source_kind"]),
                urls=tuple(row["urls"]),
                blocked_matches=tuple(row["blocked_matches"]),
                pages=tuple(row["pages"]),
                technique=row.get("technique"),
            )
        )
    return findings


def load_index(out_dir: "str | Path") -> CorpusIndex:
    """Reassemble the corpus index from pipeline artifacts."""
    out = Path(out_dir)
    pages = [row["page_url"] for row in read_jsonl(out / "ingest.jsonl")]
    records = load_scripts(out / "scripts.jsonl")
    rows = load_signature_rows(out / "signatures.jsonl", small=False)
    rows += load_signature_rows(out / "small_signatures.jsonl", small=True)
    return CorpusIndex(
        pages=pages,
        blocked={r.source_hash: r for r in records if r.blocked},
        unblocked={r.source_hash: r for r in records if not r.blocked},
        rows=rows,
    )


# --------------------------------------------------------------------------
# Popularity ranks


def load_ranks(path: "str | Path") -> "dict[str, int]":
    """Read a ``rank,domain`` CSV; lowest rank wins on duplicates."""
    ranks: dict[str, int] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        rank_text, sep, domain = line.partition(",")
        if not sep or not domain.strip():
            raise ValueError(f"{path}:{lineno}: expected 'rank,domain'")
        try:
            rank = int(rank_text)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: rank must be an integer") from None
        if rank < 1:
            raise ValueError(f"{path}:{lineno}: rank must be positive")
        domain = domain.strip().lower()
        ranks[domain] = min(rank, ranks.get(domain, rank))
    return ranks


def rank_of(domain: str, ranks: "dict[str, int] | None") -> int:
    if not ranks:
        return UNRANKED_RANK
    return ranks.get(domain.lower(), UNRANKED_RANK)


# --------------------------------------------------------------------------
# Reporting


@dataclass
class PopulationTable:
    """How many scripts produced tracked signatures, by blocking status."""

    matched_unique: int = 0
    blocked_instances: int = 0
    blocked_unique: int = 0
    external_unblocked_instances: int = 0
    external_unblocked_unique: int = 0
    inline_unblocked_instances: int = 0
    unblocked_unique: int = 0


@dataclass
class BucketRow:
    bucket: str
    sites: int
    sites_with_evasion: int
    pct: float


@dataclass
class RankDelta:
    """One (blocked host, evading host) pair sharing a signature.

    ``delta`` is ``to_rank - from_rank``: positive when the script moved
    down the popularity ranking.
    """

    from_domain: str
    to_domain: str
    from_rank: int
    to_rank: int
    delta: int


@dataclass
class DomainRow:
    domain: str
    requesting_domains: int
    script_urls: int
    matches: int


@dataclass
class Report:
    pages_total: int
    pages_with_evasion: int
    incidence_pct: float
    population: "dict[str, PopulationTable]"
    buckets: "list[BucketRow]"
    rank_deltas: "list[RankDelta]"
    top_blocked_domains: "list[DomainRow]"
    top_evading_domains: "list[DomainRow]"


def _page_domain(page_url: str) -> str:
    return psl.registrable_domain(urlsplit(page_url).hostname or "")


def _url_domain(url: str) -> str:
    return psl.registrable_domain(urlsplit(url).hostname or "")


def _population(index: CorpusIndex, tracked: "dict[str, GroundTruthEntry]") -> PopulationTable:
    table = PopulationTable()
    blocked_instances: set[tuple[str, int]] = set()
    blocked_sources: set[str] = set()
    ext_instances: set[tuple[str, int]] = set()
    ext_sources: set[str] = set()
    inline_instances: set[tuple[str, int]] = set()
    unblocked_sources: set[str] = set()
    for row in index.rows:
        if row.hash not in tracked:
            continue
        key = (row.page_url, row.script_id)
        if index.row_blocked(row):
            blocked_instances.add(key)
            blocked_sources.add(row.source_hash)
            continue
        unblocked_sources.add(row.source_hash)
        kind = index.instance_kind(row)
        if kind is SourceKind.EXTERNAL:
            ext_instances.add(key)
            ext_sources.add(row.source_hash)
        elif kind is SourceKind.INLINE:
            inline_instances.add(key)
    table.matched_unique = len(blocked_sources | unblocked_sources)
    table.blocked_instances = len(blocked_instances)
    table.blocked_unique = len(blocked_sources)
    table.external_unblocked_instances = len(ext_instances)
    table.external_unblocked_unique = len(ext_sources)
    table.inline_unblocked_instances = len(inline_instances)
    table.unblocked_unique = len(unblocked_sources)
    return table


_BUCKETS = (
    ("popular", 1, 1_000),
    ("medium", 1_001, 10_000),
    ("unpopular", 10_001, 100_000),
)


def _bucket_of(rank: int) -> str:
    for name, lo, hi in _BUCKETS:
        if lo <= rank <= hi:
            return name
    return "unranked"


def build_report(
    index: CorpusIndex,
    gts: GroundTruthSet,
    findings: "list[EvasionFinding]",
    ranks: "dict[str, int] | None" = None,
) -> Report:
    pages_hit = set()
    for finding in findings:
        pages_hit.update(finding.pages)
    pages_total = len(index.pages)
    incidence = 100.0 * len(pages_hit) / pages_total if pages_total else 0.0

    population = {
        "ground_truth": _population(index, gts.signatures),
        "small": _population(index, gts.small),
    }

    buckets: list[BucketRow] = []
    if ranks is not None:
        site_pages: dict[str, list[str]] = defaultdict(list)
        for page in index.pages:
            site_pages[_page_domain(page)].append(page)
        grouped: dict[str, tuple[set[str], set[str]]] = {
            name: (set(), set()) for name, _, _ in _BUCKETS
        }
        grouped["unranked"] = (set(), set())
        for site, pages in site_pages.items():
            bucket = _bucket_of(rank_of(site, ranks))
            grouped[bucket][0].add(site)
            if any(p in pages_hit for p in pages):
                grouped[bucket][1].add(site)
        for name in ("popular", "medium", "unpopular", "unranked"):
            sites, hit = grouped[name]
            if not sites:
                continue
            buckets.append(
                BucketRow(
                    bucket=name,
                    sites=len(sites),
                    sites_with_evasion=len(hit),
                    pct=round(100.0 * len(hit) / len(sites), 2),
                )
            )
    else:
        sites = {_page_domain(p) for p in index.pages}
        hit_sites = {_page_domain(p) for p in pages_hit}
        buckets.append(
            BucketRow(
                bucket="all",
                sites=len(sites),
                sites_with_evasion=len(hit_sites),
                pct=round(100.0 * len(hit_sites) / len(sites), 2) if sites else 0.0,
            )
        )

    # Unique hosting-domain pairs across all tracked signatures.
    pairs: set[tuple[str, str]] = set()
    url_by = _urls_by_source_and_sig(index, gts)
    for sig_hash, entry in gts.signatures.items():
        from_domains = set()
        to_domains = set()
        for source in entry.blocked_sources:
            from_domains.update(
                _url_domain(u) for u in url_by.get((source, sig_hash, True), ())
            )
        for source in entry.evading_sources:
            to_domains.update(
                _url_domain(u) for u in url_by.get((source, sig_hash, False), ())
            )
        pairs.update((f, t) for f in from_domains for t in to_domains)
    rank_deltas = [
        RankDelta(
            from_domain=f,
            to_domain=t,
            from_rank=rank_of(f, ranks),
            to_rank=rank_of(t, ranks),
            delta=rank_of(t, ranks) - rank_of(f, ranks),
        )
        for f, t in sorted(pairs)
    ]

    top_blocked = _top_domains(index, gts, blocked=True)
    top_evading = _top_domains(index, gts, blocked=False)
    return Report(
        pages_total=pages_total,
        pages_with_evasion=len(pages_hit),
        incidence_pct=round(incidence, 2),
        population=population,
        buckets=buckets,
        rank_deltas=rank_deltas,
        top_blocked_domains=top_blocked,
        top_evading_domains=top_evading,
    )


def _urls_by_source_and_sig(
    index: CorpusIndex, gts: GroundTruthSet
) -> "dict[tuple[str, str, bool], set[str]]":
    instance_urls: dict[tuple[str, int], str] = {}
    for part in (index.blocked, index.unblocked):
        for record in part.values():
            for inst in record.instances:
                if inst.url:
                    instance_urls[(inst.page_url, inst.script_id)] = inst.url
    out: dict[tuple[str, str, bool], set[str]] = defaultdict(set)
    for row in index.rows:
        if row.small or row.hash not in gts.signatures:
            continue
        url = instance_urls.get((row.page_url, row.script_id))
        if url:
            out[(row.source_hash, row.hash, index.row_blocked(row))].add(url)
    return out


def _top_domains(
    index: CorpusIndex, gts: GroundTruthSet, blocked: bool, limit: int = 10
) -> "list[DomainRow]":
    requesting: dict[str, set[str]] = defaultdict(set)
    urls: dict[str, set[str]] = defaultdict(set)
    matches: Counter[str] = Counter()
    seen_instances: set[tuple[str, int]] = set()
    instance_urls: dict[tuple[str, int], str] = {}
    for part in (index.blocked, index.unblocked):
        for record in part.values():
            for inst in record.instances:
                if inst.url:
                    instance_urls[(inst.page_url, inst.script_id)] = inst.url
    for row in index.rows:
        if row.small or row.hash not in gts.signatures:
            continue
        if index.row_blocked(row) != blocked:
            continue
        key = (row.page_url, row.script_id)
        if key in seen_instances:
            continue
        seen_instances.add(key)
        url = instance_urls.get(key)
        if not url:
            continue
        domain = _url_domain(url)
        requesting[domain].add(_page_domain(row.page_url))
        urls[domain].add(url)
        matches[domain] += 1
    rows = [
        DomainRow(
            domain=d,
            requesting_domains=len(requesting[d]),
            script_urls=len(urls[d]),
            matches=matches[d],
        )
        for d in requesting
    ]
    rows.sort(key=lambda r: (-r.requesting_domains, -r.matches, r.domain))
    return rows[:limit]


def _format_table(headers: "tuple[str, ...]", rows: "list[tuple]") -> str:
    table = [tuple(str(c) for c in row) for row in rows]
    widths = [len(h) for h in headers]
    for row in table:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip(),
        "  ".join("-" * w for w in widths),
    ]
    for row in table:
        lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(row)).rstrip())
    return "\n".join(lines)


def render_report(report: Report) -> str:
    """Plain-text rendering of the full report."""
    sections = []
    pop_rows = []
    labels = (
        ("Scripts matching signatures (unique)", "matched_unique"),
        ("Blocked scripts (total)", "blocked_instances"),
        ("Blocked scripts (unique)", "blocked_unique"),
        ("External unblocked scripts (total)", "external_unblocked_instances"),
        ("External unblocked scripts (unique)", "external_unblocked_unique"),
        ("Inline unblocked scripts (total)", "inline_unblocked_instances"),
        ("Unblocked scripts (unique)", "unblocked_unique"),
    )
    main = report.population["ground_truth"]
    side = report.population["small"]
    for label, attr in labels:
        pop_rows.append((label, getattr(main, attr), getattr(side, attr)))
    sections.append(
        "Matched script populations\n"
        + _format_table(("Measurement", "Ground truth", "Small side channel"), pop_rows)
    )
    sections.append(
        f"Pages with evasion: {report.pages_with_evasion} of {report.pages_total} "
        f"({report.incidence_pct}%)"
    )
    sections.append(
        "Evasion incidence by site popularity\n"
        + _format_table(
            ("Bucket", "Sites", "Sites with evasion", "Pct"),
            [(b.bucket, b.sites, b.sites_with_evasion, b.pct) for b in report.buckets],
        )
    )
    sections.append(
        "Hosting moves (blocked host -> evading host)\n"
        + _format_table(
            ("From", "To", "From rank", "To rank", "Delta"),
            [
                (d.from_domain, d.to_domain, d.from_rank, d.to_rank, d.delta)
                for d in report.rank_deltas
            ],
        )
    )
    for title, rows in (
        ("Top blocked hosting domains", report.top_blocked_domains),
        ("Top evading hosting domains", report.top_evading_domains),
    ):
        sections.append(
            title
            + "\n"
            + _format_table(
                ("Hosting domain", "Requesting domains", "Script URLs", "Matches"),
                [(r.domain, r.requesting_domains, r.script_urls, r.matches) for r in rows],
            )
        )
    return "\n\n".join(sections) + "\n"


# --------------------------------------------------------------------------
# Hash-only baseline


@dataclass
class BaselineReport:
    """What exact-hash blocking would have caught among the findings."""

    unique_total: int
    unique_caught: int
    unique_missed: int
    unique_miss_rate_pct: float
    instances_total: int
    instances_caught: int
    instances_missed: int
    instance_miss_rate_pct: float
    caught_sources: "tuple[str, ...]"
    missed_sources: "tuple[str, ...]"
    by_technique: "dict[str, dict[str, int]]"


def compare_hash_baseline(
    index: CorpusIndex,
    findings: "list[EvasionFinding]",
    labels: "dict[str, str] | None" = None,
) -> BaselineReport:
    """Split findings by whether the evaded source hash is already blocked.

    A source hash present in the blocked partition is one an exact-hash
    blocker already knows; every other finding is behavior it would miss.
    ``labels`` maps evaded source hashes to technique names for the
    per-technique breakdown.
    """
    caught: set[str] = set()
    missed: set[str] = set()
    pages_by_source: dict[str, set[str]] = defaultdict(set)
    for finding in findings:
        pages_by_source[finding.evaded_source].update(finding.pages)
        if finding.evaded_source in index.blocked:
            caught.add(finding.evaded_source)
        else:
            missed.add(finding.evaded_source)
    unique_total = len(caught) + len(missed)
    instances_caught = sum(len(pages_by_source[s]) for s in caught)
    instances_missed = sum(len(pages_by_source[s]) for s in missed)
    instances_total = instances_caught + instances_missed
    by_technique: dict[str, dict[str, int]] = {}
    if labels:
        for source in sorted(caught | missed):
            technique = labels.get(source, "Unclassified")
            bucket = by_technique.setdefault(
                technique, {"unique_total": 0, "unique_caught": 0, "unique_missed": 0}
            )
            bucket["unique_total"] += 1
            bucket["unique_caught" if source in caught else "unique_missed"] += 1
    return BaselineReport(
        unique_total=unique_total,
        unique_caught=len(caught),
        unique_missed=len(missed),
        unique_miss_rate_pct=round(100.0 * len(missed) / unique_total, 2)
        if unique_total
        else 0.0,
        instances_total=instances_total,
        instances_caught=instances_caught,
        instances_missed=instances_missed,
        instance_miss_rate_pct=round(100.0 * instances_missed / instances_total, 2)
        if instances_total
        else 0.0,
        caught_sources=tuple(sorted(caught)),
        missed_sources=tuple(sorted(missed)),
        by_technique=by_technique,
    )
