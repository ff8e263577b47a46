"""Filter rules for scripts that moved to new addresses.

Only Moving findings yield rules: a moved script has a concrete new URL to
block, whereas inlined, bundled, and shared-library copies have no address
a request filter could act on.  Every candidate rule is replayed against
the corpus's benign script URLs before it is emitted, so a rule that would
overblock is suppressed and reported instead.
"""

from __future__ import annotations

import datetime
import os
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import urlsplit

from .filters import FilterRule, RequestContext, parse_rule, rule_matches
from .store import CorpusIndex, EvasionFinding, atomic_write_text
from .taxonomy import Technique, TechniqueLabel

__all__ = [
    "GeneratedRule",
    "SuppressedRule",
    "RuleGenResult",
    "rule_for_url",
    "generate_rules",
    "replay_rules",
    "render_rule_file",
]


@dataclass(frozen=True)
class GeneratedRule:
    raw: str
    url: str
    sources: "tuple[str, ...]"  # evaded source hashes the URL serves


@dataclass(frozen=True)
class SuppressedRule:
    raw: str
    url: str
    conflict_url: str


@dataclass
class RuleGenResult:
    rules: "list[GeneratedRule]" = field(default_factory=list)
    suppressed: "list[SuppressedRule]" = field(default_factory=list)


def rule_for_url(url: str) -> str:
    """Domain-anchored script rule for one address; query strings dropped."""
    parts = urlsplit(url)
    if not parts.scheme or not parts.netloc:
        raise ValueError(f"url without scheme or host: {url!r}")
    return f"||{parts.netloc.lower()}{parts.path or '/'}$script"


def _benign_urls(index: CorpusIndex, findings: "list[EvasionFinding]") -> "list[str]":
    """URLs of unblocked scripts that are not evasion findings."""
    evaded = {f.evaded_source for f in findings}
    urls: set[str] = set()
    for source_hash, record in index.unblocked.items():
        if source_hash in evaded:
            continue
        urls.update(record.urls)
    return sorted(urls)


def _parsed(raw: str) -> FilterRule:
    rule = parse_rule(raw)
    if not isinstance(rule, FilterRule):
        raise ValueError(f"generated unparseable rule {raw!r}: {rule.reason}")
    return rule


def generate_rules(
    findings: "list[EvasionFinding]",
    labels: "dict[str, TechniqueLabel]",
    index: CorpusIndex,
) -> RuleGenResult:
    """One rule per distinct moved-script URL, overblock-guarded."""
    by_url: dict[str, set[str]] = {}
    for finding in findings:
        label = labels.get(finding.finding_id)
        if label is None or label.technique is not Technique.MOVING:
            continue
        if not finding.urls:
            raise ValueError(
                f"moving finding {finding.finding_id} has no url to block"
            )
        for url in finding.urls:
            by_url.setdefault(url, set()).add(finding.evaded_source)

    benign = _benign_urls(index, findings)
    result = RuleGenResult()
    for url in sorted(by_url):
        raw = rule_for_url(url)
        parsed = _parsed(raw)
        conflict = _first_conflict(parsed, benign)
        if conflict is not None:
            result.suppressed.append(
                SuppressedRule(raw=raw, url=url, conflict_url=conflict)
            )
            continue
        result.rules.append(
            GeneratedRule(raw=raw, url=url, sources=tuple(sorted(by_url[url])))
        )
    result.rules.sort(key=lambda r: r.raw)
    result.suppressed.sort(key=lambda r: r.raw)
    return result


def _first_conflict(rule: FilterRule, benign_urls: "list[str]") -> "str | None":
    for url in benign_urls:
        ctx = RequestContext(
            url=url,
            document_domain=urlsplit(url).hostname or "",
            resource_is_script=True,
        )
        try:
            if rule_matches(rule, ctx):
                return url
        except ValueError:
            continue
    return None


def replay_rules(
    result: RuleGenResult,
    findings: "list[EvasionFinding]",
    index: CorpusIndex,
) -> "list[str]":
    """Self-consistency check; returns problems, empty when clean.

    Every emitted rule must block at least one evaded URL and no benign
    URL.
    """
    problems: list[str] = []
    benign = _benign_urls(index, findings)
    for generated in result.rules:
        rule = _parsed(generated.raw)
        ctx = RequestContext(
            url=generated.url,
            document_domain=urlsplit(generated.url).hostname or "",
            resource_is_script=True,
        )
        if not rule_matches(rule, ctx):
            problems.append(f"{generated.raw}: does not block its own target url")
        conflict = _first_conflict(rule, benign)
        if conflict is not None:
            problems.append(f"{generated.raw}: also blocks benign url {conflict}")
    return problems


def render_rule_file(result: RuleGenResult, corpus_name: str) -> str:
    """Filter-list text for the generated rules."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        day = datetime.datetime.fromtimestamp(
            int(epoch), tz=datetime.timezone.utc
        ).date()
    else:
        day = datetime.date.today()
    lines = [
        "! Block rules for scripts relocated to evade filtering",
        f"! Corpus: {corpus_name}",
        f"! Date: {day.isoformat()}",
        f"! Rules: {len(result.rules)} (suppressed as overbroad: {len(result.suppressed)})",
    ]
    lines.extend(r.raw for r in result.rules)
    return "\n".join(lines) + "\n"


def write_rule_file(result: RuleGenResult, path: "str | Path", corpus_name: str) -> None:
    atomic_write_text(Path(path), render_rule_file(result, corpus_name))
