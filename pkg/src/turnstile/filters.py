"""Request blocking with an Adblock Plus filter subset.

Supported: block and ``@@`` exception rules, ``||`` and ``|`` anchors, a
trailing ``|`` anchor, ``*`` wildcards, ``^`` separators, and the options
``script``, ``~script``, ``third-party``, ``~third-party``, ``domain=``.
Everything else (comments, element hiding, regex-literal rules, other
options) is skipped with a recorded reason rather than misapplied.  Host
comparisons are case-insensitive, path comparisons case-sensitive.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from urllib.parse import urlsplit

from . import psl
from .graphs import ExecutionGraph, ScriptUnit, SourceKind, list_scripts

__all__ = [
    "Anchor",
    "Token",
    "RuleOptions",
    "FilterRule",
    "Skipped",
    "FilterSet",
    "Outcome",
    "Decision",
    "RequestContext",
    "parse_rule",
    "rule_matches",
    "parse_filter_list",
    "load_filter_files",
    "load_excluded_rules",
    "label_scripts",
]

_EXCLUDED_RESOURCE = "excluded_rules.txt"

# Anything but a letter, digit, or one of "_-.%" (the Adblock Plus
# separator class); '^' also matches the end of the address.
_SEPARATOR_CLASS = r"[^A-Za-z0-9_\-.%]"

_ELEMENT_HIDING_MARKS = ("##", "#@#", "#?#", "#$#")


class Anchor(Enum):
    NONE = "none"
    START = "start"
    DOMAIN = "domain"


class Outcome(Enum):
    BLOCKED = "blocked"
    ALLOWED = "allowed"
    EXCEPTED = "excepted"


@dataclass(frozen=True)
class Token:
    """One pattern atom: a literal run, a ``*`` wildcard, or a ``^`` separator."""

    kind: str  # "literal" | "wildcard" | "separator"
    text: str = ""


@dataclass(frozen=True)
class RuleOptions:
    """Parsed ``$`` options; ``None`` means the option was not given."""

    script: "bool | None" = None
    third_party: "bool | None" = None
    domains_include: "frozenset[str]" = frozenset()
    domains_exclude: "frozenset[str]" = frozenset()


@dataclass(frozen=True)
class Skipped:
    """A filter-list line the engine declines to apply."""

    line: str
    reason: str


@dataclass(frozen=True)
class FilterRule:
    """One applicable rule, with its match regex precompiled."""

    raw: str
    is_exception: bool
    anchor: Anchor
    end_anchor: bool
    tokens: "tuple[Token, ...]"
    options: RuleOptions
    regex: "re.Pattern[str]" = field(repr=False, compare=False, default=None)  # type: ignore[assignment]

    def pattern_text(self) -> str:
        """The pattern portion as written (host case normalized)."""
        parts = []
        for token in self.tokens:
            if token.kind == "literal":
                parts.append(token.text)
            elif token.kind == "wildcard":
                parts.append("*")
            else:
                parts.append("^")
        return "".join(parts)


def parse_rule(line: str) -> "FilterRule | Skipped":
    """Classify one filter-list line.  Never raises."""
    raw = line
    text = line.strip()
    if not text:
        return Skipped(raw, "empty")
    if text.startswith("!"):
        return Skipped(raw, "comment")
    if any(mark in text for mark in _ELEMENT_HIDING_MARKS):
        return Skipped(raw, "element-hiding")

    is_exception = text.startswith("@@")
    if is_exception:
        text = text[2:]

    options = RuleOptions()
    if "$" in text:
        text, _, options_text = text.rpartition("$")
        if options_text:
            parsed = _parse_options(options_text)
            if isinstance(parsed, Skipped):
                return Skipped(raw, parsed.reason)
            options = parsed

    if len(text) > 1 and text.startswith("/") and text.endswith("/"):
        return Skipped(raw, "regex-literal")

    anchor = Anchor.NONE
    if text.startswith("||"):
        anchor = Anchor.DOMAIN
        text = text[2:]
    elif text.startswith("|"):
        anchor = Anchor.START
        text = text[1:]
    end_anchor = text.endswith("|")
    if end_anchor:
        text = text[:-1]

    text = _lowercase_host_region(text, anchor)
    tokens = _tokenize(text)
    rule = FilterRule(
        raw=raw,
        is_exception=is_exception,
        anchor=anchor,
        end_anchor=end_anchor,
        tokens=tokens,
        options=options,
        regex=_compile(anchor, end_anchor, tokens),
    )
    return rule


def _parse_options(options_text: str) -> "RuleOptions | Skipped":
    script = None
    third_party = None
    include: set[str] = set()
    exclude: set[str] = set()
    for opt in options_text.split(","):
        opt = opt.strip()
        name, _, value = opt.partition("=")
        if name == "script":
            script = True
        elif name == "~script":
            script = False
        elif name == "third-party":
            third_party = True
        elif name == "~third-party":
            third_party = False
        elif name == "domain":
            entries = [d.strip().lower() for d in value.split("|")]
            if not value or any(not d or d == "~" for d in entries):
                return Skipped(opt, "unsupported-option:domain")
            for entry in entries:
                if entry.startswith("~"):
                    exclude.add(entry[1:])
                else:
                    include.add(entry)
        else:
            return Skipped(opt, f"unsupported-option:{name or opt}")
    return RuleOptions(
        script=script,
        third_party=third_party,
        domains_include=frozenset(include),
        domains_exclude=frozenset(exclude),
    )


def _lowercase_host_region(pattern: str, anchor: Anchor) -> str:
    """Lowercase the pattern up to where the host part can end.

    Paths stay case-sensitive, so only the region that matches scheme and
    host is normalized.  Unanchored patterns are left alone: they may match
    anywhere in the address.
    """
    if anchor is Anchor.DOMAIN:
        start = 0
    elif anchor is Anchor.START:
        scheme_end = pattern.find("://")
        if scheme_end < 0:
            return pattern
        start = scheme_end + 3
    else:
        return pattern
    end = len(pattern)
    for mark in ("/", "^"):
        pos = pattern.find(mark, start)
        if pos >= 0:
            end = min(end, pos)
    return pattern[:end].lower() + pattern[end:]


def _tokenize(pattern: str) -> "tuple[Token, ...]":
    tokens: list[Token] = []
    literal: list[str] = []

    def flush() -> None:
        if literal:
            tokens.append(Token("literal", "".join(literal)))
            literal.clear()

    for ch in pattern:
        if ch == "*":
            flush()
            if not (tokens and tokens[-1].kind == "wildcard"):
                tokens.append(Token("wildcard"))
        elif ch == "^":
            flush()
            tokens.append(Token("separator"))
        else:
            literal.append(ch)
    flush()
    return tuple(tokens)


def _compile(
    anchor: Anchor, end_anchor: bool, tokens: "tuple[Token, ...]"
) -> "re.Pattern[str]":
    parts: list[str] = []
    if anchor is Anchor.DOMAIN:
        # Scheme, then optionally any dot-terminated host prefix: the
        # pattern's host labels must align on a label boundary.
        parts.append(r"\A[a-z][a-z0-9+.\-]*://(?:[^/?#]*\.)?")
    elif anchor is Anchor.START:
        parts.append(r"\A")
    for token in tokens:
        if token.kind == "literal":
            parts.append(re.escape(token.text))
        elif token.kind == "wildcard":
            parts.append(".*")
        else:
            parts.append(f"(?:{_SEPARATOR_CLASS}|\\Z)")
    if end_anchor:
        parts.append(r"\Z")
    return re.compile("".join(parts))


@dataclass(frozen=True)
class RequestContext:
    """One request to judge: the address plus the requesting document."""

    url: str
    document_domain: str = ""
    resource_is_script: bool = True

    def is_third_party(self) -> bool:
        host = urlsplit(self.url).hostname or ""
        return not psl.same_site(host, self.document_domain)


@dataclass(frozen=True)
class Decision:
    """Outcome of the decision procedure, with witness rules."""

    outcome: Outcome
    rule: "FilterRule | None" = None
    exception: "FilterRule | None" = None

    @property
    def blocked(self) -> bool:
        return self.outcome is Outcome.BLOCKED


def _subject_of(url: str) -> "tuple[str, str]":
    """Normalized match subject and host; scheme and host lowercased."""
    parts = urlsplit(url)
    if not parts.scheme or not parts.netloc:
        raise ValueError(f"url without scheme or host: {url!r}")
    subject = f"{parts.scheme.lower()}://{parts.netloc.lower()}{parts.path}"
    if parts.query:
        subject += f"?{parts.query}"
    return subject, parts.hostname or ""


def _domain_within(host: str, domains: "frozenset[str]") -> bool:
    return any(host == d or host.endswith("." + d) for d in domains)


def _rule_applies(rule: FilterRule, ctx: RequestContext, subject: str, host: str) -> bool:
    opts = rule.options
    if opts.script is not None and opts.script != ctx.resource_is_script:
        return False
    if opts.third_party is not None:
        if opts.third_party != (not psl.same_site(host, ctx.document_domain)):
            return False
    doc = ctx.document_domain.lower().strip(".")
    if opts.domains_include and not _domain_within(doc, opts.domains_include):
        return False
    if opts.domains_exclude and _domain_within(doc, opts.domains_exclude):
        return False
    return rule.regex.search(subject) is not None


def rule_matches(rule: FilterRule, ctx: RequestContext) -> bool:
    """Whether one rule (options included) matches one request."""
    subject, host = _subject_of(ctx.url)
    return _rule_applies(rule, ctx, subject, host)


@dataclass
class FilterSet:
    """Parsed rules in list order, plus everything that was set aside."""

    block_rules: "list[FilterRule]" = field(default_factory=list)
    exception_rules: "list[FilterRule]" = field(default_factory=list)
    skipped: "list[Skipped]" = field(default_factory=list)
    excluded: "list[str]" = field(default_factory=list)

    def match(self, ctx: RequestContext) -> Decision:
        """First matching block rule wins; exceptions can then lift it."""
        subject, host = _subject_of(ctx.url)
        hit = None
        for rule in self.block_rules:
            if _rule_applies(rule, ctx, subject, host):
                hit = rule
                break
        if hit is None:
            return Decision(Outcome.ALLOWED)
        for exc in self.exception_rules:
            if _rule_applies(exc, ctx, subject, host):
                return Decision(Outcome.EXCEPTED, rule=hit, exception=exc)
        return Decision(Outcome.BLOCKED, rule=hit)


def parse_filter_list(
    lines: "list[str] | tuple[str, ...]",
    excluded_rules: "tuple[str, ...] | list[str]" = (),
) -> FilterSet:
    """Parse filter-list lines, setting aside configured exclusions."""
    excluded_set = {e.strip() for e in excluded_rules if e.strip()}
    fset = FilterSet()
    for line in lines:
        if line.strip() in excluded_set:
            fset.excluded.append(line)
            continue
        parsed = parse_rule(line)
        if isinstance(parsed, Skipped):
            fset.skipped.append(parsed)
        elif parsed.is_exception:
            fset.exception_rules.append(parsed)
        else:
            fset.block_rules.append(parsed)
    return fset


def load_excluded_rules(path: "str | Path | None" = None) -> "tuple[str, ...]":
    """Raw rules to exclude; the bundled default when no path is given."""
    if path is None:
        text = (
            resources.files("turnstile.data")
            .joinpath(_EXCLUDED_RESOURCE)
            .read_text(encoding="utf-8")
        )
    else:
        text = Path(path).read_text(encoding="utf-8")
    rules = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("!"):
            rules.append(line)
    return tuple(rules)


def load_filter_files(
    paths: "list[str | Path]", exclude_path: "str | Path | None" = None
) -> FilterSet:
    """Concatenate filter files in the given order and parse them."""
    lines: list[str] = []
    for path in paths:
        lines.extend(Path(path).read_text(encoding="utf-8").splitlines())
    return parse_filter_list(lines, load_excluded_rules(exclude_path))


def label_scripts(
    graph: ExecutionGraph, filter_set: FilterSet
) -> "dict[ScriptUnit, Decision]":
    """Judge every script on a page as its request would have been judged.

    Only external scripts have an address to match; inline, attribute, and
    javascript-url scripts are always allowed.
    """
    doc_host = urlsplit(graph.page_url).hostname or ""
    labels: dict[ScriptUnit, Decision] = {}
    for unit in list_scripts(graph):
        if unit.source_kind is SourceKind.EXTERNAL and unit.url:
            try:
                ctx = RequestContext(
                    url=unit.url, document_domain=doc_host, resource_is_script=True
                )
                labels[unit] = filter_set.match(ctx)
            except ValueError:
                # Addresses without scheme or host never reach the blocker.
                labels[unit] = Decision(Outcome.ALLOWED)
        else:
            labels[unit] = Decision(Outcome.ALLOWED)
    return labels
