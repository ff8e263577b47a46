"""Registrable-domain lookups against a bundled public-suffix snapshot.

Third-party checks compare the registrable domain (public suffix plus one
label) of the requested host against that of the document host.  The rule
set is a frozen snapshot in the publicsuffix.org format: one rule per line,
``*`` labels match any single label, and ``!`` marks exception rules.
"""

from __future__ import annotations

import functools
from importlib import resources
from pathlib import Path

__all__ = [
    "PublicSuffixList",
    "load_snapshot",
    "registrable_domain",
    "same_site",
]

_SNAPSHOT_RESOURCE = "public_suffix_snapshot.dat"


class PublicSuffixList:
    """Suffix rules indexed for longest-match lookups."""

    def __init__(self, rules: "list[str] | tuple[str, ...]") -> None:
        self._exact: set[tuple[str, ...]] = set()
        self._wildcard: set[tuple[str, ...]] = set()
        self._exception: set[tuple[str, ...]] = set()
        for raw in rules:
            rule = raw.strip()
            if not rule or rule.startswith("//"):
                continue
            target = self._exact
            if rule.startswith("!"):
                target = self._exception
                rule = rule[1:]
            labels = tuple(rule.lower().split("."))
            if labels[0] == "*":
                if target is self._exception:
                    raise ValueError(f"exception rule may not start with *: {raw!r}")
                self._wildcard.add(labels)
            else:
                target.add(labels)

    def public_suffix_length(self, host: str) -> int:
        """Number of labels in the public suffix of ``host``.

        Hosts matching no rule fall back to the implicit ``*`` rule: their
        last label is the suffix.
        """
        labels = tuple(_normalize_host(host).split("."))
        n = len(labels)
        exception_len = 0
        best = 1
        for k in range(1, n + 1):
            suffix = labels[n - k :]
            if suffix in self._exception:
                exception_len = k
            if suffix in self._exact:
                best = max(best, k)
            if ("*",) + suffix[1:] in self._wildcard:
                best = max(best, k)
        if exception_len:
            # An exception rule shortens the suffix by its leftmost label.
            return exception_len - 1
        return best

    def registrable_domain(self, host: str) -> str:
        """Public suffix plus one label, or the host itself if it has none.

        IP literals and single-label hosts are returned unchanged; for
        same-site comparisons that makes each such host its own site.
        """
        norm = _normalize_host(host)
        if not norm or _is_ip_literal(norm):
            return norm
        labels = norm.split(".")
        suffix_len = self.public_suffix_length(norm)
        if len(labels) <= suffix_len:
            return norm
        return ".".join(labels[len(labels) - suffix_len - 1 :])


def _normalize_host(host: str) -> str:
    return host.strip().strip(".").lower()


def _is_ip_literal(host: str) -> bool:
    if ":" in host:
        return True
    parts = host.split(".")
    return all(p.isdigit() for p in parts) if parts else False


@functools.lru_cache(maxsize=4)
def load_snapshot(path: "str | Path | None" = None) -> PublicSuffixList:
    """Load suffix rules from ``path``, or the bundled snapshot by default."""
    if path is None:
        text = (
            resources.files("turnstile.data")
            .joinpath(_SNAPSHOT_RESOURCE)
            .read_text(encoding="utf-8")
        )
    else:
        text = Path(path).read_text(encoding="utf-8")
    return PublicSuffixList(text.splitlines())


def registrable_domain(host: str) -> str:
    """Registrable domain of ``host`` under the bundled snapshot."""
    return load_snapshot().registrable_domain(host)


def same_site(host_a: str, host_b: str) -> bool:
    """True when both hosts share a registrable domain.

    Empty hosts never match anything, including other empty hosts.
    """
    a = registrable_domain(host_a)
    b = registrable_domain(host_b)
    if not a or not b:
        return False
    return a == b
