"""Catch filter-list evasion by what scripts do, not where they live.

Page execution graphs are sliced into per-event-loop-turn behavior
signatures; signatures of blocked scripts become ground truth, and
unblocked scripts reproducing one are flagged, classified by technique,
and turned into candidate block rules.
"""

from __future__ import annotations

__version__ = "0.1.0"

__all__ = ["__version__"]
