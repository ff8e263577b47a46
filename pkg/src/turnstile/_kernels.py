"""Turn-run scanning over edge streams.

The scan walks a page's edges in order and groups consecutive edges acted
by the same script into runs, resetting at wall edges (events that end the
script's event-loop turn) and skipping transparent edges (asynchronous
activity attributable to no script).  It is the one numeric hot spot in
signature extraction, so it ships compiled with numba; set
``TURNSTILE_NO_NUMBA=1`` to force the pure-numpy path (the fallback is also
used automatically when numba is unavailable).
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["scan_runs", "scan_runs_numpy", "using_numba"]

NO_ACTOR = -1


def _scan_runs_loop(actor: np.ndarray, wall: np.ndarray, out: np.ndarray) -> int:
    n = actor.shape[0]
    run = -1
    current = -1
    open_run = False
    for i in range(n):
        if wall[i]:
            open_run = False
            out[i] = -1
        elif actor[i] >= 0:
            if not open_run or actor[i] != current:
                run += 1
                current = actor[i]
                open_run = True
            out[i] = run
        else:
            # Transparent: invisible to the scan, never ends a run.
            out[i] = -1
    return run + 1


try:  # pragma: no cover - exercised indirectly through scan_runs
    from numba import njit

    _scan_runs_jit = njit(cache=True)(_scan_runs_loop)
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _scan_runs_jit = None
    _HAVE_NUMBA = False


def using_numba() -> bool:
    """Whether scan_runs dispatches to the compiled kernel."""
    if os.environ.get("TURNSTILE_NO_NUMBA"):
        return False
    return _HAVE_NUMBA


def scan_runs_numpy(actor: np.ndarray, wall: np.ndarray) -> "tuple[np.ndarray, int]":
    """Vectorized run scan; same contract as :func:`scan_runs`."""
    actor = np.ascontiguousarray(actor, dtype=np.int64)
    wall = np.ascontiguousarray(wall, dtype=np.bool_)
    n = actor.shape[0]
    out = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return out, 0
    # Collapse transparent positions out of the stream, then find the
    # boundaries between consecutive solid entries with different keys.
    member = (actor >= 0) & ~wall
    key = np.where(wall, np.int64(-1), np.where(member, actor, np.int64(-2)))
    solid = np.flatnonzero(key != -2)
    if solid.size == 0:
        return out, 0
    keys = key[solid]
    change = np.empty(keys.shape[0], dtype=np.bool_)
    change[0] = True
    change[1:] = keys[1:] != keys[:-1]
    segment = np.cumsum(change) - 1
    is_member = keys >= 0
    if not np.any(is_member):
        return out, 0
    # Segments are numbered over walls too; renumber member segments
    # densely.  Segment ids increase with position, so np.unique's sorted
    # output preserves first-appearance order.
    member_segments = segment[is_member]
    _, dense = np.unique(member_segments, return_inverse=True)
    out[solid[is_member]] = dense
    return out, int(dense.max()) + 1


def scan_runs(actor: np.ndarray, wall: np.ndarray) -> "tuple[np.ndarray, int]":
    """Assign run ids to the member edges of an ordered edge stream.

    ``actor`` holds the acting script id per edge (``NO_ACTOR`` for none);
    ``wall`` marks edges that end any open run.  Returns ``(run_id, count)``
    where ``run_id[i]`` is the dense id of the run containing edge ``i``,
    or ``-1`` for walls and transparent edges.  Run ids are numbered in
    first-appearance order.
    """
    actor = np.ascontiguousarray(actor, dtype=np.int64)
    wall = np.ascontiguousarray(wall, dtype=np.bool_)
    if actor.shape != wall.shape:
        raise ValueError("actor and wall arrays must have equal length")
    if using_numba():
        out = np.empty(actor.shape[0], dtype=np.int64)
        count = _scan_runs_jit(actor, wall, out)
        return out, count
    return scan_runs_numpy(actor, wall)
