"""Hot inner loops, each available as a numba kernel and a pure-numpy twin.

The active implementation is picked once at import time. Set the environment
variable ``GAZEGRAPH_NO_JIT=1`` (or run without numba installed) to force the
numpy path. Both paths are importable explicitly as ``JIT`` and ``NUMPY`` for
benchmarking and cross-checking.
"""
from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

try:
    import numba
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_JIT = HAVE_NUMBA and os.environ.get("GAZEGRAPH_NO_JIT", "").strip().lower() in ("", "0", "false", "no")


# ---------------------------------------------------------------------------
# Levenshtein distance over integer token arrays
# ---------------------------------------------------------------------------

def _levenshtein_loop(a, b):
    n = a.shape[0]
    m = b.shape[0]
    if n == 0:
        return m
    if m == 0:
        return n
    prev = np.empty(m + 1, dtype=np.int64)
    cur = np.empty(m + 1, dtype=np.int64)
    for j in range(m + 1):
        prev[j] = j
    for i in range(1, n + 1):
        cur[0] = i
        ai = a[i - 1]
        for j in range(1, m + 1):
            sub = prev[j - 1] + (0 if ai == b[j - 1] else 1)
            dele = prev[j] + 1
            ins = cur[j - 1] + 1
            best = sub
            if dele < best:
                best = dele
            if ins < best:
                best = ins
            cur[j] = best
        prev, cur = cur, prev
    return prev[m]


def _levenshtein_numpy(a, b):
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    n, m = a.shape[0], b.shape[0]
    if n == 0:
        return m
    if m == 0:
        return n
    offs = np.arange(m + 1, dtype=np.int64)
    prev = offs.copy()
    for i in range(1, n + 1):
        # row without the left-neighbour term, then close it with a prefix min:
        # cur[j] = min_k (tmp[k] + j - k)
        tmp = np.empty(m + 1, dtype=np.int64)
        tmp[0] = i
        tmp[1:] = np.minimum(prev[1:] + 1, prev[:-1] + (b != a[i - 1]))
        prev = np.minimum.accumulate(tmp - offs) + offs
    return int(prev[m])


# ---------------------------------------------------------------------------
# I-VT: per-sample classification and run grouping
# ---------------------------------------------------------------------------

def _ivt_loop(t, x_mm, y_mm, valid, dist_mm, threshold):
    """Return (is_fix, run_start, run_end) index arrays; ends are inclusive."""
    n = t.shape[0]
    vel = np.full(n, np.nan)
    for i in range(1, n):
        if valid[i] and valid[i - 1]:
            dx = x_mm[i] - x_mm[i - 1]
            dy = y_mm[i] - y_mm[i - 1]
            d = np.sqrt(dx * dx + dy * dy)
            deg = np.degrees(np.arctan(d / dist_mm))
            vel[i] = deg / ((t[i] - t[i - 1]) / 1000.0)
    is_fix = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        if not valid[i]:
            continue
        v = vel[i]
        if np.isnan(v) and i + 1 < n:
            v = vel[i + 1]
        if not np.isnan(v) and v < threshold:
            is_fix[i] = True
    starts = np.empty(n, dtype=np.int64)
    ends = np.empty(n, dtype=np.int64)
    k = 0
    i = 0
    while i < n:
        if is_fix[i]:
            j = i
            while j + 1 < n and is_fix[j + 1]:
                j += 1
            starts[k] = i
            ends[k] = j
            k += 1
            i = j + 1
        else:
            i += 1
    return is_fix, starts[:k], ends[:k]


def _ivt_numpy(t, x_mm, y_mm, valid, dist_mm, threshold):
    n = t.shape[0]
    vel = np.full(n, np.nan)
    if n > 1:
        both = valid[1:] & valid[:-1]
        d = np.hypot(np.diff(x_mm), np.diff(y_mm))
        deg = np.degrees(np.arctan(d / dist_mm))
        with np.errstate(invalid="ignore", divide="ignore"):
            v = deg / (np.diff(t) / 1000.0)
        vel[1:] = np.where(both, v, np.nan)
    ref = vel.copy()
    look_ahead = np.append(vel[1:], np.nan)
    missing = np.isnan(ref)
    ref[missing] = look_ahead[missing]
    with np.errstate(invalid="ignore"):
        is_fix = valid & ~np.isnan(ref) & (ref < threshold)
    padded = np.concatenate(([False], is_fix, [False])).astype(np.int8)
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1) - 1
    return is_fix, starts.astype(np.int64), ends.astype(np.int64)


# ---------------------------------------------------------------------------
# Video-to-graph node assignment (the recurrence of the graph builder)
# ---------------------------------------------------------------------------

def _assign_loop(unit, rho):
    """unit: (K, d) row-normalised embeddings.

    Returns node_of_frame (K,), creators (frame index per node), and an edge
    array (E, 2) in insertion order, duplicates removed.
    """
    k_frames = unit.shape[0]
    d = unit.shape[1]
    node_of = np.empty(k_frames, dtype=np.int64)
    creators = np.empty(k_frames, dtype=np.int64)
    feats = np.empty((k_frames, d))
    edges = np.empty((2 * k_frames, 2), dtype=np.int64)
    n_edges = 0
    feats[0] = unit[0]
    creators[0] = 0
    node_of[0] = 0
    n_nodes = 1
    cur = 0
    for t in range(1, k_frames):
        best = -np.inf
        best_i = 0
        for j in range(n_nodes):
            s = 0.0
            for c in range(d):
                s += feats[j, c] * unit[t, c]
            # rounding can push a cosine just past +-1; the rho edge cases rely on the bounds
            s = min(max(s, -1.0), 1.0)
            if s > best:
                best = s
                best_i = j
        if best < rho:
            feats[n_nodes] = unit[t]
            creators[n_nodes] = t
            target = n_nodes
            n_nodes += 1
        else:
            target = best_i
        node_of[t] = target
        if target != cur:
            dup = False
            for e in range(n_edges):
                if edges[e, 0] == cur and edges[e, 1] == target:
                    dup = True
                    break
            if not dup:
                edges[n_edges, 0] = cur
                edges[n_edges, 1] = target
                n_edges += 1
            cur = target
    return node_of, creators[:n_nodes], edges[:n_edges]


def _assign_numpy(unit, rho):
    k_frames = unit.shape[0]
    node_of = np.empty(k_frames, dtype=np.int64)
    rows = [0]
    node_of[0] = 0
    edges = []
    seen = set()
    cur = 0
    for t in range(1, k_frames):
        sims = np.clip(unit[rows] @ unit[t], -1.0, 1.0)
        best_i = int(np.argmax(sims))
        if sims[best_i] < rho:
            rows.append(t)
            target = len(rows) - 1
        else:
            target = best_i
        node_of[t] = target
        if target != cur:
            if (cur, target) not in seen:
                seen.add((cur, target))
                edges.append((cur, target))
            cur = target
    edge_arr = np.array(edges, dtype=np.int64).reshape(-1, 2)
    return node_of, np.array(rows, dtype=np.int64), edge_arr


# ---------------------------------------------------------------------------
# Scatter-add of rows into segments (graph aggregation)
# ---------------------------------------------------------------------------

def _segment_sum_loop(values, seg, n_seg):
    out = np.zeros((n_seg, values.shape[1]))
    for r in range(values.shape[0]):
        s = seg[r]
        for c in range(values.shape[1]):
            out[s, c] += values[r, c]
    return out


def _segment_sum_numpy(values, seg, n_seg):
    out = np.zeros((n_seg, values.shape[1]))
    np.add.at(out, seg, values)
    return out


NUMPY = SimpleNamespace(
    name="numpy",
    levenshtein=_levenshtein_numpy,
    ivt=_ivt_numpy,
    assign_nodes=_assign_numpy,
    segment_sum=_segment_sum_numpy,
)

if HAVE_NUMBA:
    JIT = SimpleNamespace(
        name="numba",
        levenshtein=njit(cache=True)(_levenshtein_loop),
        ivt=njit(cache=True)(_ivt_loop),
        assign_nodes=njit(cache=True)(_assign_loop),
        segment_sum=njit(cache=True)(_segment_sum_loop),
    )
else:  # pragma: no cover
    JIT = None

ACTIVE = JIT if USE_JIT else NUMPY


def levenshtein(a, b) -> int:
    return int(ACTIVE.levenshtein(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64)))


def ivt(t, x_mm, y_mm, valid, dist_mm: float, threshold: float):
    return ACTIVE.ivt(
        np.ascontiguousarray(t, dtype=np.float64),
        np.ascontiguousarray(x_mm, dtype=np.float64),
        np.ascontiguousarray(y_mm, dtype=np.float64),
        np.ascontiguousarray(valid, dtype=np.bool_),
        float(dist_mm),
        float(threshold),
    )


def assign_nodes(unit, rho: float):
    return ACTIVE.assign_nodes(np.ascontiguousarray(unit, dtype=np.float64), float(rho))


def segment_sum(values, seg, n_seg: int):
    return ACTIVE.segment_sum(
        np.ascontiguousarray(values, dtype=np.float64),
        np.ascontiguousarray(seg, dtype=np.int64),
        int(n_seg),
    )
