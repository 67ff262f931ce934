"""Threshold digraphs of coupling matrices and root-node analysis.

The digraph of a coupling matrix at threshold delta has an arc from l to k
(k != l) exactly when the entry in row k, column l is strictly larger than
delta: information flows from l into k's dynamics.  A root node is one from
which every node can be reached along arcs; persistent root nodes of window
integrals are what the contraction certificate feeds on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NegativeThreshold, NodeOutOfRange
from .metzler_core import CouplingSchedule, coupling_entries, integrate_schedule


@dataclass(frozen=True, eq=True)
class Digraph:
    """Directed graph on nodes 1..n; arcs are (tail, head) pairs."""

    n: int
    arcs: frozenset

    def successors(self, l: int) -> set:
        return {k for (tail, k) in self.arcs if tail == l}


def delta_digraph(matrix, delta: float = 0.0) -> Digraph:
    """Arc from l to k iff entry (k, l) > delta, strictly.  No tolerance:
    the threshold semantics deliberately keep the comparison exact."""
    if delta < 0.0:
        raise NegativeThreshold(f"threshold must be >= 0, got {delta!r}")
    entries = coupling_entries(matrix)
    n = entries.shape[0]
    arcs = set()
    for k in range(n):
        for l in range(n):
            if k != l and entries[k, l] > delta:
                arcs.add((l + 1, k + 1))
    return Digraph(n=n, arcs=frozenset(arcs))


def _check_node(g: Digraph, k: int):
    if not (1 <= k <= g.n):
        raise NodeOutOfRange(f"node {k} outside 1..{g.n}")


def reachable_set(g: Digraph, k: int) -> set:
    """Nodes reachable from k along arcs, k itself included (BFS)."""
    _check_node(g, k)
    adjacency = {node: [] for node in range(1, g.n + 1)}
    for tail, head in g.arcs:
        adjacency[tail].append(head)
    seen = {k}
    frontier = [k]
    while frontier:
        nxt = []
        for node in frontier:
            for head in adjacency[node]:
                if head not in seen:
                    seen.add(head)
                    nxt.append(head)
        frontier = nxt
    return seen


def root_nodes(g: Digraph) -> set:
    """Nodes from which every node is reachable.  May be empty.

    Computed through the boolean transitive closure, which coincides with
    running reachable_set from every node.
    """
    n = g.n
    reach = np.eye(n, dtype=bool)
    for tail, head in g.arcs:
        reach[tail - 1, head - 1] = True
    # Repeated boolean squaring: paths of length up to 2^i after i rounds.
    hops = 1
    while hops < n:
        reach = reach | (reach.astype(np.uint8) @ reach.astype(np.uint8) > 0)
        hops *= 2
    return {k + 1 for k in range(n) if reach[k].all()}


@dataclass(frozen=True, eq=False)
class WindowConnectivityReport:
    """Sampled scan of window-integral root sets.

    The scan inspects finitely many window starts; it reports evidence for
    the continuum connectivity hypothesis, never a proof of it.
    """

    n: int
    delta: float
    T: float
    horizon: tuple
    sample_step: float
    window_starts: tuple
    roots_per_window: tuple
    common_roots: frozenset
    has_common_root: bool
    note: str = ("sampled window starts only; the continuum hypothesis is "
                 "supported, not established")


def window_connectivity_report(
    schedule: CouplingSchedule,
    delta: float,
    T: float,
    horizon: tuple | None = None,
    sample_step: float | None = None,
) -> WindowConnectivityReport:
    """Scan window starts t in [t0, t1 - T] on a grid and intersect the root
    sets of the delta-digraphs of each window integral."""
    if not (delta > 0.0):
        raise NegativeThreshold(
            f"window connectivity scan needs delta > 0, got {delta!r}")
    if not (T > 0.0):
        raise ValueError(f"window length must be positive, got T = {T!r}")
    if horizon is None:
        horizon = schedule.horizon
    t0, t1 = horizon
    if t1 - t0 < T:
        raise ValueError(
            f"horizon [{t0}, {t1}] shorter than one window of length {T}")
    if sample_step is None:
        sample_step = T / 10.0
    last = t1 - T
    count = int(np.floor((last - t0) / sample_step + 1e-9)) + 1
    starts = [t0 + i * sample_step for i in range(count)]
    if last - starts[-1] > 1e-12 * max(1.0, abs(last)):
        starts.append(last)

    roots_per_window = []
    common = None
    for t in starts:
        window = integrate_schedule(schedule, t, T)
        roots = frozenset(root_nodes(delta_digraph(window, delta)))
        roots_per_window.append(roots)
        common = roots if common is None else (common & roots)
    common = frozenset() if common is None else frozenset(common)
    return WindowConnectivityReport(
        n=schedule.n,
        delta=delta,
        T=T,
        horizon=(float(t0), float(t1)),
        sample_step=float(sample_step),
        window_starts=tuple(float(t) for t in starts),
        roots_per_window=tuple(roots_per_window),
        common_roots=common,
        has_common_root=bool(common),
    )
