"""Photon-offset bookkeeping for closed manifolds.

A transition ``(j, L -> U)`` absorbs one photon from laser ``j``, so the
offset vectors must satisfy ``b[U] = b[L] - e_j``.  A scheme is free of
momentum diffusion exactly when these constraints are consistent, i.e. every
cycle of the transition multigraph has zero net photon tally in each laser.

The solver is a union-find whose nodes store their offset relative to the
parent; a conflicting union yields the offending cycle as a witness.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass

import numpy as np

from .scheme import LevelScheme

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ManifoldMap:
    """Integer offsets ``b[laser, level]`` for an accepted scheme.

    ``offsets`` covers every declared level; levels outside the anchor's
    connected component are offset relative to their own component and are
    not listed in ``reachable``.
    """

    lasers: tuple
    levels: tuple
    offsets: np.ndarray
    anchor: str
    reachable: tuple

    def offset(self, laser: str, level: str) -> int:
        return int(self.offsets[self.lasers.index(laser), self.levels.index(level)])

    def column(self, level: str) -> np.ndarray:
        return self.offsets[:, self.levels.index(level)].copy()

    def as_dict(self) -> dict:
        return {la: {lv: self.offset(la, lv) for lv in self.reachable} for la in self.lasers}


@dataclass(frozen=True)
class Rejection:
    """Verdict for a scheme that scatters photons between modes.

    ``cycle`` lists transition indices walked in order starting from level
    ``start``; ``tally`` is the net photon change per laser around it.
    """

    cycle: tuple
    start: str
    tally: tuple
    reason: str = "Bragg cycle"

    def __bool__(self):
        return False


def _edge_diff(scheme: LevelScheme, t_index: int) -> np.ndarray:
    t = scheme.transitions[t_index]
    d = np.zeros(len(scheme.lasers), dtype=np.int64)
    d[scheme.laser_index(t.laser)] = -1
    return d


def cycle_tally(scheme: LevelScheme, cycle, start: str) -> np.ndarray:
    """Net per-laser photon change walking ``cycle`` from level ``start``.

    Raises ValueError if the transitions do not form a closed walk.
    """
    names = scheme.level_names
    here = names.index(start)
    tally = np.zeros(len(scheme.lasers), dtype=np.int64)
    for t_idx in cycle:
        t = scheme.transitions[t_idx]
        lo, up = names.index(t.lower), names.index(t.upper)
        j = scheme.laser_index(t.laser)
        if here == lo:
            tally[j] -= 1  # photon absorbed from laser j
            here = up
        elif here == up:
            tally[j] += 1
            here = lo
        else:
            raise ValueError(f"transition {t.label} does not touch level {names[here]!r}")
    if here != names.index(start):
        raise ValueError("walk does not return to its start level")
    return tally


class _OffsetUnionFind:
    # parent[x] is None at a root; rel[x] = b[x] - b[parent[x]]
    def __init__(self, n: int, dim: int):
        self.parent: list = [None] * n
        self.rel = [np.zeros(dim, dtype=np.int64) for _ in range(n)]
        self.size = [1] * n

    def find(self, x: int) -> int:
        path = []
        while self.parent[x] is not None:
            path.append(x)
            x = self.parent[x]
        root = x
        acc = np.zeros_like(self.rel[root])
        for node in reversed(path):
            acc = acc + self.rel[node]
            self.rel[node] = acc
            self.parent[node] = root
        return root

    def offset(self, x: int) -> np.ndarray:
        """b[x] - b[root(x)]."""
        if self.find(x) == x:
            return np.zeros_like(self.rel[x])
        return self.rel[x]

    def link(self, a: int, b: int, diff: np.ndarray) -> None:
        """Merge the (distinct) trees of a and b imposing b[b] - b[a] = diff."""
        ra, rb = self.find(a), self.find(b)
        rel = diff - self.offset(b) + self.offset(a)  # b[rb] - b[ra]
        if self.size[ra] < self.size[rb]:
            ra, rb, rel = rb, ra, -rel
        self.parent[rb] = ra
        self.rel[rb] = rel
        self.size[ra] += self.size[rb]


def _forest_path(forest: dict, start: int, goal: int) -> list:
    """Transition indices on the spanning-forest path from start to goal."""
    prev = {start: None}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        if u == goal:
            break
        for v, t_idx in forest.get(u, ()):
            if v not in prev:
                prev[v] = (u, t_idx)
                queue.append(v)
    path = []
    node = goal
    while prev[node] is not None:
        node, t_idx = prev[node]
        path.append(t_idx)
    return path[::-1]


def solve_offsets(scheme: LevelScheme, anchor: str | None = None) -> ManifoldMap | Rejection:
    """Solve for the photon-offset matrix, or return a :class:`Rejection` witness.

    Rejection is an ordinary return value; only malformed input raises.
    """
    names = scheme.level_names
    anchor = names[0] if anchor is None else anchor
    if anchor not in names:
        raise ValueError(f"anchor {anchor!r} is not a declared level")
    n, m = len(names), len(scheme.lasers)
    uf = _OffsetUnionFind(n, m)
    forest: dict = {}
    for t_idx, t in enumerate(scheme.transitions):
        a, b = names.index(t.lower), names.index(t.upper)
        diff = _edge_diff(scheme, t_idx)
        if uf.find(a) != uf.find(b):
            uf.link(a, b, diff)
            forest.setdefault(a, []).append((b, t_idx))
            forest.setdefault(b, []).append((a, t_idx))
            continue
        if np.array_equal(uf.offset(b) - uf.offset(a), diff):
            continue
        # lower -> upper along this edge, then back through the forest
        cycle = (t_idx, *_forest_path(forest, b, a))
        tally = cycle_tally(scheme, cycle, t.lower)
        return Rejection(cycle, t.lower, tuple(int(x) for x in tally))

    a_idx = names.index(anchor)
    root = uf.find(a_idx)
    comp_base: dict = {root: uf.offset(a_idx)}
    offsets = np.zeros((m, n), dtype=np.int64)
    reachable = []
    for i, name in enumerate(names):
        r = uf.find(i)
        # other components are anchored at their first declared level
        base = comp_base.setdefault(r, uf.offset(i))
        offsets[:, i] = uf.offset(i) - base
        if r == root:
            reachable.append(name)
    if len(reachable) < n:
        log.warning("levels not connected to anchor %r are excluded from the manifold: %s",
                    anchor, [nm for nm in names if nm not in reachable])
    return ManifoldMap(tuple(scheme.laser_names), tuple(names), offsets, anchor, tuple(reachable))


def solve_offsets_bfs(scheme: LevelScheme, anchor: str | None = None) -> ManifoldMap | Rejection:
    """Reference solver: breadth-first propagation of offset vectors.

    Every component is explored (anchor's first) so that verdicts match
    :func:`solve_offsets`.
    """
    names = scheme.level_names
    anchor = names[0] if anchor is None else anchor
    if anchor not in names:
        raise ValueError(f"anchor {anchor!r} is not a declared level")
    adj: dict = {i: [] for i in range(len(names))}
    for t_idx, t in enumerate(scheme.transitions):
        a, b = names.index(t.lower), names.index(t.upper)
        d = _edge_diff(scheme, t_idx)
        adj[a].append((b, d, t_idx))
        adj[b].append((a, -d, t_idx))

    value: dict = {}
    parent: dict = {}
    component: dict = {}
    a_idx = names.index(anchor)
    for start in [a_idx] + [i for i in range(len(names)) if i != a_idx]:
        if start in value:
            continue
        value[start] = np.zeros(len(scheme.lasers), dtype=np.int64)
        parent[start] = None
        component[start] = start
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v, d, t_idx in adj[u]:
                if v not in value:
                    value[v] = value[u] + d
                    parent[v] = (u, t_idx)
                    component[v] = start
                    queue.append(v)
                elif not np.array_equal(value[v], value[u] + d):
                    cycle = _close_cycle(parent, u, v, t_idx)
                    tally = cycle_tally(scheme, cycle, names[u])
                    return Rejection(cycle, names[u], tuple(int(x) for x in tally))
    offsets = np.zeros((len(scheme.lasers), len(names)), dtype=np.int64)
    for i in range(len(names)):
        offsets[:, i] = value[i]
    reachable = tuple(nm for i, nm in enumerate(names) if component[i] == a_idx)
    return ManifoldMap(tuple(scheme.laser_names), tuple(names), offsets, anchor, reachable)


def _close_cycle(parent: dict, u: int, v: int, closing: int) -> tuple:
    """Cycle u -closing-> v -> ... -> lca -> ... -> u through the BFS tree."""

    def ancestry(x):
        chain = []
        while parent[x] is not None:
            p, e = parent[x]
            chain.append((x, e))
            x = p
        chain.append((x, None))
        return chain

    au, av = ancestry(u), ancestry(v)
    set_u = {x for x, _ in au}
    up_v = []
    for x, e in av:
        if x in set_u:
            lca = x
            break
        up_v.append(e)
    up_u = []
    for x, e in au:
        if x == lca:
            break
        up_u.append(e)
    return (closing, *up_v, *reversed(up_u))


def enumerate_simple_cycles(scheme: LevelScheme) -> list:
    """All simple cycles of the transition multigraph as ``(start_level, edges)``.

    Exponential; meant for brute-force checks on small schemes.  Parallel
    transitions between one pair of levels form 2-cycles.
    """
    names = scheme.level_names
    adj: dict = {i: [] for i in range(len(names))}
    for t_idx, t in enumerate(scheme.transitions):
        a, b = names.index(t.lower), names.index(t.upper)
        adj[a].append((b, t_idx))
        adj[b].append((a, t_idx))
    found = {}
    for start in range(len(names)):
        # cycles whose smallest vertex is ``start``
        stack = [(start, (start,), ())]
        while stack:
            u, verts, edges = stack.pop()
            for v, t_idx in adj[u]:
                if t_idx in edges:
                    continue
                if v == start:
                    cyc = edges + (t_idx,)
                    found.setdefault(frozenset(cyc), (names[start], cyc))
                elif v > start and v not in verts:
                    stack.append((v, verts + (v,), edges + (t_idx,)))
    return list(found.values())


def brute_force_accepts(scheme: LevelScheme) -> bool:
    """Accept iff every simple cycle has a zero per-laser photon tally."""
    return not any(cycle_tally(scheme, cyc, start).any()
                   for start, cyc in enumerate_simple_cycles(scheme))


@dataclass(frozen=True)
class BasisState:
    level: str
    photons: tuple


def enumerate_manifold(offsets: ManifoldMap, base) -> list[BasisState]:
    """Basis of the manifold anchored at photon vector ``base``.

    Levels appear in declaration order; photon numbers are ``base + b[:, level]``.
    """
    base = np.atleast_1d(np.asarray(base))
    if base.shape != (len(offsets.lasers),):
        raise ValueError(f"photon vector must have {len(offsets.lasers)} entries")
    out = []
    for lv in offsets.reachable:
        photons = base + offsets.column(lv)
        if np.any(photons < 0):
            raise ValueError(f"state ({lv}, {tuple(photons.tolist())}) has a negative photon number")
        out.append(BasisState(lv, tuple(photons.tolist())))
    return out
