"""Hypothetical overlays and plausible message trajectories.

A hypothetical overlay extends the adversary's knowledge with dummy nodes
standing for participants it may not know about, and assumes every pair of
non-malicious nodes might be linked unless the link is known to be absent.
A plausible trajectory is a node sequence a message could have taken between
two consecutively traversed malicious nodes under greedy routing, consistent
with everything the adversary knows.

Plausible trajectories are exactly the paths of a DAG ordered by distance to
the target, because every condition constrains only consecutive pairs. Path
counts over that DAG give exact answers to "does every plausible trajectory
use link (u, v)" without enumerating trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations
from typing import Callable, Iterable, Iterator, Sequence

from .embedding import Coord, format_coordinate
from .knowledge import KnowledgeBase
from .routing import TraceRecord, tree_distance

__all__ = [
    "TrajectoryError",
    "HypotheticalOverlay",
    "TrajectorySet",
    "build_hypothetical_overlay",
    "known_trace",
    "enumerate_plausible_trajectories",
    "count_plausible_trajectories",
    "proven_links",
    "proves_link_existence",
    "brute_force_trajectory_oracle",
    "is_plausible_trajectory",
    "format_trajectory",
    "DEFAULT_LIMIT",
]

DEFAULT_LIMIT = 10**6
INF = math.inf


class TrajectoryError(RuntimeError):
    pass


def _pair(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True, eq=False)
class HypotheticalOverlay:
    """Known nodes plus dummy chains, with an implicit all-pairs edge relation.

    Known nodes keep their knowledge-base ids; dummies get negative ids.
    ``coord`` covers every node that has a coordinate (all dummies, and every
    known node whose coordinate the adversary has learned).
    """

    known: frozenset[int]
    dummies: frozenset[int]
    malicious: frozenset[int]
    coord: dict[int, Coord]
    e_obs: frozenset[tuple[int, int]]
    not_e_obs: frozenset[tuple[int, int]]
    obs_neighbors: dict[int, frozenset[int]]
    l_max: int

    def __len__(self) -> int:
        return len(self.known) + len(self.dummies)

    def nodes(self) -> Iterator[int]:
        yield from sorted(self.known)
        yield from sorted(self.dummies, reverse=True)

    def is_dummy(self, v: int) -> bool:
        return v in self.dummies

    def has_edge(self, u: int, v: int) -> bool:
        if u == v:
            return False
        key = _pair(u, v)
        if key in self.e_obs:
            return True
        return u not in self.malicious and v not in self.malicious and key not in self.not_e_obs

    def label(self, v: int) -> str:
        if v in self.dummies:
            return "D:" + format_coordinate(self.coord[v])
        return str(v)


def build_hypothetical_overlay(
    kb: KnowledgeBase, malicious: Iterable[int] | None = None
) -> HypotheticalOverlay:
    """Hypothetical overlay for ``kb``.

    ``malicious`` is a set of knowledge-base ids and defaults to the nodes the
    knowledge base classes as malicious. Below every non-malicious known node
    with a coordinate of length ``l`` hangs a chain of ``l_max - l + 1``
    dummies, ``l_max`` being the longest known coordinate. Dummy elements are
    sentinels larger than any known element, so no dummy collides with a
    known coordinate or with another dummy.
    """
    bad = frozenset(kb.malicious if malicious is None else malicious)
    if not kb.coord_of:
        raise TrajectoryError("knowledge holds no coordinates; l_max is undefined")
    l_max = max(len(c) for c in kb.coord_of.values())
    sentinel = 1 + max((x for c in kb.coord_of.values() for x in c), default=-1)

    coord: dict[int, Coord] = dict(kb.coord_of)
    dummies = []
    next_dummy = -1
    for kid in sorted(kb.coord_of):
        if kid in bad:
            continue
        c = kb.coord_of[kid]
        for _ in range(l_max - len(c) + 1):
            c = c + (sentinel,)
            sentinel += 1
            coord[next_dummy] = c
            dummies.append(next_dummy)
            next_dummy -= 1

    return HypotheticalOverlay(
        known=frozenset(kb.nodes),
        dummies=frozenset(dummies),
        malicious=bad,
        coord=coord,
        e_obs=frozenset(kb.e_obs),
        not_e_obs=frozenset(kb.not_e_obs),
        obs_neighbors={k: frozenset(v) for k, v in kb.adjacency.items()},
        l_max=l_max,
    )


def known_trace(kb: KnowledgeBase, record: TraceRecord) -> TraceRecord:
    """Translate a trace record from overlay ids to knowledge-base ids."""
    ids = []
    for v in (record.m_s, record.u_s, record.u_e, record.m_e):
        kid = kb.known_id(v)
        if kid is None:
            raise TrajectoryError(f"trace endpoint {v} is unknown to the adversary")
        ids.append(kid)
    return TraceRecord(*ids, record.target)


@dataclass(frozen=True)
class TrajectorySet:
    trajectories: frozenset[tuple[int, ...]]
    truncated: bool
    total: int

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self):
        return iter(sorted(self.trajectories))

    def __contains__(self, seq) -> bool:
        return tuple(seq) in self.trajectories


class _Dag:
    """Greedy-step DAG for one trace record and target.

    Between ``u_s`` and ``u_e`` only non-malicious nodes appear, so an edge
    exists unless the pair is known to be absent and a step ``a -> b`` is
    valid iff ``b`` lies below ``threshold(a)``.
    """

    def __init__(self, h: HypotheticalOverlay, trace: TraceRecord, target: Sequence[int]):
        self.h = h
        self.trace = trace
        for role, v in (("m_s", trace.m_s), ("m_e", trace.m_e)):
            if v not in h.malicious:
                raise TrajectoryError(f"trace {role}={v} is not malicious")
        for role, v in (("u_s", trace.u_s), ("u_e", trace.u_e)):
            if v in h.malicious:
                raise TrajectoryError(f"trace {role}={v} is malicious")
        for v in (trace.m_s, trace.u_s, trace.u_e, trace.m_e):
            if v not in h.coord:
                raise TrajectoryError(f"trace node {v} has no known coordinate")

        t = tuple(target)
        self.dist = {v: tree_distance(c, t) for v, c in h.coord.items()}
        self._min5: dict[int, float] = {}
        self.start, self.end = trace.u_s, trace.u_e
        lo, hi = self.dist[self.end], self.dist[self.start]
        self.pool = sorted(
            (
                v
                for v, d in self.dist.items()
                if lo < d < hi and v not in h.malicious and v != self.start and v != self.end
            ),
            key=lambda v: (self.dist[v], v),
        )
        self.absent: dict[int, set[int]] = {}
        for a, b in h.not_e_obs:
            self.absent.setdefault(a, set()).add(b)
            self.absent.setdefault(b, set()).add(a)
        self._counted = False

    def min5(self, v: int) -> float:
        m = self._min5.get(v)
        if m is None:
            m = min(
                (self.dist[u] for u in self.h.obs_neighbors.get(v, ()) if u in self.dist),
                default=INF,
            )
            self._min5[v] = m
        return m

    def threshold(self, v: int) -> float:
        return min(self.dist[v], self.min5(v) + 1)

    def step(self, a: int, b: int) -> bool:
        return self.dist[b] < self.threshold(a) and self.h.has_edge(a, b)

    def endpoints_ok(self) -> bool:
        tr = self.trace
        if not (self.step(tr.m_s, tr.u_s) and self.step(tr.u_e, tr.m_e)):
            return False
        return tr.u_s == tr.u_e or self.dist[tr.u_e] < self.dist[tr.u_s]

    def count(self) -> int:
        """Fill ``fwd`` (paths from u_s) and ``back`` (paths to u_e); return the total."""
        if self._counted:
            return self.total
        self._counted = True
        self.fwd: dict[int, int] = {}
        self.back: dict[int, int] = {}
        self.total = 0
        if not self.endpoints_ok():
            return 0
        start, end = self.start, self.end
        if start == end:
            self.fwd[start] = self.back[start] = 1
            self.total = 1
            return 1
        dist, pool, absent = self.dist, self.pool, self.absent

        back = self.back
        back[end] = 1
        level_sum: dict[int, int] = {}
        for v in pool:
            thr = self.threshold(v)
            n = 1 if self.step(v, end) else 0
            n += sum(s for lvl, s in level_sum.items() if lvl < thr)
            for w in absent.get(v, ()):
                if w != end and w in back and dist[w] < thr:
                    n -= back[w]
            back[v] = n
            level_sum[dist[v]] = level_sum.get(dist[v], 0) + n

        fwd = self.fwd
        fwd[start] = 1
        thr_sum: dict[float, int] = {}
        for w in reversed(pool):
            dw = dist[w]
            n = 1 if self.step(start, w) else 0
            n += sum(s for thr, s in thr_sum.items() if thr > dw)
            for v in absent.get(w, ()):
                if v != start and v in fwd and self.threshold(v) > dw:
                    n -= fwd[v]
            fwd[w] = n
            thr = self.threshold(w)
            thr_sum[thr] = thr_sum.get(thr, 0) + n
        total = 1 if self.step(start, end) else 0
        total += sum(fwd[v] for v in pool if self.step(v, end))
        self.total = total
        return total

    def paths(self, limit: int) -> tuple[list[tuple[int, ...]], bool]:
        """Depth-first enumeration of up to ``limit`` trajectories."""
        if self.count() == 0:
            return [], False
        tr = self.trace
        if self.start == self.end:
            return [(tr.m_s, tr.u_s, tr.m_e)], False
        live = [w for w in self.pool if self.back[w] > 0]
        out: list[tuple[int, ...]] = []
        stack = [tr.m_s, self.start]

        def extend(v: int) -> bool:
            if self.step(v, self.end):
                if len(out) >= limit:
                    return False
                out.append(tuple(stack) + (self.end, tr.m_e))
            thr = self.threshold(v)
            for w in live:
                if self.dist[w] >= thr:
                    break
                if self.h.has_edge(v, w):
                    stack.append(w)
                    ok = extend(w)
                    stack.pop()
                    if not ok:
                        return False
            return True

        complete = extend(self.start)
        return out, not complete

    def mandatory_steps(self) -> list[tuple[int, int]]:
        """Consecutive pairs between ``u_s`` and ``u_e`` shared by every trajectory."""
        total = self.count()
        if total == 0 or self.start == self.end:
            return []
        chain = [self.start]
        chain += [v for v in reversed(self.pool) if self.fwd[v] * self.back[v] == total]
        chain.append(self.end)
        return [
            (a, b)
            for a, b in zip(chain, chain[1:])
            if self.step(a, b) and self.fwd[a] * self.back[b] == total
        ]


def _target(trace: TraceRecord, target) -> Coord:
    t = trace.target if target is None else target
    if not isinstance(t, tuple):
        t = tuple(t)
    return t


def enumerate_plausible_trajectories(
    h: HypotheticalOverlay,
    trace: TraceRecord,
    target: Sequence[int] | None = None,
    limit: int = DEFAULT_LIMIT,
) -> TrajectorySet:
    """All plausible trajectories for ``trace`` (in knowledge-base ids).

    At most ``limit`` are returned; ``truncated`` tells whether more exist and
    ``total`` always holds the exact number.
    """
    dag = _Dag(h, trace, _target(trace, target))
    found, truncated = dag.paths(limit)
    return TrajectorySet(frozenset(found), truncated, dag.count())


def count_plausible_trajectories(
    h: HypotheticalOverlay, trace: TraceRecord, target: Sequence[int] | None = None
) -> int:
    return _Dag(h, trace, _target(trace, target)).count()


def proven_links(
    h: HypotheticalOverlay, trace: TraceRecord, target: Sequence[int] | None = None
) -> set[tuple[int, int]]:
    """Ordered pairs ``(u, v)`` of known non-malicious nodes that every trajectory traverses."""
    dag = _Dag(h, trace, _target(trace, target))
    if dag.count() == 0:
        raise TrajectoryError(f"no plausible trajectory for trace {trace}")
    return {(a, b) for a, b in dag.mandatory_steps() if a in h.known and b in h.known}


def proves_link_existence(
    h: HypotheticalOverlay,
    trace: TraceRecord,
    target: Sequence[int] | None,
    u: int,
    v: int,
) -> bool:
    """Whether every plausible trajectory for ``trace`` contains ``u`` immediately followed by ``v``."""
    for x in (u, v):
        if x not in h.known or x in h.malicious:
            raise ValueError(f"{x} is not a known non-malicious node")
    return (u, v) in proven_links(h, trace, target)


# -- independent oracle ------------------------------------------------------


def _oracle_distance(a: Sequence[int], b: Sequence[int]) -> int:
    k = 0
    while k < len(a) and k < len(b) and a[k] == b[k]:
        k += 1
    return (len(a) - k) + (len(b) - k)


def is_plausible_trajectory(
    h: HypotheticalOverlay, trace: TraceRecord, target: Sequence[int], seq: Sequence[int]
) -> bool:
    """Check the five trajectory conditions directly from the overlay's raw sets."""
    seq = tuple(seq)
    t = tuple(target)
    n = len(seq)
    if n < 3 or seq[0] != trace.m_s or seq[1] != trace.u_s or seq[-2] != trace.u_e or seq[-1] != trace.m_e:
        return False
    if any(v in h.malicious for v in seq[1:-1]):
        return False
    if any(v not in h.coord for v in seq):
        return False
    nodes = h.known | h.dummies
    if any(v not in nodes for v in seq):
        return False
    d = [_oracle_distance(h.coord[v], t) for v in seq]
    for i in range(n - 1):
        a, b = seq[i], seq[i + 1]
        if a == b:
            return False
        pair = (min(a, b), max(a, b))
        linked = pair in h.e_obs or (
            a not in h.malicious and b not in h.malicious and pair not in h.not_e_obs
        )
        if not linked:
            return False
        if not d[i + 1] < d[i]:
            return False
        nbr_dists = [
            _oracle_distance(h.coord[x], t)
            for p, q in h.e_obs
            if a in (p, q)
            for x in ((q,) if p == a else (p,))
            if x in h.coord
        ]
        if nbr_dists and d[i + 1] > min(nbr_dists):
            return False
    return True


def brute_force_trajectory_oracle(
    h: HypotheticalOverlay,
    trace: TraceRecord,
    target: Sequence[int] | None = None,
    max_nodes: int = 20,
) -> frozenset[tuple[int, ...]]:
    """Exhaustive enumeration of simple sequences, filtered by :func:`is_plausible_trajectory`.

    Only meant for tiny overlays used in tests.
    """
    if len(h) > max_nodes:
        raise ValueError(f"oracle limited to {max_nodes} nodes, overlay has {len(h)}")
    t = _target(trace, target)
    ends = (trace.m_s, trace.u_s, trace.u_e, trace.m_e)
    pool = [v for v in h.nodes() if v not in ends]
    if trace.u_s in h.coord and trace.u_e in h.coord:
        width = max(0, _oracle_distance(h.coord[trace.u_s], t) - _oracle_distance(h.coord[trace.u_e], t) - 1)
    else:
        width = 0
    found = set()
    shortest = (trace.m_s, trace.u_s, trace.m_e)
    if is_plausible_trajectory(h, trace, t, shortest):
        found.add(shortest)
    for k in range(min(width, len(pool)) + 1):
        for mid in permutations(pool, k):
            seq = (trace.m_s, trace.u_s, *mid, trace.u_e, trace.m_e)
            if is_plausible_trajectory(h, trace, t, seq):
                found.add(seq)
    return frozenset(found)


def format_trajectory(
    h: HypotheticalOverlay, seq: Iterable[int], name: Callable[[int], str] = str
) -> str:
    """``->``-joined labels; dummies show as ``D:<coordinate>``, known nodes via ``name``."""
    return "->".join(h.label(v) if v in h.dummies else name(v) for v in seq)
