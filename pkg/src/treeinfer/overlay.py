"""Overlay graph model, edge-list ingestion and synthetic topologies."""

from __future__ import annotations

import gzip
import os
from bisect import bisect_left
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import networkx as nx

__all__ = [
    "GraphError",
    "EdgeListError",
    "OverlayGraph",
    "load_edge_list",
    "write_edge_list",
    "largest_connected_component",
    "connected_components",
    "neighborhood",
    "hop_distances",
    "generate_synthetic",
]


class GraphError(ValueError):
    pass


class EdgeListError(GraphError):
    def __init__(self, path, lineno: int, line: str, reason: str):
        self.path = path
        self.lineno = lineno
        self.line = line
        super().__init__(f"{path}:{lineno}: {reason}: {line!r}")


@dataclass(frozen=True, eq=False)
class OverlayGraph:
    """Immutable undirected graph on dense node ids ``0..n-1``.

    ``adjacency[u]`` is the ascending tuple of neighbors of ``u``.
    ``original_ids[u]`` is the id ``u`` had in the source it was built from.
    """

    adjacency: tuple[tuple[int, ...], ...]
    original_ids: tuple[int, ...]

    @classmethod
    def from_edges(
        cls,
        n: int,
        edges: Iterable[tuple[int, int]],
        original_ids: Sequence[int] | None = None,
    ) -> "OverlayGraph":
        """Build a graph from an edge iterable; self-loops and duplicates are dropped."""
        nbrs: list[set[int]] = [set() for _ in range(n)]
        for u, v in edges:
            if not (0 <= u < n and 0 <= v < n):
                raise GraphError(f"edge ({u}, {v}) outside node range 0..{n - 1}")
            if u == v:
                continue
            nbrs[u].add(v)
            nbrs[v].add(u)
        ids = tuple(range(n)) if original_ids is None else tuple(original_ids)
        if len(ids) != n:
            raise GraphError("original_ids length does not match node count")
        return cls(tuple(tuple(sorted(s)) for s in nbrs), ids)

    @property
    def n(self) -> int:
        return len(self.adjacency)

    def __len__(self) -> int:
        return len(self.adjacency)

    def nodes(self) -> range:
        return range(len(self.adjacency))

    def neighbors(self, u: int) -> tuple[int, ...]:
        return self.adjacency[u]

    def degree(self, u: int) -> int:
        return len(self.adjacency[u])

    def has_edge(self, u: int, v: int) -> bool:
        row = self.adjacency[u]
        i = bisect_left(row, v)
        return i < len(row) and row[i] == v

    def edges(self) -> Iterator[tuple[int, int]]:
        """Yield every edge once as ``(u, v)`` with ``u < v``, in ascending order."""
        for u, row in enumerate(self.adjacency):
            for v in row[bisect_left(row, u + 1):]:
                yield u, v

    @property
    def edge_count(self) -> int:
        return sum(len(row) for row in self.adjacency) // 2

    def degree_sequence(self) -> list[int]:
        return sorted((len(row) for row in self.adjacency), reverse=True)

    def subgraph(self, keep: Iterable[int]) -> "OverlayGraph":
        """Induced subgraph on ``keep``, re-densified in ascending id order."""
        kept = sorted(set(keep))
        index = {u: i for i, u in enumerate(kept)}
        adjacency = tuple(
            tuple(index[v] for v in self.adjacency[u] if v in index) for u in kept
        )
        return OverlayGraph(adjacency, tuple(self.original_ids[u] for u in kept))

    def to_networkx(self) -> nx.Graph:
        h = nx.Graph()
        h.add_nodes_from(self.nodes())
        h.add_edges_from(self.edges())
        return h

    def is_connected(self) -> bool:
        return self.n > 0 and len(hop_distances(self, 0)) == self.n


def _open_text(path):
    if os.fspath(path).endswith(".gz"):
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, encoding="utf-8")


def load_edge_list(path, mutual_only: bool = False) -> OverlayGraph:
    """Read a whitespace-separated ``u v`` edge list (SNAP style).

    Blank lines and lines starting with ``#`` are skipped. With ``mutual_only``
    a pair contributes an edge only when both directions appear in the file.
    Only nodes incident to a retained edge are kept; they are renumbered densely
    in ascending order of their original id.
    """
    arcs: set[tuple[int, int]] = set()
    with _open_text(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise EdgeListError(path, lineno, line, "expected two node ids")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise EdgeListError(path, lineno, line, "node ids must be integers") from None
            if u < 0 or v < 0:
                raise EdgeListError(path, lineno, line, "node ids must be non-negative")
            if u != v:
                arcs.add((u, v))

    if mutual_only:
        pairs = {(u, v) for u, v in arcs if u < v and (v, u) in arcs}
    else:
        pairs = {(min(u, v), max(u, v)) for u, v in arcs}
    if not pairs:
        raise GraphError(f"{path}: edge list yields an empty graph")

    ids = sorted({x for pair in pairs for x in pair})
    index = {x: i for i, x in enumerate(ids)}
    return OverlayGraph.from_edges(
        len(ids), ((index[u], index[v]) for u, v in pairs), original_ids=ids
    )


def write_edge_list(g: OverlayGraph, path, original_ids: bool = False) -> None:
    """Emit ``g`` in the ingestion format, one ``u v`` line per edge with ``u < v``."""
    ids = g.original_ids if original_ids else range(g.n)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u, v in g.edges():
            fh.write(f"{ids[u]} {ids[v]}\n")


def hop_distances(g: OverlayGraph, source: int) -> dict[int, int]:
    """Breadth-first hop distance from ``source`` to every reachable node."""
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        du = dist[u] + 1
        for v in g.adjacency[u]:
            if v not in dist:
                dist[v] = du
                queue.append(v)
    return dist


def connected_components(g: OverlayGraph) -> list[list[int]]:
    seen = [False] * g.n
    components = []
    for s in g.nodes():
        if seen[s]:
            continue
        comp = list(hop_distances(g, s))
        for u in comp:
            seen[u] = True
        components.append(sorted(comp))
    return components


def largest_connected_component(g: OverlayGraph) -> OverlayGraph:
    """Induced subgraph of the largest component.

    Ties go to the component holding the smallest original id.
    """
    if g.n == 0:
        raise GraphError("empty graph has no components")
    components = connected_components(g)
    best = max(
        components,
        key=lambda comp: (len(comp), -min(g.original_ids[u] for u in comp)),
    )
    if len(best) == g.n:
        return g
    return g.subgraph(best)


def neighborhood(g: OverlayGraph, subset: Iterable[int]) -> set[int]:
    """Nodes outside ``subset`` adjacent to at least one member of it."""
    members = set(subset)
    for u in members:
        if not (isinstance(u, int) and 0 <= u < g.n):
            raise GraphError(f"unknown node id {u!r}")
    out: set[int] = set()
    for u in members:
        out.update(g.adjacency[u])
    return out - members


SYNTHETIC_MODELS = ("scale-free", "small-world")


def generate_synthetic(
    model: str, n: int, seed: int = 0, max_attempts: int = 32, **params
) -> OverlayGraph:
    """Connected synthetic overlay, deterministic for a given seed.

    ``scale-free`` is Barabasi-Albert preferential attachment (parameter ``m``,
    default 2). ``small-world`` is Watts-Strogatz (``k`` default 4, ``p``
    default 0.1). Disconnected draws are retried with derived seeds.
    """
    if n < 2:
        raise GraphError("synthetic graphs need at least two nodes")
    if model == "scale-free":
        m = int(params.pop("m", 2))
        if not 1 <= m < n:
            raise GraphError(f"scale-free needs 1 <= m < n, got m={m}")
        build = lambda s: nx.barabasi_albert_graph(n, m, seed=s)  # noqa: E731
    elif model == "small-world":
        k = int(params.pop("k", 4))
        p = float(params.pop("p", 0.1))
        if not (2 <= k < n) or not 0.0 <= p <= 1.0:
            raise GraphError(f"small-world needs 2 <= k < n and 0 <= p <= 1, got k={k}, p={p}")
        build = lambda s: nx.watts_strogatz_graph(n, k, p, seed=s)  # noqa: E731
    else:
        raise GraphError(f"unknown synthetic model {model!r}; expected one of {SYNTHETIC_MODELS}")
    if params:
        raise GraphError(f"unexpected parameters for {model}: {sorted(params)}")

    for attempt in range(max_attempts):
        h = build(seed + attempt * 1_000_003)
        g = OverlayGraph.from_edges(n, h.edges())
        if g.is_connected():
            return g
    raise GraphError(f"{model} generator produced no connected graph in {max_attempts} attempts")
