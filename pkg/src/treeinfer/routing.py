"""Tree distance, greedy forwarding and trace records seen by colluding nodes."""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, Union

from .embedding import (
    Coord,
    Digest,
    ObfuscatedCoordinate,
    common_prefix_length,
    default_digest,
    obfuscated_prefix_length,
)
from .overlay import OverlayGraph

Target = Union[Coord, ObfuscatedCoordinate]

__all__ = [
    "RoutingError",
    "RoutePath",
    "TraceRecord",
    "tree_distance",
    "target_distance",
    "greedy_next_hop",
    "route",
    "extract_trace_records",
    "write_route_log",
]


class RoutingError(RuntimeError):
    """Greedy forwarding got stuck before reaching the target."""

    def __init__(self, message: str, path: Sequence[int]):
        super().__init__(message)
        self.path = tuple(path)


def tree_distance(a: Sequence[int], b: Sequence[int]) -> int:
    """Hop distance in the spanning tree between the holders of ``a`` and ``b``."""
    return len(a) + len(b) - 2 * common_prefix_length(a, b)


def target_distance(target: Target, digest: Digest = default_digest) -> Callable[[Sequence[int]], int]:
    """Distance-to-target function for a plain or obfuscated target.

    An obfuscated target is measured as if it had its full padded length.
    """
    if isinstance(target, ObfuscatedCoordinate):
        padded = len(target)
        return lambda c: padded + len(c) - 2 * obfuscated_prefix_length(c, target, digest)
    t = tuple(target)
    return lambda c: tree_distance(c, t)


@dataclass(frozen=True)
class RoutePath:
    nodes: tuple[int, ...]
    target: Target

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def hops(self) -> int:
        return len(self.nodes) - 1


@dataclass(frozen=True)
class TraceRecord:
    """Segment ``m_s, u_s, ..., u_e, m_e`` between two consecutive malicious nodes."""

    m_s: int
    u_s: int
    u_e: int
    m_e: int
    target: Target
    segment: tuple[int, ...] = ()


def greedy_next_hop(
    current: int,
    coords: Sequence[Coord],
    g: OverlayGraph,
    target: Target,
    rng: random.Random,
    best: bool = True,
    distance: Callable[[Sequence[int]], int] | None = None,
) -> int | None:
    """Neighbor strictly closer to ``target`` than ``current``, or ``None``.

    With ``best`` the choice is among the closest such neighbors; otherwise
    among all strictly closer ones. Ties are broken with ``rng``.
    """
    dist = distance or target_distance(target)
    here = dist(coords[current])
    closer: list[tuple[int, int]] = []
    for v in g.adjacency[current]:
        d = dist(coords[v])
        if d < here:
            closer.append((d, v))
    if not closer:
        return None
    if best:
        low = min(d for d, _ in closer)
        choices = [v for d, v in closer if d == low]
    else:
        choices = [v for _, v in closer]
    return choices[0] if len(choices) == 1 else rng.choice(choices)


def route(
    g: OverlayGraph,
    coords: Sequence[Coord],
    source: int,
    target: Target,
    rng: random.Random,
    best: bool = True,
    digest: Digest = default_digest,
) -> RoutePath:
    """Greedily forward from ``source`` until no neighbor is closer to ``target``.

    Raises :class:`RoutingError` if forwarding stops anywhere but the
    target's holder.
    """
    dist = target_distance(target, digest)
    path = [source]
    u = source
    while True:
        v = greedy_next_hop(u, coords, g, target, rng, best=best, distance=dist)
        if v is None:
            break
        path.append(v)
        u = v
    if isinstance(target, ObfuscatedCoordinate):
        delivered = obfuscated_prefix_length(coords[u], target, digest) == len(coords[u])
    else:
        delivered = tuple(coords[u]) == tuple(target)
    if not delivered:
        raise RoutingError(f"greedy routing stuck at node {u} after {len(path) - 1} hops", path)
    return RoutePath(tuple(path), target)


def extract_trace_records(path: RoutePath, malicious: Iterable[int]) -> list[TraceRecord]:
    """One record per stretch of honest nodes between consecutive malicious nodes."""
    bad = set(malicious)
    nodes = path.nodes
    positions = [i for i, v in enumerate(nodes) if v in bad]
    records = []
    for i, j in zip(positions, positions[1:]):
        if j - i < 2:
            continue
        records.append(
            TraceRecord(nodes[i], nodes[i + 1], nodes[j - 1], nodes[j], path.target, nodes[i : j + 1])
        )
    return records


def write_route_log(paths: Iterable[RoutePath], fh) -> None:
    """CSV rows ``msg_id,hop_index,node_id`` to an open text stream."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["msg_id", "hop_index", "node_id"])
    for msg_id, p in enumerate(paths):
        for hop, v in enumerate(p.nodes):
            w.writerow([msg_id, hop, v])
