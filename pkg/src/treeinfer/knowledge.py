"""Adversary knowledge about the overlay and tree-link inference from coordinates.

The adversary tracks known nodes (malicious, compromised, pseudonymous),
links known to exist, links known to be absent, and the coordinates it has
learned. Every newly seen coordinate discloses its whole ancestor chain; in
enumeration mode each element ``n`` additionally discloses the ``n`` lower
indexed siblings.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .embedding import Coord, EmbeddingMode, format_coordinate
from .overlay import OverlayGraph, neighborhood

__all__ = [
    "NodeClass",
    "KnownNode",
    "KnowledgeBase",
    "ObservationReport",
    "ConsistencyError",
    "init_knowledge",
    "observe_coordinate",
    "merge_coordinate_bindings",
    "count_pseudonyms",
    "verify_against_ground_truth",
    "write_knowledge",
]

ENUMERATION = EmbeddingMode.enumeration()


class ConsistencyError(RuntimeError):
    """Observation contradicts what the adversary already knows."""


class NodeClass(str, enum.Enum):
    MALICIOUS = "malicious"
    COMPROMISED = "compromised"
    PSEUDONYMOUS = "pseudonymous"


@dataclass
class KnownNode:
    id: int
    kind: NodeClass
    binding: int | None = None

    def __post_init__(self):
        if (self.binding is None) != (self.kind is NodeClass.PSEUDONYMOUS):
            raise ValueError("only pseudonymous nodes lack an overlay binding")


def _pair(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


@dataclass
class ObservationReport:
    new_nodes: int = 0
    new_links: int = 0
    bound: bool = False
    merged: int = 0

    @property
    def changed(self) -> bool:
        return bool(self.new_nodes or self.new_links or self.bound or self.merged)


@dataclass
class KnowledgeBase:
    """Mutable adversary knowledge.

    Node ids are opaque integers local to this knowledge base. Pseudonyms are
    deduplicated by coordinate.
    """

    nodes: dict[int, KnownNode] = field(default_factory=dict)
    by_binding: dict[int, int] = field(default_factory=dict)
    coord_of: dict[int, Coord] = field(default_factory=dict)
    node_at: dict[Coord, int] = field(default_factory=dict)
    e_obs: set[tuple[int, int]] = field(default_factory=set)
    not_e_obs: set[tuple[int, int]] = field(default_factory=set)
    observed_links: set[tuple[int, int]] = field(default_factory=set)
    adjacency: dict[int, set[int]] = field(default_factory=dict)
    _next_id: int = 0
    _closed: set[tuple[bool, Coord]] = field(default_factory=set, repr=False)

    # -- queries -----------------------------------------------------------

    def __len__(self) -> int:
        return len(self.nodes)

    def known_id(self, overlay_node: int) -> int | None:
        return self.by_binding.get(overlay_node)

    def kind(self, kid: int) -> NodeClass:
        return self.nodes[kid].kind

    def ids_of(self, kind: NodeClass) -> set[int]:
        return {k for k, node in self.nodes.items() if node.kind is kind}

    @property
    def malicious(self) -> set[int]:
        return self.ids_of(NodeClass.MALICIOUS)

    def has_link(self, a: int, b: int) -> bool:
        return _pair(a, b) in self.e_obs

    def known_absent(self, a: int, b: int) -> bool:
        return _pair(a, b) in self.not_e_obs

    def neighbors(self, kid: int) -> set[int]:
        return self.adjacency.get(kid, set())

    # -- mutation primitives -----------------------------------------------

    def add_node(self, kind: NodeClass, binding: int | None = None) -> int:
        kid = self._next_id
        self._next_id += 1
        self.nodes[kid] = KnownNode(kid, kind, binding)
        self.adjacency[kid] = set()
        if binding is not None:
            if binding in self.by_binding:
                raise ConsistencyError(f"overlay node {binding} already known")
            self.by_binding[binding] = kid
        return kid

    def add_link(self, a: int, b: int, observed: bool = False) -> bool:
        if a == b:
            raise ConsistencyError(f"self-link on known node {a}")
        key = _pair(a, b)
        if key in self.not_e_obs:
            raise ConsistencyError(f"link {key} is known to be absent")
        if observed:
            self.observed_links.add(key)
        if key in self.e_obs:
            return False
        self.e_obs.add(key)
        self.adjacency[a].add(b)
        self.adjacency[b].add(a)
        return True

    def add_absent_link(self, a: int, b: int) -> None:
        """Record that ``a`` and ``b`` are not linked (no inference rule populates this)."""
        key = _pair(a, b)
        if key in self.e_obs:
            raise ConsistencyError(f"link {key} is known to exist")
        self.not_e_obs.add(key)

    def bind_coordinate(self, kid: int, c: Coord) -> None:
        holder = self.node_at.get(c)
        if holder is not None and holder != kid:
            raise ConsistencyError(f"coordinate {c} already held by known node {holder}")
        old = self.coord_of.get(kid)
        if old is not None and old != c:
            raise ConsistencyError(f"known node {kid} already has coordinate {old}, not {c}")
        self.coord_of[kid] = c
        self.node_at[c] = kid

    def ensure_coordinate(self, c: Coord, report: ObservationReport) -> int:
        kid = self.node_at.get(c)
        if kid is None:
            kid = self.add_node(NodeClass.PSEUDONYMOUS)
            self.bind_coordinate(kid, c)
            report.new_nodes += 1
        return kid


def init_knowledge(g: OverlayGraph, malicious: Iterable[int]) -> KnowledgeBase:
    """Knowledge an adversary controlling ``malicious`` starts with.

    It knows every malicious node and every neighbor of one (compromised), all
    overlay links among those nodes, no absent links and no coordinates.
    """
    bad = sorted(set(malicious))
    kb = KnowledgeBase()
    for m in bad:
        kb.add_node(NodeClass.MALICIOUS, m)
    for u in sorted(neighborhood(g, bad)):
        kb.add_node(NodeClass.COMPROMISED, u)
    for u, kid in kb.by_binding.items():
        for v in g.adjacency[u]:
            other = kb.by_binding.get(v)
            if other is not None and u < v:
                kb.add_link(kid, other, observed=True)
    return kb


def observe_coordinate(
    kb: KnowledgeBase,
    c: Sequence[int],
    observed: int | None = None,
    mode: EmbeddingMode = ENUMERATION,
) -> ObservationReport:
    """Fold a coordinate observation into ``kb``.

    ``observed`` is the overlay id of the malicious or compromised node that
    announced ``c`` as its own; ``None`` means the coordinate was seen without
    an identity (e.g. as a message target).
    """
    c = tuple(c)
    report = ObservationReport()
    if observed is not None:
        kid = kb.by_binding.get(observed)
        if kid is None:
            raise KeyError(f"overlay node {observed} is neither malicious nor compromised")
        old = kb.coord_of.get(kid)
        if old is not None and old != c:
            raise ConsistencyError(f"node {observed} announced {c} after {old}")
        holder = kb.node_at.get(c)
        if holder is None:
            kb.bind_coordinate(kid, c)
            report.bound = True
        elif holder != kid:
            merge_coordinate_bindings(kb, kid, holder)
            report.bound = True
            report.merged += 1
    else:
        kb.ensure_coordinate(c, report)

    enumerated = mode.is_enumeration
    for length in range(len(c), 0, -1):
        key = (enumerated, c[:length])
        if key in kb._closed:
            break
        parent = c[: length - 1]
        pid = kb.ensure_coordinate(parent, report)
        if kb.add_link(kb.node_at[c[:length]], pid):
            report.new_links += 1
        if enumerated:
            for j in range(c[length - 1]):
                sib = parent + (j,)
                if kb.add_link(kb.ensure_coordinate(sib, report), pid):
                    report.new_links += 1
                kb._closed.add((True, sib))
        kb._closed.add(key)
    return report


def merge_coordinate_bindings(kb: KnowledgeBase, node_a: int, node_b: int) -> int:
    """Merge two known nodes that turned out to be the same participant.

    The identified node (if any) survives and absorbs the other's coordinate
    and links. Returns the surviving id.
    """
    if node_a == node_b:
        return node_a
    a, b = kb.nodes[node_a], kb.nodes[node_b]
    if a.binding is not None and b.binding is not None:
        raise ConsistencyError(
            f"known nodes {node_a} and {node_b} are bound to different overlay nodes"
        )
    keep, drop = (a, b) if b.binding is None else (b, a)
    c_keep, c_drop = kb.coord_of.get(keep.id), kb.coord_of.get(drop.id)
    if c_keep is not None and c_drop is not None and c_keep != c_drop:
        raise ConsistencyError(f"cannot merge nodes with coordinates {c_keep} and {c_drop}")

    if c_drop is not None:
        del kb.node_at[c_drop]
        del kb.coord_of[drop.id]
        kb.bind_coordinate(keep.id, c_drop)

    for other in kb.adjacency.pop(drop.id):
        kb.adjacency[other].discard(drop.id)
        key = _pair(drop.id, other)
        kb.e_obs.discard(key)
        observed = key in kb.observed_links
        kb.observed_links.discard(key)
        if other != keep.id:
            kb.add_link(keep.id, other, observed=observed)
    for key in [k for k in kb.not_e_obs if drop.id in k]:
        kb.not_e_obs.discard(key)
        other = key[0] if key[1] == drop.id else key[1]
        if other != keep.id:
            kb.add_absent_link(keep.id, other)
    del kb.nodes[drop.id]
    return keep.id


def count_pseudonyms(kb: KnowledgeBase, literal: bool = False) -> int:
    """Number of inferred participants the adversary cannot yet identify.

    With ``literal`` the count is every known node outside the neighborhood
    of the malicious set in the observed overlay, malicious nodes included.
    """
    if not literal:
        return sum(1 for node in kb.nodes.values() if node.kind is NodeClass.PSEUDONYMOUS)
    bad = kb.malicious
    near = set()
    for m in bad:
        near.update(kb.adjacency[m])
    near -= bad
    return len(kb.nodes) - len(near)


def verify_against_ground_truth(
    kb: KnowledgeBase, g: OverlayGraph, coords: Sequence[Coord]
) -> list[str]:
    """Check ``kb`` against the true overlay and embedding; returns violations."""
    holder = {c: u for u, c in enumerate(coords)}
    truth: dict[int, int] = {}
    problems = []
    for kid, node in kb.nodes.items():
        c = kb.coord_of.get(kid)
        if node.binding is not None:
            truth[kid] = node.binding
            if c is not None and tuple(coords[node.binding]) != c:
                problems.append(f"node {kid} bound to {node.binding} has coordinate {c}, truth {coords[node.binding]}")
        elif c not in holder:
            problems.append(f"pseudonym {kid} has coordinate {c} held by nobody")
        else:
            truth[kid] = holder[c]
    for a, b in kb.e_obs:
        if a in truth and b in truth and not g.has_edge(truth[a], truth[b]):
            problems.append(f"link ({a}, {b}) maps to non-edge ({truth[a]}, {truth[b]})")
    for a, b in kb.not_e_obs:
        if a in truth and b in truth and g.has_edge(truth[a], truth[b]):
            problems.append(f"absent link ({a}, {b}) maps to edge ({truth[a]}, {truth[b]})")
    if len(set(truth.values())) != len(truth):
        problems.append("two known nodes map to the same overlay node")
    return problems


def write_knowledge(kb: KnowledgeBase, nodes_fh, links_fh) -> None:
    """Snapshot as two CSV streams: known nodes and known links.

    The root coordinate is written as an empty field, a missing one as ``-``.
    """
    w = csv.writer(nodes_fh, lineterminator="\n")
    w.writerow(["pseudo_id", "class", "coordinate"])
    for kid in sorted(kb.nodes):
        c = kb.coord_of.get(kid)
        w.writerow([kid, kb.nodes[kid].kind.value, "-" if c is None else format_coordinate(c)])
    w = csv.writer(links_fh, lineterminator="\n")
    w.writerow(["id_a", "id_b", "link_kind"])
    for a, b in sorted(kb.e_obs):
        w.writerow([a, b, "observed" if (a, b) in kb.observed_links else "inferred-tree"])
