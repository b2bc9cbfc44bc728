"""Rooted spanning tree embeddings: tree formation, coordinates, obfuscation."""

from __future__ import annotations

import csv
import hashlib
import random
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .overlay import GraphError, OverlayGraph

Coord = tuple[int, ...]
Digest = Callable[[int, int], bytes]

__all__ = [
    "Coord",
    "EmbeddingMode",
    "SpanningTree",
    "ObfuscatedCoordinate",
    "build_bfs_tree",
    "build_adversarial_tree",
    "assign_coordinates",
    "common_prefix_length",
    "default_digest",
    "default_padded_length",
    "obfuscate_coordinate",
    "obfuscated_prefix_length",
    "format_coordinate",
    "parse_coordinate",
    "write_coordinates",
    "read_coordinates",
]


@dataclass(frozen=True)
class EmbeddingMode:
    """Coordinate element policy: child enumeration indexes or random b-bit values."""

    kind: str = "enumeration"
    bits: int = 128

    def __post_init__(self):
        if self.kind not in ("enumeration", "random"):
            raise ValueError(f"unknown embedding mode {self.kind!r}")
        if self.bits < 1:
            raise ValueError("random mode needs at least one bit per element")

    @classmethod
    def enumeration(cls) -> "EmbeddingMode":
        return cls("enumeration")

    @classmethod
    def random(cls, bits: int = 128) -> "EmbeddingMode":
        return cls("random", bits)

    @classmethod
    def parse(cls, text: str, bits: int = 128) -> "EmbeddingMode":
        key = text.strip().lower()
        if key in ("enum", "enumeration", "gfr"):
            return cls.enumeration()
        if key in ("random", "rand", "voute"):
            return cls.random(bits)
        raise ValueError(f"unknown embedding mode {text!r}; use 'enum' or 'random'")

    @property
    def is_enumeration(self) -> bool:
        return self.kind == "enumeration"

    @property
    def label(self) -> str:
        return "enum" if self.is_enumeration else "random"


@dataclass(frozen=True)
class SpanningTree:
    """Rooted spanning tree over an overlay.

    ``parent[root]`` is ``None``. ``children[u]`` lists children in attachment
    order. ``order`` lists nodes in the order they joined the tree.
    ``fallback`` holds nodes that could only attach through a malicious parent
    in the adversarial construction.
    """

    root: int
    parent: tuple[int | None, ...]
    children: tuple[tuple[int, ...], ...]
    depth: tuple[int, ...]
    order: tuple[int, ...]
    fallback: frozenset[int] = frozenset()

    @property
    def n(self) -> int:
        return len(self.parent)

    def tree_edges(self) -> Iterable[tuple[int, int]]:
        for v, p in enumerate(self.parent):
            if p is not None:
                yield p, v

    def path_to_root(self, v: int) -> list[int]:
        path = [v]
        while self.parent[path[-1]] is not None:
            path.append(self.parent[path[-1]])
        return path


def _grow_tree(
    g: OverlayGraph,
    root: int,
    rng: random.Random,
    may_parent: Callable[[int, int, bool], bool],
) -> SpanningTree:
    """Synchronous BFS rounds.

    In each round every unattached node adjacent to the previous round's
    attachments picks a parent uniformly among those that ``may_parent(p, v,
    relaxed)`` accepts. When a round attaches nothing while nodes remain, the
    rule is relaxed for a single round in which every attached node adjacent
    to the remainder is offered as a parent, shallowest candidates first.
    """
    n = g.n
    if not 0 <= root < n:
        raise GraphError(f"root {root} not in graph")
    parent: list[int | None] = [None] * n
    depth = [-1] * n
    children: list[list[int]] = [[] for _ in range(n)]
    depth[root] = 0
    order = [root]
    frontier = [root]
    relaxed = False
    fallback: set[int] = set()

    while True:
        candidates: dict[int, list[int]] = {}
        for p in frontier:
            for v in g.adjacency[p]:
                if depth[v] < 0 and may_parent(p, v, relaxed):
                    candidates.setdefault(v, []).append(p)
        if not candidates:
            if len(order) == n:
                break
            if relaxed:
                unreached = next(v for v in range(n) if depth[v] < 0)
                raise GraphError(f"graph is disconnected: node {unreached} not reachable from root {root}")
            relaxed = True
            frontier = [
                p for p in order if any(depth[v] < 0 for v in g.adjacency[p])
            ]
            continue
        attached = sorted(candidates)
        for v in attached:
            cands = candidates[v]
            if relaxed:
                shallow = min(depth[p] for p in cands)
                cands = [p for p in cands if depth[p] == shallow]
            p = cands[0] if len(cands) == 1 else rng.choice(cands)
            parent[v] = p
            depth[v] = depth[p] + 1
            children[p].append(v)
            order.append(v)
            if relaxed:
                fallback.add(v)
        frontier = attached
        relaxed = False

    return SpanningTree(
        root=root,
        parent=tuple(parent),
        children=tuple(tuple(c) for c in children),
        depth=tuple(depth),
        order=tuple(order),
        fallback=frozenset(fallback),
    )


def build_bfs_tree(g: OverlayGraph, root: int, rng: random.Random) -> SpanningTree:
    """BFS spanning tree; equal-depth parent candidates are chosen uniformly at random."""
    return _grow_tree(g, root, rng, lambda p, v, relaxed: True)


def build_adversarial_tree(
    g: OverlayGraph, root: int, malicious: Iterable[int], rng: random.Random
) -> SpanningTree:
    """BFS tree where malicious nodes refuse to be parents (leaf-only attack).

    A malicious non-root node never offers itself as parent and waits to
    become the child of a non-malicious neighbor; only when it has no
    non-malicious neighbor at all does it attach beneath a malicious one. A
    malicious root behaves correctly. Honest nodes reachable only through
    malicious nodes are attached in a relaxed phase and listed in
    ``SpanningTree.fallback``.
    """
    bad = frozenset(malicious)
    honest_nbr = [any(w not in bad for w in g.adjacency[u]) for u in range(g.n)]

    def may_parent(p: int, v: int, relaxed: bool) -> bool:
        if relaxed:
            return True
        if v in bad:
            return p not in bad or not honest_nbr[v]
        return p not in bad or p == root

    return _grow_tree(g, root, rng, may_parent)


def assign_coordinates(tree: SpanningTree, mode: EmbeddingMode, rng: random.Random) -> list[Coord]:
    """Coordinates indexed by node id; the root holds ``()``."""
    coords: list[Coord | None] = [None] * tree.n
    coords[tree.root] = ()
    for u in tree.order:
        cu = coords[u]
        kids = tree.children[u]
        if not kids:
            continue
        if mode.is_enumeration:
            for i, v in enumerate(kids):
                coords[v] = cu + (i,)
        else:
            if len(kids) > 1 << mode.bits:
                raise ValueError(
                    f"node {u} has {len(kids)} children; {mode.bits}-bit elements cannot keep them distinct"
                )
            used: set[int] = set()
            for v in kids:
                r = rng.getrandbits(mode.bits)
                while r in used:
                    r = rng.getrandbits(mode.bits)
                used.add(r)
                coords[v] = cu + (r,)
    return coords  # type: ignore[return-value]


def common_prefix_length(a: Sequence[int], b: Sequence[int]) -> int:
    k = 0
    for x, y in zip(a, b):
        if x != y:
            break
        k += 1
    return k


@dataclass(frozen=True)
class ObfuscatedCoordinate:
    """Padded coordinate whose elements are published only as salted digests."""

    digests: tuple[bytes, ...]
    salts: tuple[int, ...]

    def __post_init__(self):
        if len(self.digests) != len(self.salts):
            raise ValueError("digest and salt vectors differ in length")

    def __len__(self) -> int:
        return len(self.digests)


def default_digest(salt: int, element: int) -> bytes:
    return hashlib.sha256(f"{salt:x}:{element:x}".encode("ascii")).digest()


def default_padded_length(coords: Iterable[Sequence[int]], slack: int = 4) -> int:
    """Padded length for obfuscation: the longest coordinate plus ``slack``."""
    return max((len(c) for c in coords), default=0) + slack


def obfuscate_coordinate(
    c: Sequence[int],
    length: int,
    mode: EmbeddingMode,
    rng: random.Random,
    digest: Digest = default_digest,
    salt_bits: int = 128,
) -> ObfuscatedCoordinate:
    """Pad ``c`` to ``length`` with random b-bit values and hash each element with a fresh salt."""
    if mode.is_enumeration:
        raise ValueError("obfuscation applies to random-element coordinates only")
    if len(c) > length:
        raise ValueError(f"padded length {length} is shorter than coordinate length {len(c)}")
    padded = list(c) + [rng.getrandbits(mode.bits) for _ in range(length - len(c))]
    salts = tuple(rng.getrandbits(salt_bits) for _ in padded)
    return ObfuscatedCoordinate(
        tuple(digest(s, x) for s, x in zip(salts, padded)), salts
    )


def obfuscated_prefix_length(
    plain: Sequence[int], obf: ObfuscatedCoordinate, digest: Digest = default_digest
) -> int:
    """Longest prefix of ``plain`` whose digests match ``obf`` position by position."""
    k = 0
    for x, s, d in zip(plain, obf.salts, obf.digests):
        if digest(s, x) != d:
            break
        k += 1
    return k


def format_coordinate(c: Sequence[int]) -> str:
    return ":".join(str(x) for x in c)


def parse_coordinate(text: str) -> Coord:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(x) for x in text.split(":"))


def write_coordinates(coords: Sequence[Coord], path, ids: Sequence[int] | None = None) -> None:
    """CSV with columns ``node_id,coordinate``; the root's coordinate is empty.

    ``ids`` renames node ``u`` to ``ids[u]`` on output.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id", "coordinate"])
        for u, c in enumerate(coords):
            w.writerow([u if ids is None else ids[u], format_coordinate(c)])


def read_coordinates(path) -> dict[int, Coord]:
    coords: dict[int, Coord] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        if next(r, None) != ["node_id", "coordinate"]:
            raise ValueError(f"{path}: expected header node_id,coordinate")
        for lineno, row in enumerate(r, start=2):
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected two columns")
            u = int(row[0])
            if u in coords:
                raise ValueError(f"{path}:{lineno}: duplicate node {u}")
            coords[u] = parse_coordinate(row[1])
    return coords
