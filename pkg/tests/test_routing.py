import io
import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenarios import random_connected_graph
from treeinfer.embedding import (
    EmbeddingMode,
    assign_coordinates,
    build_bfs_tree,
    default_padded_length,
    obfuscate_coordinate,
)
from treeinfer.overlay import OverlayGraph
from treeinfer.routing import (
    RoutePath,
    RoutingError,
    TraceRecord,
    extract_trace_records,
    greedy_next_hop,
    route,
    target_distance,
    tree_distance,
    write_route_log,
)

ENUM = EmbeddingMode.enumeration()
coords_st = st.lists(st.integers(0, 3), max_size=6).map(tuple)


def embed(g, root=0, mode=ENUM, seed=0):
    rng = random.Random(seed)
    tree = build_bfs_tree(g, root, rng)
    return tree, assign_coordinates(tree, mode, rng)


def tree_path(tree, a, b):
    up_a, up_b = tree.path_to_root(a), tree.path_to_root(b)
    common = set(up_a) & set(up_b)
    lca = next(v for v in up_a if v in common)
    return up_a[: up_a.index(lca) + 1] + up_b[: up_b.index(lca)][::-1]


# -- distance ------------------------------------------------------------------


@pytest.mark.parametrize(
    "a, b, d",
    [((0,), (1,), 2), ((2, 4, 1), (2, 4), 1), ((0, 1), (0, 2, 0), 3), ((), (), 0), ((), (3, 3), 2)],
)
def test_tree_distance_examples(a, b, d):
    assert tree_distance(a, b) == d


@given(coords_st, coords_st, coords_st)
def test_tree_distance_is_a_metric(a, b, c):
    assert tree_distance(a, a) == 0
    assert tree_distance(a, b) == tree_distance(b, a)
    assert (tree_distance(a, b) == 0) == (a == b)
    assert tree_distance(a, c) <= tree_distance(a, b) + tree_distance(b, c)


@given(coords_st, coords_st, coords_st)
def test_equal_length_coordinates_have_even_distance_gap(u, v, t):
    if len(u) == len(v):
        assert (tree_distance(u, t) - tree_distance(v, t)) % 2 == 0


def test_tree_distance_equals_hops_in_tree():
    rng = random.Random(4)
    g = random_connected_graph(rng, 40)
    tree, coords = embed(g, 5)
    for a, b in itertools.combinations(range(g.n), 2):
        assert tree_distance(coords[a], coords[b]) == len(tree_path(tree, a, b)) - 1


# -- next hop --------------------------------------------------------------------


def test_next_hop_prefers_closest_neighbor():
    # current (0,1); neighbors (0) and (0,1,0); target (0,0,0)
    coords = [(0, 1), (0,), (0, 1, 0), (0, 0, 0)]
    g = OverlayGraph.from_edges(4, [(0, 1), (0, 2)])
    assert greedy_next_hop(0, coords, g, (0, 0, 0), random.Random(0)) == 1


def test_next_hop_none_at_target():
    coords = [(), (0,)]
    g = OverlayGraph.from_edges(2, [(0, 1)])
    assert greedy_next_hop(1, coords, g, (0,), random.Random(0)) is None


def test_next_hop_ties_are_random():
    # from (0,2,0), parent (0,2) and shortcut neighbor (0,3) are both 2 away from (0,1)
    coords = [(0, 2, 0), (0, 2), (0, 3), (0, 1)]
    g = OverlayGraph.from_edges(4, [(0, 1), (0, 2)])
    picks = {greedy_next_hop(0, coords, g, (0, 1), random.Random(s)) for s in range(40)}
    assert picks == {1, 2}


def test_next_hop_unique_best_is_deterministic():
    coords = [(0,), (0, 1), (0, 2), (0, 2, 0)]
    g = OverlayGraph.from_edges(4, [(0, 1), (0, 2), (0, 3)])
    picks = {greedy_next_hop(0, coords, g, (0, 2, 1), random.Random(s)) for s in range(40)}
    assert picks == {2}


def test_any_closer_neighbor_when_not_best():
    coords = [(0, 1), (0,), (0, 0, 5), (0, 0)]
    g = OverlayGraph.from_edges(4, [(0, 1), (0, 2)])
    picks = {greedy_next_hop(0, coords, g, (0, 0, 5), random.Random(s), best=False) for s in range(40)}
    assert picks == {1, 2}


def test_path_graph_follows_tree():
    g = OverlayGraph.from_edges(6, [(i, i + 1) for i in range(5)])
    tree, coords = embed(g, 2)
    for s, t in itertools.product(range(6), repeat=2):
        p = route(g, coords, s, coords[t], random.Random(0))
        assert list(p.nodes) == tree_path(tree, s, t)


# -- routes ----------------------------------------------------------------------


def test_route_to_self_is_single_node():
    g = OverlayGraph.from_edges(3, [(0, 1), (1, 2)])
    _, coords = embed(g)
    p = route(g, coords, 2, coords[2], random.Random(0))
    assert p.nodes == (2,) and p.hops == 0


def test_tree_only_graph_routes_along_tree_path():
    rng = random.Random(9)
    g = random_connected_graph(rng, 30, extra=0)
    tree, coords = embed(g, 3)
    for s, t in itertools.product(range(0, 30, 3), range(1, 30, 4)):
        assert list(route(g, coords, s, coords[t], rng).nodes) == tree_path(tree, s, t)


def test_shortcut_link_beats_tree_distance():
    # two branches below root 0, joined by a shortcut between their leaves
    g = OverlayGraph.from_edges(10, [(0, 1), (1, 2), (2, 3), (0, 4), (4, 5), (5, 6),
                                     (0, 7), (7, 8), (8, 9), (3, 6)])
    tree, coords = embed(g, 0)
    witnesses = [
        (s, t)
        for s, t in itertools.product(range(10), repeat=2)
        if route(g, coords, s, coords[t], random.Random(0)).hops < tree_distance(coords[s], coords[t])
    ]
    assert (3, 6) in witnesses


def test_stuck_routing_raises_with_partial_path():
    g = OverlayGraph.from_edges(3, [(0, 1)])
    coords = [(), (0,), (1,)]
    with pytest.raises(RoutingError) as exc:
        route(g, coords, 1, (1,), random.Random(0))
    assert exc.value.path == (1, 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 80), st.integers(0, 2**32), st.booleans())
def test_routes_deliver_monotonically(n, seed, best):
    rng = random.Random(seed)
    g = random_connected_graph(rng, n, extra=rng.choice([0, 0.5, 2.0]))
    mode = rng.choice([ENUM, EmbeddingMode.random(32)])
    _, coords = embed(g, rng.randrange(n), mode, seed)
    for _ in range(10):
        s, t = rng.randrange(n), rng.randrange(n)
        p = route(g, coords, s, coords[t], rng, best=best)
        assert p.nodes[0] == s and p.nodes[-1] == t
        assert len(set(p.nodes)) == len(p.nodes)
        d = [tree_distance(coords[v], coords[t]) for v in p.nodes]
        assert all(x > y for x, y in zip(d, d[1:]))
        assert all(g.has_edge(a, b) for a, b in zip(p.nodes, p.nodes[1:]))
        assert p.hops <= tree_distance(coords[s], coords[t])


def test_obfuscated_target_is_delivered():
    rng = random.Random(12)
    g = random_connected_graph(rng, 60)
    mode = EmbeddingMode.random(32)
    _, coords = embed(g, 0, mode)
    padded = default_padded_length(coords)
    assert padded == max(len(c) for c in coords) + 4
    for t in range(0, 60, 7):
        obf = obfuscate_coordinate(coords[t], padded, mode, rng)
        dist = target_distance(obf)
        assert dist(coords[t]) == padded - len(coords[t])
        p = route(g, coords, (t * 13) % 60, obf, rng)
        assert p.nodes[-1] == t


# -- trace records -------------------------------------------------------------


def test_single_segment_record():
    m1, a, b, m2 = 10, 1, 2, 11
    (rec,) = extract_trace_records(RoutePath((m1, a, b, m2), ()), {m1, m2})
    assert (rec.m_s, rec.u_s, rec.u_e, rec.m_e) == (m1, a, b, m2)
    assert rec.segment == (m1, a, b, m2)


def test_consecutive_segments_become_separate_records():
    m1, a, m2, b, c, m3 = 10, 1, 11, 2, 3, 12
    recs = extract_trace_records(RoutePath((m1, a, m2, b, c, m3), (4,)), {m1, m2, m3})
    assert [(r.m_s, r.u_s, r.u_e, r.m_e) for r in recs] == [(m1, a, a, m2), (m2, b, c, m3)]
    assert all(r.target == (4,) for r in recs)


@pytest.mark.parametrize("nodes", [(1, 2, 3), (10, 1, 2), (10, 11, 1), ()])
def test_no_records_without_two_malicious_nodes_around_honest_ones(nodes):
    assert extract_trace_records(RoutePath(nodes, ()), {10, 11}) == []


def test_adjacent_malicious_nodes_yield_no_record():
    recs = extract_trace_records(RoutePath((10, 11, 1, 12), ()), {10, 11, 12})
    assert recs == [TraceRecord(11, 1, 1, 12, (), (11, 1, 12))]


def test_route_log_format():
    buf = io.StringIO()
    write_route_log([RoutePath((3, 1), ()), RoutePath((2,), ())], buf)
    assert buf.getvalue() == "msg_id,hop_index,node_id\n0,0,3\n0,1,1\n1,0,2\n"
