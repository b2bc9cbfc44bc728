import io
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenarios import random_connected_graph
from treeinfer.embedding import EmbeddingMode, assign_coordinates, build_bfs_tree
from treeinfer.knowledge import (
    ConsistencyError,
    KnowledgeBase,
    KnownNode,
    NodeClass,
    count_pseudonyms,
    init_knowledge,
    merge_coordinate_bindings,
    observe_coordinate,
    verify_against_ground_truth,
    write_knowledge,
)
from treeinfer.overlay import OverlayGraph, neighborhood

ENUM = EmbeddingMode.enumeration()
RAND = EmbeddingMode.random(8)

CLOSURE_241 = {(2, 4, 1), (2, 4), (2,), (), (2, 4, 0), (2, 0), (2, 1), (2, 2), (2, 3), (0,), (1,)}


def implied(coords, enumerated):
    """Coordinates and tree links implied by a set of observed coordinates."""
    nodes = set()
    for c in coords:
        for k in range(len(c) + 1):
            nodes.add(c[:k])
            if enumerated and k:
                nodes.update(c[: k - 1] + (j,) for j in range(c[k - 1]))
    links = {(c[:-1], c) for c in nodes if c}
    return nodes, links


def coord_links(kb):
    return {tuple(sorted((kb.coord_of[a], kb.coord_of[b]), key=len)) for a, b in kb.e_obs}


def linked_pair():
    """Overlay m - x, with m malicious and x compromised."""
    g = OverlayGraph.from_edges(2, [(0, 1)])
    return init_knowledge(g, {0}), 1


# -- initial knowledge ---------------------------------------------------------------


def test_init_star_center_knows_everything():
    g = OverlayGraph.from_edges(5, [(0, i) for i in range(1, 5)] + [(1, 2)])
    kb = init_knowledge(g, {0})
    assert len(kb) == 5
    assert len(kb.e_obs) == g.edge_count
    assert kb.e_obs == kb.observed_links
    assert kb.kind(kb.known_id(0)) is NodeClass.MALICIOUS
    assert {kb.kind(kb.known_id(u)) for u in range(1, 5)} == {NodeClass.COMPROMISED}


def test_init_path_leaf():
    g = OverlayGraph.from_edges(4, [(0, 1), (1, 2), (2, 3)])
    kb = init_knowledge(g, {0})
    assert set(kb.by_binding) == {0, 1}
    assert len(kb.e_obs) == 1
    assert not kb.coord_of and not kb.not_e_obs


def test_init_without_malicious_nodes_is_empty():
    kb = init_knowledge(OverlayGraph.from_edges(3, [(0, 1), (1, 2)]), set())
    assert len(kb) == 0 and not kb.e_obs
    assert count_pseudonyms(kb) == 0


def test_init_links_among_compromised_nodes_are_known():
    g = OverlayGraph.from_edges(4, [(0, 1), (0, 2), (1, 2), (2, 3)])
    kb = init_knowledge(g, {0})
    assert kb.has_link(kb.known_id(1), kb.known_id(2))
    assert kb.known_id(3) is None


# -- inference closure ---------------------------------------------------------------


def test_enumeration_closure_of_241():
    kb = KnowledgeBase()
    report = observe_coordinate(kb, (2, 4, 1), mode=ENUM)
    assert set(kb.coord_of.values()) == CLOSURE_241
    assert len(kb.e_obs) == 10
    assert coord_links(kb) == implied([(2, 4, 1)], True)[1]
    assert (report.new_nodes, report.new_links) == (11, 10)


def test_random_closure_of_241():
    kb = KnowledgeBase()
    observe_coordinate(kb, (2, 4, 1), mode=RAND)
    assert set(kb.coord_of.values()) == {(2, 4, 1), (2, 4), (2,), ()}
    assert len(kb.e_obs) == 3


def test_pseudonym_count_with_compromised_announcer():
    kb, x = linked_pair()
    observe_coordinate(kb, (2, 4, 1), observed=x, mode=ENUM)
    assert count_pseudonyms(kb) == 10
    assert kb.coord_of[kb.known_id(x)] == (2, 4, 1)


def test_observing_the_root_creates_no_links():
    kb = KnowledgeBase()
    report = observe_coordinate(kb, (), mode=ENUM)
    assert list(kb.coord_of.values()) == [()]
    assert not kb.e_obs and report.new_links == 0


def test_repeat_observation_is_idempotent():
    kb = KnowledgeBase()
    observe_coordinate(kb, (1, 3), mode=ENUM)
    before = (len(kb), set(kb.e_obs), count_pseudonyms(kb))
    report = observe_coordinate(kb, (1, 3), mode=ENUM)
    assert not report.changed
    assert (len(kb), set(kb.e_obs), count_pseudonyms(kb)) == before


@settings(max_examples=150)
@given(st.lists(st.integers(0, 6), max_size=6).map(tuple))
def test_enumeration_closed_form_node_count(c):
    kb = KnowledgeBase()
    observe_coordinate(kb, c, mode=ENUM)
    assert len(kb) == sum(1 + x for x in c) + 1


@settings(max_examples=150)
@given(
    st.lists(st.lists(st.integers(0, 4), max_size=5).map(tuple), max_size=8),
    st.booleans(),
)
def test_closure_matches_independent_oracle(observations, enumerated):
    kb = KnowledgeBase()
    mode = ENUM if enumerated else RAND
    for c in observations:
        observe_coordinate(kb, c, mode=mode)
    nodes, links = implied(observations, enumerated)
    assert set(kb.coord_of.values()) == nodes
    assert coord_links(kb) == links
    assert len(kb) == len(nodes)


# -- bindings and merges ---------------------------------------------------------


def test_pseudonym_is_merged_into_announcing_node():
    kb, x = linked_pair()
    observe_coordinate(kb, (2, 4, 1), mode=ENUM)
    assert count_pseudonyms(kb) == 11
    pseudo = kb.node_at[(2, 4)]
    report = observe_coordinate(kb, (2, 4), observed=x, mode=ENUM)
    kid = kb.known_id(x)
    assert report.merged == 1
    assert pseudo not in kb.nodes
    assert kb.node_at[(2, 4)] == kid and kb.kind(kid) is NodeClass.COMPROMISED
    assert count_pseudonyms(kb) == 10
    assert kb.has_link(kid, kb.node_at[(2, 4, 1)]) and kb.has_link(kid, kb.node_at[(2,)])
    assert len(set(kb.node_at.values())) == len(kb.node_at)


def test_merge_with_itself_is_a_no_op():
    kb = KnowledgeBase()
    observe_coordinate(kb, (0,), mode=ENUM)
    kid = kb.node_at[(0,)]
    assert merge_coordinate_bindings(kb, kid, kid) == kid
    assert len(kb) == 2


def test_merge_keeps_observed_link_flags_and_absent_links():
    kb, x = linked_pair()
    kx, km = kb.known_id(x), kb.known_id(0)
    observe_coordinate(kb, (1,), mode=ENUM)
    p = kb.node_at[(1,)]
    other = kb.node_at[(0,)]
    kb.add_absent_link(p, other)
    survivor = merge_coordinate_bindings(kb, p, kx)
    assert survivor == kx
    assert kb.known_absent(kx, other)
    assert (min(kx, km), max(kx, km)) in kb.observed_links


def test_merging_two_identified_nodes_fails():
    g = OverlayGraph.from_edges(3, [(0, 1), (0, 2)])
    kb = init_knowledge(g, {0})
    with pytest.raises(ConsistencyError):
        merge_coordinate_bindings(kb, kb.known_id(1), kb.known_id(2))


def test_conflicting_announcement_fails():
    kb, x = linked_pair()
    observe_coordinate(kb, (0, 1), observed=x)
    with pytest.raises(ConsistencyError):
        observe_coordinate(kb, (0, 2), observed=x)


def test_two_nodes_announcing_one_coordinate_fails():
    g = OverlayGraph.from_edges(3, [(0, 1), (0, 2)])
    kb = init_knowledge(g, {0})
    observe_coordinate(kb, (0,), observed=1)
    with pytest.raises(ConsistencyError):
        observe_coordinate(kb, (0,), observed=2)


def test_unknown_announcer_fails():
    kb, _ = linked_pair()
    with pytest.raises(KeyError):
        observe_coordinate(kb, (0,), observed=5)


def test_link_and_absent_sets_stay_disjoint():
    kb = KnowledgeBase()
    observe_coordinate(kb, (0, 0), mode=ENUM)
    a, b = kb.node_at[()], kb.node_at[(0,)]
    with pytest.raises(ConsistencyError):
        kb.add_absent_link(a, b)
    c = kb.node_at[(0, 0)]
    kb.add_absent_link(a, c)
    with pytest.raises(ConsistencyError):
        kb.add_link(c, a)


def test_known_node_binding_matches_class():
    with pytest.raises(ValueError):
        KnownNode(0, NodeClass.PSEUDONYMOUS, 3)
    with pytest.raises(ValueError):
        KnownNode(0, NodeClass.COMPROMISED)


# -- metric ------------------------------------------------------------------------


def test_literal_metric_counts_malicious_and_far_nodes():
    kb, x = linked_pair()
    observe_coordinate(kb, (2, 4, 1), observed=x, mode=ENUM)
    # 1 malicious + 10 pseudonyms, the compromised node is the only neighbor of M
    assert count_pseudonyms(kb, literal=True) == 11


def test_export_format():
    kb, x = linked_pair()
    observe_coordinate(kb, (1,), observed=x, mode=ENUM)
    nodes, links = io.StringIO(), io.StringIO()
    write_knowledge(kb, nodes, links)
    assert nodes.getvalue().splitlines() == [
        "pseudo_id,class,coordinate", "0,malicious,-", "1,compromised,1",
        "2,pseudonymous,", "3,pseudonymous,0",
    ]
    assert links.getvalue().splitlines() == [
        "id_a,id_b,link_kind", "0,1,observed", "1,2,inferred-tree", "2,3,inferred-tree",
    ]


# -- simulation soundness ------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 60), st.integers(0, 2**32), st.sampled_from([ENUM, RAND]))
def test_inference_is_sound_and_monotone(n, seed, mode):
    rng = random.Random(seed)
    g = random_connected_graph(rng, n, extra=rng.choice([0.2, 1.0]))
    bad = set(rng.sample(range(n), rng.randrange(1, max(2, n // 4))))
    tree = build_bfs_tree(g, rng.randrange(n), rng)
    coords = assign_coordinates(tree, mode, rng)
    kb = init_knowledge(g, bad)
    history = [0]
    for v in tree.order:
        if v in kb.by_binding:
            observe_coordinate(kb, coords[v], observed=v, mode=mode)
            history.append(count_pseudonyms(kb))
    assert verify_against_ground_truth(kb, g, coords) == []
    assert history == sorted(history)
    assert history[-1] <= n - len(bad) - len(neighborhood(g, bad))
    # target coordinates seen later never break soundness either
    for t in rng.sample(range(n), min(n, 10)):
        observe_coordinate(kb, coords[t], mode=mode)
    assert verify_against_ground_truth(kb, g, coords) == []


def test_ground_truth_check_detects_planted_errors():
    g = OverlayGraph.from_edges(3, [(0, 1), (1, 2)])
    coords = [(), (0,), (0, 0)]
    kb = init_knowledge(g, {0})
    observe_coordinate(kb, (0, 0), observed=1)
    problems = verify_against_ground_truth(kb, g, coords)
    assert any("coordinate" in p for p in problems)
