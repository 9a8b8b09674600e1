"""Hierarchy, tree cut sparsifier, core graphs, and the batching layer."""

import itertools
import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from decflow.graphcore import DynGraph, GraphError
from decflow.hierarchy import (
    ROOT,
    BatchingState,
    DecrementalTree,
    TreeCutSparsifier,
    assemble_tree,
    audit_layer_soundness,
    audit_tree_quality,
    build_hierarchy,
    extend_branch_free,
    induced_core_graph,
    pow2ceil,
)
from decflow.oracles import max_flow, set_to_set_mincut


def graph_from_edges(n, edges):
    g = DynGraph()
    vs = [g.add_vertex() for _ in range(n)]
    eids = [g.add_edge(vs[a], vs[b], cap, 0) for a, b, cap in edges]
    return g, vs, eids


def random_graph(rng, n, extra, cap_max=12):
    g = DynGraph()
    vs = [g.add_vertex() for _ in range(n)]
    eids = []
    for i in range(1, n):
        eids.append(g.add_edge(vs[i], vs[rng.randrange(i)],
                               rng.randint(1, cap_max), 0))
    for _ in range(extra):
        a, b = rng.sample(vs, 2)
        eids.append(g.add_edge(a, b, rng.randint(1, cap_max), 0))
    return g, vs, eids


def graph_dicts(g):
    verts = set(g.vertices())
    edges = {e: (g.tail[e], g.head[e], g.capacity[e]) for e in g.edges()}
    return verts, edges


def tree_set_mincut(tree, A, B):
    """Set-to-set answer of the tree: contract each side's leaves to a
    super-node and take the minimum separating capacity."""
    la = {tree.leaf_of[v] for v in A}
    lb = {tree.leaf_of[v] for v in B}

    def node(x):
        if x in la:
            return "A*"
        if x in lb:
            return "B*"
        return x

    edges = {}
    for idx, (child, parent, cap) in enumerate(tree.edges()):
        na, nb = node(child), node(parent)
        if na != nb:
            edges[idx] = (na, nb, cap)
    verts = {node(x) for x in tree.parent} | {"A*", "B*"}
    return max_flow(verts, edges, "A*", "B*")


def manual_tree(edges):
    """Build a bare tree from (child, parent, cap) rows; parents first."""
    t = TreeCutSparsifier()
    for child, parent, cap in edges:
        t.attach(child, parent, cap)
    return t


def assert_never_undershoots(structure, g, pairs=None):
    verts, edges = graph_dicts(g)
    if pairs is None:
        pairs = itertools.combinations(sorted(verts), 2)
    worst = 1.0
    for a, b in pairs:
        true = set_to_set_mincut(verts, edges, {a}, {b})
        ans = structure.mincut(a, b)
        assert ans >= true - 1e-9, (a, b, true, ans)
        if true == 0:
            assert ans == 0, (a, b, ans)
        else:
            worst = max(worst, ans / true)
    return worst


# -- static hierarchy -------------------------------------------------------


def test_pow2ceil_rounds_up():
    assert pow2ceil(0) == 0
    assert pow2ceil(1) == 1
    assert pow2ceil(3) == 4
    assert pow2ceil(4) == 4
    assert pow2ceil(4.01) == 8


def test_single_edge_flattens_in_one_level():
    g, vs, _ = graph_from_edges(2, [(0, 1, 4)])
    h = build_hierarchy(g, phi=0.1)
    assert h.num_levels == 1
    assert h.graph_at(1).num_vertices == 1


def test_star_certifies_as_one_cluster():
    edges = [(0, leaf, 1) for leaf in range(1, 6)]
    g, vs, _ = graph_from_edges(6, edges)
    h = build_hierarchy(g, phi=0.1)
    assert h.num_levels == 1
    assert len(h.levels[0].part.clusters) == 1


def test_single_vertex_has_no_levels():
    g = DynGraph()
    g.add_vertex()
    h = build_hierarchy(g, phi=0.1)
    assert h.num_levels == 0
    assert h.graph_at(0).num_vertices == 1


def test_disconnected_input_faults_unless_allowed():
    g, vs, _ = graph_from_edges(4, [(0, 1, 2), (2, 3, 2)])
    with pytest.raises(GraphError):
        build_hierarchy(g, phi=0.1)
    h = build_hierarchy(g, phi=0.1, allow_disconnected=True)
    assert h.graph_at(h.num_levels).num_vertices == 2


def test_capacity_decay_bounds_level_count():
    # chain of cliques: cliques collapse at level 0, the chain above
    # certifies whole, so the live capacity shrinks geometrically
    edges = []
    for blk in range(4):
        base = 5 * blk
        edges += [(base + a, base + b, 10)
                  for a in range(5) for b in range(a + 1, 5)]
    edges += [(5 * blk + 4, 5 * (blk + 1), 1) for blk in range(3)]
    g, vs, _ = graph_from_edges(20, edges)
    phi = 0.05
    h = build_hierarchy(g, phi=phi)
    assert h.num_levels >= 2
    u0 = sum(c for c in g.capacity.values())
    c1 = max(lvl.part.measured_c1() for lvl in h.levels)
    decay = 2 * c1 * phi
    assert decay < 1
    assert h.num_levels <= math.log(u0) / math.log(1 / decay) + 3


# -- tree assembly ----------------------------------------------------------


def test_two_vertex_tree_caps_and_query():
    g, vs, _ = graph_from_edges(2, [(0, 1, 4)])
    dt = DecrementalTree(g, phi=0.1)
    assert dt.tree.cap[(0, vs[0])] == 4.0
    assert dt.tree.cap[(0, vs[1])] == 4.0
    assert dt.mincut(vs[0], vs[1]) == 4.0


def test_single_vertex_tree_is_one_node():
    g = DynGraph()
    v = g.add_vertex()
    t = assemble_tree(build_hierarchy(g, phi=0.1))
    assert t.leaf_of[v] == (0, v)
    assert t.parent[(0, v)] == ROOT
    assert t.hop_depth() == 1


def test_static_tree_never_undershoots():
    for seed in range(6):
        rng = random.Random(seed)
        g, vs, _ = random_graph(rng, 8, 9)
        dt = DecrementalTree(g, phi=0.125)
        report = audit_tree_quality(dt.base, dt.tree)
        assert report["lower_violations"] == 0
        assert report["q"] < math.inf
        assert dt.tree.hop_depth() <= dt.h.num_levels + 1


# -- branch-free closure ----------------------------------------------------


def test_branch_free_keeps_small_sets():
    t = manual_tree([("a", ROOT, 1), ("b", "a", 1), ("c", "b", 1)])
    assert extend_branch_free(t, set()) == set()
    assert extend_branch_free(t, {"a"}) == {"a"}
    assert extend_branch_free(t, {"a", "c"}) == {"a", "c"}


def test_branch_free_adds_star_center():
    t = manual_tree([("c", ROOT, 1), ("x", "c", 1), ("y", "c", 1),
                     ("z", "c", 1)])
    assert extend_branch_free(t, {"x", "y", "z"}) == {"x", "y", "z", "c"}


def test_branch_free_rejects_unknown_node():
    t = manual_tree([("a", ROOT, 1)])
    with pytest.raises(GraphError):
        extend_branch_free(t, {"nope"})


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 30), st.integers(2, 24), st.integers(1, 8))
def test_branch_free_growth_is_bounded(seed, n, picks):
    rng = random.Random(seed)
    t = TreeCutSparsifier()
    nodes = [ROOT]
    for i in range(n):
        t.attach(i, rng.choice(nodes), 1)
        nodes.append(i)
    R = set(rng.sample(range(n), min(picks, n)))
    B = extend_branch_free(t, R)
    assert R <= B
    assert len(B) <= 2 * max(1, len(R))
    assert extend_branch_free(t, B) == B


# -- core graphs ------------------------------------------------------------


def test_core_graph_cuts_cheapest_path_edge():
    g, vs, eids = graph_from_edges(3, [(0, 1, 1), (1, 2, 2)])
    t = manual_tree([(vs[2], ROOT, 4), (vs[1], vs[2], 2), (vs[0], vs[1], 1)])
    t.leaf_of = {v: v for v in vs}
    tree_edge_of = {eids[0]: vs[0], eids[1]: vs[1]}
    core = induced_core_graph(g, t, {vs[0], vs[2]},
                              tree_edge_of=tree_edge_of)
    assert core.removed == [vs[0]]
    assert core.comp_of[vs[1]] == core.comp_of[vs[2]]
    assert core.comp_of[vs[0]] != core.comp_of[vs[1]]
    assert core.graph.num_vertices == 2
    assert core.graph.num_edges == 0
    owners = sorted(b for b in core.vertex_b.values() if b is not None)
    assert owners == sorted([vs[0], vs[2]])


def test_core_graph_with_all_roots_keeps_crossing_edges():
    g, vs, eids = graph_from_edges(3, [(0, 1, 1), (1, 2, 2), (0, 2, 5)])
    t = manual_tree([(vs[2], ROOT, 4), (vs[1], vs[2], 2), (vs[0], vs[1], 1)])
    t.leaf_of = {v: v for v in vs}
    tree_edge_of = {eids[0]: vs[0], eids[1]: vs[1]}
    core = induced_core_graph(g, t, set(vs), tree_edge_of=tree_edge_of)
    assert sorted(core.removed) == sorted([vs[0], vs[1]])
    assert core.graph.num_vertices == 3
    assert core.graph.num_edges == 1
    ne = next(iter(core.graph.edges()))
    assert core.origin[ne] == eids[2]
    assert core.graph.capacity[ne] == 5


def test_core_graph_tie_prefers_first_node():
    g, vs, eids = graph_from_edges(3, [(0, 1, 3), (1, 2, 3)])
    t = manual_tree([(vs[2], ROOT, 8), (vs[1], vs[2], 3), (vs[0], vs[1], 3)])
    t.leaf_of = {v: v for v in vs}
    core = induced_core_graph(g, t, {vs[0], vs[2]},
                              tree_edge_of={eids[0]: vs[0], eids[1]: vs[1]})
    assert core.removed == [min(vs[0], vs[1], key=repr)]


def test_core_graph_needs_branch_free_roots():
    t = manual_tree([("c", ROOT, 1), ("x", "c", 1), ("y", "c", 1),
                     ("z", "c", 1)])
    g = DynGraph()
    with pytest.raises(GraphError):
        induced_core_graph(g, t, {"x", "y", "z"})


# -- decremental maintenance ------------------------------------------------


def test_decremental_queries_track_every_pair():
    for seed in range(6):
        rng = random.Random(seed)
        g, vs, eids = random_graph(rng, 8, 10)
        dt = DecrementalTree(g, phi=0.125, allow_disconnected=True)
        order = eids[:]
        rng.shuffle(order)
        for e in order:
            cap = dt.base.capacity[e]
            if cap <= 0:
                continue
            if rng.random() < 0.5 and cap > 1:
                dt.decrease_edge(e, rng.randint(0, int(cap) - 1))
            else:
                dt.delete_edge(e)
            assert_never_undershoots(dt, dt.base)


def test_decremental_set_cuts_never_undershoot():
    rng = random.Random(11)
    g, vs, eids = random_graph(rng, 6, 6)
    dt = DecrementalTree(g, phi=0.125, allow_disconnected=True)
    for e in rng.sample(eids, 4):
        dt.delete_edge(e)
    verts, edges = graph_dicts(dt.base)
    for labels in itertools.product((0, 1, 2), repeat=len(vs)):
        A = {vs[i] for i, w in enumerate(labels) if w == 1}
        B = {vs[i] for i, w in enumerate(labels) if w == 2}
        if not A or not B:
            continue
        true = set_to_set_mincut(verts, edges, A, B)
        ans = tree_set_mincut(dt.tree, A, B)
        assert ans >= true - 1e-9, (A, B, true, ans)


def test_tree_capacities_only_decrease():
    rng = random.Random(5)
    g, vs, eids = random_graph(rng, 8, 8)
    dt = DecrementalTree(g, phi=0.125, allow_disconnected=True)
    prev = dict(dt.tree.cap)
    for e in eids:
        if dt.base.capacity[e] <= 0:
            continue
        dt.delete_edge(e)
        for node, cap in dt.tree.cap.items():
            if node in prev:
                assert cap <= prev[node] + 1e-9, node
        prev = dict(dt.tree.cap)


def test_deletion_never_raises_bipartition_values():
    for seed in range(4):
        rng = random.Random(seed)
        g, vs, eids = random_graph(rng, 7, 7)
        dt = DecrementalTree(g, phi=0.125, allow_disconnected=True)
        n = len(vs)
        masks = range(1, 2 ** (n - 1))

        def values():
            out = {}
            for mask in masks:
                A = {vs[i] for i in range(n) if (mask >> i) & 1}
                out[mask] = tree_set_mincut(dt.tree, A, set(vs) - A)
            return out

        prev = values()
        for e in eids:
            if dt.base.capacity[e] <= 0:
                continue
            dt.delete_edge(e)
            cur = values()
            for mask in masks:
                assert cur[mask] <= prev[mask] + 1e-9, mask
            prev = cur


def test_cross_component_queries_vanish():
    g, vs, eids = graph_from_edges(4, [(0, 1, 3), (1, 2, 2), (2, 3, 3)])
    dt = DecrementalTree(g, phi=0.125)
    dt.delete_edge(eids[1])
    assert dt.mincut(vs[0], vs[2]) == 0
    assert dt.mincut(vs[1], vs[3]) == 0
    assert dt.mincut(vs[0], vs[1]) > 0
    assert dt.mincut(vs[2], vs[3]) > 0


def test_mincut_query_rejects_same_vertex():
    g, vs, _ = graph_from_edges(2, [(0, 1, 4)])
    dt = DecrementalTree(g, phi=0.1)
    with pytest.raises(GraphError):
        dt.mincut(vs[0], vs[0])


# -- batching layer ---------------------------------------------------------


def test_insertions_are_buffered_until_merged():
    g, vs, _ = graph_from_edges(4, [(0, 1, 2), (1, 2, 2), (2, 3, 2)])
    state = BatchingState(g, phi=0.125, L_max=2)
    e = state.insert_edge(vs[0], vs[3], 5)
    for i in range(state.L_max + 1):
        t_i = state.levels[i].t_i
        assert (e in state.I(i)) == (state.insert_time[e] > t_i)
    # the last level is rebuilt every update, so nothing stays
    # buffered above it and the new edge sits in its window
    top = state.levels[state.L_max]
    assert state.I(state.L_max) == set()
    assert e in top.insert_img
    assert top.dtree.base.capacity[top.insert_img[e]] == 5
    assert state.mincut(vs[0], vs[3]) >= 2


def test_batched_replay_stays_sound_and_bounded():
    rng = random.Random(2)
    g, vs, _ = random_graph(rng, 7, 5, cap_max=9)
    state = BatchingState(g, phi=0.125, L_max=2)
    for step in range(30):
        live = [e for e in state.base.edges() if state.base.capacity[e] > 0]
        roll = rng.random()
        if roll < 0.45 or not live:
            a, b = rng.sample(vs, 2)
            state.insert_edge(a, b, rng.randint(1, 9))
        elif roll < 0.7:
            e = rng.choice(live)
            cap = state.base.capacity[e]
            if cap > 1:
                state.decrease_edge(e, rng.randint(1, int(cap)))
            else:
                state.delete_edge(e)
        else:
            state.delete_edge(rng.choice(live))
        gamma = 1.0
        for lvl in state.levels:
            rep = audit_tree_quality(lvl.dtree.base, lvl.dtree.tree)
            assert rep["lower_violations"] == 0
            gamma = max(gamma, rep["q"])
        composed = audit_tree_quality(state.base,
                                      state.compose_tree(state.L_max))
        assert composed["lower_violations"] == 0
        bound = (2 * gamma) ** (state.L_max + 1) * gamma
        assert composed["q"] <= bound + 1e-9
        if step % 5 == 0:
            sound = audit_layer_soundness(state)
            assert sound["covered"]
            assert sound["worst_capacity_ratio"] < math.inf


def test_batched_deletions_keep_values_monotone():
    rng = random.Random(9)
    g, vs, eids = random_graph(rng, 6, 5)
    state = BatchingState(g, phi=0.125, L_max=2)
    n = len(vs)
    masks = range(1, 2 ** (n - 1))

    def values():
        t = state.compose_tree(state.L_max)
        out = {}
        for mask in masks:
            A = {vs[i] for i in range(n) if (mask >> i) & 1}
            out[mask] = tree_set_mincut(t, A, set(vs) - A)
        return out

    prev = values()
    order = eids[:]
    rng.shuffle(order)
    for e in order:
        if e not in state.base.capacity or state.base.capacity[e] <= 0:
            continue
        state.delete_edge(e)
        cur = values()
        for mask in masks:
            assert cur[mask] <= prev[mask] + 1e-9, mask
        prev = cur


def test_same_updates_give_same_answers():
    def drive(state, rng):
        vs = sorted(state.base.vertices())
        for _ in range(20):
            live = [e for e in state.base.edges()
                    if state.base.capacity[e] > 0]
            roll = rng.random()
            if roll < 0.4 or not live:
                a, b = rng.sample(vs, 2)
                state.insert_edge(a, b, rng.randint(1, 9))
            else:
                state.delete_edge(rng.choice(live))
        return {(a, b): state.mincut(a, b)
                for a, b in itertools.combinations(vs, 2)}

    answers = []
    for _ in range(2):
        rng = random.Random(33)
        g, vs, _ = random_graph(random.Random(4), 6, 4)
        answers.append(drive(BatchingState(g, phi=0.125, L_max=2), rng))
    assert answers[0] == answers[1]


def test_composed_hop_depth_stays_shallow():
    rng = random.Random(6)
    g, vs, _ = random_graph(rng, 8, 8)
    state = BatchingState(g, phi=0.125, L_max=2)
    for step in range(20):
        live = [e for e in state.base.edges() if state.base.capacity[e] > 0]
        if rng.random() < 0.5 or not live:
            a, b = rng.sample(vs, 2)
            state.insert_edge(a, b, rng.randint(1, 9))
        else:
            state.delete_edge(rng.choice(live))
        t = state.compose_tree(state.L_max)
        k_max = max(lvl.dtree.h.num_levels for lvl in state.levels)
        m = max(2, state.base.num_edges)
        bound = 4 * (k_max + 1) * (state.L_max + 1) * max(1, math.log2(m))
        assert t.hop_depth() <= bound
