"""Unit reduction and expander partition: sizes, cuts, update policy."""

import math
import random

import pytest

from decflow.graphcore import DynGraph, GraphError, UpdateEvent
from decflow.expander import (
    ExpanderPartition,
    boundary_linked_decompose,
    build_unit_reduction,
    decompose,
    exact_conductance,
    sweep_cut,
)


def graph_from_edges(n, edges):
    g = DynGraph()
    vs = [g.add_vertex() for _ in range(n)]
    eids = [g.add_edge(vs[a], vs[b], cap, 0) for a, b, cap in edges]
    return g, vs, eids


def complete_graph(n, cap):
    edges = [(a, b, cap) for a in range(n) for b in range(a + 1, n)]
    return graph_from_edges(n, edges)


def two_k4_bridge():
    edges = [(a, b, 1) for a in range(4) for b in range(a + 1, 4)]
    edges += [(a, b, 1) for a in range(4, 8) for b in range(a + 1, 8)]
    edges.append((0, 4, 1))
    g, vs, eids = graph_from_edges(8, edges)
    return g, vs, eids[-1]


def random_capacitated_graph(rng, n, m, cap_max=30):
    g = DynGraph()
    vs = [g.add_vertex() for _ in range(n)]
    for i in range(n - 1):
        g.add_edge(vs[i], vs[i + 1], rng.randint(1, cap_max), 0)
    for _ in range(m - (n - 1)):
        a, b = rng.sample(vs, 2)
        g.add_edge(a, b, rng.randint(1, cap_max), 0)
    return g, vs


def cluster_sets(part):
    return sorted(frozenset(c.vertices) for c in part.clusters.values())


def test_cutoff_and_multiplicities():
    g, vs, eids = graph_from_edges(
        4, [(0, 1, 5), (1, 2, 0.5), (2, 3, 30), (3, 0, 4.5)])
    red = build_unit_reduction(g, 0.1)
    assert red.cutoff == pytest.approx(1.0)
    assert red.unit.capacity[red.bundle_of[eids[0]]] == 5
    assert eids[1] in red.dropped and eids[1] not in red.bundle_of
    assert red.unit.capacity[red.bundle_of[eids[2]]] == 30
    assert red.unit.capacity[red.bundle_of[eids[3]]] == 5
    # padding loops follow ceil(vol/cutoff)
    assert red.pad_units[red.vertex_of[vs[0]]] == 10
    assert red.pad_units[red.vertex_of[vs[2]]] == 31


def test_empty_graph_reduction():
    g = DynGraph()
    g.add_vertex()
    red = build_unit_reduction(g, 0.5)
    assert red.cutoff == 0 and red.unit_edge_count() == 0
    part = decompose(red, 0.5)
    assert len(part.clusters) == 1


def test_phi_out_of_range():
    g = DynGraph()
    with pytest.raises(GraphError):
        build_unit_reduction(g, 0)


def test_unit_size_bound():
    rng = random.Random(7)
    phi = 0.1
    for _ in range(25):
        n = rng.randint(5, 12)
        g, _ = random_capacitated_graph(rng, n, 2 * n)
        m = g.num_edges
        red = build_unit_reduction(g, phi)
        assert red.unit_edge_count() <= 2 * m / phi + 10 * m * math.log(m)


def test_cut_two_approximation():
    rng = random.Random(19)
    phi = 0.1
    for _ in range(30):
        n = rng.randint(3, 6)
        g, vs = random_capacitated_graph(rng, n, rng.randint(n, 2 * n))
        red = build_unit_reduction(g, phi)
        survivors = [(e, g.tail[e], g.head[e], g.capacity[e])
                     for e in red.bundle_of]
        for mask in range(1, 2 ** n - 1):
            inside = {vs[i] for i in range(n) if (mask >> i) & 1}
            orig = sum(c for e, t, h, c in survivors
                       if (t in inside) != (h in inside))
            units = sum(red.unit.capacity[red.bundle_of[e]]
                        for e, t, h, c in survivors
                        if (t in inside) != (h in inside))
            scaled = units * red.cutoff
            assert orig <= scaled + 1e-9
            assert scaled <= 2 * orig + 1e-9


def test_k5_single_cluster():
    g, vs, _ = complete_graph(5, 4)
    red = build_unit_reduction(g, 0.1)
    part = decompose(red, 0.1)
    assert len(part.clusters) == 1
    (cl,) = part.clusters.values()
    assert cl.vertices == set(red.unit.vertices())
    assert cl.exact and cl.phi_cert == pytest.approx(0.25)
    assert part.cut_sources == set()
    assert part.measured_c0() == 1.0
    assert part.measured_c1() == 0.0


def test_two_k4_bridge_partition():
    g, vs, bridge = two_k4_bridge()
    red = build_unit_reduction(g, 0.1)
    part = decompose(red, 0.1)
    left = {red.vertex_of[vs[i]] for i in range(4)}
    right = {red.vertex_of[vs[i]] for i in range(4, 8)}
    assert cluster_sets(part) == sorted([frozenset(left), frozenset(right)])
    assert part.cut_sources == {bridge}
    assert part.cut_capacity == 1
    assert part.measured_c1() <= 8


def test_bridge_deletion_adds_no_cut_edges():
    g, vs, bridge = two_k4_bridge()
    red = build_unit_reduction(g, 0.1)
    part = decompose(red, 0.1)
    before = set(part.cut_sources)
    delta = part.apply_source_decrease(bridge, 0)
    assert delta == []
    assert part.cut_sources == before
    assert len(part.clusters) == 2


def test_disconnection_splits_cluster():
    # two triangles joined by a bridge; phi low enough to start whole
    edges = [(0, 1, 1), (1, 2, 1), (2, 0, 1),
             (3, 4, 1), (4, 5, 1), (5, 3, 1), (0, 3, 1)]
    g, vs, eids = graph_from_edges(6, edges)
    red = build_unit_reduction(g, 0.04)
    part = decompose(red, 0.04)
    assert len(part.clusters) == 1
    delta = part.apply_source_decrease(eids[6], 0)
    assert delta, "losing the bridge must split the cluster at once"
    left = {red.vertex_of[vs[i]] for i in range(3)}
    right = {red.vertex_of[vs[i]] for i in range(3, 6)}
    assert cluster_sets(part) == sorted([frozenset(left), frozenset(right)])
    assert part.cut_sources == set()
    # an internal deletion that keeps the triangle connected re-certifies
    # without splitting once the volume drift passes the threshold
    delta = part.apply_source_decrease(eids[0], 0)
    assert set(cluster_sets(part)) == {frozenset(left), frozenset(right)}


def test_self_loop_insertion_can_split():
    # padding one endpoint of a path flips the sparsest valid side
    g, vs, eids = graph_from_edges(3, [(0, 1, 1), (1, 2, 1)])
    phi = 0.112
    red = build_unit_reduction(g, phi)
    part = decompose(red, phi)
    assert len(part.clusters) == 1
    v0 = red.vertex_of[vs[0]]
    _, delta = part.insert_self_loop(v0, 200)
    assert delta
    assert {v0} in [c.vertices for c in part.clusters.values()]
    assert part.cut_sources == {eids[0]}


def test_handle_update_events():
    g, vs, eids = complete_graph(4, 1)
    red = build_unit_reduction(g, 0.1)
    part = decompose(red, 0.1)
    be = red.bundle_of[eids[0]]
    part.handle_update(UpdateEvent(0, "DecreaseCapacity", (be, 10, 4)))
    assert red.unit.capacity[be] == 4
    part.handle_update(UpdateEvent(1, "DeleteEdge", (be,)))
    assert not red.unit.has_edge(be)
    with pytest.raises(GraphError):
        part.handle_update(UpdateEvent(2, "SplitVertex", (0, 1, 2, ())))


def test_split_vertex_keeps_cluster():
    g, vs, eids = complete_graph(4, 1)
    red = build_unit_reduction(g, 0.1)
    part = decompose(red, 0.1)
    v0 = red.vertex_of[vs[0]]
    keep = {e for e in red.unit.out_edges[v0]
            if red.source_of[e][0] == "edge"}
    va, vb = part.split_unit_vertex(v0, keep)
    cid = part.cluster_of[va]
    assert part.cluster_of[vb] == cid
    assert va in part.clusters[cid].vertices
    assert v0 not in part.cluster_of


def test_decrease_below_cutoff_charges_cut():
    g, vs, eids = graph_from_edges(3, [(0, 1, 40), (1, 2, 40), (2, 0, 40)])
    red = build_unit_reduction(g, 0.1)  # cutoff 4
    part = decompose(red, 0.1)
    part.apply_source_decrease(eids[0], 2)
    assert eids[0] in part.cut_sources
    assert eids[0] in red.dropped and eids[0] not in red.bundle_of
    # a later decrease to zero removes it from the dropped pool
    part.apply_source_decrease(eids[0], 0)
    assert eids[0] not in red.dropped
    assert eids[0] in part.cut_sources


def test_refinement_and_budget_under_random_schedules():
    rng = random.Random(41)
    phi = 0.1
    for _ in range(12):
        n = rng.randint(5, 9)
        g, _ = random_capacitated_graph(rng, n, 2 * n, cap_max=9)
        red = build_unit_reduction(g, phi)
        part = decompose(red, phi)
        base = dict(part.cluster_of)
        seen_cut = set(part.cut_sources)
        for e in sorted(red.source_capacity, key=lambda x: rng.random()):
            cap = red.source_capacity[e]
            if cap <= 0:
                continue
            new_cap = 0 if rng.random() < 0.5 else rng.randint(0, int(cap))
            part.apply_source_decrease(e, new_cap)
            assert seen_cut <= part.cut_sources
            seen_cut = set(part.cut_sources)
            for v, w in [(v, w) for v in part.cluster_of
                         for w in part.cluster_of if v < w]:
                if part.cluster_of[v] == part.cluster_of[w]:
                    assert base[v] == base[w]
        assert part.measured_c1() <= 50


def test_recertified_clusters_truly_expand():
    rng = random.Random(57)
    phi = 0.1
    for _ in range(8):
        n = rng.randint(5, 8)
        g, _ = random_capacitated_graph(rng, n, 2 * n, cap_max=9)
        red = build_unit_reduction(g, phi)
        part = decompose(red, phi)
        for cl in part.clusters.values():
            if len(cl.vertices) > 1:
                got, _ = exact_conductance(red.unit, cl.vertices)
                assert got >= phi
                assert got == pytest.approx(cl.phi_cert)


def test_sweep_agrees_with_exact_on_planted_cut():
    # two blobs with a thin connection; the sweep must find a cut at
    # most as sparse as phi even without exhaustive search
    edges = [(a, b, 1) for a in range(8) for b in range(a + 1, 8)]
    edges += [(a, b, 1) for a in range(8, 16) for b in range(a + 1, 16)]
    edges.append((0, 8, 1))
    g, vs, _ = graph_from_edges(16, edges)
    red = build_unit_reduction(g, 0.1)
    sweep_phi, side = sweep_cut(red.unit, set(red.unit.vertices()))
    exact_phi, _ = exact_conductance(red.unit, set(red.unit.vertices()))
    assert sweep_phi == pytest.approx(exact_phi, rel=1e-9)
    assert len(side) == 8


def test_large_piece_goes_through_sweep():
    g, vs, _ = complete_graph(24, 1)
    red = build_unit_reduction(g, 0.1)
    part = decompose(red, 0.1)
    assert len(part.clusters) == 1
    (cl,) = part.clusters.values()
    assert not cl.exact
    assert cl.phi_cert > 0


def test_boundary_linked_two_k4():
    g, vs, bridge = two_k4_bridge()
    red, part = boundary_linked_decompose(g, 0.1, beta=2, s_param=2)
    assert len(part.clusters) == 2
    for cl in part.clusters.values():
        assert cl.phi_cert >= 0.1
    ends = {red.vertex_of[g.tail[bridge]], red.vertex_of[g.head[bridge]]}
    pads = [red.unit.capacity[e] for e in red.unit.edges()
            if red.unit.tail[e] == red.unit.head[e]
            and red.unit.tail[e] in ends]
    # each bridge endpoint carries the build loop plus a linkage loop
    assert sorted(pads) == [25, 25, 40, 40]
