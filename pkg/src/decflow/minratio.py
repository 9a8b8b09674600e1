"""Approximate min-ratio cut maintenance over rounded capacity levels.

For each capacity level a the structure keeps a copy of the graph with
capacities rounded to u_a(e) = ceil(u(e) / n^a) (clamped to n^cl once
above n^hi), a tree cut sparsifier of that copy, and per-tree-edge
sums of the vertex gradient and demand below the edge. The sparsifier
caps dominate the capacity leaving any subtree, so every tree edge
induces a vertex cut C with <g,1_C> known exactly and ||U B 1_C||_1
bounded by n^a times the tree capacity; the best such cut over all
levels approximates the true min-ratio cut to the audited sparsifier
quality times a rounding constant.

Potentials are implicit. toggle_cut adds eta below the cut's tree node
(or shifts the whole level and subtracts below it, for the complement
side); the accumulated offsets flush into a dense base vector whenever
the level's tree is recomposed. Each level mirrors its tree into a
DetectionEnsemble over the tree-shadow DAG (tree nodes wired root to
leaf, plus one tracked leaf per graph edge hanging under its two
endpoint leaves) with significance eps / (u(e) * level budget), so an
edge whose potential difference times u(e) may have drifted by eps is
reported before the drift can exceed it.
"""

from __future__ import annotations

import heapq
import math
from fractions import Fraction

from .detection import DetectionEnsemble
from .graphcore import DynGraph, GraphError
from .hierarchy import ROOT, BatchingState


def _skey(x):
    return repr(x)


class MinRatioConfig:
    """Level rounding exponents, per-level hierarchy parameters, and
    the detection tolerance."""

    def __init__(self, hi_exp=10, cl_exp=20, level_budget=64,
                 epsilon=0.25, phi=0.125, L_max=2, beta=2.0, s_param=2,
                 cert_limit=16):
        if cl_exp <= hi_exp:
            raise GraphError("clamp exponent must exceed the high exponent")
        if not epsilon > 0:
            raise GraphError("detection tolerance must be positive")
        self.hi_exp = hi_exp
        self.cl_exp = cl_exp
        self.level_budget = level_budget
        self.epsilon = epsilon
        self.phi = phi
        self.L_max = L_max
        self.beta = beta
        self.s_param = s_param
        self.cert_limit = cert_limit


class CutSolution:
    """One tree-edge cut. side +1 means C is the vertex set under the
    tree node, side -1 its complement; g = <g,1_C> <= 0, u bounds
    ||U B 1_C||_1, dsum = <d,1_C>. The zero-gradient convention is
    node None with (g, u) = (0, 1)."""

    __slots__ = ("level", "node", "side", "g", "u", "dsum", "ratio",
                 "epoch")

    def __init__(self, level, node, side, g, u, dsum, ratio, epoch):
        self.level = level
        self.node = node
        self.side = side
        self.g = g
        self.u = u
        self.dsum = dsum
        self.ratio = ratio
        self.epoch = epoch

    def __repr__(self):
        return ("CutSolution(level=%r, node=%r, side=%+d, g=%r, u=%r, "
                "ratio=%r)" % (self.level, self.node, self.side, self.g,
                               self.u, self.ratio))


class _Level:
    """One rounded-capacity copy: hierarchy state, composed tree,
    below-sums, pending potential offsets, and the detection DAG."""

    def __init__(self, owner, a):
        self.a = a
        graph = DynGraph()
        self.vmap = {}
        for v in owner._sorted_vertices():
            self.vmap[v] = graph.add_vertex()
        self.inv_vmap = {lv: v for v, lv in self.vmap.items()}
        self.emap = {}
        for e in owner._sorted_edges():
            eu, ev = owner.edges[e]
            self.emap[e] = graph.add_edge(
                self.vmap[eu], self.vmap[ev],
                owner._rounded(owner.cap[e], a), 0.0)
        cfg = owner.cfg
        self.state = BatchingState(graph, phi=cfg.phi, beta=cfg.beta,
                                   s_param=cfg.s_param,
                                   cert_limit=cfg.cert_limit,
                                   L_max=cfg.L_max)
        self.tree = None
        self.ssum = {}
        self.dsum = {}
        self.offset = {}
        self.shift = 0
        self.ens = DetectionEnsemble()
        self.dag_edges = set()
        self.epoch = 0
        self.dirty = True
        leaves = []
        wires = []
        for e in owner._sorted_edges():
            leaves.append((("E", e), owner._sig(owner.cap[e])))
            wires.extend(owner._edge_wires(self, e))
        self.ens.apply_diff(added=wires, new_leaves=leaves)


class MinRatioState:
    """Dynamic alpha-approximate min-ratio cut index.

    Vertices carry a gradient g and a demand d, edges a positive
    capacity; updates keep g orthogonal to the all-ones vector by
    construction (gradient and demand changes are paired transfers).
    best_cut returns the most negative tree-edge ratio over all
    levels, toggle_cut applies an implicit potential step along the
    last returned cut, and potential reads a vertex's accumulated
    value exactly.
    """

    def __init__(self, vertices, edges, capacity, gradient=None,
                 demand=None, config=None):
        self.cfg = config or MinRatioConfig()
        self.g = {}
        self.d = {}
        self.y0 = {}
        self.total_d = 0
        self.edges = {}
        self.cap = {}
        self.levels = {}
        self.heap = []
        self.ops = 0
        vertices = list(vertices)
        self.base = max(2, len(vertices))
        for v in vertices:
            self.insert_vertex(v)
        if gradient:
            for v, gv in gradient.items():
                self.g[v] = gv
        if demand:
            for v, dv in demand.items():
                self.d[v] = dv
                self.total_d += dv
        for e in sorted(edges, key=_skey):
            u, v = edges[e]
            self.insert_edge(e, u, v, capacity[e])

    # -- level plumbing -----------------------------------------------------

    def _sorted_vertices(self):
        return sorted(self.g, key=_skey)

    def _sorted_edges(self):
        return sorted(self.edges, key=_skey)

    def _sig(self, u):
        return self.cfg.epsilon / (u * self.cfg.level_budget)

    def _rounded(self, u, a):
        ru = math.ceil(Fraction(u) / Fraction(self.base) ** a)
        if ru < 1:
            ru = 1
        if ru > self.base ** self.cfg.hi_exp:
            ru = self.base ** self.cfg.cl_exp
        return ru

    def _levels_for(self, u):
        """Levels on which an edge of capacity u is represented within
        a constant factor: the exact level 0 for u >= 1, the shifted
        level once u outgrows n^hi, and the floor level for u < 1."""
        if u >= 1:
            k = 0
            while self.base ** k < u:
                k += 1
            out = {0}
            if k - self.cfg.hi_exp > 0:
                out.add(k - self.cfg.hi_exp)
            return out
        k = 0
        while self.base ** (-k) > u:
            k += 1
        return {-k}

    def _ensure_levels(self, u):
        fresh = []
        for a in sorted(self._levels_for(u)):
            if a in self.levels:
                continue
            if len(self.levels) >= self.cfg.level_budget:
                raise GraphError("level budget exhausted")
            self.levels[a] = _Level(self, a)
            fresh.append(a)
        return fresh

    def _edge_wires(self, lvl, e):
        eu, ev = self.edges[e]
        return [(("N", ("leaf", lvl.vmap[eu])), ("E", e)),
                (("N", ("leaf", lvl.vmap[ev])), ("E", e))]

    # -- structural updates ---------------------------------------------------

    def insert_vertex(self, v, demand=0):
        if v in self.g:
            raise GraphError("vertex %r already present" % (v,))
        for lvl in self.levels.values():
            self._flush_potentials(lvl)
            lvl.vmap[v] = lvl.state.insert_vertex()
            lvl.inv_vmap[lvl.vmap[v]] = v
            lvl.dirty = True
        self.g[v] = 0
        self.d[v] = demand
        self.y0[v] = 0
        self.total_d += demand

    def insert_edge(self, e, u, v, capacity):
        if e in self.edges:
            raise GraphError("edge %r already present" % (e,))
        if u == v:
            raise GraphError("self-loops carry no cut information")
        if u not in self.g or v not in self.g:
            raise GraphError("unknown endpoint for edge %r" % (e,))
        if not capacity > 0:
            raise GraphError("capacity must be positive")
        self.edges[e] = (u, v)
        self.cap[e] = capacity
        fresh = set(self._ensure_levels(capacity))
        for a, lvl in self.levels.items():
            if a in fresh:
                continue
            lvl.emap[e] = lvl.state.insert_edge(
                lvl.vmap[u], lvl.vmap[v], self._rounded(capacity, a), 0.0)
            lvl.dirty = True
            lvl.ens.apply_diff(added=self._edge_wires(lvl, e),
                               new_leaves=[(("E", e), self._sig(capacity))])
        return e

    def delete_edge(self, e):
        if e not in self.edges:
            raise GraphError("edge %r not present" % (e,))
        for lvl in self.levels.values():
            lvl.state.delete_edge(lvl.emap.pop(e))
            lvl.dirty = True
            lvl.ens.apply_diff(removed=self._edge_wires(lvl, e))
            lvl.ens.remove_vertices([("E", e)])
        del self.edges[e]
        del self.cap[e]

    def update_capacity(self, e, capacity):
        if e not in self.edges:
            raise GraphError("edge %r not present" % (e,))
        if not capacity > 0:
            raise GraphError("capacity must be positive")
        old = self.cap[e]
        if capacity == old:
            return
        self.cap[e] = capacity
        fresh = set(self._ensure_levels(capacity))
        u, v = self.edges[e]
        for a, lvl in self.levels.items():
            if a in fresh:
                continue
            old_ru = self._rounded(old, a)
            new_ru = self._rounded(capacity, a)
            if new_ru == old_ru:
                continue
            if new_ru < old_ru:
                lvl.state.decrease_edge(lvl.emap[e], new_ru)
            else:
                lvl.state.delete_edge(lvl.emap[e])
                lvl.emap[e] = lvl.state.insert_edge(
                    lvl.vmap[u], lvl.vmap[v], new_ru, 0.0)
            lvl.dirty = True
        for lvl in self.levels.values():
            lvl.ens.reset(("E", e), self._sig(capacity))

    def update_gradient(self, u, v, delta):
        """g(u) += delta, g(v) -= delta; below-sums on both tree paths
        follow on every clean level."""
        if u not in self.g or v not in self.g or u == v:
            raise GraphError("gradient updates transfer between two "
                             "distinct vertices")
        if not delta:
            return
        self.g[u] += delta
        self.g[v] -= delta
        for lvl in self.levels.values():
            if lvl.dirty:
                continue
            self._walk_sums(lvl, lvl.ssum, u, delta, push=True)
            self._walk_sums(lvl, lvl.ssum, v, -delta, push=True)

    def update_demand(self, u, v, delta):
        if u not in self.d or v not in self.d or u == v:
            raise GraphError("demand updates transfer between two "
                             "distinct vertices")
        if not delta:
            return
        self.d[u] += delta
        self.d[v] -= delta
        for lvl in self.levels.values():
            if lvl.dirty:
                continue
            self._walk_sums(lvl, lvl.dsum, u, delta, push=False)
            self._walk_sums(lvl, lvl.dsum, v, -delta, push=False)

    def _walk_sums(self, lvl, sums, v, delta, push):
        node = lvl.tree.leaf_of[lvl.vmap[v]]
        while node is not None:
            self.ops += 1
            sums[node] += delta
            if push and lvl.tree.parent[node] is not None:
                self._push_entry(lvl, node)
            node = lvl.tree.parent[node]

    # -- refresh --------------------------------------------------------------

    def _refresh(self, lvl):
        if not lvl.dirty:
            return
        self._flush_potentials(lvl)
        lvl.tree = lvl.state.compose_tree(self.cfg.L_max)
        self._rebuild_sums(lvl)
        self._rewire_detection(lvl)
        lvl.epoch += 1
        lvl.dirty = False
        for node, parent in lvl.tree.parent.items():
            if parent is not None:
                self._push_entry(lvl, node)

    def _flush_potentials(self, lvl):
        if lvl.tree is None or (lvl.shift == 0 and not lvl.offset):
            lvl.offset = {}
            lvl.shift = 0
            return
        for v, lv in lvl.vmap.items():
            node = lvl.tree.leaf_of[lv]
            total = lvl.shift
            while node is not None:
                self.ops += 1
                total += lvl.offset.get(node, 0)
                node = lvl.tree.parent[node]
            self.y0[v] += total
        lvl.offset = {}
        lvl.shift = 0

    def _rebuild_sums(self, lvl):
        tree = lvl.tree
        order = []
        stack = [ROOT]
        while stack:
            x = stack.pop()
            order.append(x)
            stack.extend(tree.children[x])
        ssum = {}
        dsum = {}
        for x in reversed(order):
            self.ops += 1
            s = t = 0
            if isinstance(x, tuple) and len(x) == 2 and x[0] == "leaf":
                v = lvl.inv_vmap[x[1]]
                s += self.g[v]
                t += self.d[v]
            for c in tree.children[x]:
                s += ssum[c]
                t += dsum[c]
            ssum[x] = s
            dsum[x] = t
        lvl.ssum = ssum
        lvl.dsum = dsum

    def _rewire_detection(self, lvl):
        new = set()
        for node, parent in lvl.tree.parent.items():
            if parent is not None:
                new.add((("N", parent), ("N", node)))
        removed = sorted(lvl.dag_edges - new, key=_skey)
        added = sorted(new - lvl.dag_edges, key=_skey)
        if removed or added:
            lvl.ens.apply_diff(removed=removed, added=added)
            olds = {x for pair in removed for x in pair}
            keep = {x for pair in new for x in pair}
            orphans = sorted(olds - keep, key=_skey)
            if orphans:
                lvl.ens.remove_vertices(orphans)
        lvl.dag_edges = new
        self.ops += len(removed) + len(added)

    # -- ratio index ------------------------------------------------------------

    def _ratio_key(self, lvl, node):
        cap = lvl.tree.cap.get(node)
        if cap is None or cap >= self.base ** self.cfg.cl_exp:
            return None
        s = lvl.ssum.get(node, 0)
        if not s:
            return None
        return -abs(float(s)) / (float(Fraction(self.base) ** lvl.a) * cap)

    def _push_entry(self, lvl, node):
        key = self._ratio_key(lvl, node)
        if key is None:
            return
        heapq.heappush(self.heap, (key, lvl.a, _skey(node), node,
                                   lvl.epoch))
        self.ops += 1
        live = sum(len(l.tree.parent) for l in self.levels.values()
                   if l.tree is not None)
        if len(self.heap) > 4 * live + 64:
            self._rebuild_heap()

    def _rebuild_heap(self):
        self.heap = []
        for lvl in self.levels.values():
            if lvl.dirty or lvl.tree is None:
                continue
            for node, parent in lvl.tree.parent.items():
                if parent is None:
                    continue
                key = self._ratio_key(lvl, node)
                if key is not None:
                    self.heap.append((key, lvl.a, _skey(node), node,
                                      lvl.epoch))
        heapq.heapify(self.heap)

    # -- queries ----------------------------------------------------------------

    def best_cut(self):
        """Most negative cut ratio over all levels and tree edges, or
        the (0, 1) convention when no negative-gradient cut exists."""
        for lvl in self.levels.values():
            self._refresh(lvl)
        while self.heap:
            key, a, _, node, epoch = self.heap[0]
            self.ops += 1
            lvl = self.levels.get(a)
            if (lvl is None or epoch != lvl.epoch
                    or lvl.tree.parent.get(node) is None
                    or self._ratio_key(lvl, node) != key):
                heapq.heappop(self.heap)
                continue
            if key >= 0:
                break
            s = lvl.ssum[node]
            cap = lvl.tree.cap[node]
            u = float(Fraction(self.base) ** a) * cap
            if s <= 0:
                return CutSolution(a, node, +1, s, u, lvl.dsum[node],
                                   key, lvl.epoch)
            return CutSolution(a, node, -1, -s, u,
                               self.total_d - lvl.dsum[node], key,
                               lvl.epoch)
        return CutSolution(None, None, +1, 0, 1, 0, 0.0, -1)

    def toggle_cut(self, sol, eta):
        """Implicitly move potentials by eta along the cut's indicator
        and return the edges whose drift since their last refresh may
        have reached the detection tolerance."""
        if eta < 0:
            raise GraphError("toggle step must be nonnegative")
        if eta * sol.u > 1 + 1e-9:
            raise GraphError("toggle step exceeds the capacity bound")
        if sol.node is None or eta == 0:
            return set()
        lvl = self.levels.get(sol.level)
        if lvl is None or lvl.dirty or lvl.epoch != sol.epoch:
            raise GraphError("stale cut solution")
        if sol.side > 0:
            lvl.offset[sol.node] = lvl.offset.get(sol.node, 0) + eta
        else:
            lvl.shift += eta
            lvl.offset[sol.node] = lvl.offset.get(sol.node, 0) - eta
        reported = lvl.ens.add_delta(("N", sol.node), eta)
        out = {leaf[1] for leaf in reported}
        for e in out:
            for other in self.levels.values():
                if other is not lvl:
                    other.ens.reset(("E", e))
        return out

    def potential(self, v):
        """Exact accumulated y(v) over all toggles so far."""
        if v not in self.g:
            raise GraphError("unknown vertex %r" % (v,))
        out = self.y0[v]
        for lvl in self.levels.values():
            if lvl.tree is None or (lvl.shift == 0 and not lvl.offset):
                continue
            node = lvl.tree.leaf_of[lvl.vmap[v]]
            total = lvl.shift
            while node is not None:
                self.ops += 1
                total += lvl.offset.get(node, 0)
                node = lvl.tree.parent[node]
            out += total
        return out

    def cut_vertices(self, sol):
        """Materialized C for audits; the engine itself never needs it."""
        if sol.node is None:
            return set()
        lvl = self.levels[sol.level]
        below = {lvl.inv_vmap[x]
                 for x in lvl.tree.leaves_below(sol.node)}
        if sol.side > 0:
            return below
        return set(self.g) - below

    # -- audits -----------------------------------------------------------------

    def audit_sums(self):
        """Recompute below-sums and orthogonality from scratch."""
        total_g = sum(self.g.values())
        if total_g:
            raise GraphError("gradient lost orthogonality to ones")
        if sum(self.d.values()) != self.total_d:
            raise GraphError("demand total drifted")
        for lvl in self.levels.values():
            if lvl.dirty or lvl.tree is None:
                continue
            for node in lvl.tree.parent:
                below = {lvl.inv_vmap[x]
                         for x in lvl.tree.leaves_below(node)}
                if sum(self.g[v] for v in below) != lvl.ssum[node]:
                    raise GraphError("stale gradient sum at %r" % (node,))
                if sum(self.d[v] for v in below) != lvl.dsum[node]:
                    raise GraphError("stale demand sum at %r" % (node,))

    @property
    def detection_ops(self):
        return sum(lvl.ens.ops for lvl in self.levels.values())
