"""Lazy threshold detection on dynamic layered forests.

A LayerTree stores, per vertex, the change c(v) it has experienced and
a threshold t(v); per non-root vertex the amount p(v) already passed
down its parent edge; and per tracked leaf a significance s'(l) with
the value r(l) of c(l) at its last report. Change added at a vertex is
not propagated eagerly: thresholds tell how much more change a subtree
tolerates before some tracked leaf must be reported, and only then is
the relevant root-to-leaf path flushed.

A DetectionEnsemble covers a leveled DAG by a product family of such
trees, one per choice vector over the DAG's layers, so that every
root-to-leaf path survives in at least one member. Change accumulated
on a DAG edge then splits over the family, and a tree member reports
once its share reaches significance / family size.
"""

from __future__ import annotations

import heapq
import math
from itertools import product

from .graphcore import GraphError

INF = math.inf


def _skey(x):
    """Stable tie-break key for heap entries with equal thresholds."""
    return repr(x)


class LayerTree:
    """Forest with lazily propagated accumulated change.

    Thresholds follow the live invariant: t(l) = s'(l) + r(l) - c(l)
    for tracked leaves, t(v) = min over children of (t(child) +
    p(child)) - c(v) otherwise, and t stays positive between public
    operations. Thresholds are monotone nonincreasing from leaves to
    roots, so violations are detected at roots and resolved by
    descending minimum heap keys to the offending leaf.
    """

    def __init__(self):
        self.parent = {}
        self.children = {}
        self.c = {}
        self.p = {}
        self.t = {}
        self.sig = {}
        self.r = {}
        self.heap = {}
        self.dirty = set()
        self.ops = 0

    # -- vertices -------------------------------------------------------

    def add_vertex(self, v, significance=None):
        if v in self.parent:
            raise GraphError("vertex %r already present" % (v,))
        self.parent[v] = None
        self.children[v] = set()
        self.c[v] = 0
        self.heap[v] = []
        if significance is not None:
            if not significance > 0:
                raise GraphError("significance must be positive")
            self.sig[v] = significance
            self.r[v] = 0
            self.t[v] = significance
        else:
            self.t[v] = INF

    def remove_vertex(self, v):
        """Drop a childless vertex, detaching it from its parent."""
        if self.children.get(v):
            raise GraphError("cannot remove a vertex with children")
        u = self.parent.get(v)
        if u is not None:
            self.delete_edge(u, v)
        for store in (self.parent, self.children, self.c, self.t,
                      self.heap, self.sig, self.r):
            store.pop(v, None)
        self.dirty.discard(v)

    # -- heap helpers -----------------------------------------------------

    def _push(self, u, v):
        heapq.heappush(self.heap[u], (self.t[v] + self.p[v], _skey(v), v))
        self.ops += 1
        if len(self.heap[u]) > 8 + 4 * len(self.children[u]):
            self._compact(u)

    def _compact(self, u):
        self.heap[u] = [(self.t[v] + self.p[v], _skey(v), v)
                        for v in self.children[u]]
        heapq.heapify(self.heap[u])

    def _min(self, u):
        """Valid minimum heap entry of u, or (INF, None)."""
        h = self.heap[u]
        while h:
            key, _, v = h[0]
            if self.parent.get(v) == u and self.t[v] + self.p[v] == key:
                return key, v
            heapq.heappop(h)
            self.ops += 1
        return INF, None

    # -- threshold maintenance --------------------------------------------

    def _terminal_t(self, v):
        if v in self.sig:
            return self.sig[v] + self.r[v] - self.c[v]
        key, child = self._min(v)
        if child is None:
            return INF
        return key - self.c[v]

    def _repair_from(self, v, stop_early=False):
        """Recompute t(v) and propagate threshold changes to the root.

        stop_early is sound only when nothing but t(v) changed; flushes
        rewrite p along the path, so they always walk to the root."""
        self.t[v] = self._terminal_t(v)
        w = v
        while True:
            u = self.parent[w]
            if u is None:
                if self.t[w] <= 0:
                    self.dirty.add(w)
                return
            self._push(u, w)
            key, _ = self._min(u)
            new_t = key - self.c[u]
            if stop_early and new_t == self.t[u]:
                return
            self.t[u] = new_t
            w = u

    def _root_path(self, v):
        path = [v]
        w = v
        while self.parent[w] is not None:
            w = self.parent[w]
            path.append(w)
            if len(path) > len(self.parent):
                raise GraphError("parent pointers form a cycle")
        path.reverse()
        return path

    def flush(self, v):
        """Deliver all change pending on v's root path to v, then
        repair thresholds along the path."""
        path = self._root_path(v)
        self.ops += len(path)
        for u, w in zip(path, path[1:]):
            delta = self.c[u] - self.p[w]
            if delta:
                self.c[w] += delta
            self.p[w] = self.c[u]
        self._repair_from(v)

    # -- edges ------------------------------------------------------------

    def insert_edge(self, u, v):
        if u not in self.parent:
            self.add_vertex(u)
        if v not in self.parent:
            self.add_vertex(v)
        if u in self.sig:
            raise GraphError("tracked leaves cannot gain children")
        if self.parent[v] is not None:
            raise GraphError("vertex %r already has a parent" % (v,))
        if v in self._root_path(u):
            raise GraphError("edge (%r, %r) would close a cycle" % (u, v))
        self.flush(u)
        self.parent[v] = u
        self.children[u].add(v)
        self.p[v] = self.c[u]
        self.dirty.discard(v)
        self.flush(v)

    def delete_edge(self, u, v):
        if self.parent.get(v) != u:
            raise GraphError("edge (%r, %r) not present" % (u, v))
        self.flush(v)
        self.parent[v] = None
        self.children[u].discard(v)
        del self.p[v]
        if self.t[v] <= 0:
            self.dirty.add(v)
        self.flush(u)

    # -- change -----------------------------------------------------------

    def add_delta(self, v, delta):
        if delta < 0:
            raise GraphError("deltas must be nonnegative")
        self.c[v] += delta
        self._repair_from(v, stop_early=True)
        return self._drain()

    def _drain(self):
        reported = set()
        guard = 0
        while self.dirty:
            guard += 1
            if guard > 64 * (len(self.parent) + len(reported) + 4) ** 2:
                raise GraphError("report loop failed to settle")
            v = self.dirty.pop()
            if self.parent.get(v) is not None or v not in self.t:
                continue
            if self.t[v] > 0:
                continue
            w = v
            while w not in self.sig:
                self.ops += 1
                _, child = self._min(w)
                if child is None:
                    raise GraphError("threshold violation without a "
                                     "tracked leaf below %r" % (v,))
                w = child
            self.flush(w)
            if self.t[w] <= 0:
                reported.add(w)
                self.r[w] = self.c[w]
                self._repair_from(w)
            if v in self.t and self.parent[v] is None and self.t[v] <= 0:
                self.dirty.add(v)
        return reported

    def reset(self, leaf, significance=None):
        """Restart a leaf's accumulation; optionally with a new
        significance. Used after the caller refreshed whatever quantity
        the leaf's drift was approximating."""
        if leaf not in self.sig:
            raise GraphError("vertex %r is not tracked" % (leaf,))
        self.flush(leaf)
        self.r[leaf] = self.c[leaf]
        if significance is not None:
            if not significance > 0:
                raise GraphError("significance must be positive")
            self.sig[leaf] = significance
        self._repair_from(leaf)

    def set_significance(self, leaf, significance):
        """Change a leaf's significance while keeping its accumulation
        baseline."""
        if leaf not in self.sig:
            raise GraphError("vertex %r is not tracked" % (leaf,))
        if not significance > 0:
            raise GraphError("significance must be positive")
        self.flush(leaf)
        self.sig[leaf] = significance
        self._repair_from(leaf)

    # -- audits -----------------------------------------------------------

    def accumulated(self, leaf):
        """Exact change a tracked leaf has gathered since last report."""
        path = self._root_path(leaf)
        total = sum(self.c[v] for v in path) - self.r[leaf]
        for w in path[1:]:
            total -= self.p[w]
        return total

    def audit(self):
        """Recompute every threshold and check the live invariant."""
        if len(self.parent) > 200:
            raise GraphError("audit capped at 200 vertices")
        for v in self.parent:
            if v in self.sig:
                want = self.sig[v] + self.r[v] - self.c[v]
            else:
                best = INF
                for w in self.children[v]:
                    key = self.t[w] + self.p[w]
                    if key < best:
                        best = key
                want = best - self.c[v] if best < INF else INF
            if self.t[v] != want:
                raise GraphError("stale threshold at %r" % (v,))
            if not self.t[v] > 0:
                raise GraphError("nonpositive threshold at %r" % (v,))


class DetectionEnsemble:
    """Product family of LayerTrees covering a leveled DAG.

    The DAG is given incrementally as ordered in-edge lists. Layers are
    longest-path distances to a sink, so layers strictly decrease along
    edges and any root-to-leaf path meets each layer at most once. A
    family member is keyed by one in-edge index per layer; member trees
    keep, at each vertex, only the indexed in-edge (clamped to the
    vertex degree), which makes every path survive in at least one
    member. Reports are unioned over members and reported leaves are
    reset family-wide.
    """

    def __init__(self):
        self.in_edges = {}
        self.sig = {}
        self.trees = {}
        self.kept = {}
        self.layer = {}
        self.gamma = 1
        self._vecs = [()]
        self._restructure()

    # -- structure --------------------------------------------------------

    def add_vertex(self, v):
        if v in self.in_edges:
            return
        self._add_plain(v)
        self._restructure()

    def add_leaf(self, v, significance):
        self.apply_diff(new_leaves=[(v, significance)])

    def _add_plain(self, v):
        self.in_edges[v] = []
        for tree in self.trees.values():
            tree.add_vertex(v)

    def remove_vertices(self, vs):
        """Drop fully detached vertices (no in-edges, no out-edges)."""
        vs = set(vs)
        for v in vs:
            if v not in self.in_edges:
                raise GraphError("vertex %r is not present" % (v,))
            if self.in_edges[v]:
                raise GraphError("detach in-edges before removing %r" % (v,))
        for v, parents in self.in_edges.items():
            if v in vs:
                continue
            for u in parents:
                if u in vs:
                    raise GraphError("detach out-edges before removing %r" % (u,))
        for v in vs:
            del self.in_edges[v]
            self.sig.pop(v, None)
            for tree in self.trees.values():
                tree.remove_vertex(v)
        self._restructure()

    def insert_edge(self, u, v):
        self.apply_diff(added=[(u, v)])

    def delete_edge(self, u, v):
        self.apply_diff(removed=[(u, v)])

    def apply_diff(self, removed=(), added=(), new_leaves=()):
        """Batch structure change with a single family realignment."""
        for v, s in new_leaves:
            if v in self.in_edges:
                raise GraphError("vertex %r already present" % (v,))
            self.in_edges[v] = []
            self.sig[v] = s
            for tree in self.trees.values():
                tree.add_vertex(v, significance=self._share(s))
        for u, v in removed:
            self.in_edges[v].remove(u)
        for u, v in added:
            if u not in self.in_edges:
                self._add_plain(u)
            if v not in self.in_edges:
                self._add_plain(v)
            if u in self.sig:
                raise GraphError("leaves cannot gain children")
            self.in_edges[v].append(u)
        self._restructure()

    def _share(self, significance):
        return significance / self.gamma

    def _layering(self):
        out_deg = {v: 0 for v in self.in_edges}
        for v, parents in self.in_edges.items():
            for u in parents:
                out_deg[u] += 1
        order = []
        queue = [v for v, d in out_deg.items() if d == 0]
        remaining = dict(out_deg)
        layer = {}
        while queue:
            v = queue.pop()
            layer[v] = 0
            order.append(v)
            for u in self.in_edges[v]:
                remaining[u] -= 1
                if remaining[u] == 0:
                    queue.append(u)
        if len(order) != len(self.in_edges):
            raise GraphError("detection DAG contains a cycle")
        for v in order:
            for u in self.in_edges[v]:
                if layer[v] + 1 > layer[u]:
                    layer[u] = layer[v] + 1
        return layer

    def _restructure(self):
        """Recompute layers, grow the member family to the current
        per-layer in-degree maxima, and realign every member's kept
        in-edges."""
        self.layer = self._layering()
        depth = 1 + max(self.layer.values(), default=0)
        budgets = [1] * depth
        for v, parents in self.in_edges.items():
            lv = self.layer[v]
            if len(parents) > budgets[lv]:
                budgets[lv] = len(parents)
        self._vecs = [tuple((i, c) for i, c in enumerate(choice) if c > 0)
                      for choice in product(*(range(b) for b in budgets))]
        for vec in self._vecs:
            if vec not in self.trees:
                self.trees[vec] = self._fresh_tree()
        if len(self.trees) > self.gamma:
            self.gamma = len(self.trees)
            for tree in self.trees.values():
                for leaf, s in self.sig.items():
                    tree.set_significance(leaf, self._share(s))
        for vec, tree in self.trees.items():
            kept = self._kept_edges(vec)
            old = self.kept.get(vec, {})
            for v, u in old.items():
                if kept.get(v) != u and tree.parent.get(v) == u:
                    tree.delete_edge(u, v)
            for v, u in kept.items():
                if tree.parent.get(v) != u:
                    tree.insert_edge(u, v)
            self.kept[vec] = kept

    def _kept_edges(self, vec):
        choice = dict(vec)
        kept = {}
        for v, parents in self.in_edges.items():
            if not parents:
                continue
            idx = min(choice.get(self.layer[v], 0), len(parents) - 1)
            kept[v] = parents[idx]
        return kept

    def _fresh_tree(self):
        tree = LayerTree()
        for v in self.in_edges:
            if v in self.sig:
                tree.add_vertex(v, significance=self._share(self.sig[v]))
            else:
                tree.add_vertex(v)
        return tree

    # -- change -----------------------------------------------------------

    def add_delta(self, v, delta):
        """Apply delta below v in every member; returns the union of
        reported leaves after resetting them family-wide."""
        reported = set()
        for tree in self.trees.values():
            reported |= tree.add_delta(v, delta)
        for leaf in reported:
            for tree in self.trees.values():
                tree.reset(leaf)
        return reported

    def reset(self, leaf, significance=None):
        if significance is not None:
            self.sig[leaf] = significance
        for tree in self.trees.values():
            tree.reset(leaf, significance=None if significance is None
                       else self._share(significance))

    # -- audits -----------------------------------------------------------

    @property
    def ops(self):
        return sum(tree.ops for tree in self.trees.values())

    def audit(self):
        for tree in self.trees.values():
            tree.audit()
