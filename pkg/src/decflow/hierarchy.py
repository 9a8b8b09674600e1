"""Expander hierarchy, tree cut sparsifier, and the batched rebuild layer.

The static pipeline stacks boundary-linked expander decompositions:
level i+1 contracts every cluster of level i to a vertex and keeps the
crossing edges. The tree has a node per vertex per level under a
virtual root; the edge above a node carries the volume of the node's
cluster, measured one level below so internal capacity counts, rounded
up to a power of two and clamped so it never increases again. The
minimum capacity along a leaf-leaf path approximates the minimum cut
between the two vertices.

Decremental maintenance forwards a capacity decrease through the
contraction maps level by level. When a partition refines, the
contracted vertex above it is split, formerly internal edges become
crossing edges one level up, boundary self-loops are resized, and the
tree mirrors the splits node for node, so only the touched part of the
hierarchy is reworked.

The batching layer turns the decremental structure into a fully
dynamic one: insertions are buffered in per-level windows, and on a
schedule of nested periods level i is rebuilt from a core graph that
contracts the previous level's tree onto a branch-free extension of
the window's endpoints.
"""

from __future__ import annotations

import math
from collections import defaultdict, deque

from .expander import boundary_linked_decompose, sync_linkage
from .graphcore import DynGraph, GraphError

ROOT = ("root",)


def pow2ceil(x):
    """Smallest power of two >= x, exactly; 0 for nonpositive x."""
    if x <= 0:
        return 0.0
    m, e = math.frexp(float(x))
    if m == 0.5:
        e -= 1
    return float(2.0 ** e)


def _node_key(node):
    return repr(node)


def is_connected(graph: DynGraph) -> bool:
    """Connectivity over positive-capacity edges; trivial graphs pass."""
    verts = list(graph.vertices())
    if len(verts) <= 1:
        return True
    adj = defaultdict(list)
    for e in graph.edges():
        if graph.capacity[e] > 0:
            adj[graph.tail[e]].append(graph.head[e])
            adj[graph.head[e]].append(graph.tail[e])
    seen = {verts[0]}
    queue = deque(seen)
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return len(seen) == len(verts)


def _live_edges(graph: DynGraph) -> int:
    return sum(1 for e in graph.edges() if graph.capacity[e] > 0)


# ---------------------------------------------------------------------------
# tree cut sparsifier


class TreeCutSparsifier:
    """Rooted tree with a virtual root; edge capacities are keyed by
    the child node and only ever decrease once set. Leaves stand for
    graph vertices and a mincut query takes the minimum capacity along
    the leaf-leaf path."""

    def __init__(self):
        self.parent = {ROOT: None}
        self.children = defaultdict(set)
        self.cap = {}
        self.vol = {}
        self.tag = {}
        self.leaf_of = {}
        self.epoch = 0

    def nodes(self):
        return self.parent.keys()

    def attach(self, node, parent, cap, tag=None, vol=None):
        if node in self.parent:
            raise GraphError("tree node %r already present" % (node,))
        if parent not in self.parent:
            raise GraphError("unknown parent %r" % (parent,))
        self.parent[node] = parent
        self.children[parent].add(node)
        self.cap[node] = float(cap)
        if vol is not None:
            self.vol[node] = float(vol)
        if tag is not None:
            self.tag[node] = tag
        self.epoch += 1

    def reparent(self, node, parent):
        if parent not in self.parent:
            raise GraphError("unknown parent %r" % (parent,))
        old = self.parent[node]
        self.children[old].discard(node)
        self.parent[node] = parent
        self.children[parent].add(node)
        self.epoch += 1

    def retire(self, node):
        if self.children.get(node):
            raise GraphError("cannot retire a node with children")
        old = self.parent.pop(node)
        self.children[old].discard(node)
        self.children.pop(node, None)
        self.cap.pop(node, None)
        self.vol.pop(node, None)
        self.tag.pop(node, None)
        self.epoch += 1

    def clamp(self, node, raw):
        """Lower the capacity above a node to pow2ceil(raw) if that is
        smaller than the current value; never raises it."""
        new = pow2ceil(raw)
        if new < self.cap.get(node, math.inf):
            self.cap[node] = new

    def shrink_vol(self, node, delta):
        """Account a capacity loss inside the cluster a node stands
        for and clamp the node's edge to the remaining volume."""
        if node not in self.vol:
            return
        self.vol[node] -= delta
        self.clamp(node, self.vol[node])

    def path_nodes(self, a, b):
        """Child-side nodes of the tree edges on the path between the
        leaves of two graph vertices."""
        na, nb = self.leaf_of[a], self.leaf_of[b]
        anc = {}
        x = na
        while x is not None:
            anc[x] = True
            x = self.parent[x]
        x = nb
        walk_b = []
        while x not in anc:
            walk_b.append(x)
            x = self.parent[x]
        lca = x
        walk_a = []
        x = na
        while x != lca:
            walk_a.append(x)
            x = self.parent[x]
        return walk_a + walk_b

    def mincut_query(self, a, b):
        if a == b:
            raise GraphError("mincut query needs two distinct vertices")
        path = self.path_nodes(a, b)
        if not path:
            return math.inf
        return min(self.cap[x] for x in path)

    def edges(self):
        """(child, parent, capacity) triples, virtual-root edges
        included."""
        return [(c, p, self.cap[c]) for c, p in self.parent.items()
                if p is not None]

    def hop_depth(self):
        depth = {ROOT: 0}
        out = 0
        stack = [ROOT]
        while stack:
            x = stack.pop()
            for c in self.children[x]:
                depth[c] = depth[x] + 1
                if depth[c] > out:
                    out = depth[c]
                stack.append(c)
        return out

    def leaves_below(self, node):
        """Graph vertices whose leaves sit in the subtree under a node."""
        back = {n: v for v, n in self.leaf_of.items()}
        out = set()
        stack = [node]
        while stack:
            x = stack.pop()
            if x in back:
                out.add(back[x])
            stack.extend(self.children[x])
        return out


# ---------------------------------------------------------------------------
# static hierarchy


class HierLevel:
    """One decomposed level and its maps into the contraction above."""

    __slots__ = ("graph", "origin", "red", "part", "cluster_vertex",
                 "lift", "lift_inv", "uback")

    def __init__(self, graph, origin):
        self.graph = graph
        self.origin = origin        # level eid -> base eid
        self.red = None
        self.part = None
        self.cluster_vertex = {}    # cluster id -> vertex one level up
        self.lift = {}              # crossing eid -> image one level up
        self.lift_inv = {}
        self.uback = {}             # unit vertex -> level vertex


class ExpanderHierarchy:
    """Stacked boundary-linked decompositions with contraction maps.

    levels[i] holds the decomposition of G_i; the contraction of the
    last level is kept as the top graph, which by construction has no
    positive-capacity edges left."""

    def __init__(self, phi, beta, s_param, cert_limit):
        if not 0 < phi <= 1:
            raise GraphError("phi must lie in (0, 1]")
        self.phi = phi
        self.beta = beta
        self.s_param = s_param
        self.cert_limit = cert_limit
        self.weight = 1.0 / (s_param * beta * phi)
        self.levels = []
        self.top = None
        self.top_origin = {}

    @property
    def num_levels(self):
        return len(self.levels)

    def graph_at(self, i):
        if i < len(self.levels):
            return self.levels[i].graph
        return self.top

    def origin_at(self, i):
        if i < len(self.levels):
            return self.levels[i].origin
        return self.top_origin


def _decompose_level(h, graph, origin):
    lvl = HierLevel(graph, origin)
    lvl.red, lvl.part = boundary_linked_decompose(
        graph, h.phi, h.beta, h.s_param, h.cert_limit)
    lvl.uback = {uv: v for v, uv in lvl.red.vertex_of.items()}
    return lvl


def _contract_level(lvl):
    """Contract every cluster to a vertex; crossing edges survive with
    their capacities (zero-capacity ones included, so the lift maps
    stay total), same-cluster edges vanish."""
    nxt = DynGraph()
    origin = {}
    part, red = lvl.part, lvl.red
    for cid in sorted(part.clusters):
        lvl.cluster_vertex[cid] = nxt.add_vertex()
    cv = lvl.cluster_vertex
    g = lvl.graph
    for e in sorted(g.edges()):
        ca = part.cluster_of[red.vertex_of[g.tail[e]]]
        cb = part.cluster_of[red.vertex_of[g.head[e]]]
        if ca == cb:
            continue
        ne = nxt.add_edge(cv[ca], cv[cb], g.capacity[e], 0.0)
        lvl.lift[e] = ne
        lvl.lift_inv[ne] = e
        origin[ne] = lvl.origin[e]
    return nxt, origin


def _pi(lvl, v):
    return lvl.cluster_vertex[lvl.part.cluster_of[lvl.red.vertex_of[v]]]


def _grow_levels(h, tree=None):
    """Decompose-and-contract the current top until it has no
    positive-capacity edge left. When a tree is given, new nodes are
    attached and the old top nodes reparented under them."""
    limit = h.top.num_vertices + int(math.log2(h.top.total_capacity + 2)) + 8
    rounds = 0
    while _live_edges(h.top) > 0:
        rounds += 1
        if rounds > limit:
            raise GraphError("hierarchy failed to flatten; phi too large")
        prev_n = h.top.num_vertices
        i = len(h.levels)
        lvl = _decompose_level(h, h.top, h.top_origin)
        h.levels.append(lvl)
        g2, org2 = _contract_level(lvl)
        if g2.num_vertices == prev_n and _live_edges(g2) > 0:
            raise GraphError("decomposition does not contract; "
                             "phi is too large for this graph")
        h.top, h.top_origin = g2, org2
        if tree is not None:
            grown = defaultdict(float)
            for v in lvl.graph.vertices():
                grown[_pi(lvl, v)] += lvl.graph.vertex_volume(v)
            for v in sorted(g2.vertices()):
                tree.attach((i + 1, v), ROOT, pow2ceil(grown[v]),
                            vol=grown[v])
            for v in sorted(lvl.graph.vertices()):
                tree.reparent((i, v), (i + 1, _pi(lvl, v)))
    if tree is not None:
        # the surviving top vertices are whole components again
        for v in h.top.vertices():
            tree.clamp((len(h.levels), v), 0)


def build_hierarchy(graph, phi, beta=2.0, s_param=2, cert_limit=16,
                    allow_disconnected=False):
    """Full expander hierarchy of a capacitated graph. Faults on
    disconnected input unless told otherwise (components then simply
    end up under separate top vertices)."""
    if not allow_disconnected and not is_connected(graph):
        raise GraphError("hierarchy needs a connected graph; "
                         "split components first")
    h = ExpanderHierarchy(phi, beta, s_param, cert_limit)
    h.top = graph.clone()
    h.top_origin = {e: e for e in h.top.edges()}
    _grow_levels(h)
    return h


def assemble_tree(h: ExpanderHierarchy) -> TreeCutSparsifier:
    """Tree over the hierarchy: a node per vertex per level, capacities
    pow2ceil of the node's cluster volume measured one level below, top
    vertices under the virtual root at capacity 0."""
    t = TreeCutSparsifier()
    k = h.num_levels
    vols = {}
    for i in range(k):
        g = h.graph_at(i)
        lvl = h.levels[i]
        for v in g.vertices():
            vol = g.vertex_volume(v)
            if i == 0:
                vols[(0, v)] = vol
            key = (i + 1, _pi(lvl, v))
            vols[key] = vols.get(key, 0.0) + vol
    top = h.graph_at(k)
    for v in sorted(top.vertices()):
        t.attach((k, v), ROOT, 0.0, vol=vols.get((k, v), 0.0))
    for i in range(k - 1, -1, -1):
        for v in sorted(h.graph_at(i).vertices()):
            w = vols[(i, v)]
            t.attach((i, v), (i + 1, _pi(h.levels[i], v)),
                     pow2ceil(w), vol=w)
    for v in sorted(h.graph_at(0).vertices()):
        t.leaf_of[v] = (0, v)
    return t


# ---------------------------------------------------------------------------
# decremental maintenance


class DecrementalTree:
    """Tree cut sparsifier maintained under capacity decreases and
    deletions. Deletions keep the edge at capacity 0 inside the level
    graphs so the contraction maps stay total."""

    def __init__(self, graph, phi, beta=2.0, s_param=2, cert_limit=16,
                 allow_disconnected=False):
        self.h = build_hierarchy(graph, phi, beta, s_param, cert_limit,
                                 allow_disconnected)
        self.tree = assemble_tree(self.h)
        self.base = self.h.graph_at(0)

    # -- queries ------------------------------------------------------

    def mincut(self, a, b):
        return self.tree.mincut_query(a, b)

    def boundary(self, node):
        """Base edge ids crossing the cluster a tree node stands for;
        exact for every node of this tree."""
        i, v = node
        g = self.h.graph_at(i)
        org = self.h.origin_at(i)
        return {org[e] for e in g.incident_edges(v) if g.capacity[e] > 0}

    # -- updates ------------------------------------------------------

    def delete_edge(self, eid):
        self.decrease_edge(eid, 0.0)

    def decrease_edge(self, eid, new_cap):
        if eid not in self.base.capacity:
            raise GraphError("unknown base edge %r" % (eid,))
        if new_cap > self.base.capacity[eid]:
            raise GraphError("capacity may only decrease")
        self._decrease(0, eid, new_cap)
        self._seal_top()

    def _seal_top(self):
        """Pin the virtual-root edges of the current top vertices to 0;
        each one stands for a whole component."""
        k = self.h.num_levels
        for v in self.h.top.vertices():
            self.tree.clamp((k, v), 0)

    def _decrease(self, i, ei, new_cap):
        g = self.h.graph_at(i)
        if new_cap >= g.capacity[ei]:
            return
        delta = g.capacity[ei] - new_cap
        g.decrease_capacity(ei, new_cap)
        for v in (g.tail[ei], g.head[ei]):
            self.tree.shrink_vol((i, v), delta)
        if i >= self.h.num_levels:
            return
        lvl = self.h.levels[i]
        if lvl.lift.get(ei) is None:
            # internal one level up: both capacity slots sit inside
            # that cluster's volume
            self.tree.shrink_vol((i + 1, _pi(lvl, g.tail[ei])), 2 * delta)
        deltas = list(lvl.part.apply_source_decrease(ei, new_cap))
        deltas += self._shrink_linkage(lvl, ei, new_cap)
        img = lvl.lift.get(ei)
        if img is not None:
            self._decrease(i + 1, img, new_cap)
        if deltas:
            self._propagate(i, deltas)

    def _shrink_linkage(self, lvl, ei, new_cap):
        """Resize the boundary self-loops standing for a decreased
        crossing edge."""
        red, part = lvl.red, lvl.part
        deltas = []
        if red.cutoff <= 0:
            return deltas
        target = math.ceil(self.h.weight * new_cap / red.cutoff)
        for uv in set(red.source_ends.get(ei, ())):
            be = part.linkage.get((ei, uv))
            if be is None:
                continue
            if not red.unit.has_edge(be):
                part.linkage.pop((ei, uv), None)
                continue
            cap = int(red.unit.capacity[be])
            if cap <= target:
                continue
            if target <= 0:
                deltas += part.delete_unit(be)
                part.linkage.pop((ei, uv), None)
            else:
                deltas += part.decrease_unit(be, target)
        return deltas

    def _propagate(self, i, deltas):
        """Carry partition refinements at level i into the contraction
        and the tree, then recurse on the level above."""
        lvl = self.h.levels[i]
        for _ in range(4 * max(1, lvl.graph.num_vertices) + 16):
            grew, more = sync_linkage(lvl.graph, lvl.red, lvl.part,
                                      self.h.weight)
            deltas = list(deltas) + more
            if not grew:
                break
        chains = defaultdict(list)
        for old, news in deltas:
            chains[old].extend(news)
        roots = [cid for cid in chains if cid in lvl.cluster_vertex]
        next_deltas = []
        for cid in sorted(roots):
            pieces = self._resolve_pieces(lvl, cid, chains)
            if len(pieces) == 1:
                ncid = pieces[0][0]
                if ncid != cid:
                    lvl.cluster_vertex[ncid] = lvl.cluster_vertex.pop(cid)
                continue
            next_deltas += self._split_contracted(i, cid, pieces)
        if i + 1 < self.h.num_levels:
            if next_deltas:
                self._propagate(i + 1, next_deltas)
        elif _live_edges(self.h.top) > 0:
            _grow_levels(self.h, self.tree)

    def _resolve_pieces(self, lvl, cid, chains):
        """Follow a refinement chain down to the live clusters it ended
        at; returns (cluster id, sorted member vertices) pairs."""
        out, stack = set(), [cid]
        while stack:
            c = stack.pop()
            if c in lvl.part.clusters:
                out.add(c)
            elif c in chains:
                stack.extend(chains[c])
            else:
                raise GraphError("lost track of cluster %r" % (c,))
        pieces = []
        for nc in sorted(out):
            members = sorted(lvl.uback[uv]
                             for uv in lvl.part.clusters[nc].vertices)
            pieces.append((nc, members))
        return pieces

    def _split_contracted(self, i, cid, pieces):
        """Split the contracted vertex of a refined cluster piece by
        piece, surface formerly internal edges as new crossing images,
        and mirror the split in the tree and the partition above."""
        lvl = self.h.levels[i]
        gnext = self.h.graph_at(i + 1)
        nxt_origin = self.h.origin_at(i + 1)
        xold = lvl.cluster_vertex.pop(cid)
        member_piece = {}
        for nc, members in pieces:
            for v in members:
                member_piece[v] = nc
        piece_vertex = {}
        cur = xold
        for nc, members in pieces[:-1]:
            memset = set(members)
            first = set()
            for ne in gnext.incident_edges(cur):
                e0 = lvl.lift_inv[ne]
                if lvl.graph.tail[e0] in memset or \
                        lvl.graph.head[e0] in memset:
                    first.add(ne)
            va, vb = gnext.split_vertex(cur, first)
            piece_vertex[nc] = va
            cur = vb
        piece_vertex[pieces[-1][0]] = cur
        for nc, v1 in piece_vertex.items():
            lvl.cluster_vertex[nc] = v1
        new_images = []
        seen = set()
        for nc, members in pieces:
            for v in members:
                for e0 in lvl.graph.incident_edges(v):
                    if e0 in seen or e0 in lvl.lift:
                        continue
                    seen.add(e0)
                    pa = member_piece.get(lvl.graph.tail[e0])
                    pb = member_piece.get(lvl.graph.head[e0])
                    if pa is None or pb is None or pa == pb:
                        continue
                    ne = gnext.add_edge(piece_vertex[pa], piece_vertex[pb],
                                        lvl.graph.capacity[e0], 0.0)
                    lvl.lift[e0] = ne
                    lvl.lift_inv[ne] = e0
                    nxt_origin[ne] = lvl.origin[e0]
                    new_images.append(ne)
        t = self.tree
        old_node = (i + 1, xold)
        parent = t.parent[old_node]
        pvol = {nc: sum(lvl.graph.vertex_volume(v) for v in members)
                for nc, members in pieces}
        for nc in sorted(piece_vertex):
            v1 = piece_vertex[nc]
            t.attach((i + 1, v1), parent,
                     pow2ceil(pvol[nc]), vol=pvol[nc])
        for nc, members in pieces:
            for v in members:
                t.reparent((i, v), (i + 1, piece_vertex[nc]))
        t.retire(old_node)
        if i + 1 >= self.h.num_levels:
            return []
        return self._split_unit_above(i + 1, xold, piece_vertex, new_images)

    def _split_unit_above(self, j, xold, piece_vertex, new_images):
        """Mirror a contracted-vertex split inside level j's unit
        reduction and partition; registers the new crossing images as
        fresh source edges. Returns the partition delta at level j."""
        lvl = self.h.levels[j]
        red, part = lvl.red, lvl.part
        g = lvl.graph
        deltas = []
        uv = red.vertex_of.pop(xold)
        del lvl.uback[uv]
        red.source_vol.pop(uv, None)
        linkage_inv = {be: key for key, be in part.linkage.items()}
        items = sorted(piece_vertex.items())
        cur = uv
        for nc, v1 in items[:-1]:
            first = set()
            for be in red.unit.incident_edges(cur):
                src = red.source_of[be]
                if src[0] == "edge":
                    e1 = src[1]
                elif be in linkage_inv:
                    e1 = linkage_inv[be][0]
                else:
                    continue        # padding loops go to the residual
                if not g.has_edge(e1):
                    continue
                if v1 == g.tail[e1] or v1 == g.head[e1]:
                    first.add(be)
            ua, ub = part.split_unit_vertex(cur, first)
            red.vertex_of[v1] = ua
            lvl.uback[ua] = v1
            cur = ub
        vlast = items[-1][1]
        red.vertex_of[vlast] = cur
        lvl.uback[cur] = vlast
        touched_edges = set()
        for nc, v1 in items:
            touched_edges.update(g.incident_edges(v1))
        for e1 in touched_edges:
            if e1 in red.source_capacity:
                red.source_ends[e1] = (red.vertex_of[g.tail[e1]],
                                       red.vertex_of[g.head[e1]])
        new_caps = {ne: g.capacity[ne] for ne in new_images}
        for nc, v1 in items:
            u1 = red.vertex_of[v1]
            vol = g.vertex_volume(v1)
            for ne in g.incident_edges(v1):
                if ne in new_caps:
                    vol -= new_caps[ne]
            red.source_vol[u1] = vol
            target = math.ceil(vol / red.cutoff) if red.cutoff > 0 else 0
            deltas += part.set_pad(u1, target)
        for ne in new_images:
            deltas += part.insert_source_edge(ne, g.tail[ne], g.head[ne],
                                              g.capacity[ne])
        rechecked = set()
        for nc, v1 in items:
            cid = part.cluster_of.get(red.vertex_of[v1])
            if cid is not None and cid not in rechecked:
                rechecked.add(cid)
                deltas += part.recheck(cid)
        return deltas


# ---------------------------------------------------------------------------
# branch-free sets and core graphs


def extend_branch_free(tree: TreeCutSparsifier, R):
    """Smallest superset of R whose Steiner tree has no branching node
    outside it; adds the nodes of Steiner degree >= 3. |result| stays
    within 2|R|."""
    R = set(R)
    for r in R:
        if r not in tree.parent:
            raise GraphError("node %r is not in the tree" % (r,))
    if len(R) <= 2:
        return R
    reached = defaultdict(int)
    for r in R:
        x = r
        while x is not None:
            reached[x] += 1
            x = tree.parent[x]
    total = len(R)
    deg = defaultdict(int)
    for x, c in reached.items():
        if 0 < c < total:
            deg[x] += 1
            deg[tree.parent[x]] += 1
    branch = {x for x, d in deg.items() if d >= 3}
    return R | branch


def _steiner_paths(tree, B):
    """Edge-disjoint decomposition of the Steiner tree of a branch-free
    set into paths between consecutive members; each path is a list of
    child-side nodes (tree edges)."""
    B = set(B)
    if len(B) <= 1:
        return []
    reached = defaultdict(int)
    for r in B:
        x = r
        while x is not None:
            reached[x] += 1
            x = tree.parent[x]
    total = len(B)
    adj = defaultdict(list)     # node -> [(neighbor, child-side node)]
    for x, c in reached.items():
        if 0 < c < total:
            p = tree.parent[x]
            adj[x].append((p, x))
            adj[p].append((x, x))
    paths = []
    used = set()
    for b in sorted(B, key=_node_key):
        for nb, ek in adj[b]:
            if ek in used:
                continue
            used.add(ek)
            path = [ek]
            cur = nb
            while cur not in B:
                step = [(n2, e2) for n2, e2 in adj[cur] if e2 not in used]
                if len(step) != 1:
                    raise GraphError("set is not branch-free at %r" % (cur,))
                n2, e2 = step[0]
                used.add(e2)
                path.append(e2)
                cur = n2
            paths.append(path)
    return paths


class CoreGraph:
    """Contraction of a graph over the forest left by cutting the
    lexicographically-first minimum-capacity edge out of each
    branch-free path."""

    __slots__ = ("graph", "comp_of", "vertex_b", "removed", "origin")

    def __init__(self):
        self.graph = DynGraph()
        self.comp_of = {}       # tree node -> core vertex
        self.vertex_b = {}      # core vertex -> owning B node (or None)
        self.removed = []       # child-side nodes cut from the tree
        self.origin = {}        # core eid -> input eid


def induced_core_graph(graph, tree, B, tree_edge_of=None,
                       vertex_node=None) -> CoreGraph:
    """Contract a graph over the forest F(tree, B): one minimum edge is
    removed per Steiner path of B, every forest component collapses to
    one core vertex holding exactly one B node, and graph edges crossing
    components survive with their capacities. Graph copies of removed
    tree edges (identified through tree_edge_of) are left out; the
    removed list is returned for the caller to reattach.

    vertex_node maps graph vertices to tree nodes; identity by default.
    """
    B = set(B)
    if extend_branch_free(tree, B) != B:
        raise GraphError("the root set is not branch-free")
    paths = _steiner_paths(tree, B)
    removed = []
    for path in paths:
        best = min(path, key=lambda c: (tree.cap[c], _node_key(c)))
        removed.append(best)
    removed_set = set(removed)

    uf = {x: x for x in tree.parent}

    def find(x):
        while uf[x] != x:
            uf[x] = uf[uf[x]]
            x = uf[x]
        return x

    for child, parent in tree.parent.items():
        if parent is None or child in removed_set:
            continue
        ra, rb = find(child), find(parent)
        if ra != rb:
            uf[ra] = rb

    out = CoreGraph()
    out.removed = removed
    comp_vertex = {}
    for b in sorted(B, key=_node_key):
        c = find(b)
        if c in comp_vertex:
            raise GraphError("two roots share a forest component")
        comp_vertex[c] = out.graph.add_vertex()
        out.vertex_b[comp_vertex[c]] = b
    for x in tree.parent:
        c = find(x)
        if c not in comp_vertex:
            comp_vertex[c] = out.graph.add_vertex()
            out.vertex_b[comp_vertex[c]] = None
        out.comp_of[x] = comp_vertex[c]

    vn = vertex_node or {}
    for e in sorted(graph.edges()):
        if tree_edge_of and tree_edge_of.get(e) in removed_set:
            continue
        na = vn.get(graph.tail[e], graph.tail[e])
        nb = vn.get(graph.head[e], graph.head[e])
        ca, cb = out.comp_of.get(na), out.comp_of.get(nb)
        if ca is None or cb is None:
            raise GraphError("graph vertex missing from the tree")
        if ca == cb:
            continue
        ne = out.graph.add_edge(ca, cb, graph.capacity[e],
                                graph.cost.get(e, 0.0))
        out.origin[ne] = e
    return out


# ---------------------------------------------------------------------------
# batching layer


def _tag_factor(level, low):
    """Capacity multiplier a ground tree edge from batch level `low`
    carries inside the composed level-`level` tree."""
    if level == 0:
        return 1.0
    if low == 0:
        return float(2 ** level)
    return float(2 ** (level - low + 1))


class BatchLevel:
    __slots__ = ("t_i", "window", "dtree", "origin", "insert_img",
                 "forest", "cap_seen", "vertex_b", "extra_leaf",
                 "removed_tags", "fcover", "has_hat", "stamp", "dep")

    def __init__(self):
        self.t_i = 0
        self.window = []
        self.dtree = None
        self.origin = {}        # core eid -> ("ins", base e) | ("tree", tag)
        self.insert_img = {}    # base eid -> core eid
        self.forest = {}        # core eid -> ground tag (low, node)
        self.cap_seen = {}      # core eid -> last composed capacity seen
        self.vertex_b = {}      # core vertex -> previous-tree node
        self.extra_leaf = {}    # core vertex -> base vertex new to the tree
        self.removed_tags = set()
        self.fcover = []        # (surviving tag, removed tag) cover pairs
        self.has_hat = False
        self.stamp = 0
        self.dep = ()


class BatchingState:
    """Fully dynamic tree cut sparsifier built from nested rebuild
    periods. Level i is rebuilt every r^(L_max-i) updates from a core
    graph of the previous level's tree over the insertion window
    (t_{i-1}, t_i]; level L_max is rebuilt every update, so its window
    always covers the still-unmerged insertions. Deletions are
    forwarded to the level owning the edge, and capacity drops of
    contracted tree edges are polled through ground tags."""

    def __init__(self, graph, phi, beta=2.0, s_param=2, cert_limit=16,
                 L_max=2):
        self.base = graph.clone()
        self.phi = phi
        self.beta = beta
        self.s_param = s_param
        self.cert_limit = cert_limit
        self.L_max = L_max
        self.m_tilde = max(2, self.base.num_edges)
        self.r = max(2, math.ceil(self.m_tilde ** (1.0 / L_max)))
        self.t = 0
        self.insert_time = {e: 0 for e in self.base.edges()}
        self._stamp = 0
        self.levels = [None] * (L_max + 1)
        for i in range(L_max + 1):
            self._rebuild_level(i)

    def period(self, i):
        return self.r ** (self.L_max - i)

    def I(self, i):
        """Base edges still buffered above level i (inserted after its
        last rebuild boundary)."""
        t_i = self.levels[i].t_i
        return {e for e in self.base.edges() if self.insert_time[e] > t_i}

    # -- queries ------------------------------------------------------

    def mincut(self, a, b):
        return self.compose_tree(self.L_max).mincut_query(a, b)

    # -- update entry points -------------------------------------------

    def insert_edge(self, u, v, cap, cost=0.0):
        self.t += 1
        e = self.base.add_edge(u, v, cap, cost)
        self.insert_time[e] = self.t
        self._roll()
        return e

    def insert_vertex(self, demand=0.0):
        self.t += 1
        v = self.base.add_vertex(demand)
        self._roll()
        return v

    def delete_edge(self, e):
        return self.decrease_edge(e, 0.0)

    def decrease_edge(self, e, new_cap):
        self.t += 1
        it = self.insert_time[e]
        if new_cap <= 0:
            self.base.delete_edge(e)
            new_cap = 0.0
        else:
            self.base.decrease_capacity(e, new_cap)
        self._forward(e, it, new_cap)
        self._roll()

    def split_vertex(self, v, first_edges):
        """Vertex splits restart every level; the windows and insertion
        times survive unchanged."""
        self.t += 1
        va, vb = self.base.split_vertex(v, first_edges)
        for i in range(self.L_max + 1):
            self._rebuild_level(i)
        self._roll()
        return va, vb

    def update(self, ev):
        """Journal-style event dispatch; insert payload ids are minted
        fresh here, so callers track the returned handles."""
        kind = ev.kind
        if kind in ("InsertEdge", "InsertSelfLoop"):
            _, u, v, cap, cost = ev.payload
            return self.insert_edge(u, v, cap, cost)
        if kind == "DeleteEdge":
            return self.delete_edge(ev.payload[0])
        if kind == "DecreaseCapacity":
            return self.decrease_edge(ev.payload[0], ev.payload[2])
        if kind == "InsertVertex":
            return self.insert_vertex(ev.payload[1])
        if kind == "SplitVertex":
            v, _, _, first = ev.payload
            return self.split_vertex(v, set(first))
        raise GraphError("unsupported update kind %r" % (kind,))

    # -- internals ------------------------------------------------------

    def _forward(self, e, inserted_at, new_cap):
        lv0 = self.levels[0]
        if inserted_at <= lv0.t_i and e in lv0.dtree.base.capacity:
            lv0.dtree.decrease_edge(e, new_cap)
            return
        for i in range(1, self.L_max + 1):
            img = self.levels[i].insert_img.get(e)
            if img is not None and img in self.levels[i].dtree.base.capacity:
                self.levels[i].dtree.decrease_edge(img, new_cap)
                return

    def _poll_forest(self):
        """Push composed-capacity drops of contracted tree edges into
        the core graphs that froze them at rebuild time."""
        for i in range(1, self.L_max + 1):
            lvl = self.levels[i]
            for ce, (_, low, node) in lvl.forest.items():
                dt = self.levels[low].dtree
                if node not in dt.tree.cap:
                    continue
                cur = dt.tree.cap[node] * _tag_factor(i - 1, low)
                if cur < lvl.cap_seen.get(ce, math.inf):
                    lvl.cap_seen[ce] = cur
                    if ce in lvl.dtree.base.capacity:
                        lvl.dtree.decrease_edge(ce, cur)

    def _stale_levels(self):
        need = set()
        for i in range(self.L_max + 1):
            p = self.period(i)
            if (self.t // p) * p != self.levels[i].t_i:
                need.add(i)
        for i in range(1, self.L_max + 1):
            dep = tuple((self.levels[j].stamp, self.levels[j].dtree.tree.epoch)
                        for j in range(i))
            if dep != self.levels[i].dep:
                need.add(i)
        return need

    def _roll(self):
        self._poll_forest()
        for _ in range(self.L_max + 3):
            need = self._stale_levels()
            if not need:
                return
            for i in range(min(need), self.L_max + 1):
                self._rebuild_level(i)
            self._poll_forest()
        raise GraphError("batched rebuild failed to stabilise")

    def _rebuild_level(self, i):
        p = self.period(i)
        lvl = BatchLevel()
        lvl.t_i = (self.t // p) * p
        self._stamp += 1
        lvl.stamp = self._stamp
        if i == 0:
            snap = self.base.clone()
            for e in sorted(snap.edges()):
                if self.insert_time[e] > lvl.t_i:
                    snap.delete_edge(e)
            lvl.dtree = DecrementalTree(snap, self.phi, self.beta,
                                        self.s_param, self.cert_limit,
                                        allow_disconnected=True)
            self.levels[0] = lvl
            return
        prev_tree = self.compose_tree(i - 1)
        t_prev = self.levels[i - 1].t_i
        window = sorted(e for e in self.base.edges()
                        if t_prev < self.insert_time[e] <= lvl.t_i)
        lvl.window = window
        in_tree = prev_tree.leaf_of
        extras = sorted(v for v in self.base.vertices() if v not in in_tree)
        R = set()
        for e in window:
            for v in (self.base.tail[e], self.base.head[e]):
                if v in in_tree:
                    R.add(in_tree[v])
        B = extend_branch_free(prev_tree, R)
        lvl.has_hat = bool(B) or bool(extras) or bool(window)
        ghat, leaf_vertex = self._build_ghat(lvl, prev_tree, B, window,
                                             extras)
        lvl.dtree = DecrementalTree(ghat, self.phi, self.beta, self.s_param,
                                    self.cert_limit, allow_disconnected=True)
        lvl.dep = tuple((self.levels[j].stamp,
                         self.levels[j].dtree.tree.epoch) for j in range(i))
        self.levels[i] = lvl

    def _build_ghat(self, lvl, prev_tree, B, window, extras):
        """Core graph of the previous tree over B, extended with the
        removed forest edges and the window's insert images."""
        leaf_vertex = {}
        if B:
            gw = DynGraph()
            vid = {}
            gw_base = {}
            vnode = {}
            for e in window:
                u, v = self.base.tail[e], self.base.head[e]
                if u not in prev_tree.leaf_of or v not in prev_tree.leaf_of:
                    continue
                if u == v:
                    continue
                for w in (u, v):
                    if w not in vid:
                        vid[w] = gw.add_vertex()
                        vnode[vid[w]] = prev_tree.leaf_of[w]
                ge = gw.add_edge(vid[u], vid[v], self.base.capacity[e], 0.0)
                gw_base[ge] = e
            cg = induced_core_graph(gw, prev_tree, B, vertex_node=vnode)
            ghat = cg.graph
            lvl.vertex_b = dict(cg.vertex_b)
            for ce, ge in cg.origin.items():
                e = gw_base[ge]
                lvl.origin[ce] = ("ins", e)
                lvl.insert_img[e] = ce
            for child in cg.removed:
                parent = prev_tree.parent[child]
                fe = ghat.add_edge(cg.comp_of[child], cg.comp_of[parent],
                                   prev_tree.cap[child], 0.0)
                tag = prev_tree.tag[child]
                lvl.origin[fe] = ("tree", tag)
                lvl.forest[fe] = tag
                lvl.cap_seen[fe] = prev_tree.cap[child]
            lvl.removed_tags = {prev_tree.tag[c] for c in cg.removed}
            # Re-rooting a forest component at its B node can grow the
            # crossing set of a surviving edge, but only by edges that
            # cross the component boundary, so cover each survivor with
            # the removed edges adjacent to its component.
            adj_removed = defaultdict(set)
            for child in cg.removed:
                tag = prev_tree.tag[child]
                adj_removed[cg.comp_of[child]].add(tag)
                adj_removed[cg.comp_of[prev_tree.parent[child]]].add(tag)
            removed_set = set(cg.removed)
            for child, parent in prev_tree.parent.items():
                if parent is None or child in removed_set:
                    continue
                tag = prev_tree.tag.get(child)
                if tag is None:
                    continue
                for rtag in adj_removed.get(cg.comp_of[child], ()):
                    lvl.fcover.append((tag, rtag))
            for v in prev_tree.leaf_of:
                leaf_vertex[v] = cg.comp_of[prev_tree.leaf_of[v]]
        else:
            ghat = DynGraph()
        for w in extras:
            xv = ghat.add_vertex()
            lvl.extra_leaf[xv] = w
            leaf_vertex[w] = xv
        for e in window:
            if e in lvl.insert_img:
                continue
            u, v = self.base.tail[e], self.base.head[e]
            if u == v:
                continue
            cu, cv = leaf_vertex.get(u), leaf_vertex.get(v)
            if cu is None or cv is None:
                raise GraphError("window endpoint missing from the core")
            if cu == cv:
                raise GraphError("window edge collapsed inside the core")
            ce = ghat.add_edge(cu, cv, self.base.capacity[e], 0.0)
            lvl.origin[ce] = ("ins", e)
            lvl.insert_img[e] = ce
        if window:
            budget = 5 * max(1, len(window) + len(extras))
            if ghat.num_edges > budget:
                raise GraphError("core graph exceeded its size budget")
        return ghat, leaf_vertex

    # -- composition ------------------------------------------------------

    def compose_tree(self, i) -> TreeCutSparsifier:
        """Fresh tree for level i: the previous tree minus the removed
        edges, doubled, glued to the level's own tree at the B nodes."""
        edges = self._compose_edges(i)
        t = TreeCutSparsifier()
        adj = defaultdict(list)
        for x, y, cap, tag in edges:
            adj[x].append((y, cap, tag))
            adj[y].append((x, cap, tag))
        queue = deque([ROOT])
        seen = {ROOT}
        while queue:
            x = queue.popleft()
            for y, cap, tag in adj[x]:
                if y in seen:
                    continue
                seen.add(y)
                t.attach(y, x, cap, tag)
                queue.append(y)
        for x in adj:
            if x not in seen:
                raise GraphError("composed tree is disconnected")
        for node in t.parent:
            if isinstance(node, tuple) and len(node) == 2 \
                    and node[0] == "leaf":
                t.leaf_of[node[1]] = node
        return t

    def _compose_edges(self, i):
        lvl = self.levels[i]
        if i == 0:
            out = []
            for child, parent, cap in lvl.dtree.tree.edges():
                out.append((self._n0(child), self._n0(parent), cap,
                            ("hat", 0, child)))
            return out
        prev = self._compose_edges(i - 1)
        if not lvl.has_hat:
            return [(x, y, 2.0 * cap, tag) for x, y, cap, tag in prev]

        if lvl.vertex_b:
            # the B glue carries the old tree; its root steps aside
            def rn(x):
                return ("oldroot", i) if x == ROOT else x
        else:
            # nothing bridges old and new, so they share the root
            def rn(x):
                return x

        out = []
        for x, y, cap, tag in prev:
            if tag in lvl.removed_tags:
                continue
            out.append((rn(x), rn(y), 2.0 * cap, tag))
        for child, parent, cap in lvl.dtree.tree.edges():
            out.append((self._nhat(i, child, lvl, rn),
                        self._nhat(i, parent, lvl, rn),
                        2.0 * cap, ("hat", i, child)))
        return out

    def _n0(self, node):
        if node == ROOT:
            return ROOT
        if node[0] == 0:
            return ("leaf", node[1])
        return ("h", 0, node)

    def _nhat(self, i, node, lvl, rn):
        if node == ROOT:
            return ROOT
        if node[0] == 0:
            core_v = node[1]
            b = lvl.vertex_b.get(core_v)
            if b is not None:
                return rn(b)
            if core_v in lvl.extra_leaf:
                return ("leaf", lvl.extra_leaf[core_v])
            return ("c", i, core_v)
        return ("h", i, node)


# ---------------------------------------------------------------------------
# covering DAG


class LayerGraph:
    """Leveled DAG resolving tree edges to the base edges they cover.
    Vertices are ("E", base eid) and ("T", level, tree node); an edge
    points from a tree edge to everything in its crossing set."""

    def __init__(self):
        self.succ = defaultdict(set)
        self.in_deg = defaultdict(int)

    def add(self, src, dst):
        if dst not in self.succ[src]:
            self.succ[src].add(dst)
            self.in_deg[dst] += 1

    def reach_base(self, src):
        """Base edge ids reachable from a DAG vertex."""
        out = set()
        seen = {src}
        stack = [src]
        while stack:
            x = stack.pop()
            if x[0] == "E":
                out.add(x[1])
                continue
            for y in self.succ.get(x, ()):
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        return out

    def max_in_degree(self):
        return max(self.in_deg.values(), default=0)


def build_layer_graph(state: BatchingState) -> LayerGraph:
    """Snapshot DAG over the current batch levels. Level 0 tree edges
    point straight at their crossing base edges; a level i >= 1 tree
    edge points at the resolutions of the core edges it covers."""
    lg = LayerGraph()
    dt0 = state.levels[0].dtree
    for node in list(dt0.tree.parent):
        if node == ROOT or dt0.tree.parent[node] is None:
            continue
        for e in dt0.boundary(node):
            lg.add(("T", 0, node), ("E", e))
    for i in range(1, state.L_max + 1):
        lvl = state.levels[i]
        dt = lvl.dtree
        for node in list(dt.tree.parent):
            if node == ROOT or dt.tree.parent[node] is None:
                continue
            for ce in dt.boundary(node):
                kind, ref = lvl.origin[ce]
                if kind == "ins":
                    lg.add(("T", i, node), ("E", ref))
                else:
                    _, low, gnode = ref
                    lg.add(("T", i, node), ("T", low, gnode))
        for stag, rtag in lvl.fcover:
            lg.add(("T", stag[1], stag[2]), ("T", rtag[1], rtag[2]))
    return lg


# ---------------------------------------------------------------------------
# audits


def audit_tree_quality(graph, tree, pairs=None):
    """Compare tree answers against true pairwise mincuts. Returns a
    dict with the worst over-approximation ratio and the count of
    lower-bound violations (which must stay at zero)."""
    from .oracles import max_flow

    verts = sorted(graph.vertices())
    edges = {e: (graph.tail[e], graph.head[e], graph.capacity[e])
             for e in graph.edges() if graph.capacity[e] > 0}
    if pairs is None:
        pairs = [(a, b) for ia, a in enumerate(verts)
                 for b in verts[ia + 1:]]
    worst = 1.0
    violations = 0
    for a, b in pairs:
        true = max_flow(set(verts), edges, a, b)
        ans = tree.mincut_query(a, b)
        if ans < true - 1e-9:
            violations += 1
        if true > 0:
            worst = max(worst, ans / true)
        elif ans > 0:
            violations += 1
    return {"q": worst, "lower_violations": violations,
            "pairs": len(pairs)}


def audit_layer_soundness(state: BatchingState):
    """Check, edge by edge of the composed tree, that the DAG's reach
    set covers the true crossing set, and report the worst capacity
    over-approximation and in-degree."""
    lg = build_layer_graph(state)
    t = state.compose_tree(state.L_max)
    base = state.base
    live = {e for e in base.edges() if base.capacity[e] > 0}
    worst = 1.0
    covered = True
    for child, parent, cap in t.edges():
        tag = t.tag.get(child)
        if tag is None:
            continue
        side = t.leaves_below(child)
        true = {e for e in live
                if (base.tail[e] in side) != (base.head[e] in side)}
        _, low, gnode = tag
        reach = lg.reach_base(("T", low, gnode)) & set(base.capacity)
        if not true <= reach:
            covered = False
        tu = sum(base.capacity[e] for e in true)
        ru = sum(base.capacity[e] for e in reach)
        if tu > 0:
            worst = max(worst, ru / tu)
    return {"covered": covered, "worst_capacity_ratio": worst,
            "max_in_degree": lg.max_in_degree()}
