"""Capacitated expander decomposition on a unit-capacity reduction.

A capacitated graph is rescaled to a unit multigraph: edges below the
cutoff phi*U/m are dropped (charged to the cut set), survivors become
ceil(u/cutoff) parallel unit edges, and every vertex gets self-loops
padding its volume. Cuts in the multigraph 2-approximate the original
cuts after scaling, so decomposing the multigraph decomposes the graph.

The partitioner is a deterministic recursive sweep cut: exhaustive
conductance for pieces up to cert_limit vertices, a spectral sweep
above that. Under deletions, splits and self-loop insertions the
partition only refines; a cluster is re-examined when its internal
volume drifts by a configured fraction.

Multiplicities are stored as bundle capacities on a DynGraph, so one
bundle edge with capacity k stands for k unit edges.
"""

from __future__ import annotations

import math

import numpy as np

from .graphcore import DynGraph, GraphError


class UnitReduction:
    def __init__(self):
        self.unit = DynGraph()
        self.vertex_of = {}       # source vertex -> unit vertex
        self.source_of = {}       # bundle edge -> ("edge", eid) | ("loop", v)
        self.source_capacity = {}
        self.source_ends = {}     # source eid -> (unit tail, unit head)
        self.source_vol = {}      # unit vertex -> current source volume
        self.bundle_of = {}       # source eid -> bundle edge
        self.pad_loops = {}       # unit vertex -> list of padding loop bundles
        self.pad_units = {}       # unit vertex -> total padding multiplicity
        self.dropped = {}         # source eid -> capacity (below cutoff)
        self.cutoff = 0.0
        self.u_total = 0.0
        self.m_source = 0

    def unit_edge_count(self):
        return int(sum(self.unit.capacity.values()))


def build_unit_reduction(graph: DynGraph, phi: float) -> UnitReduction:
    if not 0 < phi <= 1:
        raise GraphError("phi must lie in (0, 1]")
    red = UnitReduction()
    red.u_total = graph.total_capacity
    red.m_source = graph.num_edges
    for v in sorted(graph.vertices()):
        red.vertex_of[v] = red.unit.add_vertex()
    if graph.num_edges == 0 or graph.total_capacity <= 0:
        return red
    cutoff = phi * graph.total_capacity / graph.num_edges
    red.cutoff = cutoff
    for e in sorted(graph.edges()):
        cap = graph.capacity[e]
        red.source_capacity[e] = cap
        red.source_ends[e] = (red.vertex_of[graph.tail[e]],
                              red.vertex_of[graph.head[e]])
        if cap < cutoff:
            red.dropped[e] = cap
            continue
        mult = math.ceil(cap / cutoff)
        be = red.unit.add_edge(red.vertex_of[graph.tail[e]],
                               red.vertex_of[graph.head[e]], mult, 0.0)
        red.source_of[be] = ("edge", e)
        red.bundle_of[e] = be
    for v in sorted(graph.vertices()):
        uv = red.vertex_of[v]
        red.source_vol[uv] = graph.vertex_volume(v)
        loops = math.ceil(graph.vertex_volume(v) / cutoff) if cutoff else 0
        red.pad_units[uv] = 0
        red.pad_loops[uv] = []
        if loops > 0:
            be = red.unit.add_edge(uv, uv, loops, 0.0)
            red.source_of[be] = ("loop", uv)
            red.pad_loops[uv].append(be)
            red.pad_units[uv] = loops
    return red


# ---------------------------------------------------------------------------
# conductance machinery on an induced unit subgraph


def _induced_arrays(unit: DynGraph, vertices):
    order = sorted(vertices)
    index = {v: i for i, v in enumerate(order)}
    tails, heads, caps = [], [], []
    deg = np.zeros(len(order))
    for v in order:
        for e in unit.out_edges[v]:
            h = unit.head[e]
            if h not in index:
                continue
            cap = unit.capacity[e]
            if cap <= 0:
                continue
            tails.append(index[v])
            heads.append(index[h])
            caps.append(cap)
            deg[index[v]] += cap
            deg[index[h]] += cap
    return (order, np.array(tails, dtype=np.int64),
            np.array(heads, dtype=np.int64), np.array(caps, dtype=float),
            deg)


def exact_conductance(unit: DynGraph, vertices):
    """Minimum conductance over all proper subsets; exhaustive.

    Returns (phi, side) with side the sparsest set (None when every
    split has an empty-volume side, e.g. no internal edges)."""
    order, tails, heads, caps, deg = _induced_arrays(unit, vertices)
    n = len(order)
    if n > 20:
        raise GraphError("exhaustive conductance capped at 20 vertices")
    if n < 2:
        return math.inf, None
    masks = np.arange(1, 2 ** n - 1, dtype=np.int64)
    cut = np.zeros(len(masks))
    for t, h, c in zip(tails, heads, caps):
        if t == h:
            continue
        crossing = ((masks >> int(t)) & 1) != ((masks >> int(h)) & 1)
        cut += c * crossing
    vol = np.zeros(len(masks))
    for i in range(n):
        vol += deg[i] * ((masks >> i) & 1)
    total = deg.sum()
    side_vol = np.minimum(vol, total - vol)
    valid = side_vol > 0
    if not valid.any():
        return math.inf, None
    ratio = np.full(len(masks), np.inf)
    ratio[valid] = cut[valid] / side_vol[valid]
    best = int(np.argmin(ratio))
    phi = float(ratio[best])
    mask = int(masks[best])
    side = {order[i] for i in range(n) if (mask >> i) & 1}
    if sum(deg[i] for i in range(n) if (mask >> i) & 1) > total / 2:
        side = set(order) - side
    return phi, side


def sweep_cut(unit: DynGraph, vertices):
    """Best sweep-cut conductance from a deterministic spectral vector.

    Returns (conductance, side) or (inf, None) when the piece has no
    internal volume."""
    order, tails, heads, caps, deg = _induced_arrays(unit, vertices)
    n = len(order)
    total = deg.sum()
    if n < 2 or total <= 0:
        return math.inf, None
    zero_deg = deg == 0
    if zero_deg.any():
        # isolated vertices split off at conductance 0
        side = {order[i] for i in range(n) if zero_deg[i]}
        if len(side) == n:
            return math.inf, None
        return 0.0, side
    loops = tails == heads
    et, eh, ec = tails[~loops], heads[~loops], caps[~loops]
    lt, lc = tails[loops], caps[loops]

    rng = np.random.RandomState(0xC0FFEE)
    x = rng.standard_normal(n)
    for _ in range(max(30, 12 * int(math.log2(n + 1)) + 1)):
        x = x - (deg @ x) / total
        ax = np.zeros(n)
        np.add.at(ax, et, ec * x[eh])
        np.add.at(ax, eh, ec * x[et])
        np.add.at(ax, lt, 2.0 * lc * x[lt])
        x = 0.5 * x + 0.5 * ax / deg
        norm = np.linalg.norm(x)
        if norm < 1e-300:
            return math.inf, None
        x /= norm

    best = (math.inf, None)
    for key in (x, x / deg):
        ranks = np.empty(n, dtype=np.int64)
        ranks[np.argsort(key, kind="stable")] = np.arange(n)
        lo = np.minimum(ranks[et], ranks[eh])
        hi = np.maximum(ranks[et], ranks[eh])
        diff = np.zeros(n + 1)
        np.add.at(diff, lo, ec)
        np.add.at(diff, hi, -ec)
        crossing = np.cumsum(diff)[: n - 1]
        volp = np.cumsum(deg[np.argsort(key, kind="stable")])[: n - 1]
        side_vol = np.minimum(volp, total - volp)
        with np.errstate(divide="ignore", invalid="ignore"):
            cond = np.where(side_vol > 0, crossing / side_vol, np.inf)
        k = int(np.argmin(cond))
        if cond[k] < best[0]:
            sorted_vs = [order[i] for i in np.argsort(key, kind="stable")]
            best = (float(cond[k]), set(sorted_vs[: k + 1]))
    return best


# ---------------------------------------------------------------------------
# partition


class Cluster:
    __slots__ = ("cid", "vertices", "vol_cert", "vol_now", "phi_cert",
                 "exact", "parent")

    def __init__(self, cid, vertices, vol, phi_cert, exact, parent=None):
        self.cid = cid
        self.vertices = set(vertices)
        self.vol_cert = vol
        self.vol_now = vol
        self.phi_cert = phi_cert
        self.exact = exact
        self.parent = parent


class ExpanderPartition:
    def __init__(self, red: UnitReduction, phi, cert_limit=16,
                 rebuild_fraction=0.25):
        self.red = red
        self.phi = phi
        self.cert_limit = cert_limit
        self.rebuild_fraction = rebuild_fraction
        self.clusters = {}
        self.cluster_of = {}
        self.cut_sources = set()
        self.cut_capacity = 0.0
        self.linkage = {}  # (source eid, unit vertex) -> boundary loop
        self._next_cid = 0
        self._forced = set()
        for eid, cap in red.dropped.items():
            self._charge_cut(eid, cap)

    # -- bookkeeping -------------------------------------------------------

    def _charge_cut(self, source_eid, cap):
        if source_eid not in self.cut_sources:
            self.cut_sources.add(source_eid)
            self.cut_capacity += cap

    def _internal_volume(self, vertices):
        unit = self.red.unit
        vol = 0.0
        for v in vertices:
            for e in unit.out_edges[v]:
                if unit.head[e] in vertices:
                    vol += 2 * unit.capacity[e]
        return vol

    def _register(self, vertices, phi_cert, exact, parent=None):
        cid = self._next_cid
        self._next_cid += 1
        vol = self._internal_volume(vertices)
        self.clusters[cid] = Cluster(cid, vertices, vol, phi_cert, exact,
                                     parent)
        for v in vertices:
            self.cluster_of[v] = cid
        return cid

    def _collect_cut_edges(self):
        unit = self.red.unit
        for be, origin in self.red.source_of.items():
            if origin[0] != "edge" or not unit.has_edge(be):
                continue
            if self.cluster_of[unit.tail[be]] != self.cluster_of[unit.head[be]]:
                eid = origin[1]
                self._charge_cut(eid, self.red.source_capacity[eid])

    def measured_c0(self):
        worst = 1.0
        for cl in self.clusters.values():
            if math.isfinite(cl.phi_cert) and cl.phi_cert > 0:
                worst = max(worst, self.phi / cl.phi_cert)
        return worst

    def measured_c1(self):
        if self.phi * self.red.u_total == 0:
            return 0.0
        return self.cut_capacity / (self.phi * self.red.u_total)

    # -- certification -----------------------------------------------------

    def _components(self, vertices):
        """Connected components of the induced unit subgraph."""
        unit = self.red.unit
        left = set(vertices)
        comps = []
        while left:
            start = left.pop()
            seen = {start}
            stack = [start]
            while stack:
                x = stack.pop()
                for e in unit.incident_edges(x):
                    y = unit.head[e] if unit.tail[e] == x else unit.tail[e]
                    if y in left:
                        left.discard(y)
                        seen.add(y)
                        stack.append(y)
            comps.append(seen)
        return comps

    def _certify_or_split(self, vertices, parent=None):
        if len(vertices) == 1:
            return [self._register(vertices, math.inf, True, parent)]
        if self._internal_volume(vertices) == 0:
            return [self._register({v}, math.inf, True, parent)
                    for v in sorted(vertices)]
        comps = self._components(vertices)
        if len(comps) > 1:
            # conductance cannot see zero-volume slivers, so peel
            # components first; certification presumes connectivity
            out = []
            for comp in comps:
                out += self._certify_or_split(comp, parent)
            return out
        if len(vertices) <= self.cert_limit:
            phi_true, side = exact_conductance(self.red.unit, vertices)
            if phi_true >= self.phi:
                return [self._register(vertices, phi_true, True, parent)]
        else:
            phi_sweep, side = sweep_cut(self.red.unit, vertices)
            if phi_sweep >= self.phi:
                cert = phi_sweep * phi_sweep / 4.0
                return [self._register(vertices, cert, False, parent)]
        rest = set(vertices) - side
        out = self._certify_or_split(side, parent)
        out += self._certify_or_split(rest, parent)
        return out

    # -- updates -----------------------------------------------------------

    def _apply_volume_delta(self, be, delta):
        unit = self.red.unit
        t, h = unit.tail[be], unit.head[be]
        if self.cluster_of[t] == self.cluster_of[h]:
            self.clusters[self.cluster_of[t]].vol_now += 2 * delta

    def _cluster_connected(self, cid):
        """BFS over the cluster's induced unit subgraph."""
        mine = self.clusters[cid].vertices
        if len(mine) <= 1:
            return True
        unit = self.red.unit
        start = next(iter(mine))
        seen = {start}
        stack = [start]
        while stack:
            x = stack.pop()
            for e in unit.incident_edges(x):
                y = unit.head[e] if unit.tail[e] == x else unit.tail[e]
                if y in mine and y not in seen:
                    seen.add(y)
                    stack.append(y)
        return len(seen) == len(mine)

    def delete_unit(self, be):
        unit = self.red.unit
        cap = unit.capacity[be]
        self._apply_volume_delta(be, -cap)
        t, h = unit.tail[be], unit.head[be]
        cid = self.cluster_of[t]
        same = cid == self.cluster_of[h]
        unit.delete_edge(be)
        if not same:
            return []
        force = t != h and not self._cluster_connected(cid)
        return self._maybe_rebuild(cid, force)

    def decrease_unit(self, be, new_cap):
        unit = self.red.unit
        delta = unit.capacity[be] - new_cap
        self._apply_volume_delta(be, -delta)
        cid = self.cluster_of[unit.tail[be]]
        same = cid == self.cluster_of[unit.head[be]]
        unit.decrease_capacity(be, new_cap)
        return self._maybe_rebuild(cid) if same else []

    def insert_self_loop(self, v, count):
        be = self.red.unit.add_edge(v, v, count, 0.0)
        self.red.source_of[be] = ("loop", v)
        cid = self.cluster_of[v]
        self.clusters[cid].vol_now += 2 * count
        return be, self._maybe_rebuild(cid)

    def split_unit_vertex(self, v, first_edges):
        red = self.red
        va, vb = red.unit.split_vertex(v, first_edges)
        cid = self.cluster_of.pop(v)
        cl = self.clusters[cid]
        cl.vertices.discard(v)
        cl.vertices.update((va, vb))
        self.cluster_of[va] = cid
        self.cluster_of[vb] = cid
        for nv in (va, vb):
            red.pad_loops.setdefault(nv, [])
            red.pad_units.setdefault(nv, 0)
        for be in red.pad_loops.pop(v, []):
            if not red.unit.has_edge(be):
                continue
            side = red.unit.tail[be]
            red.pad_loops[side].append(be)
            red.pad_units[side] += int(red.unit.capacity[be])
        red.pad_units.pop(v, None)
        for key in [k for k in self.linkage if k[1] == v]:
            be = self.linkage.pop(key)
            if red.unit.has_edge(be):
                self.linkage[(key[0], red.unit.tail[be])] = be
        return va, vb

    def set_pad(self, v, target):
        """Resize the padding loops at a unit vertex to the given total
        multiplicity, shrinking or growing as needed."""
        touched = set()
        self._set_pad(v, target, touched)
        out = []
        for cid in sorted(touched):
            if cid in self.clusters:
                out += self._maybe_rebuild(cid)
        return out

    def _set_pad(self, v, target, touched):
        red = self.red
        target = max(0, int(target))
        loops = red.pad_loops.setdefault(v, [])
        have = red.pad_units.get(v, 0)
        if target > have:
            be = red.unit.add_edge(v, v, target - have, 0.0)
            red.source_of[be] = ("loop", v)
            loops.append(be)
            cid = self.cluster_of[v]
            self.clusters[cid].vol_now += 2 * (target - have)
            touched.add(cid)
        else:
            give = have - target
            while give > 0 and loops:
                be = loops[-1]
                if not red.unit.has_edge(be):
                    loops.pop()
                    continue
                cap = int(red.unit.capacity[be])
                take = min(cap, give)
                self._shrink_bundle(be, cap - take, touched)
                if cap - take <= 0:
                    loops.pop()
                give -= take
        red.pad_units[v] = target

    def insert_source_edge(self, eid, tail, head, cap):
        """Register a fresh source edge (endpoints are source-graph
        vertices already present in the reduction) and grow the
        endpoint padding to match. Returns the partition delta."""
        red = self.red
        if eid in red.source_capacity:
            raise GraphError("source edge %d already tracked" % eid)
        a, b = red.vertex_of[tail], red.vertex_of[head]
        red.source_capacity[eid] = cap
        red.source_ends[eid] = (a, b)
        touched = set()
        if cap >= red.cutoff:
            mult = math.ceil(cap / red.cutoff)
            be = red.unit.add_edge(a, b, mult, 0.0)
            red.source_of[be] = ("edge", eid)
            red.bundle_of[eid] = be
            ca, cb = self.cluster_of[a], self.cluster_of[b]
            if ca == cb:
                self.clusters[ca].vol_now += 2 * mult
            else:
                self._charge_cut(eid, cap)
            touched.update((ca, cb))
        elif cap > 0:
            red.dropped[eid] = cap
            self._charge_cut(eid, cap)
        for uv in (a, b):
            red.source_vol[uv] = red.source_vol.get(uv, 0.0) + cap
            self._set_pad(uv, math.ceil(red.source_vol[uv] / red.cutoff),
                          touched)
        out = []
        for cid in sorted(touched):
            if cid in self.clusters:
                out += self._maybe_rebuild(cid)
        return out

    def _shrink_bundle(self, be, new_cap, touched):
        unit = self.red.unit
        old = unit.capacity[be]
        if new_cap >= old:
            return
        t, h = unit.tail[be], unit.head[be]
        ct, ch = self.cluster_of[t], self.cluster_of[h]
        if ct == ch:
            self.clusters[ct].vol_now -= 2 * (old - new_cap)
        touched.update((ct, ch))
        if new_cap <= 0:
            unit.delete_edge(be)
            if t != h and ct == ch and ct in self.clusters and \
                    not self._cluster_connected(ct):
                self._forced.add(ct)
        else:
            unit.decrease_capacity(be, new_cap)

    def apply_source_decrease(self, eid, new_cap):
        """Mirror a capacity decrease of a source edge: shrink its
        bundle (charging it to the cut set if it falls below the
        cutoff) and the endpoint padding loops, then re-examine the
        touched clusters. A decrease to 0 removes the edge outright
        without charging it."""
        red = self.red
        old = red.source_capacity[eid]
        if not 0 <= new_cap <= old:
            raise GraphError("capacity may only decrease, and never below 0")
        if new_cap == old:
            return []
        touched = set()
        be = red.bundle_of.get(eid)
        if be is not None:
            if new_cap >= red.cutoff:
                target = math.ceil(new_cap / red.cutoff)
            else:
                target = 0
                del red.bundle_of[eid]
                if new_cap > 0:
                    red.dropped[eid] = new_cap
                    self._charge_cut(eid, new_cap)
            self._shrink_bundle(be, target, touched)
        elif eid in red.dropped:
            if new_cap > 0:
                red.dropped[eid] = new_cap
            else:
                del red.dropped[eid]
        red.source_capacity[eid] = new_cap
        delta = old - new_cap
        for v in red.source_ends[eid]:
            red.source_vol[v] -= delta
            self._set_pad(v, math.ceil(red.source_vol[v] / red.cutoff),
                          touched)
        out = []
        for cid in sorted(touched):
            if cid in self.clusters:
                out += self._maybe_rebuild(cid)
        return out

    def apply_source_deletion(self, eid):
        return self.apply_source_decrease(eid, 0)

    def handle_update(self, ev):
        """Apply one journal-style event to the unit graph; returns the
        partition delta as [(old cluster id, [new cluster ids])]."""
        if ev.kind == "DeleteEdge":
            return self.delete_unit(ev.payload[0])
        if ev.kind == "DecreaseCapacity":
            return self.decrease_unit(ev.payload[0], ev.payload[2])
        if ev.kind == "InsertSelfLoop":
            _, u, _, cap, _ = ev.payload
            _, delta = self.insert_self_loop(u, cap)
            return delta
        if ev.kind == "SplitVertex":
            raise GraphError("splits go through split_unit_vertex")
        raise GraphError("unsupported update kind %r" % ev.kind)

    def recheck(self, cid):
        """Force a re-certification when a cluster has lost internal
        connectivity; used after vertex splits re-route its edges."""
        if cid not in self.clusters or self._cluster_connected(cid):
            return []
        return self._maybe_rebuild(cid, force=True)

    def _maybe_rebuild(self, cid, force=False):
        cl = self.clusters[cid]
        if cid in self._forced:
            self._forced.discard(cid)
            force = True
        if not force:
            if cl.vol_cert <= 0:
                return []
            drift = abs(cl.vol_now - cl.vol_cert)
            if drift < self.rebuild_fraction * cl.vol_cert:
                return []
        del self.clusters[cid]
        new_ids = self._certify_or_split(cl.vertices, parent=cid)
        self._collect_cut_edges()
        return [(cid, new_ids)]


def decompose(red: UnitReduction, phi, cert_limit=16,
              rebuild_fraction=0.25) -> ExpanderPartition:
    part = ExpanderPartition(red, phi, cert_limit, rebuild_fraction)
    live = sorted(red.unit.vertices())
    if live:
        part._certify_or_split(set(live))
        part._collect_cut_edges()
    return part


def boundary_linked_decompose(graph: DynGraph, phi, beta, s_param=2,
                              cert_limit=16, rebuild_fraction=0.25,
                              max_rounds=None):
    """Decompose so every cluster stays certified after its boundary
    edges are folded back as self-loops of capacity u(e)/(s*beta*phi).

    Iterates split / add-loops to a fixpoint; each round either
    terminates or strictly refines the partition, and singletons are
    always certified, so max_rounds is a safety net only."""
    red = build_unit_reduction(graph, phi)
    part = decompose(red, phi, cert_limit, rebuild_fraction)
    if red.cutoff == 0:
        return red, part
    weight = 1.0 / (s_param * beta * phi)
    if max_rounds is None:
        max_rounds = 4 * graph.num_vertices + 16
    for _ in range(max_rounds):
        grew, _ = sync_linkage(graph, red, part, weight)
        split = False
        for cid in sorted(part.clusters):
            cl = part.clusters.get(cid)
            if cl is None:
                continue
            ok = True
            if len(cl.vertices) > 1 and cl.vol_now > 0:
                if len(cl.vertices) <= cert_limit:
                    cert, _ = exact_conductance(red.unit, cl.vertices)
                    cl.exact = True
                else:
                    cert, _ = sweep_cut(red.unit, cl.vertices)
                    cl.exact = False
                ok = cert >= phi
                cl.phi_cert = cert if cl.exact else cert * cert / 4.0
            if not ok:
                del part.clusters[cid]
                part._certify_or_split(cl.vertices, parent=cid)
                split = True
        if split:
            part._collect_cut_edges()
        if not split and not grew:
            break
    return red, part


def sync_linkage(graph, red, part, weight):
    """Fold every boundary edge back as self-loops at both endpoints,
    sized weight*u(e) in source units. Loops already present are kept;
    the ones added here go through the partition's re-examination
    policy. Returns (any loop added, partition delta)."""
    grew = False
    deltas = []
    for e in sorted(graph.edges()):
        cap = graph.capacity[e]
        if cap <= 0:
            continue
        a = red.vertex_of[graph.tail[e]]
        b = red.vertex_of[graph.head[e]]
        if part.cluster_of[a] == part.cluster_of[b]:
            continue
        mult = math.ceil(weight * cap / red.cutoff)
        if mult <= 0:
            continue
        for v in (a, b):
            if (e, v) not in part.linkage:
                be, d = part.insert_self_loop(v, mult)
                part.linkage[(e, v)] = be
                deltas += d
                grew = True
    return grew, deltas
