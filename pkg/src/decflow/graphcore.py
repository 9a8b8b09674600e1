"""Dynamic directed multigraph shared by every other module.

Stores capacities, costs and per-vertex demands, applies the incidence
operator in both directions, journals every mutation, and supports the
vertex splits that cluster un-contraction needs.

Orientation convention, used engine-wide: the incidence operator B has
+1 at the tail and -1 at the head of every edge, so (By)(e) =
y(tail) - y(head) and (B^T f)(v) = outflow(v) - inflow(v).
"""

from __future__ import annotations

from dataclasses import dataclass


class GraphError(ValueError):
    """Unknown or retired handle, or an invalid mutation."""


@dataclass(frozen=True)
class UpdateEvent:
    seq: int
    kind: str
    payload: tuple

    KINDS = (
        "DeleteEdge",
        "DecreaseCapacity",
        "IncreaseCost",
        "SplitVertex",
        "InsertSelfLoop",
        "InsertEdge",
        "InsertVertex",
    )


class DynGraph:
    """Directed multigraph with capacities, costs and demands.

    Vertex and edge handles are dense integers, never reused within one
    instance. Deleting an edge retires its handle; every operation
    rejects retired handles. Parallel edges and self-loops are allowed.
    """

    def __init__(self, orientation: int = +1):
        if orientation not in (+1, -1):
            raise GraphError("orientation must be +1 or -1")
        self.orientation = orientation
        self.tail = {}
        self.head = {}
        self.capacity = {}
        self.cost = {}
        self.demand = {}
        self.out_edges = {}
        self.in_edges = {}
        self.journal = []
        # split descendant forest: child -> parent, parent -> (child, child)
        self.parent = {}
        self.children = {}
        self._vol = {}
        self._next_vertex = 0
        self._next_edge = 0
        self._retired_edges = set()
        self._retired_vertices = set()
        self.total_capacity = 0.0

    # -- basic accessors -------------------------------------------------

    @property
    def num_vertices(self):
        return len(self.demand)

    @property
    def num_edges(self):
        return len(self.tail)

    def vertices(self):
        return self.demand.keys()

    def edges(self):
        return self.tail.keys()

    def has_vertex(self, v) -> bool:
        return v in self.demand

    def has_edge(self, e) -> bool:
        return e in self.tail

    def endpoints(self, e):
        self._check_edge(e)
        return self.tail[e], self.head[e]

    def incident_edges(self, v):
        """All live edges touching v; self-loops reported once."""
        self._check_vertex(v)
        return self.out_edges[v] | self.in_edges[v]

    def demand_sum(self):
        return sum(self.demand.values())

    def _check_vertex(self, v):
        if v not in self.demand:
            if v in self._retired_vertices:
                raise GraphError("vertex %r is retired" % (v,))
            raise GraphError("unknown vertex %r" % (v,))

    def _check_edge(self, e):
        if e not in self.tail:
            if e in self._retired_edges:
                raise GraphError("edge %r is retired" % (e,))
            raise GraphError("unknown edge %r" % (e,))

    # -- mutations -------------------------------------------------------

    def _log(self, kind, payload):
        self.journal.append(UpdateEvent(len(self.journal), kind, payload))

    def add_vertex(self, demand: float = 0.0) -> int:
        v = self._next_vertex
        self._next_vertex += 1
        self.demand[v] = demand
        self.out_edges[v] = set()
        self.in_edges[v] = set()
        self._vol[v] = 0.0
        self._log("InsertVertex", (v, demand))
        return v

    def add_edge(self, u, v, capacity: float, cost: float) -> int:
        self._check_vertex(u)
        self._check_vertex(v)
        if capacity < 0:
            raise GraphError("capacity must be nonnegative")
        e = self._next_edge
        self._next_edge += 1
        self.tail[e] = u
        self.head[e] = v
        self.capacity[e] = capacity
        self.cost[e] = cost
        self.out_edges[u].add(e)
        self.in_edges[v].add(e)
        self.total_capacity += capacity
        self._vol[u] += capacity
        self._vol[v] += capacity
        kind = "InsertSelfLoop" if u == v else "InsertEdge"
        self._log(kind, (e, u, v, capacity, cost))
        return e

    def delete_edge(self, e):
        self._check_edge(e)
        u, v = self.tail[e], self.head[e]
        cap = self.capacity[e]
        self.out_edges[u].discard(e)
        self.in_edges[v].discard(e)
        self.total_capacity -= cap
        self._vol[u] -= cap
        self._vol[v] -= cap
        del self.tail[e], self.head[e], self.capacity[e], self.cost[e]
        self._retired_edges.add(e)
        self._log("DeleteEdge", (e,))

    def decrease_capacity(self, e, new_capacity: float):
        self._check_edge(e)
        old = self.capacity[e]
        if not 0 <= new_capacity <= old:
            raise GraphError("capacity may only decrease, and never below 0")
        delta = old - new_capacity
        self.capacity[e] = new_capacity
        self.total_capacity -= delta
        self._vol[self.tail[e]] -= delta
        self._vol[self.head[e]] -= delta
        self._log("DecreaseCapacity", (e, old, new_capacity))

    def increase_cost(self, e, new_cost: float):
        self._check_edge(e)
        old = self.cost[e]
        if new_cost < old:
            raise GraphError("cost may only increase")
        self.cost[e] = new_cost
        self._log("IncreaseCost", (e, old, new_cost))

    def set_demand(self, v, demand: float):
        self._check_vertex(v)
        self.demand[v] = demand

    def split_vertex(self, v, first_edges):
        """Replace v by two new vertices; edges in first_edges reattach
        to the first, the rest of v's incident edges to the second.

        A self-loop moves wholly to whichever side it is assigned. The
        first vertex inherits v's demand, the second starts at 0. The
        descendant relation is recorded. Returns (first, second).
        """
        self._check_vertex(v)
        incident = self.incident_edges(v)
        first = set(first_edges)
        if not first <= incident:
            raise GraphError("first_edges is not a subset of v's incident edges")
        second = incident - first
        va = self.add_vertex(self.demand[v])
        vb = self.add_vertex(0.0)
        # one logical operation, one journal entry
        del self.journal[-2:]
        for part, target in ((first, va), (second, vb)):
            for e in part:
                if self.tail[e] == v:
                    self.tail[e] = target
                    self.out_edges[v].discard(e)
                    self.out_edges[target].add(e)
                    self._vol[v] -= self.capacity[e]
                    self._vol[target] += self.capacity[e]
                if self.head[e] == v:
                    self.head[e] = target
                    self.in_edges[v].discard(e)
                    self.in_edges[target].add(e)
                    self._vol[v] -= self.capacity[e]
                    self._vol[target] += self.capacity[e]
        del self.demand[v], self.out_edges[v], self.in_edges[v], self._vol[v]
        self._retired_vertices.add(v)
        self.parent[va] = v
        self.parent[vb] = v
        self.children[v] = (va, vb)
        self._log("SplitVertex", (v, va, vb, tuple(sorted(first))))
        return va, vb

    def descends_from(self, v, ancestor) -> bool:
        """True when v equals ancestor or was produced by splitting it,
        possibly through several generations."""
        while v is not None:
            if v == ancestor:
                return True
            v = self.parent.get(v)
        return False

    # -- incidence operator ----------------------------------------------

    def apply_incidence(self, y: dict) -> dict:
        """z(e) = orientation * (y(tail) - y(head)) for every live edge."""
        for v in y:
            if v not in self.demand:
                raise GraphError("unknown vertex %r in y" % (v,))
        sign = self.orientation
        z = {}
        for e, t in self.tail.items():
            try:
                z[e] = sign * (y[t] - y[self.head[e]])
            except KeyError as missing:
                raise GraphError("y misses live vertex %r" % missing.args)
        return z

    def apply_incidence_transpose(self, f: dict) -> dict:
        """Net excess per vertex, adjoint to apply_incidence:
        excess(v) = orientation * (outflow(v) - inflow(v))."""
        for e in f:
            if e not in self.tail:
                raise GraphError("unknown edge %r in f" % (e,))
        sign = self.orientation
        excess = {v: 0.0 for v in self.demand}
        for e, fe in f.items():
            excess[self.tail[e]] += sign * fe
            excess[self.head[e]] -= sign * fe
        return excess

    # -- volumes ----------------------------------------------------------

    def vertex_volume(self, v) -> float:
        """Capacity-weighted degree; self-loops count twice."""
        self._check_vertex(v)
        return self._vol[v]

    def volume(self, S) -> float:
        return sum(self.vertex_volume(v) for v in S)

    def recompute_totals(self):
        """Total capacity and volumes from scratch, for audits."""
        total = sum(self.capacity.values())
        vol = {v: 0.0 for v in self.demand}
        for e, cap in self.capacity.items():
            vol[self.tail[e]] += cap
            vol[self.head[e]] += cap
        return total, vol

    # -- snapshots ---------------------------------------------------------

    def clone(self) -> "DynGraph":
        g = DynGraph(self.orientation)
        g.tail = dict(self.tail)
        g.head = dict(self.head)
        g.capacity = dict(self.capacity)
        g.cost = dict(self.cost)
        g.demand = dict(self.demand)
        g.out_edges = {v: set(s) for v, s in self.out_edges.items()}
        g.in_edges = {v: set(s) for v, s in self.in_edges.items()}
        g.journal = list(self.journal)
        g.parent = dict(self.parent)
        g.children = dict(self.children)
        g._vol = dict(self._vol)
        g._next_vertex = self._next_vertex
        g._next_edge = self._next_edge
        g._retired_edges = set(self._retired_edges)
        g._retired_vertices = set(self._retired_vertices)
        g.total_capacity = self.total_capacity
        return g
