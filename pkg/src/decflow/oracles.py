"""Brute-force oracles used by the test spine.

Every oracle is an independent implementation that shares nothing with
the fast path except the graph container. They are deliberately plain:
successive shortest paths on integers, a dense two-phase simplex on
fractions, exhaustive enumeration for cuts, and literal replays for the
incremental structures.
"""

from __future__ import annotations

import heapq
from fractions import Fraction
from itertools import combinations


# ---------------------------------------------------------------------------
# exact min-cost flow (successive shortest paths with potentials)


def oracle_min_cost_flow(edges, demand, capacity=None):
    """Minimum cost of a flow routing the given demand, or None.

    edges: dict eid -> (tail, head, cap, cost) with nonnegative integer
    costs; demand: dict vertex -> net outflow (positive = supply).
    capacity=None treats every edge as uncapacitated. Returns the exact
    optimal cost as an int (inputs integral), or None when infeasible.
    """
    vertices = set(demand)
    for t, h, _, _ in edges.values():
        vertices.add(t)
        vertices.add(h)
    supply = sum(d for d in demand.values() if d > 0)
    if sum(demand.values()) != 0:
        return None
    big = max(1, sum(abs(d) for d in demand.values()))

    # residual arcs: [to, cap, cost, index of reverse arc]
    arcs = []
    out = {v: [] for v in vertices}
    out["S"] = []
    out["T"] = []

    def add_arc(a, b, cap, cost):
        out[a].append(len(arcs))
        arcs.append([b, cap, cost])
        out[b].append(len(arcs))
        arcs.append([a, 0, -cost])

    for t, h, cap, cost in edges.values():
        if cost < 0:
            raise ValueError("oracle expects nonnegative costs")
        add_arc(t, h, big if capacity is None else cap, cost)
    for v, d in demand.items():
        if d > 0:
            add_arc("S", v, d, 0)
        elif d < 0:
            add_arc(v, "T", -d, 0)

    potential = {v: 0 for v in out}
    total_cost = 0
    routed = 0
    while routed < supply:
        dist = {v: None for v in out}
        dist["S"] = 0
        prev_arc = {}
        tick = 0  # heap tiebreaker; vertex ids are not comparable
        heap = [(0, tick, "S")]
        while heap:
            dv, _, v = heapq.heappop(heap)
            if dist[v] is not None and dv > dist[v]:
                continue
            for ai in out[v]:
                to, cap, cost = arcs[ai]
                if cap <= 0:
                    continue
                nd = dv + cost + potential[v] - potential[to]
                if dist[to] is None or nd < dist[to]:
                    dist[to] = nd
                    prev_arc[to] = ai
                    tick += 1
                    heapq.heappush(heap, (nd, tick, to))
        if dist["T"] is None:
            return None
        for v in out:
            if dist[v] is not None:
                potential[v] += dist[v]
        bottleneck = supply - routed
        v = "T"
        while v != "S":
            ai = prev_arc[v]
            bottleneck = min(bottleneck, arcs[ai][1])
            v = arcs[ai ^ 1][0]
        v = "T"
        while v != "S":
            ai = prev_arc[v]
            arcs[ai][1] -= bottleneck
            arcs[ai ^ 1][1] += bottleneck
            total_cost += bottleneck * arcs[ai][2]
            v = arcs[ai ^ 1][0]
        routed += bottleneck
    return total_cost


def oracle_min_cost_flow_graph(graph, capacitated=True):
    """Convenience wrapper reading edges and demands off a DynGraph."""
    edges = {e: (graph.tail[e], graph.head[e], graph.capacity[e],
                 graph.cost[e]) for e in graph.edges()}
    demand = dict(graph.demand)
    edges = {e: (t, h, int(c), int(w)) for e, (t, h, c, w) in edges.items()}
    demand = {v: int(d) for v, d in demand.items()}
    return oracle_min_cost_flow(edges, demand,
                                capacity=True if capacitated else None)


# ---------------------------------------------------------------------------
# dense two-phase simplex on fractions


def simplex_solve(c, A, b):
    """min c.x subject to A x = b, x >= 0, everything Fraction.

    Dense two-phase simplex with Bland's rule. Returns (value, x) or
    (None, None) when infeasible; raises on an unbounded program.
    Sized for oracle duty only.
    """
    m = len(A)
    n = len(c) if not A else len(A[0])
    A = [row[:] for row in A]
    b = list(b)
    for i in range(m):
        if b[i] < 0:
            A[i] = [-a for a in A[i]]
            b[i] = -b[i]

    # phase one tableau with artificial variables
    tableau = [A[i] + [Fraction(1) if j == i else Fraction(0)
                       for j in range(m)] + [b[i]] for i in range(m)]
    basis = [n + i for i in range(m)]
    # phase-one reduced costs: artificial columns start at zero
    cost_row = [Fraction(0)] * (n + m + 1)
    for j in range(n):
        cost_row[j] = -sum(tableau[i][j] for i in range(m))
    cost_row[-1] = -sum(tableau[i][-1] for i in range(m))

    def pivot(rows, cost, basis, width):
        while True:
            col = next((j for j in range(width) if cost[j] < 0), None)
            if col is None:
                return True
            best = None
            for i in range(len(rows)):
                if rows[i][col] > 0:
                    ratio = rows[i][-1] / rows[i][col]
                    if best is None or ratio < rows[best][-1] / rows[best][col] \
                            or (ratio == rows[best][-1] / rows[best][col]
                                and basis[i] < basis[best]):
                        best = i
            if best is None:
                return False
            piv = rows[best][col]
            rows[best] = [a / piv for a in rows[best]]
            for i in range(len(rows)):
                if i != best and rows[i][col] != 0:
                    f = rows[i][col]
                    rows[i] = [a - f * p for a, p in zip(rows[i], rows[best])]
            if cost[col] != 0:
                f = cost[col]
                for j in range(len(cost)):
                    cost[j] -= f * rows[best][j]
            basis[best] = col

    pivot(tableau, cost_row, basis, n + m)
    if -cost_row[-1] != 0:
        return None, None
    # drive artificial variables out of the basis where possible
    for i in range(m):
        if basis[i] >= n:
            col = next((j for j in range(n) if tableau[i][j] != 0), None)
            if col is None:
                continue
            piv = tableau[i][col]
            tableau[i] = [a / piv for a in tableau[i]]
            for k in range(m):
                if k != i and tableau[k][col] != 0:
                    f = tableau[k][col]
                    tableau[k] = [a - f * p
                                  for a, p in zip(tableau[k], tableau[i])]
            basis[i] = col

    rows = [row[:n] + [row[-1]] for row in tableau]
    cost = list(c) + [Fraction(0)]
    for i, bi in enumerate(basis):
        if bi < n and cost[bi] != 0:
            f = cost[bi]
            for j in range(n + 1):
                cost[j] -= f * rows[i][j]
    bounded = pivot(rows, cost, basis, n)
    if not bounded:
        raise ValueError("unbounded linear program")
    x = [Fraction(0)] * n
    for i, bi in enumerate(basis):
        if bi < n:
            x[bi] = rows[i][-1]
    value = sum(ci * xi for ci, xi in zip(c, x))
    return value, x


def oracle_transshipment_lp(edges, demand):
    """Exact uncapacitated min-cost transshipment via the simplex.

    edges: dict eid -> (tail, head, cost); demand: vertex -> Fraction or
    int. Returns (value, flow dict) or (None, None) when infeasible.
    """
    vertex_list = sorted(set(demand)
                         | {t for t, _, _ in edges.values()}
                         | {h for _, h, _ in edges.values()},
                         key=str)
    vindex = {v: i for i, v in enumerate(vertex_list)}
    eids = sorted(edges)
    n = len(eids)
    A = [[Fraction(0)] * n for _ in vertex_list]
    for j, e in enumerate(eids):
        t, h, _ = edges[e]
        A[vindex[t]][j] += 1
        A[vindex[h]][j] -= 1
    b = [Fraction(demand.get(v, 0)) for v in vertex_list]
    c = [Fraction(edges[e][2]) for e in eids]
    value, x = simplex_solve(c, A, b)
    if value is None:
        return None, None
    return value, {e: x[j] for j, e in enumerate(eids)}


# ---------------------------------------------------------------------------
# min-ratio cut, exhaustive and continuous


def oracle_min_ratio_cut(vertices, edges, gradient, u):
    """Exact min over vertex cuts C of <g,1_C> / ||U B 1_C||_1.

    edges: dict eid -> (tail, head); u: eid -> capacity weight;
    gradient: vertex -> value. Enumerates all 2^n - 2 indicators,
    skipping cuts with zero denominator. Returns (ratio, frozenset C);
    (0, None) when every cut has zero denominator or n < 2.
    """
    vs = sorted(vertices, key=str)
    n = len(vs)
    if n > 16:
        raise ValueError("exhaustive cut oracle capped at 16 vertices")
    best = (Fraction(0), None)
    for size in range(1, n):
        for C in combinations(vs, size):
            cset = set(C)
            num = sum(gradient[v] for v in C)
            den = sum(u[e] for e, (t, h) in edges.items()
                      if (t in cset) != (h in cset))
            if den == 0:
                continue
            ratio = Fraction(num) / Fraction(den)
            if best[1] is None or ratio < best[0]:
                best = (ratio, frozenset(C))
    if best[1] is None:
        return Fraction(0), None
    return best


def lp_min_ratio(vertices, edges, gradient, u):
    """Continuous min of <g,D>/||U B D||_1 over D != 0, as an exact LP.

    Normalizes ||U B D||_1 <= 1 and minimizes <g,D>. Used to verify that
    the optimum is attained by a cut indicator on tiny instances.
    """
    vs = sorted(vertices, key=str)
    vindex = {v: i for i, v in enumerate(vs)}
    eids = sorted(edges)
    n, m = len(vs), len(eids)
    # variables: D+ (n), D- (n), t (m), slack for the norm row (1)
    width = 2 * n + m + 1
    A = []
    b = []
    for j, e in enumerate(eids):
        t_, h_ = edges[e]
        # u_e * (D(t) - D(h)) <= t_e  and  >= -t_e, as equalities with
        # extra slacks appended below
        row_p = [Fraction(0)] * width
        row_m = [Fraction(0)] * width
        ue = Fraction(u[e])
        for v, sgn in ((t_, 1), (h_, -1)):
            row_p[vindex[v]] += sgn * ue
            row_p[n + vindex[v]] -= sgn * ue
            row_m[vindex[v]] -= sgn * ue
            row_m[n + vindex[v]] += sgn * ue
        row_p[2 * n + j] -= 1
        row_m[2 * n + j] -= 1
        A.append(row_p)
        b.append(Fraction(0))
        A.append(row_m)
        b.append(Fraction(0))
    norm_row = [Fraction(0)] * width
    for j in range(m):
        norm_row[2 * n + j] = Fraction(1)
    norm_row[2 * n + m] = Fraction(1)
    A.append(norm_row)
    b.append(Fraction(1))
    # inequality rows need their own slack columns
    slacks = len(A) - 1
    for i in range(slacks):
        for row in A:
            row.append(Fraction(0))
        A[i][width + i] = Fraction(1)
    c = [Fraction(0)] * (width + slacks)
    for v in vs:
        c[vindex[v]] = Fraction(gradient[v])
        c[n + vindex[v]] = -Fraction(gradient[v])
    value, _ = simplex_solve(c, A, b)
    return value


# ---------------------------------------------------------------------------
# max-flow / min-cut


def max_flow(vertices, edges, source, sink):
    """Integer max-flow (Edmonds-Karp). edges: eid -> (a, b, cap),
    interpreted as an undirected capacity between a and b."""
    arcs = []
    out = {v: [] for v in vertices}

    def add(a, b, cap):
        out[a].append(len(arcs))
        arcs.append([b, cap])
        out[b].append(len(arcs))
        arcs.append([a, cap])

    for a, b, cap in edges.values():
        add(a, b, cap)
    flow = 0
    while True:
        prev = {source: None}
        queue = [source]
        while queue and sink not in prev:
            v = queue.pop(0)
            for ai in out[v]:
                to, cap = arcs[ai]
                if cap > 0 and to not in prev:
                    prev[to] = ai
                    queue.append(to)
        if sink not in prev:
            return flow
        bottleneck = None
        v = sink
        while v != source:
            ai = prev[v]
            cap = arcs[ai][1]
            bottleneck = cap if bottleneck is None else min(bottleneck, cap)
            v = arcs[ai ^ 1][0]
        v = sink
        while v != source:
            ai = prev[v]
            arcs[ai][1] -= bottleneck
            arcs[ai ^ 1][1] += bottleneck
            v = arcs[ai ^ 1][0]
        flow += bottleneck


def set_to_set_mincut(vertices, edges, A, B):
    """Min capacity separating vertex set A from B (undirected sense),
    by contracting each side to a super-node."""
    A, B = set(A), set(B)
    if A & B:
        raise ValueError("sides must be disjoint")

    def node(v):
        if v in A:
            return "A*"
        if v in B:
            return "B*"
        return v

    cedges = {}
    for e, (a, b, cap) in edges.items():
        na, nb = node(a), node(b)
        if na == nb:
            continue
        cedges[e] = (na, nb, cap)
    cvertices = {node(v) for v in vertices} | {"A*", "B*"}
    return max_flow(cvertices, cedges, "A*", "B*")


# ---------------------------------------------------------------------------
# SCC / reachability


def tarjan_scc(vertices, out_neighbors):
    """Strongly connected components, iterative Tarjan.

    out_neighbors: vertex -> iterable of successors. Returns a list of
    frozensets in reverse topological order of the condensation.
    """
    index = {}
    low = {}
    on_stack = set()
    stack = []
    components = []
    counter = [0]
    for root in vertices:
        if root in index:
            continue
        work = [(root, iter(out_neighbors.get(root, ())))]
        index[root] = low[root] = counter[0]
        counter[0] += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(out_neighbors.get(w, ()))))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = set()
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.add(w)
                    if w == v:
                        break
                components.append(frozenset(comp))
    return components


def scc_partition(vertices, out_neighbors):
    """vertex -> frozenset component map."""
    part = {}
    for comp in tarjan_scc(vertices, out_neighbors):
        for v in comp:
            part[v] = comp
    return part


def reachable_set(source, out_neighbors):
    seen = {source}
    queue = [source]
    while queue:
        v = queue.pop()
        for w in out_neighbors.get(v, ()):
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return seen


# ---------------------------------------------------------------------------
# dense detection replay


class DenseDetectionReplay:
    """Literal replay of threshold detection on a changing forest.

    Keeps, per tracked leaf, the exact change accumulated since its last
    report. An edge insertion makes the child's subtree experience only
    future changes of the new parent; deletions detach with state kept.
    """

    def __init__(self, significance):
        self.significance = dict(significance)
        self.acc = {leaf: Fraction(0) for leaf in significance}
        self.children = {}

    def insert_edge(self, u, v):
        self.children.setdefault(u, set()).add(v)

    def delete_edge(self, u, v):
        self.children.get(u, set()).discard(v)

    def _leaves_below(self, v):
        found = []
        stack = [v]
        seen = set()
        while stack:
            x = stack.pop()
            if x in seen:
                continue
            seen.add(x)
            if x in self.acc:
                found.append(x)
            stack.extend(self.children.get(x, ()))
        return found

    def add_delta(self, v, delta):
        """Apply delta below v; returns the set of leaves reported."""
        reported = set()
        for leaf in self._leaves_below(v):
            self.acc[leaf] += Fraction(delta)
            if self.acc[leaf] >= self.significance[leaf]:
                reported.add(leaf)
                self.acc[leaf] = Fraction(0)
        return reported


# ---------------------------------------------------------------------------
# dense potential / gradient / lengths for the dual interior point state


def dense_slacks(edges, cost, y):
    """s(e) = c(e) - (y(tail) - y(head)) for the live barrier edges."""
    return {e: cost[e] - (y[t] - y[h]) for e, (t, h) in edges.items()}


def dense_potential(edges, cost, y, demand, threshold, alpha, m_coeff=None):
    """Phi(y) = 100 m log(F - <d,y>) + sum_e s(e)^(-alpha).

    edges maps eid -> (tail, head) for exactly the live barrier edges.
    m_coeff pins the 100m coefficient (engines keep it at the initial
    edge count so exclusions cannot bump the log term); defaults to
    len(edges). Returns (phi, r, slacks). Raises when infeasible.
    """
    import math

    s = dense_slacks(edges, cost, y)
    if any(val <= 0 for val in s.values()):
        raise ValueError("nonpositive slack: dual point infeasible")
    r = threshold - sum(demand[v] * yv for v, yv in y.items() if v in demand)
    if r <= 0:
        raise ValueError("residual nonpositive")
    m = len(edges) if m_coeff is None else m_coeff
    phi = 100 * m * math.log(r) + sum(val ** (-alpha) for val in s.values())
    return phi, r, s


def dense_gradient_lengths(edges, cost, y, demand, threshold, alpha,
                           m_coeff=None):
    """Exact g = -(100 m / r) d + alpha B^T s^(-1-alpha) and u = s^(-1-alpha).

    Returns (g: vertex -> float, u: eid -> float, r)."""
    phi, r, s = dense_potential(edges, cost, y, demand, threshold, alpha,
                                m_coeff)
    m = len(edges) if m_coeff is None else m_coeff
    u = {e: val ** (-1 - alpha) for e, val in s.items()}
    g = {v: 0.0 for v in y}
    for v, d in demand.items():
        g[v] -= 100.0 * m / r * d
    for e, (t, h) in edges.items():
        g[t] += alpha * u[e]
        g[h] -= alpha * u[e]
    return g, u, r
