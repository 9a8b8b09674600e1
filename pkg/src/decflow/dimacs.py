"""Extended DIMACS min-cost-flow instance files.

Format:
    p mcf <n> <m>
    t threshold <F> | t value <eps> | t scc | t ssr     (optional, one)
    n <id> <demand>                                     (ids are 1-based)
    a <tail> <head> 0 <capacity> <cost>                 (m lines, in order)
    d <edge-index>                                      (delete)
    u <edge-index> <new-capacity>                       (capacity decrease)
    c <edge-index> <new-cost>                           (cost increase)

Edge indices are 1-based positions among the `a` lines. Update lines
form the schedule and are not applied by the parser.
"""

from __future__ import annotations

from .graphcore import DynGraph


class DimacsError(ValueError):
    def __init__(self, line_no, message):
        super().__init__("line %d: %s" % (line_no, message))
        self.line_no = line_no


def parse_instance(text):
    """Parse a file's text. Returns (graph, updates, mode).

    updates is a list of ("d", eid) / ("u", eid, cap) / ("c", eid, cost)
    with eids resolved to graph handles; mode is None or one of
    ("threshold", F), ("value", eps), ("scc",), ("ssr",).
    """
    graph = DynGraph()
    updates = []
    mode = None
    n = m = None
    vertex_of = {}
    edge_of = {}
    arcs_seen = 0

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        try:
            if tag == "p":
                if n is not None:
                    raise DimacsError(line_no, "duplicate problem line")
                if len(parts) != 4 or parts[1] != "mcf":
                    raise DimacsError(line_no, "expected `p mcf n m`")
                n, m = int(parts[2]), int(parts[3])
                for i in range(1, n + 1):
                    vertex_of[i] = graph.add_vertex()
            elif tag == "t":
                if mode is not None:
                    raise DimacsError(line_no, "duplicate task line")
                kind = parts[1]
                if kind == "threshold":
                    mode = ("threshold", int(parts[2]))
                elif kind == "value":
                    mode = ("value", float(parts[2]))
                elif kind in ("scc", "ssr"):
                    mode = (kind,)
                else:
                    raise DimacsError(line_no, "unknown task %r" % kind)
            elif tag == "n":
                vid, demand = int(parts[1]), int(parts[2])
                if vid not in vertex_of:
                    raise DimacsError(line_no, "vertex %d out of range" % vid)
                graph.set_demand(vertex_of[vid], demand)
            elif tag == "a":
                if len(parts) != 6 or parts[3] != "0":
                    raise DimacsError(
                        line_no, "expected `a tail head 0 cap cost`")
                t, h = int(parts[1]), int(parts[2])
                cap, cost = int(parts[4]), int(parts[5])
                if t not in vertex_of or h not in vertex_of:
                    raise DimacsError(line_no, "arc endpoint out of range")
                arcs_seen += 1
                edge_of[arcs_seen] = graph.add_edge(
                    vertex_of[t], vertex_of[h], cap, cost)
            elif tag in ("d", "u", "c"):
                idx = int(parts[1])
                if idx not in edge_of:
                    raise DimacsError(line_no, "edge index %d unknown" % idx)
                if tag == "d":
                    updates.append(("d", edge_of[idx]))
                elif tag == "u":
                    updates.append(("u", edge_of[idx], int(parts[2])))
                else:
                    updates.append(("c", edge_of[idx], int(parts[2])))
            else:
                raise DimacsError(line_no, "unknown line tag %r" % tag)
        except DimacsError:
            raise
        except (ValueError, IndexError) as exc:
            raise DimacsError(line_no, "malformed line: %s" % exc)

    if n is None:
        raise DimacsError(0, "missing problem line")
    if arcs_seen != m:
        raise DimacsError(0, "expected %d arcs, saw %d" % (m, arcs_seen))
    return graph, updates, mode


def parse_file(path):
    with open(path) as handle:
        return parse_instance(handle.read())


def serialize_instance(graph, updates=(), mode=None):
    """Canonical text for a pristine (pre-schedule) instance."""
    vs = sorted(graph.vertices())
    vid_of = {v: i + 1 for i, v in enumerate(vs)}
    es = sorted(graph.edges())
    eid_of = {e: i + 1 for i, e in enumerate(es)}
    lines = ["p mcf %d %d" % (len(vs), len(es))]
    if mode is not None:
        lines.append("t " + " ".join(str(x) for x in mode))
    for v in vs:
        if graph.demand[v] != 0:
            lines.append("n %d %d" % (vid_of[v], int(graph.demand[v])))
    for e in es:
        lines.append("a %d %d 0 %d %d" % (
            vid_of[graph.tail[e]], vid_of[graph.head[e]],
            int(graph.capacity[e]), int(graph.cost[e])))
    for upd in updates:
        if upd[0] == "d":
            lines.append("d %d" % eid_of[upd[1]])
        else:
            lines.append("%s %d %d" % (upd[0], eid_of[upd[1]], upd[2]))
    return "\n".join(lines) + "\n"
