"""Decremental min-cost flow engine.

Maintains threshold verdicts ("is there a flow of cost at most F?"),
approximate optimal values, and strongly connected components of a
directed graph under edge deletions, capacity decreases, and cost
increases. The core is a dual interior-point loop whose inner
min-ratio cut problem is answered by tree cut sparsifiers built from
an expander hierarchy.
"""

from .graphcore import DynGraph, GraphError

__all__ = ["DynGraph", "GraphError"]
