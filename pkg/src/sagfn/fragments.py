"""Fragment-based graph assembly environment.

Graphs are built from a small vocabulary of connected fragments instead
of node by node: AddFragment drops a disjoint copy of a vocabulary
fragment next to the current graph, and the only legal follow-up is an
AddEdge connecting an attachment point of the new component to one of
the existing component, after which assembly may continue or Stop.

Conventions that keep the decomposition recoverable:

* fragment-internal edges carry label 0, inter-fragment connector edges
  carry label 1;
* attachment points are marked by a bit in the node label, and each may
  host at most one connector edge.

Because connectors are added one per merge, they always form a tree
over the constituent fragments, so every assembled graph decomposes
uniquely into vocabulary fragments by deleting label-1 edges.

The reward-scaling correction for this environment divides by the
fragment automorphism orders: C(x) = |Aut(G_n)| / prod_i |Aut(C_i)|,
because fragment-level building steps leave the fragments' internal
symmetries unexercised and they no longer cancel along trajectories.
"""

from __future__ import annotations

import math

from .env import (Environment, IllegalActionError, add_edge, add_fragment,
                  apply_action, is_terminated, remove_edge, remove_fragment,
                  stop, unset_stop)
from .graph_core import (LabeledGraph, automorphism_group, canonical_form)

ATTACH_BIT = 8
CONNECTOR_LABEL = 1


def is_attachment(g: LabeledGraph, v: int) -> bool:
    return bool(g.node_labels[v] & ATTACH_BIT)


def connector_degree(g: LabeledGraph, v: int) -> int:
    return sum(1 for u, lab in g.adj[v] if lab == CONNECTOR_LABEL)


def strip_connectors(g: LabeledGraph) -> LabeledGraph:
    for (u, v), lab in list(g.edges.items()):
        if lab == CONNECTOR_LABEL:
            g = g.without_edge(u, v)
    return g


def free_attachments(g: LabeledGraph, nodes=None):
    """Attachment points without a connector edge yet."""
    nodes = range(g.n) if nodes is None else nodes
    return [v for v in nodes
            if is_attachment(g, v) and connector_degree(g, v) == 0]


def fragment_components(g: LabeledGraph):
    """Node sets of the constituent fragments (components after deleting
    connector edges)."""
    return strip_connectors(g).connected_components()


def induced_fragment(g: LabeledGraph, comp) -> LabeledGraph:
    sub = g.without_nodes(set(range(g.n)) - set(comp))
    sub = strip_connectors(sub)
    if "terminated" in sub.attrs:
        sub = sub.without_attr("terminated")
    return sub


def default_vocabulary():
    """Three pairwise non-isomorphic fragments with automorphism orders
    6, 2 and 1: an all-attachment triangle, an all-attachment edge, and
    an edge with one attachment point and a distinct second node type."""
    a = ATTACH_BIT
    triangle = LabeledGraph(3, (a, a, a),
                            {(0, 1): 0, (0, 2): 0, (1, 2): 0})
    dimer = LabeledGraph(2, (a, a), {(0, 1): 0})
    asym = LabeledGraph(2, (a, 1), {(0, 1): 0})
    return [triangle, dimer, asym]


class FragmentEnv(Environment):
    """Assembly of vocabulary fragments joined by connector edges."""

    name = "fragment"

    def __init__(self, vocabulary=None, max_fragments=3):
        self.vocabulary = (default_vocabulary() if vocabulary is None
                           else list(vocabulary))
        if not self.vocabulary:
            raise ValueError("empty fragment vocabulary")
        for frag in self.vocabulary:
            if frag.n == 0 or not frag.is_connected():
                raise ValueError("fragments must be connected and non-empty")
            if any(lab == CONNECTOR_LABEL for lab in frag.edges.values()):
                raise ValueError("fragments may not contain connector edges")
            if not any(is_attachment(frag, v) for v in range(frag.n)):
                raise ValueError("fragments need an attachment point")
        self.max_fragments = max_fragments
        self._keys = [canonical_form(f).data for f in self.vocabulary]
        if len(set(self._keys)) != len(self._keys):
            raise ValueError("vocabulary fragments must be non-isomorphic")
        self._aut = [automorphism_group(f).order for f in self.vocabulary]

    # -- helpers ---------------------------------------------------------

    def vocab_index(self, g: LabeledGraph):
        """Index of the vocabulary fragment isomorphic to g, or None."""
        key = canonical_form(g).data
        try:
            return self._keys.index(key)
        except ValueError:
            return None

    def n_fragments(self, g: LabeledGraph) -> int:
        return len(fragment_components(g))

    # -- environment interface -------------------------------------------

    def initial_graph(self):
        return LabeledGraph(0)

    def forward_actions(self, g):
        if is_terminated(g):
            return []
        comps = g.connected_components()
        if g.n == 0:
            return sorted(add_fragment(i)
                          for i in range(len(self.vocabulary)))
        if len(comps) == 1:
            acts = [stop()]
            # adding a fragment is only legal if it can be connected
            if (self.n_fragments(g) < self.max_fragments
                    and free_attachments(g)):
                acts += [add_fragment(i)
                         for i in range(len(self.vocabulary))]
            return sorted(acts)
        if len(comps) == 2:
            a, b = comps
            return sorted(add_edge(u, v, CONNECTOR_LABEL)
                          for u in free_attachments(g, a)
                          for v in free_attachments(g, b))
        raise IllegalActionError("unreachable state: more than 2 components")

    def backward_actions(self, g):
        if is_terminated(g):
            return [unset_stop()]
        if g.n == 0:
            return []
        comps = g.connected_components()
        acts = []
        if len(comps) == 2:
            for comp, other in (comps, reversed(comps)):
                if self.vocab_index(induced_fragment(g, comp)) is not None \
                        and all(connector_degree(g, v) == 0 for v in comp) \
                        and free_attachments(g, other):
                    acts.append(remove_fragment(frozenset(comp)))
        else:
            if self.vocab_index(induced_fragment(g, comps[0])) is not None \
                    and not any(lab == CONNECTOR_LABEL
                                for lab in g.edges.values()):
                acts.append(remove_fragment(frozenset(comps[0])))
            for (u, v), lab in g.edges.items():
                if lab != CONNECTOR_LABEL:
                    continue
                if connector_degree(g, u) != 1 or connector_degree(g, v) != 1:
                    continue
                cut = g.without_edge(u, v)
                parts = cut.connected_components()
                if len(parts) != 2:
                    continue
                if any(self.vocab_index(induced_fragment(cut, p)) is not None
                       and all(lab2 != CONNECTOR_LABEL
                               for e2, lab2 in cut.edges.items()
                               if e2[0] in set(p) and e2[1] in set(p))
                       for p in parts):
                    acts.append(remove_edge(u, v))
        return sorted(acts)

    def apply(self, g, a):
        if a not in set(self.forward_actions(g)):
            raise IllegalActionError(
                f"{a} is not a legal forward action in {self.name}")
        if a.kind == "add_fragment":
            return g.disjoint_union(self.vocabulary[a.data[0]])
        return apply_action(g, a)

    def reward(self, g):
        if not is_terminated(g):
            raise IllegalActionError("reward queried on non-terminal graph")
        return 1.0

    def fragment_aut_factor(self, a):
        if a.kind == "add_fragment":
            return self._aut[a.data[0]]
        if a.kind == "add_edge" and a.data[1] == CONNECTOR_LABEL:
            return 1
        return 1

    def log_reward_correction(self, g, aut_order):
        total = 0.0
        for comp in fragment_components(g):
            idx = self.vocab_index(induced_fragment(g, comp))
            if idx is None:
                raise ValueError("graph does not decompose into fragments")
            total += math.log(self._aut[idx])
        return math.log(aut_order) - total
