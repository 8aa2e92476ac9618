"""Graph-building environments.

Defines the concrete action vocabulary (add node / add edge / set
attribute / stop and their reversals), legal-action enumeration in both
directions, orbit- and transition-equivalence grouping of actions, and
three enumerable environments:

* illustrative: six fixed nodes, edges only, uniform reward over
  connected graphs (112 terminal classes)
* clique: up to 7 typed nodes, reward counts 4-cliques with at least
  three same-type members (72296 terminal classes)
* cycle: up to 10 nodes / 10 edges / degree 4, reward 1 + cyclomatic
  number (2299 terminal classes)
"""

from __future__ import annotations

from itertools import combinations
from typing import NamedTuple

from .graph_core import LabeledGraph, automorphism_group, canonical_form


class IllegalActionError(ValueError):
    pass


class GraphAction(NamedTuple):
    kind: str
    data: tuple = ()

    def __repr__(self):
        return f"{self.kind}{self.data}"


def add_node(anchor, label=0):
    return GraphAction("add_node", (anchor, label))


def add_edge(u, v, label=0):
    return GraphAction("add_edge", ((u, v) if u < v else (v, u), label))


def set_node_attr(u, value):
    return GraphAction("set_node_attr", (u, value))


def set_edge_attr(u, v, value):
    return GraphAction("set_edge_attr", ((u, v) if u < v else (v, u), value))


def stop():
    return GraphAction("stop")


def add_fragment(fid):
    return GraphAction("add_fragment", (fid,))


def remove_node(v):
    return GraphAction("remove_node", (v,))


def remove_edge(u, v):
    return GraphAction("remove_edge", ((u, v) if u < v else (v, u),))


def remove_fragment(vertex_set):
    return GraphAction("remove_fragment", (frozenset(vertex_set),))


def unset_stop():
    return GraphAction("unset_stop")


BACKWARD_KINDS = {"remove_node", "remove_edge", "remove_fragment",
                  "unset_stop", "set_node_attr", "set_edge_attr"}


class ActionClass(NamedTuple):
    representative: GraphAction
    multiplicity: int
    kind: str  # "orbit" | "transition" | "pe"
    members: tuple


def is_terminated(g: LabeledGraph) -> bool:
    return bool(g.attrs.get("terminated"))


# -- generic action application ------------------------------------------

def apply_action(g: LabeledGraph, a: GraphAction) -> LabeledGraph:
    """Apply a concrete action to g; pure.  Legality is the caller's
    business (environments check it), structural validity is ours."""
    k = a.kind
    if k == "add_node":
        anchor, label = a.data
        g2 = g.with_node(label)
        if anchor is not None:
            g2 = g2.with_edge(anchor, g.n)
        return g2
    if k == "add_edge":
        (u, v), label = a.data
        return g.with_edge(u, v, label)
    if k == "set_node_attr":
        u, value = a.data
        return g.with_node_label(u, value)
    if k == "set_edge_attr":
        (u, v), value = a.data
        return g.with_edge_label(u, v, value)
    if k == "stop":
        return g.with_attrs(terminated=True)
    if k == "remove_node":
        return g.without_node(a.data[0])
    if k == "remove_edge":
        (u, v), = a.data
        return g.without_edge(u, v)
    if k == "remove_fragment":
        return g.without_nodes(a.data[0])
    if k == "unset_stop":
        return g.without_attr("terminated")
    raise IllegalActionError(f"unknown action kind {k}")


def orbit_class_key(g: LabeledGraph, aut, a: GraphAction):
    """Invariant identifying the orbit class of a concrete action: the
    action type and parameters plus the orbit of its target in g."""
    k = a.kind
    if k == "add_node":
        anchor, label = a.data
        if anchor is None:
            return (k, None, label)
        return (k, aut.node_orbit_id(anchor), label)
    if k in ("add_edge", "set_edge_attr"):
        pair, value = a.data
        return (k, aut.pair_orbit_index[pair], value)
    if k == "remove_edge":
        return (k, aut.pair_orbit_index[a.data[0]])
    if k == "remove_node":
        return (k, aut.node_orbit_id(a.data[0]))
    if k == "set_node_attr":
        u, value = a.data
        return (k, aut.node_orbit_id(u), value)
    if k == "remove_fragment":
        vs = a.data[0]
        # orbit of a vertex set: use the lexicographically smallest image
        best = min(tuple(sorted(p[v] for v in vs))
                   for p in (e.mapping for e in aut.elements))
        return (k, best)
    return (k,) + a.data  # stop / unset_stop / add_fragment: singleton orbits


def group_by_orbit(env, g: LabeledGraph, actions, aut=None):
    """Partition actions into orbit-equivalence classes: same action type
    and parameters, targets in one orbit of Aut(g)."""
    if aut is None:
        aut = automorphism_group(g)
    groups = {}
    for a in sorted(actions):
        groups.setdefault(orbit_class_key(g, aut, a), []).append(a)
    return [ActionClass(m[0], len(m), "orbit", tuple(m))
            for _, m in sorted(groups.items(), key=lambda kv: kv[1][0])]


def group_by_transition(env, g: LabeledGraph, actions):
    """Partition actions by isomorphism class of the successor graph.
    Backward actions are grouped by predecessor class instead."""
    groups = {}
    for a in sorted(actions):
        succ = (env.apply_backward(g, a) if a.kind in BACKWARD_KINDS
                else env.apply(g, a))
        groups.setdefault(canonical_form(succ).data, []).append(a)
    return [ActionClass(m[0], len(m), "transition", tuple(m))
            for _, m in sorted(groups.items(), key=lambda kv: kv[1][0])]


# -- environment base ----------------------------------------------------

class Environment:
    name = "base"

    def initial_graph(self) -> LabeledGraph:
        raise NotImplementedError

    def forward_actions(self, g: LabeledGraph):
        raise NotImplementedError

    def backward_actions(self, g: LabeledGraph):
        raise NotImplementedError

    def reward(self, g: LabeledGraph) -> float:
        raise NotImplementedError

    def apply(self, g: LabeledGraph, a: GraphAction) -> LabeledGraph:
        if a not in set(self.forward_actions(g)):
            raise IllegalActionError(
                f"{a} is not a legal forward action in {self.name}")
        return apply_action(g, a)

    def apply_backward(self, g: LabeledGraph, a: GraphAction) -> LabeledGraph:
        if a not in set(self.backward_actions(g)):
            raise IllegalActionError(
                f"{a} is not a legal backward action in {self.name}")
        return apply_action(g, a)

    def fragment_aut_factor(self, a: GraphAction) -> int:
        """|Aut| of the fragment added by a, 1 for node-level actions.
        Enters the orbit-ratio bookkeeping of fragment assembly."""
        return 1

    def log_reward_correction(self, g: LabeledGraph, aut_order: int) -> float:
        """log of the reward-scaling factor for terminal graph g, i.e.
        log |Aut(G_n)| - log |Aut(G_0)| for node-built environments (the
        initial-graph term is constant and lands in Z)."""
        import math
        return math.log(aut_order) - math.log(self._initial_aut_order())

    def _initial_aut_order(self):
        if not hasattr(self, "_init_aut"):
            self._init_aut = automorphism_group(self.initial_graph()).order
        return self._init_aut


class IllustrativeEnv(Environment):
    """Six fixed unlabeled nodes; AddEdge and Stop only; Stop is legal
    exactly when the graph is connected (spans all six nodes); every
    terminal graph has reward 1."""

    name = "illustrative"

    def __init__(self, n_nodes=6):
        self.n_nodes = n_nodes

    def initial_graph(self):
        return LabeledGraph(self.n_nodes)

    def forward_actions(self, g):
        if is_terminated(g):
            return []
        acts = [add_edge(u, v) for u in range(g.n) for v in range(u + 1, g.n)
                if not g.has_edge(u, v)]
        if g.is_connected():
            acts.append(stop())
        return sorted(acts)

    def backward_actions(self, g):
        if is_terminated(g):
            return [unset_stop()]
        return sorted(remove_edge(u, v) for (u, v) in g.edges)

    def reward(self, g):
        if not is_terminated(g):
            raise IllegalActionError("reward queried on non-terminal graph")
        return 1.0


class CliqueEnv(Environment):
    """Typed nodes (2 types), grown from the empty graph by AddNode
    (anchored, typed) and AddEdge; Stop legal from any non-empty graph.
    Reward: floor + number of 4-cliques containing at least three nodes
    of one type."""

    name = "clique"

    def __init__(self, max_nodes=7, n_types=2, reward_floor=0.1,
                 clique_size=4, same_type_min=3):
        self.max_nodes = max_nodes
        self.n_types = n_types
        self.reward_floor = reward_floor
        self.clique_size = clique_size
        self.same_type_min = same_type_min

    def initial_graph(self):
        return LabeledGraph(0)

    def forward_actions(self, g):
        if is_terminated(g):
            return []
        acts = []
        if g.n == 0:
            return sorted(add_node(None, t) for t in range(self.n_types))
        if g.n < self.max_nodes:
            acts += [add_node(u, t) for u in range(g.n)
                     for t in range(self.n_types)]
        acts += [add_edge(u, v) for u in range(g.n) for v in range(u + 1, g.n)
                 if not g.has_edge(u, v)]
        acts.append(stop())
        return sorted(acts)

    def backward_actions(self, g):
        if is_terminated(g):
            return [unset_stop()]
        if g.n == 0:
            return []
        if g.n == 1:
            return [remove_node(0)]
        acts = [remove_node(v) for v in range(g.n) if g.degree(v) == 1]
        acts += [remove_edge(u, v) for (u, v) in g.edges
                 if g.without_edge(u, v).is_connected()]
        return sorted(acts)

    def reward(self, g):
        if not is_terminated(g):
            raise IllegalActionError("reward queried on non-terminal graph")
        masks = [0] * g.n
        for (u, v) in g.edges:
            masks[u] |= 1 << v
            masks[v] |= 1 << u
        count = 0
        for quad in combinations(range(g.n), self.clique_size):
            qm = 0
            for v in quad:
                qm |= 1 << v
            if any(masks[v] & qm != qm & ~(1 << v) for v in quad):
                continue
            types = [g.node_labels[v] for v in quad]
            if max(types.count(t) for t in set(types)) >= self.same_type_min:
                count += 1
        return self.reward_floor + count


class CycleEnv(Environment):
    """Unlabeled nodes, grown from the empty graph; at most 10 nodes,
    10 edges, degree 4.  Reward 1 + cyclomatic number."""

    name = "cycle"

    def __init__(self, max_nodes=10, max_edges=10, max_degree=4):
        self.max_nodes = max_nodes
        self.max_edges = max_edges
        self.max_degree = max_degree

    def initial_graph(self):
        return LabeledGraph(0)

    def forward_actions(self, g):
        if is_terminated(g):
            return []
        if g.n == 0:
            return [add_node(None, 0)]
        acts = []
        ne = len(g.edges)
        if g.n < self.max_nodes and ne < self.max_edges:
            acts += [add_node(u, 0) for u in range(g.n)
                     if g.degree(u) < self.max_degree]
        if ne < self.max_edges:
            acts += [add_edge(u, v) for u in range(g.n)
                     for v in range(u + 1, g.n)
                     if not g.has_edge(u, v)
                     and g.degree(u) < self.max_degree
                     and g.degree(v) < self.max_degree]
        acts.append(stop())
        return sorted(acts)

    def backward_actions(self, g):
        if is_terminated(g):
            return [unset_stop()]
        if g.n == 0:
            return []
        if g.n == 1:
            return [remove_node(0)]
        acts = [remove_node(v) for v in range(g.n) if g.degree(v) == 1]
        acts += [remove_edge(u, v) for (u, v) in g.edges
                 if g.without_edge(u, v).is_connected()]
        return sorted(acts)

    def reward(self, g):
        if not is_terminated(g):
            raise IllegalActionError("reward queried on non-terminal graph")
        n_comp = len(g.connected_components())
        return 1.0 + len(g.edges) - g.n + n_comp


def make_env(config) -> Environment:
    """Build an environment from a config mapping ({"env": name, ...})."""
    name = config["env"] if isinstance(config, dict) else config
    cfg = config if isinstance(config, dict) else {}
    if name == "illustrative":
        return IllustrativeEnv(n_nodes=cfg.get("max_nodes", 6))
    if name == "clique":
        return CliqueEnv(max_nodes=cfg.get("max_nodes", 7),
                         reward_floor=cfg.get("reward_floor", 0.1))
    if name == "cycle":
        return CycleEnv(max_nodes=cfg.get("max_nodes", 10),
                        max_edges=cfg.get("max_edges", 10),
                        max_degree=cfg.get("max_degree", 4))
    if name == "fragment":
        from .fragments import FragmentEnv, default_vocabulary
        return FragmentEnv(default_vocabulary(),
                           max_fragments=cfg.get("max_fragments", 3))
    raise ValueError(f"unknown environment {name!r}")
