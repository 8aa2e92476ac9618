"""Exhaustive state-space enumeration and exact evaluation.

States are isomorphism classes of graphs, keyed by canonical form.
Enumeration is breadth-first from the initial graph; for each state we
group the legal forward actions into orbit classes and canonicalize one
successor per class.  Parallel orbit classes with isomorphic successors
are merged into a single transition (they share the successor key, and
hence the policy logit), storing the summed multiplicity.

On top of the DAG: exact terminating distributions by forward dynamic
programming, the reward target distribution, and L1 error.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .env import group_by_orbit, is_terminated
from .graph_core import automorphism_group, canonicalize


class EnumerationOverflowError(RuntimeError):
    pass


class DistributionSupportError(ValueError):
    pass


@dataclass
class StateDag:
    """Canonical state space of an environment.

    Transitions are stored CSR-style: edges of state s are positions
    indptr[s]:indptr[s+1] in the flat edge arrays.  edge_mult counts the
    concrete forward actions behind the transition (summed over orbit
    classes with isomorphic successors); edge_bwd_mult the concrete
    backward actions of the reverse transition.
    """

    env: object
    graphs: list = field(default_factory=list)        # representative per state
    key_to_id: dict = field(default_factory=dict)     # canonical bytes -> id
    aut_order: np.ndarray = None                      # int64 per state
    terminal: np.ndarray = None                       # bool per state
    reward: np.ndarray = None                         # float per state (0 if not terminal)
    depth: np.ndarray = None                          # topological level
    total_bwd: np.ndarray = None                      # concrete backward action count
    indptr: np.ndarray = None
    edge_dst: np.ndarray = None
    edge_mult: np.ndarray = None
    edge_bwd_mult: np.ndarray = None
    edge_frag_aut: np.ndarray = None
    edge_action: list = field(default_factory=list)   # representative action per edge
    initial_id: int = 0

    @property
    def n_states(self):
        return len(self.graphs)

    @property
    def n_edges(self):
        return len(self.edge_dst)

    @property
    def terminal_ids(self):
        return np.flatnonzero(self.terminal)

    def out_edges(self, s):
        return range(self.indptr[s], self.indptr[s + 1])

    def state_id(self, g):
        key, _ = canonicalize(g)
        return self.key_to_id[key.data]

    def find_edge(self, src, dst):
        for e in self.out_edges(src):
            if self.edge_dst[e] == dst:
                return e
        raise KeyError(f"no transition {src} -> {dst}")


def _depth_measure(g):
    return g.n + len(g.edges) + (1 if is_terminated(g) else 0)


def enumerate_states(env, state_cap=10_000_000) -> StateDag:
    """Breadth-first enumeration of all states reachable from the
    initial graph, memoized by canonical form."""
    g0 = env.initial_graph()
    key0, rep0 = canonicalize(g0)
    graphs = [rep0]
    key_to_id = {key0.data: 0}
    # per-state scratch lists
    edges = []          # list of dict dst -> [mult, frag_aut, rep_action]
    aut_orders = []
    frontier = [0]
    while frontier:
        next_frontier = []
        for sid in frontier:
            g = graphs[sid]
            aut = automorphism_group(g)
            aut_orders.append(aut.order)
            assert len(aut_orders) == sid + 1
            acts = env.forward_actions(g)
            out = {}
            for cls in group_by_orbit(env, g, acts, aut=aut):
                succ = env.apply(g, cls.representative)
                key, rep = canonicalize(succ)
                tid = key_to_id.get(key.data)
                if tid is None:
                    tid = len(graphs)
                    if tid >= state_cap:
                        raise EnumerationOverflowError(
                            f"state cap {state_cap} exceeded")
                    key_to_id[key.data] = tid
                    graphs.append(rep)
                    next_frontier.append(tid)
                frag = env.fragment_aut_factor(cls.representative)
                slot = out.get(tid)
                if slot is None:
                    out[tid] = [cls.multiplicity, frag, cls.representative]
                else:
                    assert slot[1] == frag
                    slot[0] += cls.multiplicity
            edges.append(out)
        frontier = next_frontier

    n = len(graphs)
    dag = StateDag(env=env)
    dag.graphs = graphs
    dag.key_to_id = key_to_id
    dag.aut_order = np.array(aut_orders, dtype=np.int64)
    dag.terminal = np.array([is_terminated(g) for g in graphs], dtype=bool)
    dag.reward = np.array([env.reward(g) if is_terminated(g) else 0.0
                           for g in graphs])
    dag.depth = np.array([_depth_measure(g) for g in graphs], dtype=np.int64)
    indptr = np.zeros(n + 1, dtype=np.int64)
    dst, mult, bwd, frag_aut, rep_actions = [], [], [], [], []
    total_bwd = np.zeros(n, dtype=np.int64)
    for s, out in enumerate(edges):
        indptr[s + 1] = indptr[s] + len(out)
        for t in sorted(out):
            m, frag, act = out[t]
            # orbit/automorphism ratio: per orbit class the backward
            # multiplicity is mult * |Aut(G')| / (|Aut(G)| * |Aut(C)|)
            num = m * int(dag.aut_order[t])
            den = int(dag.aut_order[s]) * frag
            if num % den:
                raise AssertionError(
                    f"non-integer backward multiplicity on {s}->{t}")
            mb = num // den
            dst.append(t)
            mult.append(m)
            bwd.append(mb)
            frag_aut.append(frag)
            rep_actions.append(act)
            total_bwd[t] += mb
    dag.indptr = indptr
    dag.edge_dst = np.array(dst, dtype=np.int64)
    dag.edge_mult = np.array(mult, dtype=np.int64)
    dag.edge_bwd_mult = np.array(bwd, dtype=np.int64)
    dag.edge_frag_aut = np.array(frag_aut, dtype=np.int64)
    dag.edge_action = rep_actions
    dag.total_bwd = total_bwd
    # cross-check against the environment's own backward enumeration is
    # done in tests; here only basic sanity
    assert total_bwd[dag.initial_id] == 0
    return dag


@dataclass
class ExactDistribution:
    """Probability per terminal state id, plus the normalizer check."""

    terminal_ids: np.ndarray
    probs: np.ndarray
    normalizer: float = 1.0
    log_z: float = 0.0

    def as_dict(self):
        return dict(zip(self.terminal_ids.tolist(), self.probs.tolist()))


def edge_src(dag: StateDag):
    """Source state id per edge (cached)."""
    if getattr(dag, "_edge_src", None) is None:
        dag._edge_src = np.repeat(np.arange(dag.n_states),
                                  np.diff(dag.indptr))
    return dag._edge_src


def edge_probabilities(dag: StateDag, edge_logits, epsilon=0.0):
    """Per-edge transition-class probability under a softmax policy over
    the outgoing edges of every state, optionally epsilon-mixed with the
    uniform-over-classes policy."""
    src = edge_src(dag)
    m = np.full(dag.n_states, -np.inf)
    np.maximum.at(m, src, edge_logits)
    ex = np.exp(edge_logits - m[src])
    denom = np.zeros(dag.n_states)
    np.add.at(denom, src, ex)
    probs = ex / denom[src]
    if epsilon:
        counts = np.diff(dag.indptr)
        probs = (1 - epsilon) * probs + epsilon / counts[src]
    return probs


def _dp_schedule(dag: StateDag):
    """Edges sorted by source depth, with per-level boundaries; cached
    on the DAG since DP runs many times during training evaluation."""
    if getattr(dag, "_dp_cache", None) is None:
        src = np.repeat(np.arange(dag.n_states), np.diff(dag.indptr))
        d = dag.depth[src]
        order = np.argsort(d, kind="stable")
        dsorted = d[order]
        levels = int(dag.depth.max()) + 1
        bounds = np.searchsorted(dsorted, np.arange(levels + 1))
        dag._dp_cache = (order, src[order], dag.edge_dst[order], bounds)
    return dag._dp_cache


def exact_terminating_distribution(dag: StateDag, edge_probs) -> ExactDistribution:
    """Forward DP over topological levels: p(s0)=1, push mass along
    transition probabilities; terminal states absorb."""
    p = np.zeros(dag.n_states)
    p[dag.initial_id] = 1.0
    order, src_s, dst_s, bounds = _dp_schedule(dag)
    probs_s = edge_probs[order]
    for level in range(len(bounds) - 1):
        lo, hi = bounds[level], bounds[level + 1]
        if lo == hi:
            continue
        np.add.at(p, dst_s[lo:hi], p[src_s[lo:hi]] * probs_s[lo:hi])
    tids = dag.terminal_ids
    total = p[tids].sum()
    return ExactDistribution(tids, p[tids] / total, normalizer=total)


def target_distribution(dag: StateDag) -> ExactDistribution:
    tids = dag.terminal_ids
    r = dag.reward[tids]
    if np.any(r <= 0):
        raise ValueError("terminal rewards must be strictly positive")
    z = r.sum()
    return ExactDistribution(tids, r / z, log_z=float(np.log(z)))


def l1_error(p: ExactDistribution, q: ExactDistribution) -> float:
    if not np.array_equal(p.terminal_ids, q.terminal_ids):
        raise DistributionSupportError("terminal supports differ")
    return float(np.abs(p.probs - q.probs).sum())


def class_size(n_nodes: int, aut_order: int) -> int:
    """Number of distinct labeled graphs in the class: n!/|Aut|."""
    q, r = divmod(math.factorial(n_nodes), aut_order)
    assert r == 0
    return q


def export_dag_jsonl(dag: StateDag, path):
    from .graph_core import canonical_form
    with open(path, "w") as f:
        for s in range(dag.n_states):
            rec = {"id": s,
                   "key": canonical_form(dag.graphs[s]).hex(),
                   "terminal": bool(dag.terminal[s]),
                   "aut": int(dag.aut_order[s]),
                   "reward": float(dag.reward[s]) if dag.terminal[s] else None,
                   "successors": [[int(dag.edge_dst[e]), int(dag.edge_mult[e])]
                                  for e in dag.out_edges(s)]}
            f.write(json.dumps(rec) + "\n")
