"""Tabular orbit-equivariant forward policy and uniform backward policy.

The forward policy keeps one logit per DAG transition, i.e. per
(state, successor-class) pair.  Concrete actions behind a transition
share its probability mass equally, so orbit-equivalent actions receive
identical probabilities by construction, and relabeling a graph cannot
change any class probability (classes are keyed by canonical successor
forms).

The backward policy is uniform over concrete backward graph actions:
q_E = 1 / (number of backward actions).
"""

from __future__ import annotations

import json
from typing import NamedTuple

import numpy as np

from .env import group_by_orbit
from .graph_core import canonical_form
from .state_space import StateDag, edge_src


class DeadEndError(RuntimeError):
    pass


class Trajectory(NamedTuple):
    """A complete rollout as DAG indices: visited states s_0..s_n and the
    transition edge taken at each step (len(edges) = len(states) - 1)."""

    states: list
    edges: list


class PolicyTable:
    def __init__(self, dag: StateDag, epsilon=0.0, log_z=0.0):
        self.dag = dag
        self.logits = np.zeros(dag.n_edges)
        self.log_z = float(log_z)
        self.epsilon = float(epsilon)
        self._norm = np.zeros(dag.n_states)
        self._norm_valid = np.zeros(dag.n_states, dtype=bool)
        self._cum = {}

    # -- cache maintenance ----------------------------------------------

    def invalidate(self, states):
        self._norm_valid[states] = False
        for s in states:
            self._cum.pop(s, None)

    def invalidate_all(self):
        self._norm_valid[:] = False
        self._cum.clear()

    def _ensure_norm(self, states):
        for s in states:
            if not self._norm_valid[s]:
                lo, hi = self.dag.indptr[s], self.dag.indptr[s + 1]
                z = self.logits[lo:hi]
                m = z.max()
                self._norm[s] = m + np.log(np.exp(z - m).sum())
                self._norm_valid[s] = True

    # -- probabilities ---------------------------------------------------

    def state_probs(self, s, explore=False):
        """Transition-class probabilities over the outgoing edges of s."""
        lo, hi = self.dag.indptr[s], self.dag.indptr[s + 1]
        z = self.logits[lo:hi]
        p = np.exp(z - z.max())
        p /= p.sum()
        if explore and self.epsilon:
            p = (1 - self.epsilon) * p + self.epsilon / (hi - lo)
        return p

    def edge_log_probs(self, edge_ids):
        """log class probability for each given edge, under the learned
        policy (no exploration)."""
        src = edge_src(self.dag)[edge_ids]
        self._ensure_norm(np.unique(src))
        return self.logits[edge_ids] - self._norm[src]

    def sample_edge(self, s, rng):
        cum = self._cum.get(s)
        if cum is None:
            p = self.state_probs(s, explore=True)
            cum = np.cumsum(p)
            self._cum[s] = cum
        lo = self.dag.indptr[s]
        return lo + int(np.searchsorted(cum, rng.random() * cum[-1]))

    def all_edge_probs(self, explore=False):
        from .state_space import edge_probabilities
        eps = self.epsilon if explore else 0.0
        return edge_probabilities(self.dag, self.logits, epsilon=eps)


def sample_trajectory(policy: PolicyTable, rng) -> Trajectory:
    """Roll out from the initial state to a terminal state, sampling
    transition classes with epsilon-uniform exploration."""
    dag = policy.dag
    s = dag.initial_id
    states, edges = [s], []
    while not dag.terminal[s]:
        if dag.indptr[s] == dag.indptr[s + 1]:
            raise DeadEndError(f"non-terminal state {s} has no actions")
        e = policy.sample_edge(s, rng)
        edges.append(e)
        s = int(dag.edge_dst[e])
        states.append(s)
    return Trajectory(states, edges)


def forward_probabilities(policy: PolicyTable, g):
    """Concrete-action probability map at a state given by its graph.
    Orbit classes are matched to DAG transitions through the canonical
    form of their successor graphs."""
    dag = policy.dag
    from .graph_core import canonicalize
    key, _ = canonicalize(g)
    sid = dag.key_to_id.get(key.data)
    if sid is None:
        raise KeyError("state not enumerated")
    env = dag.env
    acts = env.forward_actions(g)
    probs = policy.state_probs(sid)
    edge_of_dst = {int(dag.edge_dst[e]): i
                   for i, e in enumerate(dag.out_edges(sid))}
    lo = dag.indptr[sid]
    out = {}
    for cls in group_by_orbit(env, g, acts):
        succ = env.apply(g, cls.representative)
        skey, _ = canonicalize(succ)
        tid = dag.key_to_id[skey.data]
        i = edge_of_dst[tid]
        p_e = probs[i] / dag.edge_mult[lo + i]
        for a in cls.members:
            out[a] = float(p_e)
    return out


def backward_probabilities(env, g):
    """Uniform distribution over concrete backward actions of g."""
    acts = env.backward_actions(g)
    if not acts:
        raise ValueError("initial graph has no backward actions")
    q = 1.0 / len(acts)
    return {a: q for a in acts}


# -- checkpoints ---------------------------------------------------------

def state_keys_hex(dag: StateDag):
    if getattr(dag, "_keys_hex", None) is None:
        dag._keys_hex = [canonical_form(g).hex() for g in dag.graphs]
    return dag._keys_hex


def save_checkpoint(policy: PolicyTable, path):
    dag = policy.dag
    keys = state_keys_hex(dag)
    table = {}
    for s in range(dag.n_states):
        lo, hi = dag.indptr[s], dag.indptr[s + 1]
        if lo == hi:
            continue
        table[keys[s]] = {keys[int(dag.edge_dst[e])]: policy.logits[e]
                          for e in range(lo, hi)}
    with open(path, "w") as f:
        json.dump({"log_z": policy.log_z, "epsilon": policy.epsilon,
                   "logits": table}, f)


def load_checkpoint(dag: StateDag, path) -> PolicyTable:
    with open(path) as f:
        data = json.load(f)
    policy = PolicyTable(dag, epsilon=data.get("epsilon", 0.0),
                         log_z=data["log_z"])
    keys = state_keys_hex(dag)
    index = {k: s for s, k in enumerate(keys)}
    for skey, row in data["logits"].items():
        s = index[skey]
        lo, hi = dag.indptr[s], dag.indptr[s + 1]
        dsts = {keys[int(dag.edge_dst[e])]: e for e in range(lo, hi)}
        for dkey, logit in row.items():
            policy.logits[dsts[dkey]] = logit
    policy.invalidate_all()
    return policy
