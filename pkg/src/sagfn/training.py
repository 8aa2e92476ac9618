"""Training objectives (TB, DB, FM) under five correction modes, the
tabular optimizer loop, positional-encoding approximation of orbit
classes, and the unbiased likelihood estimator.

Mode cheat sheet, per sampled trajectory tau = (G_0 .. G_n) with
concrete-action probabilities p_E and uniform backward q_E:

* vanilla:            delta = log Z + sum log p_E - beta log R - sum log q_E
* reward-scaling:     reward replaced by C(x) R(x)^beta, where C is
                      |Aut(G_n)| / |Aut(G_0)| (divided by fragment
                      automorphism orders in assembly environments)
* flow-scaling:       each backward factor multiplied by
                      |Aut(G_{t+1})| / (|Aut(G_t)| |Aut(C_t)|); equals
                      reward scaling after telescoping
* transition:         per-step class sums p_A / q_A instead of p_E / q_E
* pe:                 class sums approximated by positional-encoding
                      multiplicities

All gradients are computed in closed form (squared log-ratios over
softmax tables); no autodiff.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np

from .env import group_by_orbit, is_terminated
from .graph_core import automorphism_group, canonicalize
from .policy import PolicyTable, Trajectory, sample_trajectory
from .state_space import (StateDag, edge_probabilities, edge_src,
                          exact_terminating_distribution, l1_error,
                          target_distribution)

MODES = ("vanilla", "transition", "pe", "reward-scaling", "flow-scaling")


class UnsupportedModeError(ValueError):
    pass


# -- positional encodings ------------------------------------------------

PE_DIM = 8
PE_DECIMALS = 9


def pe_vectors(g):
    """Random-walk features per node: entries of (A D^-1)^k c for
    k = 0..7, where c_u = log(type_u + 2).  Isolated nodes keep their
    k=0 entry and zeros afterwards (their D^-1 row is zeroed)."""
    n = g.n
    out = np.zeros((n, PE_DIM))
    if n == 0:
        return out
    A = np.zeros((n, n))
    for (u, v) in g.edges:
        A[u, v] = A[v, u] = 1.0
    deg = A.sum(axis=0)
    dinv = np.divide(1.0, deg, out=np.zeros(n), where=deg > 0)
    M = A * dinv[None, :]
    vec = np.log(np.asarray(g.node_labels, dtype=float) + 2.0)
    for k in range(PE_DIM):
        out[:, k] = vec
        vec = M @ vec
    return out


def _pe_action_key(pe, a):
    k = a.kind
    if k in ("add_node",):
        anchor, label = a.data
        if anchor is None:
            return (k, label)
        return (k, label, tuple(np.round(pe[anchor], PE_DECIMALS)))
    if k == "remove_node":
        return (k, tuple(np.round(pe[a.data[0]], PE_DECIMALS)))
    if k in ("add_edge", "set_edge_attr"):
        (u, v), val = a.data
        return (k, val, tuple(np.round(pe[u] + pe[v], PE_DECIMALS)))
    if k == "remove_edge":
        (u, v), = a.data
        return (k, tuple(np.round(pe[u] + pe[v], PE_DECIMALS)))
    if k == "set_node_attr":
        u, val = a.data
        return (k, val, tuple(np.round(pe[u], PE_DECIMALS)))
    return (k,) + tuple(a.data)


def pe_group(g, actions):
    """Group actions by positional-encoding equality; an approximation
    of orbit grouping that can merge distinct orbits (over-grouping is
    reported by callers, not treated as an error)."""
    from .env import ActionClass
    pe = pe_vectors(g)
    groups = {}
    for a in sorted(actions):
        groups.setdefault(_pe_action_key(pe, a), []).append(a)
    return [ActionClass(m[0], len(m), "pe", tuple(m))
            for m in groups.values()]


def pe_multiplicities(dag: StateDag):
    """Per-edge forward and backward PE-class sizes (lazy, cached).
    For a transition that merges several orbit classes the stored
    representative action stands in for the sampled one."""
    if getattr(dag, "_pe_mults", None) is not None:
        return dag._pe_mults
    env = dag.env
    fwd = np.ones(dag.n_edges)
    bwd = np.ones(dag.n_edges)
    src_of = edge_src(dag)
    for s in range(dag.n_states):
        lo, hi = dag.indptr[s], dag.indptr[s + 1]
        if lo == hi:
            continue
        g = dag.graphs[s]
        acts = env.forward_actions(g)
        size = {}
        for cls in pe_group(g, acts):
            for a in cls.members:
                size[a] = cls.multiplicity
        for e in range(lo, hi):
            fwd[e] = size[dag.edge_action[e]]
    for t in range(dag.n_states):
        if t == dag.initial_id:
            continue
        g = dag.graphs[t]
        bacts = env.backward_actions(g)
        if not bacts:
            continue
        pe = pe_vectors(g)
        aut = automorphism_group(g)
        # orbit classes share predecessor and PE key; PE-class size is
        # the sum of orbit-class sizes with matching keys
        classes = group_by_orbit(env, g, bacts, aut=aut)
        keys = [_pe_action_key(pe, c.representative) for c in classes]
        key_size = {}
        for c, k in zip(classes, keys):
            key_size[k] = key_size.get(k, 0) + c.multiplicity
        pred_key = {}
        for c, k in zip(classes, keys):
            p = env.apply_backward(g, c.representative)
            pk, _ = canonicalize(p)
            pred_key.setdefault(dag.key_to_id[pk.data], k)
        for e in np.flatnonzero(dag.edge_dst == t):
            bwd[e] = key_size[pred_key[int(src_of[e])]]
    dag._pe_mults = (fwd, bwd)
    return dag._pe_mults


# -- per-mode constant arrays --------------------------------------------

def edge_step_constants(dag: StateDag, mode):
    """k_e such that a step's contribution to the balance log-ratio is
    log p_class(e) + k_e (forward log-prob term plus all per-step
    backward and multiplicity corrections)."""
    if mode not in MODES:
        raise UnsupportedModeError(f"unknown mode {mode!r}")
    log_mult = np.log(dag.edge_mult)
    log_tbwd = np.log(dag.total_bwd[dag.edge_dst])
    if mode in ("vanilla", "reward-scaling"):
        return -log_mult + log_tbwd
    if mode == "flow-scaling":
        log_aut = np.log(dag.aut_order)
        src = edge_src(dag)
        ratio = (log_aut[dag.edge_dst] - log_aut[src]
                 - np.log(dag.edge_frag_aut))
        return -log_mult + log_tbwd - ratio
    if mode == "transition":
        return log_tbwd - np.log(dag.edge_bwd_mult)
    fwd, bwd = pe_multiplicities(dag)
    return -log_mult + np.log(fwd) + log_tbwd - np.log(bwd)


def terminal_log_target(dag: StateDag, mode, beta=1.0):
    """Per-terminal-state log of the (possibly corrected) training
    reward.  Corrections apply after reward exponentiation."""
    t = np.full(dag.n_states, np.nan)
    env = dag.env
    for s in map(int, dag.terminal_ids):
        r = dag.reward[s]
        if r <= 0:
            raise ValueError(f"non-positive reward at state {s}")
        val = beta * math.log(r)
        if mode == "reward-scaling":
            val += env.log_reward_correction(dag.graphs[s],
                                             int(dag.aut_order[s]))
        t[s] = val
    return t


# -- loss functions with analytic gradients ------------------------------

def _log_softmax_all(dag, logits):
    src = edge_src(dag)
    m = np.full(dag.n_states, -np.inf)
    np.maximum.at(m, src, logits)
    ex = np.exp(logits - m[src])
    denom = np.zeros(dag.n_states)
    np.add.at(denom, src, ex)
    denom[denom == 0] = 1.0  # states without outgoing edges; never indexed
    return logits - (m + np.log(denom))[src], ex / denom[src]


def tb_loss(dag: StateDag, logits, log_z, traj: Trajectory, mode,
            beta=1.0, with_grad=True):
    """Squared trajectory-balance log-ratio for one trajectory; returns
    (loss, grad wrt logits, grad wrt log_z)."""
    k = edge_step_constants(dag, mode)
    tterm = terminal_log_target(dag, mode, beta)
    lp, probs = _log_softmax_all(dag, logits)
    e = np.asarray(traj.edges)
    delta = log_z + float(np.sum(lp[e] + k[e])) - tterm[traj.states[-1]]
    loss = delta * delta
    if not with_grad:
        return loss, None, None
    grad = np.zeros_like(logits)
    np.add.at(grad, e, 2 * delta)
    for s in traj.states[:-1]:
        lo, hi = dag.indptr[s], dag.indptr[s + 1]
        grad[lo:hi] -= 2 * delta * probs[lo:hi]
    return loss, grad, 2 * delta


def db_loss(dag: StateDag, logits, flows, edge, mode, beta=1.0,
            with_grad=True):
    """Squared detailed-balance log-ratio for one transition (an edge of
    the DAG); returns (loss, grad wrt logits, grad wrt flows)."""
    k = edge_step_constants(dag, mode)
    tterm = terminal_log_target(dag, mode, beta)
    lp, probs = _log_softmax_all(dag, logits)
    s = int(edge_src(dag)[edge])
    t = int(dag.edge_dst[edge])
    right = tterm[t] if dag.terminal[t] else flows[t]
    delta = flows[s] + lp[edge] + k[edge] - right
    loss = delta * delta
    if not with_grad:
        return loss, None, None
    grad_l = np.zeros_like(logits)
    grad_l[edge] += 2 * delta
    lo, hi = dag.indptr[s], dag.indptr[s + 1]
    grad_l[lo:hi] -= 2 * delta * probs[lo:hi]
    grad_f = np.zeros_like(flows)
    grad_f[s] += 2 * delta
    if not dag.terminal[t]:
        grad_f[t] -= 2 * delta
    return loss, grad_l, grad_f


def in_edges(dag: StateDag):
    """Reverse adjacency: incoming edge ids per state (cached)."""
    if getattr(dag, "_in_edges", None) is None:
        order = np.argsort(dag.edge_dst, kind="stable")
        dsts = dag.edge_dst[order]
        bounds = np.searchsorted(dsts, np.arange(dag.n_states + 1))
        dag._in_edges = (order, bounds)
    return dag._in_edges


def fm_loss(dag: StateDag, log_edge_flow, state, mode, beta=1.0,
            with_grad=True):
    """Squared log inflow/outflow mismatch at one state, with the sums
    a per-graph implementation produces: each incoming transition class
    is counted once per concrete parent (backward multiplicity) and
    each outgoing one once per concrete action (forward multiplicity).

    Mode vanilla keeps the raw terminal reward and therefore matches
    the flow network over concrete labeled graphs; mode reward-scaling
    multiplies the terminal reward by the automorphism order, which
    makes the induced policy sample classes proportionally to the raw
    reward.  Other modes (and fragment assembly) are not supported."""
    if mode not in ("vanilla", "reward-scaling"):
        raise UnsupportedModeError(f"FM does not support mode {mode!r}")
    if dag.edge_frag_aut.max(initial=1) > 1:
        raise UnsupportedModeError("FM requires node-by-node generation")
    s = int(state)
    if s == dag.initial_id:
        raise ValueError("flow matching is not defined at the source")
    order, bounds = in_edges(dag)
    ein = order[bounds[s]:bounds[s + 1]]
    win = log_edge_flow[ein] + np.log(dag.edge_bwd_mult[ein])
    m = win.max()
    log_in = m + math.log(np.exp(win - m).sum())
    if dag.terminal[s]:
        log_out = beta * math.log(dag.reward[s])
        if mode == "reward-scaling":
            log_out += math.log(dag.aut_order[s])
        eout = np.arange(0)
    else:
        eout = np.arange(dag.indptr[s], dag.indptr[s + 1])
        wout = log_edge_flow[eout] + np.log(dag.edge_mult[eout])
        m2 = wout.max()
        log_out = m2 + math.log(np.exp(wout - m2).sum())
    delta = log_in - log_out
    loss = delta * delta
    if not with_grad:
        return loss, None
    grad = np.zeros_like(log_edge_flow)
    sm_in = np.exp(win - win.max())
    sm_in /= sm_in.sum()
    grad[ein] += 2 * delta * sm_in
    if eout.size:
        wout = log_edge_flow[eout] + np.log(dag.edge_mult[eout])
        sm_out = np.exp(wout - wout.max())
        sm_out /= sm_out.sum()
        grad[eout] -= 2 * delta * sm_out
    return loss, grad


# -- optimizer -----------------------------------------------------------

class Adam:
    """Moment-based adaptive optimizer with sparse updates: only the
    touched indices pay for moment maintenance."""

    def __init__(self, shape, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr = lr
        self.b1, self.b2, self.eps = b1, b2, eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def tick(self):
        self.t += 1

    def update(self, params, grad, idx=None):
        b1, b2 = self.b1, self.b2
        corr = math.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        if idx is None:
            self.m = b1 * self.m + (1 - b1) * grad
            self.v = b2 * self.v + (1 - b2) * grad * grad
            params -= self.lr * corr * self.m / (np.sqrt(self.v) + self.eps)
        else:
            g = grad[idx]
            self.m[idx] = b1 * self.m[idx] + (1 - b1) * g
            self.v[idx] = b2 * self.v[idx] + (1 - b2) * g * g
            params[idx] -= (self.lr * corr * self.m[idx]
                            / (np.sqrt(self.v[idx]) + self.eps))


class AdamScalar:
    def __init__(self, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = self.v = 0.0
        self.t = 0

    def update(self, value, grad):
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        corr = math.sqrt(1 - self.b2 ** self.t) / (1 - self.b1 ** self.t)
        return value - self.lr * corr * self.m / (math.sqrt(self.v) + self.eps)


# -- trainer -------------------------------------------------------------

class Trainer:
    """Sample -> loss -> adaptive update loop over the tabular policy.

    objective: "tb" | "db" | "fm"; mode: one of MODES.  Default batch
    sizes follow the experimental protocol (32 on-policy rollouts per
    update, 64 trajectories total for TB, 256 transitions for DB) scaled
    through the constructor arguments.
    """

    def __init__(self, dag: StateDag, objective="tb", mode="vanilla",
                 epsilon=0.1, seed=0, batch_new=32, batch_size=64,
                 transition_batch=256, buffer_size=10_000,
                 lr_logits=0.01, lr_scalar=0.05, beta=1.0):
        if mode not in MODES:
            raise UnsupportedModeError(f"unknown mode {mode!r}")
        self.dag = dag
        self.objective = objective
        self.mode = mode
        self.beta = beta
        self.rng = np.random.default_rng(seed)
        self.policy = PolicyTable(dag, epsilon=epsilon)
        self.k = edge_step_constants(dag, mode)
        self.tterm = terminal_log_target(dag, mode, beta)
        self.batch_new = batch_new
        self.batch_size = batch_size
        self.transition_batch = transition_batch
        self.buffer = deque(maxlen=buffer_size)
        self.opt_logits = Adam(dag.n_edges, lr_logits)
        self.opt_z = AdamScalar(lr_scalar)
        self.step_count = 0
        self.last_loss = 0.0
        if objective == "db":
            self.flows = np.zeros(dag.n_states)
            self.opt_flows = Adam(dag.n_states, lr_scalar)
        elif objective == "fm":
            if mode not in ("vanilla", "reward-scaling"):
                raise UnsupportedModeError(
                    f"FM does not support mode {mode!r}")
            if dag.edge_frag_aut.max(initial=1) > 1:
                raise UnsupportedModeError(
                    "FM requires node-by-node generation")
            self.phi = np.zeros(dag.n_edges)  # log edge flows
            self.opt_phi = Adam(dag.n_edges, lr_scalar)
            self._sync_fm_policy()
        elif objective != "tb":
            raise ValueError(f"unknown objective {objective!r}")
        self._probs_cache = {}

    # -- helpers ---------------------------------------------------------

    def _state_probs(self, s):
        p = self._probs_cache.get(s)
        if p is None:
            p = self.policy.state_probs(s)
            self._probs_cache[s] = p
        return p

    def _invalidate(self, states):
        self.policy.invalidate(states)
        for s in states:
            self._probs_cache.pop(int(s), None)

    def _sample_batch(self, n):
        return [sample_trajectory(self.policy, self.rng) for _ in range(n)]

    def _sync_fm_policy(self):
        """FM: the sampling policy is induced by the edge flows; a
        transition class receives its concrete-action total m * flow."""
        self.policy.logits = self.phi + np.log(self.dag.edge_mult)
        self.policy.invalidate_all()
        self._probs_cache = {}

    # -- one update ------------------------------------------------------

    def step(self):
        self.step_count += 1
        if self.objective == "tb":
            self._step_tb()
        elif self.objective == "db":
            self._step_db()
        else:
            self._step_fm()

    def _step_tb(self):
        dag = self.dag
        new = self._sample_batch(self.batch_new)
        self.buffer.extend(new)
        batch = list(new)
        extra = self.batch_size - len(new)
        if extra > 0 and self.buffer:
            idx = self.rng.integers(0, len(self.buffer), size=extra)
            batch += [self.buffer[int(i)] for i in idx]
        edges = np.concatenate([t.edges for t in batch])
        offsets = np.cumsum([0] + [len(t.edges) for t in batch])
        lp = self.policy.edge_log_probs(edges)
        steps = lp + self.k[edges]
        sums = np.add.reduceat(steps, offsets[:-1])
        terms = np.array([self.tterm[t.states[-1]] for t in batch])
        deltas = self.policy.log_z + sums - terms
        self.last_loss = float(np.mean(deltas ** 2))

        grad = np.zeros(dag.n_edges)
        rep = np.repeat(2 * deltas / len(batch), np.diff(offsets))
        np.add.at(grad, edges, rep)
        coeff = np.zeros(dag.n_states)
        np.add.at(coeff, edge_src(dag)[edges], rep)
        visited = np.unique(edge_src(dag)[edges])
        touched = []
        for s in visited:
            lo, hi = dag.indptr[s], dag.indptr[s + 1]
            grad[lo:hi] -= coeff[s] * self._state_probs(int(s))
            touched.append(np.arange(lo, hi))
        touched = np.concatenate(touched)
        self.opt_logits.tick()
        self.opt_logits.update(self.policy.logits, grad, touched)
        self.policy.log_z = self.opt_z.update(self.policy.log_z,
                                              float(np.sum(2 * deltas))
                                              / len(batch))
        self._invalidate(visited)

    def _step_db(self):
        dag = self.dag
        for t in self._sample_batch(self.batch_new):
            self.buffer.extend(t.edges)
        n = min(self.transition_batch, len(self.buffer))
        idx = self.rng.integers(0, len(self.buffer), size=n)
        edges = np.array([self.buffer[int(i)] for i in idx])
        src = edge_src(dag)[edges]
        dst = dag.edge_dst[edges]
        lp = self.policy.edge_log_probs(edges)
        term = dag.terminal[dst]
        right = np.where(term, self.tterm[dst], self.flows[dst])
        deltas = self.flows[src] + lp + self.k[edges] - right
        self.last_loss = float(np.mean(deltas ** 2))

        grad = np.zeros(dag.n_edges)
        w = 2 * deltas / n
        np.add.at(grad, edges, w)
        coeff = np.zeros(dag.n_states)
        np.add.at(coeff, src, w)
        visited = np.unique(src)
        touched = []
        for s in visited:
            lo, hi = dag.indptr[s], dag.indptr[s + 1]
            grad[lo:hi] -= coeff[s] * self._state_probs(int(s))
            touched.append(np.arange(lo, hi))
        touched = np.concatenate(touched)
        gradf = np.zeros(dag.n_states)
        np.add.at(gradf, src, w)
        np.add.at(gradf, dst[~term], -w[~term])
        ftouched = np.unique(np.concatenate([src, dst[~term]]))
        self.opt_logits.tick()
        self.opt_logits.update(self.policy.logits, grad, touched)
        self.opt_flows.tick()
        self.opt_flows.update(self.flows, gradf, ftouched)
        self._invalidate(visited)

    def _step_fm(self):
        dag = self.dag
        trajs = self._sample_batch(self.batch_new)
        states = np.unique(np.concatenate(
            [np.asarray(t.states[1:]) for t in trajs]))
        total = 0.0
        grad = np.zeros(dag.n_edges)
        for s in states:
            loss, g = fm_loss(dag, self.phi, int(s), self.mode, self.beta)
            total += loss
            grad += g
        self.last_loss = total / len(states)
        grad /= len(states)
        touched = np.flatnonzero(grad)
        self.opt_phi.tick()
        self.opt_phi.update(self.phi, grad, touched)
        self._sync_fm_policy()

    # -- evaluation ------------------------------------------------------

    def log_z_estimate(self):
        if self.objective == "tb":
            return self.policy.log_z
        if self.objective == "db":
            return float(self.flows[self.dag.initial_id])
        lo = self.dag.indptr[self.dag.initial_id]
        hi = self.dag.indptr[self.dag.initial_id + 1]
        w = self.phi[lo:hi] + np.log(self.dag.edge_mult[lo:hi])
        m = w.max()
        return float(m + np.log(np.exp(w - m).sum()))

    def terminating_distribution(self):
        probs = edge_probabilities(self.dag, self.policy.logits)
        return exact_terminating_distribution(self.dag, probs)

    def eval_metrics(self):
        target = target_distribution(self.dag)
        model = self.terminating_distribution()
        return {"l1_error": l1_error(model, target),
                "log_z": self.log_z_estimate(),
                "loss_mean": self.last_loss}

    def train(self, steps, eval_every=1000, on_eval=None):
        metrics = []
        for _ in range(steps):
            self.step()
            if not math.isfinite(self.last_loss):
                raise FloatingPointError(
                    f"loss diverged at step {self.step_count}")
            if eval_every and self.step_count % eval_every == 0:
                row = {"step": self.step_count}
                row.update(self.eval_metrics())
                metrics.append(row)
                if on_eval:
                    on_eval(row)
        return metrics


# -- likelihood estimation -----------------------------------------------

def estimate_likelihood(policy: PolicyTable, x, M, rng, env=None):
    """Unbiased estimate of the terminating probability of terminal
    graph x: backward-sample M trajectories under the uniform backward
    policy and average p_E(tau) / q_E(tau), divided by |Aut(G_n)|.
    Returns (estimate, standard error)."""
    dag = policy.dag
    env = env or dag.env
    if not is_terminated(x):
        raise ValueError("likelihood is defined for terminal graphs")
    key, rep = canonicalize(x)
    sid = dag.key_to_id[key.data]
    aut_x = int(dag.aut_order[sid])
    ratios = np.empty(M)
    for i in range(M):
        g = rep
        s = sid
        log_p = 0.0
        log_q = 0.0
        while s != dag.initial_id:
            bacts = env.backward_actions(g)
            if not bacts:
                raise RuntimeError(f"backward dead end at state {s}")
            a = bacts[int(rng.integers(0, len(bacts)))]
            log_q -= math.log(len(bacts))
            pred = env.apply_backward(g, a)
            pkey, prep = canonicalize(pred)
            ps = dag.key_to_id[pkey.data]
            e = dag.find_edge(ps, s)
            lo = dag.indptr[ps]
            p_cls = policy.state_probs(ps)[e - lo]
            log_p += math.log(p_cls) - math.log(dag.edge_mult[e])
            # fragment actions: q is uniform over backward graph actions,
            # but each undoes frag_aut distinct forward relabelings
            log_q -= math.log(dag.edge_frag_aut[e])
            g, s = prep, ps
        ratios[i] = math.exp(log_p - log_q)
    est = float(ratios.mean() / aut_x)
    se = float(ratios.std(ddof=1) / math.sqrt(M) / aut_x) if M > 1 else 0.0
    return est, se
