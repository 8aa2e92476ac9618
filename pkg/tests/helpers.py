"""Independent brute-force oracles used by the test suite.

These deliberately avoid the package's own canonical-labeling and
automorphism machinery: graphs are permuted and compared through plain
edge-set arithmetic so the oracles cannot share bugs with the code under
test.
"""

from itertools import permutations


from sagfn.graph_core import LabeledGraph


def permute_graph(g, perm):
    """Relabel g by the mapping perm (node i -> perm[i]); independent of
    the package's apply_permutation."""
    labels = [0] * g.n
    for v in range(g.n):
        labels[perm[v]] = g.node_labels[v]
    edges = {}
    for (u, v), lab in g.edges.items():
        a, b = perm[u], perm[v]
        edges[(a, b) if a < b else (b, a)] = lab
    return LabeledGraph(g.n, labels, edges, g.attrs)


def graph_fingerprint(g):
    return (g.n, tuple(g.node_labels), tuple(sorted(g.edges.items())),
            tuple(sorted(g.attrs.items())))


def brute_force_automorphisms(g):
    """All permutations fixing g, by exhaustive scan (n <= 8)."""
    base = graph_fingerprint(g)
    return [p for p in permutations(range(g.n))
            if graph_fingerprint(permute_graph(g, p)) == base]


def brute_force_isomorphic(g1, g2):
    if g1.n != g2.n or sorted(g1.node_labels) != sorted(g2.node_labels):
        return False
    if sorted(g1.edges.values()) != sorted(g2.edges.values()):
        return False
    if sorted(g1.attrs.items()) != sorted(g2.attrs.items()):
        return False
    target = graph_fingerprint(g2)
    return any(graph_fingerprint(permute_graph(g1, p)) == target
               for p in permutations(range(g1.n)))


def brute_force_node_orbits(g):
    """Partition of nodes under the brute-force automorphism group."""
    autos = brute_force_automorphisms(g)
    seen = set()
    orbits = []
    for v in range(g.n):
        if v in seen:
            continue
        orb = {p[v] for p in autos}
        seen |= orb
        orbits.append(frozenset(orb))
    return orbits


def random_graph(rng, n, p=0.4, n_labels=1, n_edge_labels=1):
    labels = tuple(int(rng.integers(0, n_labels)) for _ in range(n))
    edges = {}
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < p:
                edges[(u, v)] = int(rng.integers(0, n_edge_labels))
    return LabeledGraph(n, labels, edges)


def random_walk_state(env, rng, max_steps=30):
    """A random reachable state of env (possibly terminal)."""
    g = env.initial_graph()
    for _ in range(int(rng.integers(0, max_steps))):
        acts = env.forward_actions(g)
        if not acts:
            break
        g = env.apply(g, acts[int(rng.integers(0, len(acts)))])
    return g
