"""Labeled undirected graphs and their symmetries.

Provides the graph value type used everywhere else, plus the symmetry
engine: isomorphism testing, canonical forms (used as state keys),
automorphism groups, orbits and stabilizers.

Canonical labeling uses iterated color refinement (node label, degree,
multiset of neighbor colors) with backtracking over the smallest
non-singleton color class.  Graphs here are small (tens of nodes at
most), so exactness beats asymptotics.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class InvalidPermutationError(ValueError):
    pass


class InvalidTargetError(ValueError):
    pass


# cap on explicitly enumerated automorphisms; envs stay far below this
_AUT_CAP = 2_000_000


@dataclass(frozen=True)
class Permutation:
    """Bijection on 0..n-1, stored as an image tuple."""

    mapping: tuple

    def __post_init__(self):
        m = self.mapping
        if sorted(m) != list(range(len(m))):
            raise InvalidPermutationError(f"not a bijection: {m}")

    def __len__(self):
        return len(self.mapping)

    def __getitem__(self, i):
        return self.mapping[i]

    def compose(self, other: "Permutation") -> "Permutation":
        # (self.compose(other))[i] = self[other[i]]
        return Permutation(tuple(self.mapping[j] for j in other.mapping))

    def inverse(self) -> "Permutation":
        inv = [0] * len(self.mapping)
        for i, j in enumerate(self.mapping):
            inv[j] = i
        return Permutation(tuple(inv))

    @staticmethod
    def identity(n: int) -> "Permutation":
        return Permutation(tuple(range(n)))


class LabeledGraph:
    """Undirected graph with integer node labels, integer edge labels
    and a small dict of graph attributes (e.g. the terminated flag).

    Treated as immutable: mutating helpers return new graphs.
    Node indices are dense 0..n-1; no self loops; each unordered pair
    appears at most once.
    """

    __slots__ = ("n", "node_labels", "edges", "attrs", "_adj", "_hash")

    def __init__(self, n, node_labels=None, edges=(), attrs=None):
        self.n = n
        if node_labels is None:
            node_labels = (0,) * n
        self.node_labels = tuple(node_labels)
        if len(self.node_labels) != n:
            raise ValueError("node_labels length must equal n")
        edict = {}
        for item in edges if not isinstance(edges, dict) else edges.items():
            if isinstance(edges, dict):
                (u, v), lab = item
            else:
                if len(item) == 2:
                    (u, v), lab = item, 0
                else:
                    u, v, lab = item
            if u == v:
                raise ValueError(f"self-loop at {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u},{v}) out of range")
            key = (u, v) if u < v else (v, u)
            if key in edict:
                raise ValueError(f"duplicate edge {key}")
            edict[key] = lab
        self.edges = edict
        self.attrs = dict(attrs) if attrs else {}
        self._adj = None
        self._hash = None

    # -- basic accessors -------------------------------------------------

    @property
    def adj(self):
        """adj[v] = sorted tuple of (neighbor, edge label)."""
        if self._adj is None:
            lists = [[] for _ in range(self.n)]
            for (u, v), lab in self.edges.items():
                lists[u].append((v, lab))
                lists[v].append((u, lab))
            self._adj = tuple(tuple(sorted(l)) for l in lists)
        return self._adj

    def degree(self, v):
        return len(self.adj[v])

    def has_edge(self, u, v):
        return ((u, v) if u < v else (v, u)) in self.edges

    def edge_label(self, u, v):
        return self.edges[(u, v) if u < v else (v, u)]

    def neighbors(self, v):
        return [u for u, _ in self.adj[v]]

    # -- mutating helpers (copy on write) --------------------------------

    def with_edge(self, u, v, label=0):
        e = dict(self.edges)
        key = (u, v) if u < v else (v, u)
        if u == v or key in e:
            raise ValueError(f"cannot add edge {key}")
        e[key] = label
        return LabeledGraph(self.n, self.node_labels, e, self.attrs)

    def without_edge(self, u, v):
        e = dict(self.edges)
        del e[(u, v) if u < v else (v, u)]
        return LabeledGraph(self.n, self.node_labels, e, self.attrs)

    def with_node(self, label=0):
        return LabeledGraph(self.n + 1, self.node_labels + (label,),
                            self.edges, self.attrs)

    def without_node(self, v):
        """Remove v and its incident edges; higher indices shift down."""
        remap = list(range(self.n))
        for i in range(v + 1, self.n):
            remap[i] = i - 1
        e = {}
        for (a, b), lab in self.edges.items():
            if a == v or b == v:
                continue
            a2, b2 = remap[a], remap[b]
            e[(a2, b2) if a2 < b2 else (b2, a2)] = lab
        labels = self.node_labels[:v] + self.node_labels[v + 1:]
        return LabeledGraph(self.n - 1, labels, e, self.attrs)

    def without_nodes(self, vs):
        g = self
        for v in sorted(vs, reverse=True):
            g = g.without_node(v)
        return g

    def with_node_label(self, v, label):
        labels = list(self.node_labels)
        labels[v] = label
        return LabeledGraph(self.n, labels, self.edges, self.attrs)

    def with_edge_label(self, u, v, label):
        e = dict(self.edges)
        key = (u, v) if u < v else (v, u)
        if key not in e:
            raise ValueError(f"no edge {key}")
        e[key] = label
        return LabeledGraph(self.n, self.node_labels, e, self.attrs)

    def with_attrs(self, **kw):
        a = dict(self.attrs)
        a.update(kw)
        return LabeledGraph(self.n, self.node_labels, self.edges, a)

    def without_attr(self, key):
        a = dict(self.attrs)
        del a[key]
        return LabeledGraph(self.n, self.node_labels, self.edges, a)

    def disjoint_union(self, other: "LabeledGraph") -> "LabeledGraph":
        off = self.n
        e = dict(self.edges)
        for (u, v), lab in other.edges.items():
            e[(u + off, v + off)] = lab
        attrs = dict(self.attrs)
        attrs.update(other.attrs)
        return LabeledGraph(self.n + other.n,
                            self.node_labels + other.node_labels, e, attrs)

    # -- connectivity ----------------------------------------------------

    def connected_components(self):
        seen = [False] * self.n
        comps = []
        for s in range(self.n):
            if seen[s]:
                continue
            stack, comp = [s], []
            seen[s] = True
            while stack:
                v = stack.pop()
                comp.append(v)
                for u, _ in self.adj[v]:
                    if not seen[u]:
                        seen[u] = True
                        stack.append(u)
            comps.append(sorted(comp))
        return comps

    def is_connected(self):
        return self.n <= 1 or len(self.connected_components()) == 1

    # -- equality (labeled, not up to isomorphism) -----------------------

    def __eq__(self, other):
        return (isinstance(other, LabeledGraph)
                and self.n == other.n
                and self.node_labels == other.node_labels
                and self.edges == other.edges
                and self.attrs == other.attrs)

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.n, self.node_labels,
                               frozenset(self.edges.items()),
                               frozenset(self.attrs.items())))
        return self._hash

    def __repr__(self):
        return (f"LabeledGraph(n={self.n}, labels={self.node_labels}, "
                f"edges={sorted(self.edges.items())}, attrs={self.attrs})")


@dataclass(frozen=True)
class CanonicalForm:
    """Order-invariant fingerprint of an isomorphism class."""

    data: bytes

    def __bytes__(self):
        return self.data

    def hex(self):
        import hashlib
        return hashlib.sha256(self.data).hexdigest()[:16]


@dataclass
class AutomorphismGroup:
    order: int
    generators: list = field(default_factory=list)
    node_orbit_partition: list = field(default_factory=list)
    pair_orbit_index: dict = field(default_factory=dict)
    elements: list = field(default_factory=list)

    def node_orbit_id(self, v):
        for i, orb in enumerate(self.node_orbit_partition):
            if v in orb:
                return i
        raise InvalidTargetError(f"vertex {v} not in any orbit")


# -- permutation application ---------------------------------------------

def apply_permutation(g: LabeledGraph, p: Permutation) -> LabeledGraph:
    """Return p(g): vertex i of g becomes vertex p[i]."""
    if len(p) != g.n:
        raise InvalidPermutationError(
            f"permutation on {len(p)} points, graph has {g.n} nodes")
    m = p.mapping
    labels = [0] * g.n
    for i, lab in enumerate(g.node_labels):
        labels[m[i]] = lab
    edges = {}
    for (u, v), lab in g.edges.items():
        a, b = m[u], m[v]
        edges[(a, b) if a < b else (b, a)] = lab
    return LabeledGraph(g.n, labels, edges, g.attrs)


# -- color refinement ----------------------------------------------------

def _refine(adj, colors):
    """Iterate (color, neighbor color multiset) refinement to a stable
    partition.  Color ids are assigned by sorted signature, which makes
    the resulting coloring isomorphism-invariant."""
    n = len(colors)
    ncells = len(set(colors))
    while True:
        sigs = [None] * n
        for v in range(n):
            nb = sorted((colors[u], lab) for u, lab in adj[v])
            sigs[v] = (colors[v], tuple(nb))
        order = sorted(set(sigs))
        if len(order) == ncells:
            return colors
        ranks = {s: i for i, s in enumerate(order)}
        colors = [ranks[s] for s in sigs]
        ncells = len(order)


def _partition_cells(colors):
    cells = {}
    for v, c in enumerate(colors):
        cells.setdefault(c, []).append(v)
    return [cells[c] for c in sorted(cells)]


# -- canonical form ------------------------------------------------------

def _code_for_discrete(g, colors):
    """Adjacency code of the relabeling that sends v to colors[v]."""
    m = colors
    labels = [0] * g.n
    for v in range(g.n):
        labels[m[v]] = g.node_labels[v]
    edges = []
    for (u, v), lab in g.edges.items():
        a, b = m[u], m[v]
        edges.append((a, b, lab) if a < b else (b, a, lab))
    edges.sort()
    return (tuple(labels), tuple(edges))


def _canonical_search(g, colors, best):
    """Individualization-refinement; track the minimal discrete code in
    best = [code or None, relabeling colors]."""
    colors = _refine(g.adj, colors)
    n = g.n
    if len(set(colors)) == n:
        rank = {c: i for i, c in enumerate(sorted(colors))}
        colors = [rank[c] for c in colors]
        code = _code_for_discrete(g, colors)
        if best[0] is None or code < best[0]:
            best[0] = code
            best[1] = colors
        return
    # smallest non-singleton cell, lowest color first
    cells = _partition_cells(colors)
    target = None
    for cell in cells:
        if len(cell) > 1 and (target is None or len(cell) < len(target)):
            target = cell
    for v in target:
        child = [2 * c for c in colors]
        child[v] = 2 * colors[v] - 1
        _canonical_search(g, child, best)


def canonical_form(g: LabeledGraph) -> CanonicalForm:
    """Byte string identical for all graphs isomorphic to g and distinct
    for non-isomorphic ones.  Graph attributes are appended verbatim
    (they are not permuted, but they do distinguish states)."""
    code = _canonical_code(g)
    attrs = tuple(sorted(g.attrs.items()))
    return CanonicalForm(repr((g.n, code, attrs)).encode())


def _canonical_code(g):
    best = [None, None]
    _canonical_search(g, list(g.node_labels), best)
    if best[0] is None:  # n == 0
        return ((), ())
    return best[0]


def canonical_relabeling(g: LabeledGraph) -> Permutation:
    """Permutation p with apply_permutation(g, p) in canonical layout."""
    best = [None, None]
    _canonical_search(g, list(g.node_labels), best)
    if best[1] is None:
        return Permutation(())
    return Permutation(tuple(best[1]))


def canonicalize(g: LabeledGraph):
    """Return (canonical form, canonically relabeled graph)."""
    best = [None, None]
    _canonical_search(g, list(g.node_labels), best)
    if best[0] is None:
        code = ((), ())
        rep = g
    else:
        code = best[0]
        rep = apply_permutation(g, Permutation(tuple(best[1])))
    attrs = tuple(sorted(g.attrs.items()))
    return CanonicalForm(repr((g.n, code, attrs)).encode()), rep


# -- isomorphism ---------------------------------------------------------

def are_isomorphic(g1: LabeledGraph, g2: LabeledGraph, witness=False):
    """Isomorphism test; with witness=True also return a Permutation p
    such that apply_permutation(g1, p) == g2, or None."""
    ok = (g1.n == g2.n
          and sorted(g1.node_labels) == sorted(g2.node_labels)
          and sorted(g1.edges.values()) == sorted(g2.edges.values())
          and g1.attrs == g2.attrs
          and _canonical_code(g1) == _canonical_code(g2))
    if not witness:
        return ok
    if not ok:
        return False, None
    p1 = canonical_relabeling(g1)
    p2 = canonical_relabeling(g2)
    return True, p2.inverse().compose(p1)


# -- automorphisms -------------------------------------------------------

def _automorphisms(g: LabeledGraph):
    """All automorphisms of g as image tuples, by backtracking inside the
    refined color partition with incremental adjacency checks."""
    n = g.n
    if n == 0:
        return [()]
    adj = g.adj
    colors = _refine(adj, list(g.node_labels))
    # process vertices grouped by cell; small cells first limits branching
    cells = sorted(_partition_cells(colors), key=len)
    order = [v for cell in cells for v in cell]
    adjmap = [dict(a) for a in adj]  # v -> {u: label}
    image = [-1] * n
    used = [False] * n
    out = []

    def extend(k):
        if k == n:
            out.append(tuple(image))
            if len(out) > _AUT_CAP:
                raise RuntimeError("automorphism cap exceeded")
            return
        v = order[k]
        av = adjmap[v]
        for w in range(n):
            if used[w] or colors[w] != colors[v]:
                continue
            ok = True
            for t in order[:k]:
                lab = av.get(t)
                if lab != adjmap[w].get(image[t]):
                    ok = False
                    break
            if ok:
                image[v] = w
                used[w] = True
                extend(k + 1)
                used[w] = False
        image[v] = -1

    extend(0)
    return out


def automorphism_group(g: LabeledGraph) -> AutomorphismGroup:
    elems = _automorphisms(g)
    order = len(elems)
    # node orbits
    parent = list(range(g.n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for p in elems:
        for v in range(g.n):
            a, b = find(v), find(p[v])
            if a != b:
                parent[a] = b
    groups = {}
    for v in range(g.n):
        groups.setdefault(find(v), []).append(v)
    node_orbits = sorted(groups.values())
    # pair orbits over all unordered pairs, edges and non-edges alike
    pair_orbit = {}
    next_id = 0
    for u in range(g.n):
        for v in range(u + 1, g.n):
            if (u, v) in pair_orbit:
                continue
            for p in elems:
                a, b = p[u], p[v]
                key = (a, b) if a < b else (b, a)
                if key not in pair_orbit:
                    pair_orbit[key] = next_id
            next_id += 1
    gens = [Permutation(p) for p in elems if p != tuple(range(g.n))]
    return AutomorphismGroup(order=order, generators=gens,
                             node_orbit_partition=node_orbits,
                             pair_orbit_index=pair_orbit,
                             elements=[Permutation(p) for p in elems])


def automorphism_order(g: LabeledGraph) -> int:
    return len(_automorphisms(g))


def stabilizer_order(g: LabeledGraph, target) -> int:
    """Order of the subgroup fixing a vertex, an unordered pair, or a
    vertex set (setwise)."""
    if isinstance(target, int):
        if not (0 <= target < g.n):
            raise InvalidTargetError(f"vertex {target} out of range")
        return sum(1 for p in _automorphisms(g) if p[target] == target)
    target = list(target)
    if any(not (0 <= v < g.n) for v in target):
        raise InvalidTargetError(f"target {target} out of range")
    if len(target) == 2 and not isinstance(target, frozenset):
        u, v = target
        return sum(1 for p in _automorphisms(g)
                   if {p[u], p[v]} == {u, v})
    ts = frozenset(target)
    return sum(1 for p in _automorphisms(g)
               if frozenset(p[v] for v in ts) == ts)


def subgraph_orbit_size(g: LabeledGraph, vertex_set) -> int:
    vs = frozenset(vertex_set)
    if any(not (0 <= v < g.n) for v in vs):
        raise InvalidTargetError(f"vertex set {sorted(vs)} out of range")
    images = {frozenset(p[v] for v in vs) for p in _automorphisms(g)}
    return len(images)


# -- text format ---------------------------------------------------------

def graph_to_json_dict(g: LabeledGraph) -> dict:
    return {"n": g.n,
            "node_labels": list(g.node_labels),
            "edges": [[u, v, lab] for (u, v), lab in sorted(g.edges.items())],
            "attrs": dict(g.attrs)}


def graph_from_json_dict(d: dict) -> LabeledGraph:
    return LabeledGraph(d["n"], d.get("node_labels"),
                        [tuple(e) for e in d.get("edges", [])],
                        d.get("attrs"))
