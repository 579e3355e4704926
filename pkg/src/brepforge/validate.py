"""Topological validity (C1-C3 plus vertex manifoldness), hashing and metrics."""

import hashlib
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .core import derive_face_edges
from .errors import EmptySet, InvalidTopology


@dataclass
class ValidityReport:
    c1_ok: bool = True
    c2_ok: bool = True
    c3_ok: bool = True
    manifold_ok: bool = True
    violations: list = field(default_factory=list)

    @property
    def valid(self):
        return self.c1_ok and self.c2_ok and self.c3_ok and self.manifold_ok

    def to_dict(self):
        return {
            "valid": self.valid,
            "c1_ok": self.c1_ok,
            "c2_ok": self.c2_ok,
            "c3_ok": self.c3_ok,
            "manifold_ok": self.manifold_ok,
            "violations": [{"constraint": c, "ids": list(ids)} for c, ids in self.violations],
        }


def validate(t):
    """Check C1 (two distinct faces per edge), C2 (two distinct vertices per
    edge), C3 (every face's edges decompose into closed loops) and that every
    vertex has a single connected fan of faces around it.

    Accepts topologies built with ``unchecked=True``.
    """
    rep = ValidityReport()
    for e, (a, b) in enumerate(t.ef):
        if a == b:
            rep.c1_ok = False
            rep.violations.append(("C1", (e,)))
    for e, (u, v) in enumerate(t.ev):
        if u == v:
            rep.c2_ok = False
            rep.violations.append(("C2", (e,)))

    # C3: inside each face every vertex meets exactly two edge ends
    fe = derive_face_edges(t)
    for f, edges in enumerate(fe):
        if not edges:
            rep.c3_ok = False
            rep.violations.append(("C3", (f,)))
            continue
        deg = Counter(v for e in edges for v in t.ev[e])
        bad = sorted(v for v, d in deg.items() if d != 2)
        if bad:
            rep.c3_ok = False
            rep.violations.append(("C3", (f, *bad)))

    if rep.c1_ok and rep.c2_ok and rep.c3_ok:
        for v in _nonmanifold_vertices(t, fe):
            rep.manifold_ok = False
            rep.violations.append(("manifold", (v,)))
    return rep


def _nonmanifold_vertices(t, fe):
    # link of v: incident edges, joined when consecutive around v inside a face
    links = defaultdict(lambda: defaultdict(set))
    for f, edges in enumerate(fe):
        at = defaultdict(list)
        for e in edges:
            for v in t.ev[e]:
                at[v].append(e)
        for v, es in at.items():
            a, b = es
            links[v][a].add(b)
            links[v][b].add(a)
    bad = []
    for v, adj in sorted(links.items()):
        start = next(iter(adj))
        seen = {start}
        stack = [start]
        while stack:
            for w in adj[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        if len(seen) != len(adj):
            bad.append(v)
    return bad


def is_valid(t):
    return validate(t).valid


# ---------------------------------------------------------------- hashing


def incidence_graph(t):
    """Typed bipartite incidence graph: nodes ('f', i), ('e', j), ('v', k)."""
    adj = defaultdict(list)
    for j, ((a, b), (u, v)) in enumerate(zip(t.ef, t.ev)):
        e = ("e", j)
        for n in (("f", a), ("f", b), ("v", u), ("v", v)):
            adj[e].append(n)
            adj[n].append(e)
    return dict(adj)


def _digest(obj):
    return int.from_bytes(hashlib.blake2b(repr(obj).encode(), digest_size=8).digest(), "big")


@dataclass(frozen=True)
class TopoHash:
    digest: int
    rounds: int


def _loop_relations(t):
    """Face loop lengths and edge pairs that follow each other in a loop.

    Both are functions of the incidence structure, so adding them to the
    refinement keeps the hash a relabelling invariant while separating
    shapes plain colour refinement confuses (an 8-sided prism and a box with
    a square hole have identical 1-WL colourings). Returns empty data when
    some face does not split into closed loops.
    """
    fe = derive_face_edges(t)
    lengths, follows = {}, []
    for f, edges in enumerate(fe):
        rest = set(edges)
        sizes = []
        while rest:
            e0 = min(rest)
            rest.discard(e0)
            start, cur = t.ev[e0]
            loop = [e0]
            while cur != start:
                nxt = [e for e in rest if cur in t.ev[e]]
                if len(nxt) != 1:
                    return {}, []
                e = nxt[0]
                rest.discard(e)
                loop.append(e)
                cur = t.ev[e][1] if t.ev[e][0] == cur else t.ev[e][0]
            sizes.append(len(loop))
            follows.extend(zip(loop, loop[1:] + loop[:1]))
        lengths[f] = tuple(sorted(sizes))
    return lengths, follows


_KIND = {"f": 0, "e": 1, "v": 2}


def _refine(colors, adj):
    """Colour refinement to the coarsest stable partition.

    Colours are built with the builtin tuple hash, which is deterministic
    for integers, so equal structures get equal colours across calls.
    """
    k = len(set(colors.values()))
    rounds = 0
    while True:
        rounds += 1
        colors = {n: hash((c, tuple(sorted((r, colors[m]) for r, m in adj[n])))) for n, c in colors.items()}
        k2 = len(set(colors.values()))
        if k2 == k:
            return colors, rounds
        k = k2


def _certificate(colors, adj):
    order = sorted(colors, key=colors.get)
    rank = {n: i for i, n in enumerate(order)}
    kinds = tuple(_KIND[n[0]] for n in order)
    links = tuple(sorted((rank[n], r, rank[m]) for n in order for r, m in adj[n]))
    return (kinds, links), order


class _Canon:
    """Individualization-refinement search for the smallest certificate.

    Two leaves with the same certificate give an automorphism; at each tree
    node, members of the target cell that lie in one orbit of the known
    automorphisms fixing the current path lead to identical subtrees, so
    only one of them is expanded.
    """

    def __init__(self, adj):
        self.adj = adj
        self.best = None
        self.leaves = {}
        self.autos = []

    def _orbit_reps(self, members, path):
        fixing = [g for g in self.autos if all(g[v] == v for v in path)]
        if not fixing:
            return members
        parent = {n: n for n in members}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for g in fixing:
            for n in members:
                m = g[n]
                if m in parent:
                    parent[find(m)] = find(n)
        seen, reps = set(), []
        for n in members:
            r = find(n)
            if r not in seen:
                seen.add(r)
                reps.append(n)
        return reps

    def search(self, colors, path=()):
        colors, _ = _refine(colors, self.adj)
        cells = defaultdict(list)
        for n, c in colors.items():
            cells[c].append(n)
        open_cells = [(len(ns), c) for c, ns in cells.items() if len(ns) > 1]
        if not open_cells:
            cert, order = _certificate(colors, self.adj)
            if cert in self.leaves:
                first = self.leaves[cert]
                self.autos.append(dict(zip(first, order)))
            else:
                self.leaves[cert] = order
            if self.best is None or cert < self.best:
                self.best = cert
            return
        _, c = min(open_cells)
        members = sorted(cells[c])
        done = []
        for n in members:
            # recompute orbits each time: the previous branch may have found automorphisms
            if done and n not in self._orbit_reps(done + [n], path)[len(done):]:
                continue
            trial = dict(colors)
            trial[n] = hash((c, -1))
            self.search(trial, path + (n,))
            done.append(n)


def topology_hash(t, check=True):
    """Canonical-form hash of the typed incidence graph.

    Faces start coloured by their loop lengths and consecutive edges of a
    loop are linked as a second relation. Colour refinement runs first;
    when it leaves cells with several members, each member of the smallest
    such cell is individualized in turn and the lexicographically smallest
    resulting labelled graph is digested. Isomorphic topologies therefore
    share a hash and non-isomorphic ones differ up to digest collisions.
    """
    if check and not is_valid(t):
        raise InvalidTopology("cannot hash an invalid topology")
    adj = {n: [(0, m) for m in ms] for n, ms in incidence_graph(t).items()}
    lengths, follows = _loop_relations(t)
    for a, b in follows:
        adj[("e", a)].append((1, ("e", b)))
        adj[("e", b)].append((1, ("e", a)))
    colors = {n: hash((_KIND[n[0]], lengths.get(n[1], ()) if n[0] == "f" else ())) for n in adj}
    _, rounds = _refine(colors, adj)
    canon = _Canon(adj)
    canon.search(colors)
    return TopoHash(_digest(canon.best), rounds)


def are_isomorphic(t1, t2):
    """Exact isomorphism test by backtracking over the typed incidence graphs.

    Independent of :func:`topology_hash`; used as the brute-force oracle.
    """
    if t1.counts != t2.counts:
        return False
    g1, g2 = incidence_graph(t1), incidence_graph(t2)
    if sorted((n[0], len(a)) for n, a in g1.items()) != sorted((n[0], len(a)) for n, a in g2.items()):
        return False
    nbr1 = {n: set(a) for n, a in g1.items()}
    nbr2 = {n: set(a) for n, a in g2.items()}

    # BFS order so each node after the first has a mapped neighbour
    order = []
    seen = set()
    for root in sorted(g1):
        if root in seen:
            continue
        seen.add(root)
        queue = [root]
        while queue:
            n = queue.pop(0)
            order.append(n)
            for m in sorted(nbr1[n]):
                if m not in seen:
                    seen.add(m)
                    queue.append(m)

    mapping, used = {}, set()

    def candidates(n):
        mapped_nbrs = [mapping[m] for m in nbr1[n] if m in mapping]
        if mapped_nbrs:
            pool = set.intersection(*(nbr2[m] for m in mapped_nbrs))
        else:
            pool = set(g2)
        return sorted(
            c for c in pool if c[0] == n[0] and c not in used and len(nbr2[c]) == len(nbr1[n])
        )

    def consistent(n, c):
        for m in nbr1[n]:
            if m in mapping and mapping[m] not in nbr2[c]:
                return False
        mapped_count = sum(1 for m in nbr1[n] if m in mapping)
        return mapped_count == sum(1 for m in nbr2[c] if m in used)

    def search(i):
        if i == len(order):
            return True
        n = order[i]
        for c in candidates(n):
            if consistent(n, c):
                mapping[n] = c
                used.add(c)
                if search(i + 1):
                    return True
                del mapping[n]
                used.discard(c)
        return False

    return search(0)


def novelty_metrics(generated, training):
    """Percentages of generated topologies that are novel, unique and valid."""
    generated = list(generated)
    if not generated:
        raise EmptySet("no generated topologies")
    gen_h = [topology_hash(t, check=False).digest for t in generated]
    train_h = {topology_hash(t, check=False).digest for t in training}
    counts = Counter(gen_h)
    n = len(generated)
    return {
        "novel_pct": 100.0 * sum(h not in train_h for h in gen_h) / n,
        "unique_pct": 100.0 * sum(counts[h] == 1 for h in gen_h) / n,
        "valid_pct": 100.0 * sum(is_valid(t) for t in generated) / n,
    }
