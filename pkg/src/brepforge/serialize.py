"""Canonical IDs and conversion between topologies and token sequences.

Two sequences describe a topology:

* the EF sequence, the row-major upper triangle of the face-edge-face matrix
  zero-padded to ``m_f`` faces, and
* the EV sequence, which walks each face's loops and emits one endpoint
  token per edge visit. Edge ``j`` owns endpoint tokens ``2j`` (at
  ``ev[j][0]``) and ``2j + 1`` (at ``ev[j][1]``). ``LOOP_END`` closes a loop
  and ``FACE_END`` closes a face.
"""

import numpy as np

from .core import M_E, Topology, build_topology, derive_face_edges, derive_fef, ef_from_fef
from .errors import (
    EdgeReuse,
    EmptyTopology,
    FaceMismatch,
    LoopViolation,
    MalformedLength,
    OpenLoop,
    SelfUnion,
    SharedEdgeOverflow,
    TooManyFaces,
)

LOOP_END = -1
FACE_END = -2


def opposite(ep):
    return ep ^ 1


def seq_length(m_f):
    return m_f * (m_f - 1) // 2


# ---------------------------------------------------------------- canonical IDs


def _tie_keys(n, tie_break):
    if tie_break is None or tie_break == "deterministic":
        return list(range(n))
    rng = np.random.default_rng(tie_break)
    return list(rng.permutation(n))


def canonical_relabeling(t, tie_break="deterministic"):
    """Old-to-new ID maps ``(faces, edges, verts)`` for :func:`canonicalize`."""
    nf, ne, nv = t.counts
    fe = derive_face_edges(t)
    fkeys = _tie_keys(nf, tie_break)
    face_order = sorted(range(nf), key=lambda f: (len(fe[f]), fkeys[f]))
    face_new = [0] * nf
    for new, old in enumerate(face_order):
        face_new[old] = new

    seeded = isinstance(tie_break, (int, np.integer)) and not isinstance(tie_break, bool)
    ekeys = _tie_keys(ne, int(tie_break) + 1 if seeded else "deterministic")

    def edge_key(e):
        a, b = t.ef[e]
        return (*sorted((face_new[a], face_new[b])), ekeys[e])

    edge_order = sorted(range(ne), key=edge_key)
    edge_new = [0] * ne
    for new, old in enumerate(edge_order):
        edge_new[old] = new
    ef = [tuple(sorted((face_new[t.ef[e][0]], face_new[t.ef[e][1]]))) for e in edge_order]
    ev = [t.ev[e] for e in edge_order]

    fe_new = [[] for _ in range(nf)]
    for e, (a, b) in enumerate(ef):
        fe_new[a].append(e)
        fe_new[b].append(e)
    vert_new = {}
    for tok in _serialize_loops(fe_new, ev):
        if tok < 0:
            continue
        for ep in (tok, opposite(tok)):
            vert_new.setdefault(ev[tok // 2][ep & 1], len(vert_new))
    for v in range(nv):
        vert_new.setdefault(v, len(vert_new))
    return face_new, edge_new, [vert_new[v] for v in range(nv)]


def canonicalize(t, tie_break="deterministic"):
    """Relabel faces, edges and vertices into the canonical serialization order.

    Faces are sorted by ascending edge count, edges by their sorted pair of
    (new) face IDs, vertices by first appearance in the EV traversal. Ties
    keep the original index unless ``tie_break`` is an integer seed, in
    which case tied items are shuffled reproducibly.
    """
    fmap, emap, vmap = canonical_relabeling(t, tie_break)
    r = t.relabel(fmap, emap, vmap)
    return Topology(tuple(tuple(sorted(p)) for p in r.ef), r.ev)


def face_loops(t):
    """Per face, its loops as lists of ``(edge, forward)`` in walk order.

    ``forward`` is True when the walk runs from ``ev[e][0]`` to ``ev[e][1]``.
    """
    out = [[] for _ in range(t.num_faces)]
    f, loop = 0, []
    for tok in ev_to_sequence(t):
        if tok == FACE_END:
            f += 1
        elif tok == LOOP_END:
            out[f].append(loop)
            loop = []
        else:
            loop.append((tok // 2, tok % 2 == 0))
    return out


# ---------------------------------------------------------------- EF sequence


def ef_to_sequence(fef, m_f):
    """Row-major upper triangle of ``fef`` padded to ``m_f`` x ``m_f``."""
    fef = np.asarray(fef, dtype=np.int64)
    n = fef.shape[0]
    if n > m_f:
        raise TooManyFaces(f"{n} faces exceed m_f={m_f}")
    if fef.size and fef.max() > M_E:
        raise SharedEdgeOverflow(f"shared-edge count {fef.max()} exceeds M_e={M_E}")
    padded = np.zeros((m_f, m_f), dtype=np.int64)
    padded[:n, :n] = fef
    iu = np.triu_indices(m_f, k=1)
    return padded[iu].tolist()


def sequence_to_fef(seq, m_f=None):
    """Inverse of :func:`ef_to_sequence`, trimming trailing unused faces."""
    seq = np.asarray(seq, dtype=np.int64)
    if m_f is None:
        m_f = int(round((1 + np.sqrt(1 + 8 * len(seq))) / 2))
    if len(seq) != seq_length(m_f):
        raise MalformedLength(f"length {len(seq)} is not m_f(m_f-1)/2 for m_f={m_f}")
    full = np.zeros((m_f, m_f), dtype=np.int64)
    full[np.triu_indices(m_f, k=1)] = seq
    full = full + full.T
    used = np.flatnonzero(full.sum(axis=1) > 0)
    if used.size == 0:
        raise EmptyTopology("sequence has no shared edges")
    n = int(used[-1]) + 1
    return full[:n, :n]


# ---------------------------------------------------------------- EV sequence


def _serialize_loops(face_edges, ev):
    """Walk every face's loops; ``face_edges[f]`` lists the face's edge IDs."""
    seq = []
    for f, edges in enumerate(face_edges):
        rest = set(edges)
        while rest:
            e_start = min(rest)
            rest.discard(e_start)
            seq.append(2 * e_start)
            v_start = ev[e_start][0]
            v_cur = ev[e_start][1]
            while True:
                cands = [e for e in rest if v_cur in ev[e]]
                if not cands:
                    if v_cur != v_start:
                        raise OpenLoop(f"face {f}: loop from edge {e_start} does not close")
                    seq.append(LOOP_END)
                    break
                e_next = min(cands)
                ep = 2 * e_next if ev[e_next][0] == v_cur else 2 * e_next + 1
                seq.append(ep)
                rest.discard(e_next)
                v_cur = ev[e_next][1 - (ep & 1)]
        seq.append(FACE_END)
    return seq


def ev_to_sequence(t):
    """Serialize a canonical, valid topology into its EV token sequence."""
    return _serialize_loops(derive_face_edges(t), t.ev)


class _Dsu:
    """Union-find over edge endpoints.

    Each root carries the set of edges that have an endpoint in the class and
    a per-face count of edge ends incident to the class. Once every edge is
    placed the count is exactly the vertex degree inside that face; before
    that it is a lower bound.
    """

    def __init__(self, n_endpoints):
        self.parent = list(range(n_endpoints))
        self.edges = [{i // 2} for i in range(n_endpoints)]
        self.deg = [{} for _ in range(n_endpoints)]

    def find(self, a):
        parent = self.parent
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if len(self.edges[ra]) < len(self.edges[rb]):
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.edges[ra] |= self.edges[rb]
        for f, c in self.deg[rb].items():
            self.deg[ra][f] = self.deg[ra].get(f, 0) + c
        self.edges[rb] = set()
        self.deg[rb] = {}
        return ra


class EvDecoder:
    """Incremental reconstruction of vertices from an EV token stream.

    ``push`` applies one token and raises a :class:`DecodeError` subclass as
    soon as the prefix can no longer belong to a valid closed topology.
    """

    def __init__(self, fef):
        self.fef = np.asarray(fef, dtype=np.int64)
        self.ef = ef_from_fef(self.fef)
        self.num_faces = self.fef.shape[0]
        self.num_edges = len(self.ef)
        self.face_edges = [[] for _ in range(self.num_faces)]
        for e, (a, b) in enumerate(self.ef):
            self.face_edges[a].append(e)
            self.face_edges[b].append(e)
        self.face_edge_sets = [set(x) for x in self.face_edges]
        self.dsu = _Dsu(2 * self.num_edges)
        self.usage = [0] * self.num_edges
        self.face = 0
        self.placed = set()
        self.loop = []
        self.tokens = []

    @property
    def done(self):
        return self.face >= self.num_faces

    def _check_root(self, r, pos):
        for f, c in self.dsu.deg[r].items():
            if c > 2:
                raise LoopViolation(f"vertex gains {c} edges in face {f}", pos)

    def _join(self, a, b, pos):
        dsu = self.dsu
        ra, rb = dsu.find(a), dsu.find(b)
        if ra == rb:
            return
        shared = dsu.edges[ra] & dsu.edges[rb]
        if shared:
            raise SelfUnion(f"edge {min(shared)} would connect to itself", pos)
        self._check_root(dsu.union(ra, rb), pos)

    def push(self, tok):
        pos = len(self.tokens)
        if self.done:
            raise FaceMismatch("token after the last face", pos)
        f = self.face
        if tok == FACE_END:
            if self.loop:
                raise FaceMismatch(f"face {f} ends inside an open loop", pos)
            missing = self.face_edge_sets[f] - self.placed
            if missing:
                raise FaceMismatch(f"face {f} ends with edges {sorted(missing)} unplaced", pos)
            self.face += 1
            self.placed = set()
        elif tok == LOOP_END:
            if not self.loop:
                raise FaceMismatch(f"empty loop in face {f}", pos)
            self._join(opposite(self.loop[-1]), self.loop[0], pos)
            self.loop = []
        else:
            if not 0 <= tok < 2 * self.num_edges:
                raise FaceMismatch(f"endpoint {tok} out of range", pos)
            j = tok // 2
            if j not in self.face_edge_sets[f]:
                raise FaceMismatch(f"edge {j} is not on face {f}", pos)
            if j in self.placed or self.usage[j] >= 2:
                raise EdgeReuse(f"edge {j} used again", pos)
            self.placed.add(j)
            self.usage[j] += 1
            if self.usage[j] == 1:
                # the edge will sit in both of its faces, so count both now
                dsu = self.dsu
                for ep in (tok, opposite(tok)):
                    r = dsu.find(ep)
                    for g in self.ef[j]:
                        dsu.deg[r][g] = dsu.deg[r].get(g, 0) + 1
                    self._check_root(r, pos)
            if self.loop:
                self._join(opposite(self.loop[-1]), tok, pos)
            self.loop.append(tok)
        self.tokens.append(tok)

    def topology(self):
        """Vertices are the endpoint classes, labelled by first appearance."""
        if not self.done:
            raise FaceMismatch(f"sequence stops at face {self.face} of {self.num_faces}")
        if any(u != 2 for u in self.usage):
            raise EdgeReuse("some edge is not used exactly twice")
        labels = {}
        for tok in self.tokens:
            if tok < 0:
                continue
            for ep in (tok, opposite(tok)):
                labels.setdefault(self.dsu.find(ep), len(labels))
        ev = [
            (labels[self.dsu.find(2 * j)], labels[self.dsu.find(2 * j + 1)])
            for j in range(self.num_edges)
        ]
        return build_topology(self.ef, ev)


def sequence_to_ev(seq, fef, partial=False):
    """Decode an EV token sequence against a FeF matrix.

    Returns the reconstructed Topology, or with ``partial=True`` the decoder
    state after consuming ``seq`` (a prefix need not be complete).
    """
    dec = EvDecoder(fef)
    for tok in seq:
        dec.push(int(tok))
    if partial:
        return dec
    return dec.topology()


def topology_to_sequences(t, m_f):
    """EF and EV sequences of a canonical topology."""
    return ef_to_sequence(derive_fef(t), m_f), ev_to_sequence(t)


def sequences_to_topology(ef_seq, ev_seq, m_f=None):
    return sequence_to_ev(ev_seq, sequence_to_fef(ef_seq, m_f))
