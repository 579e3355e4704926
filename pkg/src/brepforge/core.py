"""Shared B-rep data types and derived adjacency views.

A topology is stored as two per-edge pair lists:

ef: tuple of (face_a, face_b) per edge, the two faces that share the edge.
ev: tuple of (vert_a, vert_b) per edge, the two endpoint vertices. The
    first entry is the vertex of endpoint ``2j`` and the second the vertex of
    endpoint ``2j + 1``.

Counts are never stored; they are inferred as one plus the largest ID.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyTopology, MalformedPair, TopologyGeometryMismatch

M_E = 5
M_F = 30


@dataclass(frozen=True)
class Topology:
    ef: tuple
    ev: tuple

    @property
    def num_edges(self):
        return len(self.ef)

    @property
    def num_faces(self):
        return 1 + max(max(p) for p in self.ef) if self.ef else 0

    @property
    def num_verts(self):
        return 1 + max(max(p) for p in self.ev) if self.ev else 0

    @property
    def counts(self):
        return self.num_faces, self.num_edges, self.num_verts

    def ef_array(self):
        return np.array(self.ef, dtype=np.int64).reshape(-1, 2)

    def ev_array(self):
        return np.array(self.ev, dtype=np.int64).reshape(-1, 2)

    def euler_characteristic(self):
        return self.num_verts - self.num_edges + self.num_faces

    def relabel(self, face_perm=None, edge_perm=None, vert_perm=None):
        """Return an isomorphic copy.

        Each permutation maps old ID -> new ID. ``edge_perm`` reorders rows.
        """
        nf, ne, nv = self.counts
        fp = list(range(nf)) if face_perm is None else list(face_perm)
        ep = list(range(ne)) if edge_perm is None else list(edge_perm)
        vp = list(range(nv)) if vert_perm is None else list(vert_perm)
        ef = [None] * ne
        ev = [None] * ne
        for old, new in enumerate(ep):
            a, b = self.ef[old]
            ef[new] = (fp[a], fp[b])
            u, v = self.ev[old]
            ev[new] = (vp[u], vp[v])
        return Topology(tuple(ef), tuple(ev))


def build_topology(ef, ev, unchecked=False):
    """Build a Topology from per-edge face pairs and vertex pairs.

    With ``unchecked=True`` rows that repeat an ID and unused IDs are allowed;
    this exists so the validator can be exercised on broken inputs.
    """
    ef = tuple((int(a), int(b)) for a, b in ef)
    ev = tuple((int(a), int(b)) for a, b in ev)
    if len(ef) != len(ev):
        raise MalformedPair(f"ef has {len(ef)} rows but ev has {len(ev)}")
    if not ef:
        raise EmptyTopology("topology has no edges")
    if any(x < 0 for row in ef + ev for x in row):
        raise MalformedPair("IDs must be non-negative")
    if unchecked:
        return Topology(ef, ev)
    for e, (a, b) in enumerate(ef):
        if a == b:
            raise MalformedPair(f"edge {e} has face pair ({a}, {b})")
    for e, (u, v) in enumerate(ev):
        if u == v:
            raise MalformedPair(f"edge {e} has vertex pair ({u}, {v})")
    t = Topology(ef, ev)
    for name, rows, n in (("face", ef, t.num_faces), ("vertex", ev, t.num_verts)):
        seen = {x for row in rows for x in row}
        if len(seen) != n:
            missing = sorted(set(range(n)) - seen)
            raise MalformedPair(f"{name} IDs {missing} never occur")
    return t


def derive_fef(t, n=None):
    """Face-edge-face matrix: entry [k, l] counts edges shared by faces k and l."""
    n = t.num_faces if n is None else n
    fef = np.zeros((n, n), dtype=np.int64)
    for a, b in t.ef:
        if a != b:
            fef[a, b] += 1
            fef[b, a] += 1
    return fef


def derive_face_edges(t):
    """Per-face ascending lists of incident edge IDs."""
    fe = [[] for _ in range(t.num_faces)]
    for e, (a, b) in enumerate(t.ef):
        fe[a].append(e)
        if b != a:
            fe[b].append(e)
    return fe


def derive_vert_edges(t):
    ve = [[] for _ in range(t.num_verts)]
    for e, (u, v) in enumerate(t.ev):
        ve[u].append(e)
        if v != u:
            ve[v].append(e)
    return ve


def derive_face_verts(t):
    """Sorted vertex IDs touched by each face's edges."""
    fe = derive_face_edges(t)
    return [sorted({v for e in edges for v in t.ev[e]}) for edges in fe]


def ef_from_fef(fef):
    """Edge-face pairs in lexicographic order implied by a FeF matrix.

    Edges between the same face pair are consecutive, so the result is the
    canonical edge ordering used by the serializer.
    """
    fef = np.asarray(fef)
    n = fef.shape[0]
    ef = []
    for k in range(n):
        for l in range(k + 1, n):
            ef.extend([(k, l)] * int(fef[k, l]))
    return ef


@dataclass
class GeometryAttrs:
    """Per-element geometry in normalized model coordinates."""

    face_boxes: np.ndarray  # (N_f, 6): min xyz then max xyz
    verts: np.ndarray  # (N_v, 3)
    edge_ctrl: np.ndarray  # (N_e, 4, 3)
    face_ctrl: np.ndarray  # (N_f, 4, 4, 3)

    def __post_init__(self):
        self.face_boxes = np.asarray(self.face_boxes, dtype=float).reshape(-1, 6)
        self.verts = np.asarray(self.verts, dtype=float).reshape(-1, 3)
        self.edge_ctrl = np.asarray(self.edge_ctrl, dtype=float).reshape(-1, 4, 3)
        self.face_ctrl = np.asarray(self.face_ctrl, dtype=float).reshape(-1, 4, 4, 3)

    def check_against(self, t):
        nf, ne, nv = t.counts
        got = (len(self.face_boxes), len(self.edge_ctrl), len(self.verts), len(self.face_ctrl))
        if got != (nf, ne, nv, nf):
            raise TopologyGeometryMismatch(
                f"geometry sizes (boxes, edges, verts, faces)={got} do not match topology {(nf, ne, nv, nf)}"
            )
        if not all(np.isfinite(a).all() for a in self.arrays()):
            raise TopologyGeometryMismatch("geometry contains non-finite values")

    def arrays(self):
        return self.face_boxes, self.verts, self.edge_ctrl, self.face_ctrl

    def copy(self):
        return GeometryAttrs(*(a.copy() for a in self.arrays()))

    def allclose(self, other, atol):
        return all(
            a.shape == b.shape and np.allclose(a, b, rtol=0.0, atol=atol)
            for a, b in zip(self.arrays(), other.arrays())
        )


@dataclass
class BRepModel:
    topology: Topology
    geometry: GeometryAttrs
    face_surface: list = field(default_factory=list)
    face_residual: list = field(default_factory=list)

    def __post_init__(self):
        if self.face_surface and len(self.face_surface) != self.topology.num_faces:
            raise TopologyGeometryMismatch("one surface per face required")
