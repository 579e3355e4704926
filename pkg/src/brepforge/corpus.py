"""Corpus records, JSON persistence, filtering and synthetic solids.

Corpus file layout (JSON)::

    {"schema": "brepforge.corpus", "version": 1,
     "records": [{"id": ..., "topology": {"ef": [...], "ev": [...]},
                  "geometry": {"face_boxes": {"shape": [nf, 6], "data": [...]}, ...},
                  "metadata": {...}}, ...]}

Integer pair lists and real arrays are stored flat; arrays carry their shape.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .bspline import arc_ctrl, line_ctrl
from .core import GeometryAttrs, build_topology, derive_face_edges
from .errors import BadSpec, InvalidRecord, ParseError, SchemaVersionMismatch
from .patches import boundary_box, boundary_patches
from .serialize import canonical_relabeling
from .validate import validate

CORPUS_SCHEMA = "brepforge.corpus"
MODEL_SCHEMA = "brepforge.model"
TOPOLOGY_SCHEMA = "brepforge.topologies"
SCHEMA_VERSION = 1

SHAPES = ("box", "prism", "pyramid", "cylinder", "holed_box", "l_block")


@dataclass
class CorpusRecord:
    id: str
    topology: object
    geometry: GeometryAttrs
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        t = self.topology
        geo = {}
        for name, arr in zip(("face_boxes", "verts", "edge_ctrl", "face_ctrl"), self.geometry.arrays()):
            geo[name] = {"shape": list(arr.shape), "data": arr.ravel().tolist()}
        meta = dict(self.metadata)
        meta.update(num_faces=t.num_faces, num_edges=t.num_edges, num_verts=t.num_verts)
        return {
            "id": self.id,
            "topology": {"ef": [x for p in t.ef for x in p], "ev": [x for p in t.ev for x in p]},
            "geometry": geo,
            "metadata": meta,
        }

    @classmethod
    def from_dict(cls, d):
        try:
            ef = d["topology"]["ef"]
            ev = d["topology"]["ev"]
            if len(ef) % 2 or len(ev) % 2:
                raise InvalidRecord(f"record {d.get('id')}: odd-length pair list")
            t = build_topology(zip(ef[::2], ef[1::2]), zip(ev[::2], ev[1::2]), unchecked=True)
            arrays = []
            for name in ("face_boxes", "verts", "edge_ctrl", "face_ctrl"):
                g = d["geometry"][name]
                arrays.append(np.array(g["data"], dtype=float).reshape(g["shape"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidRecord(f"record {d.get('id') if isinstance(d, dict) else '?'}: {exc}") from exc
        return cls(str(d["id"]), t, GeometryAttrs(*arrays), dict(d.get("metadata", {})))


def check_record(rec):
    rep = validate(rec.topology)
    if not rep.valid:
        details = "; ".join(f"{c} violated at {'edge' if c in ('C1', 'C2') else 'face/vertex'} {list(ids)}" for c, ids in rep.violations)
        raise InvalidRecord(f"record {rec.id}: {details}")
    try:
        rec.geometry.check_against(rec.topology)
    except Exception as exc:
        raise InvalidRecord(f"record {rec.id}: {exc}") from exc


def _json_load(path, schema):
    with open(path) as f:
        text = f.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", exc.lineno, exc.colno) from exc
    if not isinstance(doc, dict) or doc.get("schema") != schema:
        raise ParseError(f"{path}: not a {schema} document")
    if doc.get("version") != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"{path}: version {doc.get('version')} != {SCHEMA_VERSION}")
    return doc


def save_corpus(records, path):
    doc = {"schema": CORPUS_SCHEMA, "version": SCHEMA_VERSION, "records": [r.to_dict() for r in records]}
    with open(path, "w") as f:
        f.write('{"schema": "%s", "version": %d, "records": [\n' % (CORPUS_SCHEMA, SCHEMA_VERSION))
        f.write(",\n".join(json.dumps(r, sort_keys=True) for r in doc["records"]))
        f.write("\n]}\n")


def load_corpus(path, check=True):
    doc = _json_load(path, CORPUS_SCHEMA)
    records = [CorpusRecord.from_dict(d) for d in doc["records"]]
    if check:
        for r in records:
            check_record(r)
    return records


def save_topologies(topologies, path, failed=0):
    """Write a list of topologies (EF/EV pairs only)."""
    items = [{"ef": [x for p in t.ef for x in p], "ev": [x for p in t.ev for x in p]} for t in topologies]
    with open(path, "w") as f:
        f.write('{"schema": "%s", "version": %d, "failed": %d, "topologies": [\n' % (TOPOLOGY_SCHEMA, SCHEMA_VERSION, failed))
        f.write(",\n".join(json.dumps(d) for d in items))
        f.write("\n]}\n")


def load_topologies(path):
    """Read a topology list; entries are built without validation."""
    doc = _json_load(path, TOPOLOGY_SCHEMA)
    out = []
    for i, d in enumerate(doc["topologies"]):
        try:
            ef, ev = d["ef"], d["ev"]
            out.append(build_topology(zip(ef[::2], ef[1::2]), zip(ev[::2], ev[1::2]), unchecked=True))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidRecord(f"topology {i}: {exc}") from exc
    return out


def save_model(path, kind, payload):
    with open(path, "w") as f:
        json.dump({"schema": MODEL_SCHEMA, "version": SCHEMA_VERSION, "kind": kind, "payload": payload}, f)


def load_model(path, kind=None):
    doc = _json_load(path, MODEL_SCHEMA)
    if kind is not None and doc.get("kind") != kind:
        raise ParseError(f"{path}: expected model kind {kind!r}, found {doc.get('kind')!r}")
    return doc["payload"]


def filter_corpus(records, max_faces=50, max_edges_per_face=30):
    """Drop records with too many faces or a face with too many edges.

    Returns ``(kept, rejected_counts)``.
    """
    kept = []
    rejected = {"too_many_faces": 0, "face_too_many_edges": 0}
    for r in records:
        t = r.topology
        if t.num_faces > max_faces:
            rejected["too_many_faces"] += 1
        elif max(len(x) for x in derive_face_edges(t)) > max_edges_per_face:
            rejected["face_too_many_edges"] += 1
        else:
            kept.append(r)
    return kept, rejected


# ---------------------------------------------------------------- synthetic solids


def _solid(verts, faces, curved=None):
    """Assemble topology and geometry from faces given as vertex loops.

    ``faces`` holds, per face, a list of loops of vertex indices. ``curved``
    maps a directed vertex pair ``(a, b)`` to a cubic control array from a
    to b; other edges are straight.
    """
    verts = np.asarray(verts, dtype=float)
    curved = curved or {}
    edge_id = {}
    ef, ev, ectrl = [], [], []
    for f, loops in enumerate(faces):
        for loop in loops:
            for a, b in zip(loop, loop[1:] + loop[:1]):
                key = frozenset((a, b))
                if key in edge_id:
                    ef[edge_id[key]].append(f)
                    continue
                edge_id[key] = len(ef)
                ef.append([f])
                ev.append((a, b))
                if (a, b) in curved:
                    ectrl.append(np.asarray(curved[(a, b)], dtype=float))
                elif (b, a) in curved:
                    ectrl.append(np.asarray(curved[(b, a)], dtype=float)[::-1])
                else:
                    ectrl.append(line_ctrl(verts[a], verts[b]))
    t = build_topology([tuple(p) for p in ef], ev)
    ectrl = np.array(ectrl)
    fctrl = boundary_patches(t, ectrl)
    boxes = np.array([boundary_box(t, f, ectrl) for f in range(t.num_faces)])
    return t, GeometryAttrs(boxes, verts, ectrl, fctrl)


def make_prism(polygon, height, curved_sides=None):
    """Extrude a CCW polygon (k x 2) along z.

    Faces: bottom, top, then one side face per polygon edge.
    """
    poly = np.asarray(polygon, dtype=float)
    n = len(poly)
    verts = np.vstack([np.column_stack([poly, np.zeros(n)]), np.column_stack([poly, np.full(n, height)])])
    bottom = [list(range(n))[::-1]]
    top = [list(range(n, 2 * n))]
    sides = [[[i, (i + 1) % n, n + (i + 1) % n, n + i]] for i in range(n)]
    return _solid(verts, [bottom, top] + sides, curved_sides)


def make_box(sx, sy, sz):
    return make_prism([[0, 0], [sx, 0], [sx, sy], [0, sy]], sz)


def make_pyramid(polygon, height):
    poly = np.asarray(polygon, dtype=float)
    n = len(poly)
    centroid = poly.mean(axis=0)
    verts = np.vstack([np.column_stack([poly, np.zeros(n)]), [[*centroid, height]]])
    faces = [[list(range(n))[::-1]]] + [[[i, (i + 1) % n, n]] for i in range(n)]
    return _solid(verts, faces)


def make_cylinder(radius, height, patches=4):
    """Cylinder whose round faces are split into ``patches`` cubic arcs."""
    th = 2 * np.pi * np.arange(patches) / patches
    poly = radius * np.column_stack([np.cos(th), np.sin(th)])
    curved = {}
    for i in range(patches):
        j = (i + 1) % patches
        t0, t1 = th[i], th[i] + 2 * np.pi / patches
        curved[(i, j)] = arc_ctrl((0, 0), radius, t0, t1, 0.0)
        curved[(patches + i, patches + j)] = arc_ctrl((0, 0), radius, t0, t1, height)
    return make_prism(poly, height, curved)


def make_holed_box(sx, sy, sz, hx, hy):
    """Box with a centred rectangular through hole of size hx x hy."""
    ox, oy = (sx - hx) / 2, (sy - hy) / 2
    outer = [[0, 0], [sx, 0], [sx, sy], [0, sy]]
    inner = [[ox, oy], [ox + hx, oy], [ox + hx, oy + hy], [ox, oy + hy]]
    v2 = np.array(outer + inner, dtype=float)
    verts = np.vstack([np.column_stack([v2, np.zeros(8)]), np.column_stack([v2, np.full(8, sz)])])
    bottom = [[3, 2, 1, 0], [4, 5, 6, 7]]
    top = [[8, 9, 10, 11], [15, 14, 13, 12]]
    faces = [bottom, top]
    for i in range(4):
        j = (i + 1) % 4
        faces.append([[i, j, 8 + j, 8 + i]])
    for i in range(4):
        j = (i + 1) % 4
        faces.append([[4 + j, 4 + i, 12 + i, 12 + j]])
    return _solid(verts, faces)


def make_l_block(sx, sy, sz, cx, cy):
    """L-shaped extrusion: an sx x sy rectangle minus a cx x cy corner."""
    poly = [[0, 0], [sx, 0], [sx, sy - cy], [sx - cx, sy - cy], [sx - cx, sy], [0, sy]]
    return make_prism(poly, sz)


def normalize_geometry(g):
    """Centre and scale so every control point lies in [-1, 1]^3."""
    pts = np.concatenate([g.verts, g.edge_ctrl.reshape(-1, 3), g.face_ctrl.reshape(-1, 3)])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    c = (lo + hi) / 2
    s = 1.0 / max((hi - lo).max() / 2, 1e-12)
    boxes = np.concatenate([(g.face_boxes[:, :3] - c) * s, (g.face_boxes[:, 3:] - c) * s], axis=1)
    return GeometryAttrs(boxes, (g.verts - c) * s, (g.edge_ctrl - c) * s, (g.face_ctrl - c) * s)


def canonical_record(rid, t, g, metadata=None, tie_break="deterministic", rebuild_faces=False):
    """Relabel a solid canonically and permute its geometry to match.

    With ``rebuild_faces`` the face patches are rebuilt from the relabeled
    boundary so their parametrization follows the canonical loop order.
    """
    fmap, emap, vmap = canonical_relabeling(t, tie_break)
    ct = t.relabel(fmap, emap, vmap)
    ct = build_topology([tuple(sorted(p)) for p in ct.ef], ct.ev)
    finv, einv, vinv = (np.argsort(m) for m in (fmap, emap, vmap))
    geo = GeometryAttrs(g.face_boxes[finv], g.verts[vinv], g.edge_ctrl[einv], g.face_ctrl[finv])
    if rebuild_faces:
        geo.face_ctrl = boundary_patches(ct, geo.edge_ctrl)
    return CorpusRecord(rid, ct, geo, dict(metadata or {}))


def _random_polygon(rng, n, r_lo=0.6, r_hi=1.0):
    base = 2 * np.pi * np.arange(n) / n
    th = base + rng.uniform(-0.25, 0.25, n) * (2 * np.pi / n)
    r = rng.uniform(r_lo, r_hi, n)
    return np.column_stack([r * np.cos(th), r * np.sin(th)])


def _make_shape(kind, rng, lo, hi):
    u = lambda: rng.uniform(lo, hi)  # noqa: E731
    if kind == "box":
        return make_box(u(), u(), u()), {}
    if kind == "prism":
        n = int(rng.integers(3, 9))
        return make_prism(_random_polygon(rng, n) * u(), u()), {"sides": n}
    if kind == "pyramid":
        n = int(rng.integers(3, 7))
        return make_pyramid(_random_polygon(rng, n) * u(), u()), {"sides": n}
    if kind == "cylinder":
        return make_cylinder(u() / 2, u()), {}
    if kind == "holed_box":
        sx, sy = u(), u()
        return make_holed_box(sx, sy, u(), sx * rng.uniform(0.2, 0.6), sy * rng.uniform(0.2, 0.6)), {}
    if kind == "l_block":
        sx, sy = u(), u()
        return make_l_block(sx, sy, u(), sx * rng.uniform(0.2, 0.7), sy * rng.uniform(0.2, 0.7)), {}
    raise BadSpec(f"unknown shape kind {kind!r}")


def gen_synthetic_corpus(spec, rng):
    """Generate ``spec['n_models']`` canonical, normalized closed solids.

    ``spec`` keys: ``n_models`` (required), ``mix`` (shape -> weight, default
    uniform over all shapes) and ``size_range`` (default ``[0.5, 2.0]``).
    ``rng`` is a seed or ``numpy.random.Generator``; each record gets its own
    child stream.
    """
    n = int(spec.get("n_models", 0))
    if n < 1:
        raise BadSpec("n_models must be at least 1")
    mix = spec.get("mix") or {k: 1.0 for k in SHAPES}
    unknown = set(mix) - set(SHAPES)
    if unknown:
        raise BadSpec(f"unknown shapes {sorted(unknown)}")
    lo, hi = spec.get("size_range", (0.5, 2.0))
    if not 0 < lo <= hi:
        raise BadSpec("size_range must satisfy 0 < lo <= hi")
    kinds = sorted(mix)
    w = np.array([float(mix[k]) for k in kinds])
    if (w < 0).any() or w.sum() <= 0:
        raise BadSpec("mix weights must be non-negative with positive sum")
    w = w / w.sum()
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    seeds = rng.bit_generator.seed_seq.spawn(n) if hasattr(rng.bit_generator, "seed_seq") else None
    records = []
    for i in range(n):
        r = np.random.default_rng(seeds[i]) if seeds is not None else rng
        kind = kinds[int(r.choice(len(kinds), p=w))]
        (t, g), meta = _make_shape(kind, r, lo, hi)
        meta["shape"] = kind
        records.append(canonical_record(f"syn-{i:05d}", t, normalize_geometry(g), meta, rebuild_faces=True))
    return records
