"""Four-stage topology-conditioned geometry cascade.

Stages run in a fixed order, each conditioned on the topology and on what
the earlier stages produced:

* ``FaceBox``  - joint over all faces, sees the shared-edge counts (FeF).
* ``Vertex``   - per vertex, sees vertex adjacency and its faces' boxes.
* ``EdgeGeom`` - per edge, sees its endpoint coordinates and both face boxes.
* ``FaceGeom`` - per face, sees its box plus boundary vertices and curves.

The per-element stages diffuse a residual against a base computed from the
conditioning alone: the centre of the adjacent boxes' intersection for a
vertex, the straight chord for an edge and the boundary patch for a face.
Edge end control points are taken from the generated vertices. Along an
axis where an adjacent face box is flat, vertices and edge interiors take
the flat face's coordinate and no residual is generated there, so faces
that are flat in the boxes come out exactly planar.
"""

from dataclasses import dataclass, field

import numpy as np

from .bspline import line_ctrl
from .core import M_E, M_F, GeometryAttrs, derive_face_edges, derive_fef
from .corpus import load_model, save_model
from .diffusion import DiffusionSchedule, MLPDenoiser, reverse_sample, train_toy_denoiser
from .errors import StageOrderError, TooManyFaces
from .patches import boundary_patch
from .serialize import face_loops

STAGES = ("FaceBox", "Vertex", "EdgeGeom", "FaceGeom")
_TRIU = np.triu_indices(M_F, k=1)


@dataclass
class ConditioningBundle:
    """Inputs one stage may see. ``data`` keys depend on the stage."""

    stage: str
    data: dict = field(default_factory=dict)
    count: int = 0  # number of generated elements


def _require(stage, prev):
    k = STAGES.index(stage)
    missing = [s for s in STAGES[:k] if s not in prev]
    ahead = [s for s in STAGES[k:] if s in prev]
    if missing or ahead:
        raise StageOrderError(f"{stage} needs {list(STAGES[:k])} before it, got {sorted(prev)}")


def _vert_faces(t):
    vf = [set() for _ in range(t.num_verts)]
    for (a, b), (f1, f2) in zip(t.ev, t.ef):
        vf[a].update((f1, f2))
        vf[b].update((f1, f2))
    return [sorted(s) for s in vf]


def build_bundle(stage, t, prev):
    """Conditioning for ``stage`` from topology ``t`` and earlier outputs
    ``prev`` (a dict keyed by stage name)."""
    _require(stage, prev)
    if stage == "FaceBox":
        if t.num_faces > M_F:
            raise TooManyFaces(f"{t.num_faces} faces exceed {M_F}")
        return ConditioningBundle(stage, {"fef": derive_fef(t, M_F)}, t.num_faces)
    boxes = np.asarray(prev["FaceBox"], dtype=float)
    if stage == "Vertex":
        vf = _vert_faces(t)
        return ConditioningBundle(
            stage,
            {"adjacency": [tuple(p) for p in t.ev], "face_boxes": [boxes[fs] for fs in vf]},
            t.num_verts,
        )
    verts = np.asarray(prev["Vertex"], dtype=float)
    if stage == "EdgeGeom":
        ev, ef = t.ev_array(), t.ef_array()
        return ConditioningBundle(
            stage, {"endpoints": verts[ev], "face_boxes": boxes[np.sort(ef, axis=1)]}, t.num_edges
        )
    ectrl = np.asarray(prev["EdgeGeom"], dtype=float).reshape(-1, 4, 3)
    fe = derive_face_edges(t)
    fv = [sorted({v for e in edges for v in t.ev[e]}) for edges in fe]
    loops = face_loops(t)
    return ConditioningBundle(
        stage,
        {
            "box": boxes,
            "boundary_verts": [verts[v] for v in fv],
            "boundary_edges": [{e: ectrl[e] for e in edges} for edges in fe],
            "loops": loops,
        },
        t.num_faces,
    )


def _pool(pts):
    pts = np.asarray(pts, dtype=float).reshape(-1, 3)
    return np.concatenate([pts.min(axis=0), pts.max(axis=0), pts.mean(axis=0)])


# a face box thinner than this along an axis is treated as flat there
FLAT_WIDTH = 0.03


def _vertex_base(boxes):
    lo = boxes[:, :3].max(axis=0)
    hi = boxes[:, 3:].min(axis=0)
    return lo, hi


def _flat_axes(boxes):
    boxes = np.asarray(boxes, dtype=float).reshape(-1, 6)
    return (boxes[:, 3:] - boxes[:, :3]).min(axis=0) < FLAT_WIDTH


def _free_mask(b):
    """1 where a residual is generated, 0 along flat axes."""
    d = b.data
    if b.stage == "Vertex":
        return np.array([~_flat_axes(bx) for bx in d["face_boxes"]], dtype=float)
    if b.stage == "EdgeGeom":
        free = np.array([~_flat_axes(bx) for bx in d["face_boxes"]], dtype=float)
        return np.repeat(free[:, None, :], 2, axis=1).reshape(-1, 6)
    return 1.0


def _vertex_guess(boxes):
    """Centre of the adjacent boxes' intersection, except along axes where an
    adjacent face is flat: there the flattest face's mid-plane is used, so
    all vertices of a flat face share that coordinate exactly."""
    lo, hi = _vertex_base(boxes)
    guess = (lo + hi) / 2
    width = boxes[:, 3:] - boxes[:, :3]
    k = width.argmin(axis=0)
    for a in range(3):
        if width[k[a], a] < FLAT_WIDTH:
            guess[a] = (boxes[k[a], a] + boxes[k[a], a + 3]) / 2
    return guess


def features(b):
    """Flattened conditioning rows, one per generated element."""
    d = b.data
    if b.stage == "FaceBox":
        mask = np.zeros(M_F)
        mask[: b.count] = 1.0
        return np.concatenate([d["fef"][_TRIU] / M_E, mask])[None, :]
    if b.stage == "Vertex":
        deg = np.zeros(b.count)
        for p in d["adjacency"]:
            for v in p:
                deg[v] += 1
        rows = []
        for v, bx in enumerate(d["face_boxes"]):
            lo, hi = _vertex_base(bx)
            rows.append(np.concatenate([lo, hi, _vertex_guess(bx), bx.mean(axis=0), [deg[v] / 8, len(bx) / 8]]))
        return np.array(rows)
    if b.stage == "EdgeGeom":
        ends = d["endpoints"]
        chord = np.linalg.norm(ends[:, 1] - ends[:, 0], axis=1)
        return np.column_stack([ends.reshape(-1, 6), d["face_boxes"].reshape(-1, 12), chord])
    rows = []
    for f in range(b.count):
        ctrl = np.array(list(d["boundary_edges"][f].values()))
        n_e = len(d["boundary_edges"][f])
        rows.append(
            np.concatenate(
                [d["box"][f], _pool(d["boundary_verts"][f]), _pool(ctrl), [n_e / 30, len(d["loops"][f]) / 4]]
            )
        )
    return np.array(rows)


def _base(b):
    d = b.data
    if b.stage == "Vertex":
        return np.array([_vertex_guess(bx) for bx in d["face_boxes"]])
    if b.stage == "EdgeGeom":
        return np.array([line_ctrl(p, q) for p, q in d["endpoints"]])
    if b.stage == "FaceGeom":
        return np.array([boundary_patch(None, f, d["boundary_edges"][f], d["loops"][f]) for f in range(b.count)])
    return None


def x_dim(stage):
    return {"FaceBox": 6 * M_F, "Vertex": 3, "EdgeGeom": 6, "FaceGeom": 48}[stage]


def encode(b, target):
    """Diffusion variable ``x0`` (rows per element) for a known stage output."""
    target = np.asarray(target, dtype=float)
    if b.stage == "FaceBox":
        x = np.zeros(6 * M_F)
        x[: 6 * b.count] = target.reshape(-1)
        return x[None, :]
    if b.stage == "Vertex":
        return (target - _base(b)) * _free_mask(b)
    if b.stage == "EdgeGeom":
        return (target.reshape(-1, 4, 3) - _base(b))[:, 1:3].reshape(-1, 6) * _free_mask(b)
    return (target.reshape(-1, 4, 4, 3) - _base(b)).reshape(-1, 48)


def decode(b, x):
    """Stage output from a sampled diffusion variable."""
    x = np.asarray(x, dtype=float)
    if b.stage == "FaceBox":
        boxes = x.reshape(-1)[: 6 * b.count].reshape(-1, 6)
        return np.concatenate([np.minimum(boxes[:, :3], boxes[:, 3:]), np.maximum(boxes[:, :3], boxes[:, 3:])], axis=1)
    if b.stage == "Vertex":
        return _base(b) + x * _free_mask(b)
    if b.stage == "EdgeGeom":
        ctrl = _base(b)
        ctrl[:, 1:3] += (x * _free_mask(b)).reshape(-1, 2, 3)
        return ctrl
    return _base(b) + x.reshape(-1, 4, 4, 3)


def stage_targets(t, g):
    """Ground-truth outputs of every stage for a known geometry."""
    return {
        "FaceBox": g.face_boxes,
        "Vertex": g.verts,
        "EdgeGeom": g.edge_ctrl,
        "FaceGeom": g.face_ctrl,
    }


def _as_stage_map(denoisers):
    if isinstance(denoisers, dict):
        if set(denoisers) != set(STAGES):
            raise StageOrderError(f"denoisers must cover exactly {list(STAGES)}")
        return denoisers
    denoisers = list(denoisers)
    if len(denoisers) != len(STAGES):
        raise StageOrderError("need one denoiser per stage")
    for name, d in zip(STAGES, denoisers):
        tag = getattr(d, "stage", None)
        if tag is not None and tag != name:
            raise StageOrderError(f"denoiser for {tag} given in the {name} slot")
    return dict(zip(STAGES, denoisers))


def run_stage(stage, t, prev, denoiser, s, rng):
    """Sample one stage; ``prev`` must hold exactly the earlier stages."""
    b = build_bundle(stage, t, prev)
    cond = features(b)
    shape = (len(cond), x_dim(stage))
    x = reverse_sample(denoiser, shape, s, cond, rng)
    return decode(b, x)


def generate_geometry_cascade(t, denoisers, s, rng):
    """Run FaceBox, Vertex, EdgeGeom and FaceGeom in order for topology ``t``.

    ``denoisers`` is either a dict keyed by stage name or a sequence in stage
    order. Returns a :class:`GeometryAttrs`.
    """
    dens = _as_stage_map(denoisers)
    prev = {}
    for stage in STAGES:
        prev[stage] = run_stage(stage, t, prev, dens[stage], s, rng)
    return GeometryAttrs(
        prev["FaceBox"].reshape(-1, 6),
        prev["Vertex"].reshape(-1, 3),
        prev["EdgeGeom"].reshape(-1, 4, 3),
        prev["FaceGeom"].reshape(-1, 4, 4, 3),
    )


def stage_dataset(stage, models):
    """``(x0, cond)`` pairs for one stage, conditioning on ground truth."""
    out = []
    for t, g in models:
        targets = stage_targets(t, g)
        prev = {s: targets[s] for s in STAGES[: STAGES.index(stage)]}
        b = build_bundle(stage, t, prev)
        out.append((encode(b, targets[stage]), features(b)))
    return out


# per-stage training defaults tuned for a few hundred synthetic models
STAGE_EPOCHS = {"FaceBox": 400, "Vertex": 150, "EdgeGeom": 150, "FaceGeom": 20}


def train_cascade(models, s, rng, epochs=None, hidden=(256, 256), batch_models=32):
    """Train one toy denoiser per stage on ``(topology, geometry)`` pairs."""
    epochs = dict(STAGE_EPOCHS, **(epochs or {})) if not isinstance(epochs, int) else dict.fromkeys(STAGES, epochs)
    models = list(models)
    dens = {}
    for stage in STAGES:
        data = stage_dataset(stage, models)
        dens[stage] = train_toy_denoiser(
            data, s, epochs[stage], rng, hidden=hidden, batch_models=batch_models, stage=stage
        )
    return dens


def save_cascade(path, denoisers, s):
    payload = {"schedule": s.to_dict(), "stages": {k: d.to_dict() for k, d in _as_stage_map(denoisers).items()}}
    save_model(path, "cascade", payload)


def load_cascade(path):
    payload = load_model(path, "cascade")
    s = DiffusionSchedule.from_dict(payload["schedule"])
    dens = {k: MLPDenoiser.from_dict(v) for k, v in payload["stages"].items()}
    return _as_stage_map(dens), s
