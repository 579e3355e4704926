"""Sewing generated geometry onto a topology, watertightness checks and
triangle-mesh export."""

from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .bspline import closest_on_surface, sample_curve, sample_surface
from .core import BRepModel, GeometryAttrs, derive_face_edges
from .errors import GapExceedsTolerance, InvalidTopology
from .fitting import fit_primitive
from .validate import validate

EDGE_SAMPLES = 16


@dataclass
class SewingReport:
    watertight: bool
    max_vertex_gap: float
    max_edge_endpoint_gap: float
    max_surface_gap: float = 0.0
    self_intersection_checked: bool = False

    def to_dict(self):
        return asdict(self)


def _endpoint_gaps(t, g):
    """Per-vertex spread of incident curve ends and per-edge end-to-vertex distance."""
    ends = [[] for _ in range(t.num_verts)]
    edge_gap = 0.0
    for e, (a, b) in enumerate(t.ev):
        p, q = g.edge_ctrl[e][0], g.edge_ctrl[e][-1]
        ends[a].append(p)
        ends[b].append(q)
        edge_gap = max(edge_gap, np.linalg.norm(p - g.verts[a]), np.linalg.norm(q - g.verts[b]))
    vert_gap = 0.0
    for pts in ends:
        if len(pts) > 1:
            pts = np.array(pts)
            d = np.linalg.norm(pts[:, None] - pts[None, :], axis=-1)
            vert_gap = max(vert_gap, float(d.max()))
    return ends, float(vert_gap), float(edge_gap)


def _surface_distance(m, f, pts):
    prim = m.face_surface[f] if m.face_surface else None
    if prim is not None:
        return prim.distance(pts)
    return closest_on_surface(m.geometry.face_ctrl[f], pts)[2]


def _surface_gap(m, n=EDGE_SAMPLES):
    gap = 0.0
    for e, faces in enumerate(m.topology.ef):
        pts = sample_curve(m.geometry.edge_ctrl[e], n)
        for f in set(faces):
            gap = max(gap, float(_surface_distance(m, f, pts).max()))
    return gap


def check_watertight(m, tol=1e-3):
    """Curve ends meet their vertices and both adjacent faces contain each
    edge curve, all within ``tol``."""
    _, vgap, egap = _endpoint_gaps(m.topology, m.geometry)
    sgap = _surface_gap(m)
    ok = max(vgap, egap, sgap) <= tol
    return SewingReport(bool(ok), vgap, egap, sgap)


def face_points(t, g, f, fe=None, n_edge=EDGE_SAMPLES, n_grid=8):
    """Boundary curve samples plus an interior grid of the face patch."""
    fe = derive_face_edges(t) if fe is None else fe
    bnd = [sample_curve(g.edge_ctrl[e], n_edge) for e in fe[f]]
    inner = sample_surface(g.face_ctrl[f], n_grid, n_grid)[1:-1, 1:-1].reshape(-1, 3)
    return np.concatenate(bnd + [inner])


def assemble(t, g, fit_threshold=1e-3, sew_tol=1e-3, strict=False):
    """Sew ``g`` onto ``t`` and pick a surface type per face.

    Curve ends are snapped to the average of the ends meeting at each
    vertex. Each face then gets the best primitive fitted to its boundary
    and interior samples when the max residual is within ``fit_threshold``
    times the sample box diagonal and also within ``sew_tol``; otherwise it
    keeps its spline patch. The second bound keeps a substituted surface
    from pulling away from its own boundary by more than the seam allows.
    Gaps in the report are measured before snapping. With ``strict`` a model
    that is not watertight raises :class:`GapExceedsTolerance`.
    """
    g.check_against(t)
    rep = validate(t)
    if not rep.valid:
        raise InvalidTopology(f"topology fails validation: {rep.violations[:3]}")
    ends, vgap, egap = _endpoint_gaps(t, g)
    snapped = g.copy()
    for v, pts in enumerate(ends):
        snapped.verts[v] = np.mean(pts, axis=0)
    for e, (a, b) in enumerate(t.ev):
        snapped.edge_ctrl[e][0] = snapped.verts[a]
        snapped.edge_ctrl[e][-1] = snapped.verts[b]
    fe = derive_face_edges(t)
    surfaces, residuals = [], []
    for f in range(t.num_faces):
        pts = face_points(t, snapped, f, fe)
        diag = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
        got = fit_primitive(pts, min(fit_threshold * diag, sew_tol))
        surfaces.append(got[0] if got else None)
        residuals.append(got[1] if got else None)
    m = BRepModel(t, snapped, surfaces, residuals)
    sgap = _surface_gap(m)
    report = SewingReport(bool(max(vgap, egap, sgap) <= sew_tol), vgap, egap, sgap)
    if strict and not report.watertight:
        raise GapExceedsTolerance(
            f"gaps vertex={vgap:.3g} edge={egap:.3g} surface={sgap:.3g} exceed {sew_tol}"
        )
    return m, report


class Mesh(NamedTuple):
    vertices: np.ndarray  # (n, 3)
    triangles: np.ndarray  # (m, 3) vertex indices
    face_ids: np.ndarray  # (m,) source face of each triangle


def tessellate(m, n_u=8, n_v=8):
    """Parameter-grid triangulation of every face patch, two triangles per cell."""
    g = m.geometry if isinstance(m, BRepModel) else m
    if not isinstance(g, GeometryAttrs):
        raise TypeError("expected a BRepModel or GeometryAttrs")
    i, j = np.meshgrid(np.arange(n_u - 1), np.arange(n_v - 1), indexing="ij")
    a = (i * n_v + j).ravel()
    b = a + n_v
    cell = np.concatenate([np.column_stack([a, b, b + 1]), np.column_stack([a, b + 1, a + 1])])
    verts, tris, ids = [], [], []
    for f, ctrl in enumerate(g.face_ctrl):
        verts.append(sample_surface(ctrl, n_u, n_v).reshape(-1, 3))
        tris.append(cell + f * n_u * n_v)
        ids.append(np.full(len(cell), f))
    return Mesh(np.concatenate(verts), np.concatenate(tris), np.concatenate(ids))


def triangle_areas(mesh):
    p = mesh.vertices[mesh.triangles]
    return 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)


def to_obj(mesh):
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    return "\n".join(lines) + "\n"
