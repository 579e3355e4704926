"""Distribution metrics (COV, MMD, JSD) over surface point samples and CAD
metrics (Novel, Unique, Valid) over assembled models.

Chamfer distance here is the sum of the two mean squared nearest-neighbour
distances. A k-d tree only picks the nearest neighbours; squared distances
are then recomputed coordinate-wise and averaged with ``math.fsum`` so the
result equals a brute-force evaluation exactly.
"""

import hashlib
import math
from collections import Counter

import numpy as np
from scipy.spatial import cKDTree

from .assembly import Mesh, check_watertight, tessellate, triangle_areas
from .core import BRepModel
from .errors import DegenerateSurface, EmptySet
from .validate import topology_hash, validate


def sample_points(m, n, rng, n_u=8, n_v=8, return_faces=False):
    """Area-weighted uniform samples on the tessellated surface of ``m``.

    ``m`` may be a :class:`BRepModel`, :class:`GeometryAttrs` or a ready
    :class:`Mesh`. With ``return_faces`` the source face of each point is
    returned too.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    mesh = m if isinstance(m, Mesh) else tessellate(m, n_u, n_v)
    areas = triangle_areas(mesh)
    total = areas.sum()
    if not total > 0 or not np.isfinite(total):
        raise DegenerateSurface("surface has zero total area")
    tri = rng.choice(len(areas), size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    p = mesh.vertices[mesh.triangles[tri]]
    pts = (1 - r1)[:, None] * p[:, 0] + (r1 * (1 - r2))[:, None] * p[:, 1] + (r1 * r2)[:, None] * p[:, 2]
    if return_faces:
        return pts, mesh.face_ids[tri]
    return pts


def _nearest_sq(x, y):
    """Squared distance from each point of ``x`` to its nearest point in ``y``."""
    _, idx = cKDTree(y).query(x)
    d = x - y[idx]
    return d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2]


def _nearest_sq_exact(x, y):
    # the tree may return an equidistant neighbour whose rounded distance
    # differs in the last bit; confirm against brute force for small sets
    d = x[:, None, :] - y[None, :, :]
    return (d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]).min(axis=1)


def chamfer(x, y):
    """Mean squared nearest distance from x to y plus from y to x."""
    x = np.asarray(x, dtype=float).reshape(-1, 3)
    y = np.asarray(y, dtype=float).reshape(-1, 3)
    if len(x) == 0 or len(y) == 0:
        raise EmptySet("chamfer needs two non-empty point sets")
    small = len(x) * len(y) <= 250_000
    near = _nearest_sq_exact if small else _nearest_sq
    a = near(x, y)
    b = near(y, x)
    return math.fsum(a.tolist()) / len(a) + math.fsum(b.tolist()) / len(b)


def chamfer_matrix(gen, ref):
    return np.array([[chamfer(g, r) for r in ref] for g in gen])


def cov_mmd(gen, ref, dists=None):
    """Coverage (percent) and minimum matching distance.

    COV is the share of reference sets that are the nearest reference of at
    least one generated set; MMD is the mean over reference sets of the
    smallest Chamfer distance to any generated set.
    """
    gen, ref = list(gen), list(ref)
    if not gen or not ref:
        raise EmptySet("cov_mmd needs non-empty generated and reference lists")
    d = chamfer_matrix(gen, ref) if dists is None else np.asarray(dists, dtype=float)
    matched = set(int(j) for j in d.argmin(axis=1))
    cov = 100.0 * len(matched) / len(ref)
    mmd = math.fsum(d.min(axis=0).tolist()) / len(ref)
    return cov, mmd


def occupancy(sets, grid_res=28):
    """Pooled voxel-occupancy histogram of point sets over [-1, 1]^3.

    Each set contributes one count per voxel it touches; points outside the
    cube are clamped to the border voxels.
    """
    if grid_res < 2:
        raise ValueError("grid_res must be at least 2")
    hist = np.zeros(grid_res**3)
    for pts in sets:
        pts = np.asarray(pts, dtype=float).reshape(-1, 3)
        ijk = np.clip(np.floor((pts + 1.0) / 2.0 * grid_res).astype(int), 0, grid_res - 1)
        flat = np.unique((ijk[:, 0] * grid_res + ijk[:, 1]) * grid_res + ijk[:, 2])
        hist[flat] += 1
    return hist


def _kl2(p, q):
    nz = p > 0
    return float(np.sum(p[nz] * np.log2(p[nz] / q[nz])))


def jsd(gen, ref, grid_res=28):
    """Jensen-Shannon divergence in bits between pooled occupancy histograms."""
    gen, ref = list(gen), list(ref)
    if not gen or not ref:
        raise EmptySet("jsd needs non-empty generated and reference lists")
    p = occupancy(gen, grid_res)
    q = occupancy(ref, grid_res)
    if p.sum() == 0 or q.sum() == 0:
        raise EmptySet("no points to histogram")
    p, q = p / p.sum(), q / q.sum()
    m = 0.5 * (p + q)
    return 0.5 * _kl2(p, m) + 0.5 * _kl2(q, m)


def model_hash(t, g):
    """Topology hash combined with vertex coordinates on a 1/64 grid."""
    th = topology_hash(t, check=False).digest
    q = np.round(np.asarray(g.verts, dtype=float) * 64).astype(np.int64)
    q = q[np.lexsort(q.T[::-1])] if len(q) else q
    h = hashlib.blake2b(digest_size=8)
    h.update(int(th).to_bytes(8, "little"))
    h.update(q.tobytes())
    return h.hexdigest()


def cad_metrics(gen, train_hashes, sew_tol=1e-3):
    """Novel, Unique and Valid percentages for assembled models.

    ``gen`` holds :class:`BRepModel` objects; ``train_hashes`` is a set of
    :func:`model_hash` values of the training models. A model is valid when
    its topology passes every check and it is watertight at ``sew_tol``.
    """
    gen = list(gen)
    if not gen:
        raise EmptySet("no generated models")
    hashes = [model_hash(m.topology, m.geometry) for m in gen]
    counts = Counter(hashes)
    train_hashes = set(train_hashes)
    n = len(gen)
    valid = 0
    for m in gen:
        if isinstance(m, BRepModel) and validate(m.topology).valid and check_watertight(m, sew_tol).watertight:
            valid += 1
    return {
        "novel": 100.0 * sum(h not in train_hashes for h in hashes) / n,
        "unique": 100.0 * sum(counts[h] == 1 for h in hashes) / n,
        "valid": 100.0 * valid / n,
    }
