"""Least-squares fitting of planes, spheres and cylinders to point sets."""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import DegenerateConfiguration, TooFewPoints

# radius above which a sphere/cylinder is treated as a disguised plane
MAX_RADIUS_FACTOR = 1e3


def _tup(v):
    return tuple(float(x) for x in v)


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class Plane:
    point: tuple
    normal: tuple
    kind = "plane"

    def distance(self, pts):
        return np.abs((np.asarray(pts) - self.point) @ np.asarray(self.normal))

    def project(self, pts):
        pts = np.asarray(pts, dtype=float)
        n = np.asarray(self.normal)
        return pts - np.outer((pts - self.point) @ n, n)

    def to_dict(self):
        return {"kind": self.kind, "point": list(self.point), "normal": list(self.normal)}


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float
    kind = "sphere"

    def distance(self, pts):
        return np.abs(np.linalg.norm(np.asarray(pts) - self.center, axis=-1) - self.radius)

    def project(self, pts):
        d = np.asarray(pts, dtype=float) - self.center
        n = np.linalg.norm(d, axis=-1, keepdims=True)
        return np.asarray(self.center) + d / np.where(n > 0, n, 1.0) * self.radius

    def to_dict(self):
        return {"kind": self.kind, "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Cylinder:
    point: tuple
    axis: tuple
    radius: float
    kind = "cylinder"

    def _radial(self, pts):
        d = np.asarray(pts, dtype=float) - self.point
        a = np.asarray(self.axis)
        return d - np.outer(d @ a, a)

    def distance(self, pts):
        return np.abs(np.linalg.norm(self._radial(pts), axis=-1) - self.radius)

    def project(self, pts):
        pts = np.asarray(pts, dtype=float)
        rad = self._radial(pts)
        n = np.linalg.norm(rad, axis=-1, keepdims=True)
        return pts - rad + rad / np.where(n > 0, n, 1.0) * self.radius

    def to_dict(self):
        return {"kind": self.kind, "point": list(self.point), "axis": list(self.axis), "radius": self.radius}


def primitive_from_dict(d):
    kind = d["kind"]
    if kind == "plane":
        return Plane(tuple(d["point"]), tuple(d["normal"]))
    if kind == "sphere":
        return Sphere(tuple(d["center"]), float(d["radius"]))
    if kind == "cylinder":
        return Cylinder(tuple(d["point"]), tuple(d["axis"]), float(d["radius"]))
    raise ValueError(f"unknown primitive kind {kind!r}")


def fit_plane(pts):
    """Total least squares plane; returns (Plane, max distance)."""
    pts = np.asarray(pts, dtype=float)
    if len(pts) < 4:
        raise TooFewPoints("plane fit needs at least 4 points")
    c = pts.mean(axis=0)
    _, s, vt = np.linalg.svd(pts - c, full_matrices=False)
    if s[1] <= 1e-12 * max(s[0], 1e-300):
        raise DegenerateConfiguration("points are collinear")
    plane = Plane(_tup(c), _tup(_unit(vt[2])))
    return plane, float(plane.distance(pts).max())


def fit_sphere(pts):
    """Algebraic sphere fit from the expansion |x|^2 = 2 c.x + k."""
    pts = np.asarray(pts, dtype=float)
    if len(pts) < 5:
        raise TooFewPoints("sphere fit needs at least 5 points")
    shift = pts.mean(axis=0)
    q = pts - shift
    a = np.column_stack([2 * q, np.ones(len(q))])
    b = (q * q).sum(axis=1)
    sol, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    if rank < 4:
        raise DegenerateConfiguration("points do not determine a sphere")
    c = sol[:3]
    r2 = sol[3] + c @ c
    if r2 <= 0:
        raise DegenerateConfiguration("negative squared radius")
    sph = Sphere(_tup(c + shift), float(np.sqrt(r2)))
    return sph, float(sph.distance(pts).max())


def _circle_fit_2d(xy):
    a = np.column_stack([2 * xy, np.ones(len(xy))])
    b = (xy * xy).sum(axis=1)
    sol, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    if rank < 3:
        return None
    c = sol[:2]
    r2 = sol[2] + c @ c
    if r2 <= 0:
        return None
    return c, float(np.sqrt(r2))


def _perp_basis(d):
    helper = np.array([1.0, 0.0, 0.0]) if abs(d[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = _unit(np.cross(d, helper))
    return e1, np.cross(d, e1)


def _seed_directions(pts, n_seeds=32):
    # Fibonacci hemisphere plus the principal directions of the scatter
    i = np.arange(n_seeds) + 0.5
    z = i / n_seeds
    phi = np.pi * (1 + 5**0.5) * i
    rxy = np.sqrt(1 - z * z)
    dirs = [np.column_stack([rxy * np.cos(phi), rxy * np.sin(phi), z])]
    _, _, vt = np.linalg.svd(pts - pts.mean(axis=0), full_matrices=False)
    dirs.append(vt)
    return np.vstack(dirs)


def _cylinder_for_axis(pts, d):
    e1, e2 = _perp_basis(d)
    xy = np.column_stack([pts @ e1, pts @ e2])
    fit = _circle_fit_2d(xy)
    if fit is None:
        return None
    c, r = fit
    res = np.abs(np.linalg.norm(xy - c, axis=1) - r).max()
    return c[0] * e1 + c[1] * e2, r, res


def fit_cylinder(pts, n_seeds=32):
    """Axis search over seed directions, then Gauss-Newton refinement."""
    pts = np.asarray(pts, dtype=float)
    if len(pts) < 6:
        raise TooFewPoints("cylinder fit needs at least 6 points")
    shift = pts.mean(axis=0)
    q = pts - shift
    best = None
    for d in _seed_directions(q, n_seeds):
        got = _cylinder_for_axis(q, d)
        if got is not None and (best is None or got[2] < best[3]):
            best = (d, got[0], got[1], got[2])
    if best is None:
        raise DegenerateConfiguration("no axis yields a circle")
    d0, p0, r0, _ = best
    e1, e2 = _perp_basis(d0)

    def unpack(x):
        d = _unit(d0 + x[0] * e1 + x[1] * e2)
        return d, p0 + x[2] * e1 + x[3] * e2, x[4]

    def resid(x):
        d, p, r = unpack(x)
        rel = q - p
        rad = rel - np.outer(rel @ d, d)
        return np.linalg.norm(rad, axis=1) - r

    sol = least_squares(resid, np.array([0.0, 0.0, 0.0, 0.0, r0]), method="lm" if len(q) >= 5 else "trf")
    d, p, r = unpack(sol.x)
    # move the axis point to the foot of the centroid for a stable representation
    p = p - (p @ d) * d
    cyl = Cylinder(_tup(p + shift), _tup(d), float(abs(r)))
    return cyl, float(cyl.distance(pts).max())


def default_threshold(pts, rel=1e-3):
    pts = np.asarray(pts, dtype=float)
    return rel * float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))


def fit_primitive(pts, threshold=None):
    """Best-fitting primitive if its max residual is within ``threshold``.

    Returns ``(primitive, residual)`` or ``None``. The default threshold is
    1e-3 of the point set's bounding-box diagonal. Residuals within a relative
    1e-6 of the best count as ties, resolved in the order plane, sphere,
    cylinder.
    """
    pts = np.asarray(pts, dtype=float)
    if len(pts) < 4:
        raise TooFewPoints("need at least 4 points")
    diag = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    if threshold is None:
        threshold = 1e-3 * diag
    fits = []
    for fitter in (fit_plane, fit_sphere, fit_cylinder):
        try:
            prim, res = fitter(pts)
        except (TooFewPoints, DegenerateConfiguration):
            continue
        if getattr(prim, "radius", 0.0) > MAX_RADIUS_FACTOR * max(diag, 1e-12):
            continue
        fits.append((prim, res))
    if not fits:
        raise DegenerateConfiguration("no primitive could be fitted")
    best = min(res for _, res in fits)
    tol = best * 1e-6 + 1e-12 * max(diag, 1.0)
    prim, res = next((p, r) for p, r in fits if r <= best + tol)
    if res <= threshold:
        return prim, res
    return None
