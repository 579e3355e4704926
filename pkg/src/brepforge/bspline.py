"""Clamped cubic curves and bicubic patches.

With knot vector {0,0,0,0,1,1,1,1} a cubic B-spline has no interior knots,
so it is exactly a cubic Bezier segment and is evaluated in the Bernstein
basis. Curves are ``(4, 3)`` control arrays; patches are ``(4, 4, 3)`` with
the first index running along ``u``.
"""

import numpy as np

from .errors import ParamOutOfRange, TooFewSamples


def bernstein(t):
    """Cubic Bernstein basis, shape ``t.shape + (4,)``."""
    t = np.asarray(t, dtype=float)
    s = 1.0 - t
    return np.stack([s**3, 3 * s * s * t, 3 * s * t * t, t**3], axis=-1)


def bernstein_deriv(t):
    t = np.asarray(t, dtype=float)
    s = 1.0 - t
    return np.stack([-3 * s * s, 3 * s * s - 6 * s * t, 6 * s * t - 3 * t * t, 3 * t * t], axis=-1)


def _check_param(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0) or np.any(x > 1.0) or not np.all(np.isfinite(x)):
        raise ParamOutOfRange("parameters must lie in [0, 1]")
    return x


def eval_curve(ctrl, t):
    """Point(s) on the cubic curve at parameter(s) ``t``."""
    t = _check_param(t)
    ctrl = np.asarray(ctrl, dtype=float)
    return bernstein(t) @ ctrl


def eval_surface(ctrl, u, v):
    """Point(s) on the bicubic patch; ``u`` and ``v`` broadcast together."""
    u, v = np.broadcast_arrays(_check_param(u), _check_param(v))
    ctrl = np.asarray(ctrl, dtype=float)
    return np.einsum("...i,...j,ijk->...k", bernstein(u), bernstein(v), ctrl)


def surface_partials(ctrl, u, v):
    """Point, d/du and d/dv at broadcast parameters."""
    bu, bv = bernstein(u), bernstein(v)
    du, dv = bernstein_deriv(u), bernstein_deriv(v)
    p = np.einsum("...i,...j,ijk->...k", bu, bv, ctrl)
    pu = np.einsum("...i,...j,ijk->...k", du, bv, ctrl)
    pv = np.einsum("...i,...j,ijk->...k", bu, dv, ctrl)
    return p, pu, pv


def sample_curve(ctrl, n):
    if n < 2:
        raise TooFewSamples("need at least 2 samples")
    return eval_curve(ctrl, np.linspace(0.0, 1.0, n))


def sample_surface(ctrl, n_u, n_v):
    """``(n_u, n_v, 3)`` grid of surface points, parameter corners included."""
    if n_u < 2 or n_v < 2:
        raise TooFewSamples("need at least 2 samples per direction")
    u = np.linspace(0.0, 1.0, n_u)
    v = np.linspace(0.0, 1.0, n_v)
    return np.einsum("ai,bj,ijk->abk", bernstein(u), bernstein(v), np.asarray(ctrl, dtype=float))


def ctrl_bbox(ctrl):
    """Axis-aligned box of the control points (contains the whole patch)."""
    pts = np.asarray(ctrl, dtype=float).reshape(-1, 3)
    return np.concatenate([pts.min(axis=0), pts.max(axis=0)])


def line_ctrl(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    w = np.array([0.0, 1 / 3, 2 / 3, 1.0])[:, None]
    return (1 - w) * a + w * b


def arc_ctrl(center, r, theta0, theta1, z=0.0):
    """Cubic approximation of a circular arc in a plane parallel to xy."""
    center = np.asarray(center, dtype=float)
    k = 4.0 / 3.0 * np.tan((theta1 - theta0) / 4.0)
    p0 = np.array([np.cos(theta0), np.sin(theta0)])
    p3 = np.array([np.cos(theta1), np.sin(theta1)])
    t0 = np.array([-np.sin(theta0), np.cos(theta0)])
    t1 = np.array([-np.sin(theta1), np.cos(theta1)])
    pts2 = np.array([p0, p0 + k * t0, p3 - k * t1, p3]) * r
    out = np.zeros((4, 3))
    out[:, :2] = pts2 + center[:2]
    out[:, 2] = z
    return out


def coons_ctrl(bottom, right, top, left):
    """Bicubic control net whose boundary is four cubic curves.

    ``bottom``/``top`` run along ``u`` at ``v = 0``/``v = 1``;
    ``left``/``right`` run along ``v`` at ``u = 0``/``u = 1``. Corners must
    agree. Applying the bilinearly blended Coons construction to the control
    points is exact for polynomial boundaries.
    """
    b, r, t, l = (np.asarray(c, dtype=float) for c in (bottom, right, top, left))
    w = np.array([0.0, 1 / 3, 2 / 3, 1.0])
    ui = w[:, None, None]
    vj = w[None, :, None]
    ruled_v = (1 - vj) * b[:, None, :] + vj * t[:, None, :]
    ruled_u = (1 - ui) * l[None, :, :] + ui * r[None, :, :]
    corners = (
        (1 - ui) * (1 - vj) * b[0] + ui * (1 - vj) * b[3] + (1 - ui) * vj * t[0] + ui * vj * t[3]
    )
    return ruled_v + ruled_u - corners


def closest_on_surface(ctrl, pts, grid=12, iters=8):
    """Closest parameters and distances from ``pts`` to a patch.

    Coarse grid seeding followed by clamped Gauss-Newton steps.
    """
    ctrl = np.asarray(ctrl, dtype=float)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    g = np.linspace(0.0, 1.0, grid)
    samples = sample_surface(ctrl, grid, grid).reshape(-1, 3)
    d2 = ((pts[:, None, :] - samples[None, :, :]) ** 2).sum(-1)
    idx = d2.argmin(axis=1)
    u = g[idx // grid].copy()
    v = g[idx % grid].copy()
    for _ in range(iters):
        p, pu, pv = surface_partials(ctrl, u, v)
        r = pts - p
        a11 = (pu * pu).sum(-1)
        a12 = (pu * pv).sum(-1)
        a22 = (pv * pv).sum(-1)
        b1 = (pu * r).sum(-1)
        b2 = (pv * r).sum(-1)
        det = a11 * a22 - a12 * a12
        ok = np.abs(det) > 1e-18
        safe = np.where(ok, det, 1.0)
        du = np.where(ok, (a22 * b1 - a12 * b2) / safe, 0.0)
        dv = np.where(ok, (a11 * b2 - a12 * b1) / safe, 0.0)
        u = np.clip(u + du, 0.0, 1.0)
        v = np.clip(v + dv, 0.0, 1.0)
    p = eval_surface(ctrl, u, v)
    dist = np.linalg.norm(pts - p, axis=-1)
    # keep the grid seed where Newton drifted to a worse point
    worse = dist > np.sqrt(d2.min(axis=1))
    u = np.where(worse, g[idx // grid], u)
    v = np.where(worse, g[idx % grid], v)
    dist = np.where(worse, np.sqrt(d2.min(axis=1)), dist)
    return u, v, dist
