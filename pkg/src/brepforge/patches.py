"""Face patches derived from boundary curves.

Shared by the synthetic corpus builder and the geometry cascade, which
generates faces as offsets from these patches.
"""

import numpy as np

from .bspline import coons_ctrl, sample_curve
from .core import derive_face_edges
from .serialize import face_loops


def oriented(ectrl, e, forward):
    return ectrl[e] if forward else ectrl[e][::-1]


def plane_grid(pts):
    """Evenly spaced 4x4 control grid covering ``pts`` in their best-fit plane."""
    pts = np.asarray(pts, dtype=float)
    c = pts.mean(axis=0)
    _, _, vt = np.linalg.svd(pts - c)
    e1, e2 = vt[0], vt[1]
    # fix singular-vector signs so the grid does not depend on point order
    e1 = e1 * (1.0 if e1[np.argmax(np.abs(e1))] > 0 else -1.0)
    e2 = e2 * (1.0 if e2[np.argmax(np.abs(e2))] > 0 else -1.0)
    a, b = (pts - c) @ e1, (pts - c) @ e2
    w = np.linspace(0.0, 1.0, 4)
    us = a.min() + w * (a.max() - a.min())
    vs = b.min() + w * (b.max() - b.min())
    return c + us[:, None, None] * e1 + vs[None, :, None] * e2


def boundary_patch(t, f, ectrl, loops=None):
    """Patch for face ``f`` built from its boundary edge curves.

    A single loop of four curves gives a Coons patch and a loop of three a
    Coons patch with one collapsed side; anything else gets a plane grid
    through the boundary control points.
    """
    loops = face_loops(t)[f] if loops is None else loops
    if len(loops) == 1 and len(loops[0]) in (3, 4):
        curves = [oriented(ectrl, e, fw) for e, fw in loops[0]]
        if len(curves) == 4:
            c0, c1, c2, c3 = curves
            return coons_ctrl(c0, c1, c2[::-1], c3[::-1])
        c0, c1, c2 = curves
        apex = np.repeat(c1[-1][None, :], 4, axis=0)
        return coons_ctrl(c0, c1, apex, c2[::-1])
    return plane_grid(np.concatenate([ectrl[e] for loop in loops for e, _ in loop]))


def boundary_patches(t, ectrl):
    loops = face_loops(t)
    return np.array([boundary_patch(t, f, ectrl, loops[f]) for f in range(t.num_faces)])


def boundary_box(t, f, ectrl, n=33):
    """Axis-aligned box of densely sampled boundary curves of face ``f``."""
    pts = np.concatenate([sample_curve(ectrl[e], n) for e in derive_face_edges(t)[f]])
    return np.concatenate([pts.min(axis=0), pts.max(axis=0)])
