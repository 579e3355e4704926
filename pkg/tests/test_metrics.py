import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brepforge.assembly import assemble, tessellate
from brepforge.core import BRepModel, build_topology
from brepforge.errors import EmptySet
from brepforge.metrics import cad_metrics, chamfer, cov_mmd, jsd, model_hash, sample_points

from conftest import CUBE_EF, CUBE_EV, cube_geometry


def chamfer_oracle(x, y):
    def one_way(a, b):
        best = []
        for p in a.tolist():
            m = math.inf
            for q in b.tolist():
                d0, d1, d2 = p[0] - q[0], p[1] - q[1], p[2] - q[2]
                m = min(m, d0 * d0 + d1 * d1 + d2 * d2)
            best.append(m)
        return math.fsum(best) / len(best)

    return one_way(x, y) + one_way(y, x)


def cov_mmd_oracle(gen, ref):
    d = [[chamfer_oracle(g, r) for r in ref] for g in gen]
    matched = set()
    for row in d:
        matched.add(min(range(len(ref)), key=lambda j: (row[j], j)))
    mmd = math.fsum(min(d[i][j] for i in range(len(gen))) for j in range(len(ref))) / len(ref)
    return 100.0 * len(matched) / len(ref), mmd


def jsd_oracle(gen, ref, res):
    def hist(sets):
        h = {}
        for pts in sets:
            cells = set()
            for p in pts.tolist():
                cells.add(tuple(min(max(int(math.floor((c + 1.0) / 2.0 * res)), 0), res - 1) for c in p))
            for c in cells:
                h[c] = h.get(c, 0) + 1
        tot = sum(h.values())
        return {k: v / tot for k, v in h.items()}

    p, q = hist(gen), hist(ref)
    out = 0.0
    for k in set(p) | set(q):
        a, b = p.get(k, 0.0), q.get(k, 0.0)
        m = 0.5 * (a + b)
        if a:
            out += 0.5 * a * math.log2(a / m)
        if b:
            out += 0.5 * b * math.log2(b / m)
    return out


def test_face_sample_counts():
    n = 6000
    pts, faces = sample_points(cube_geometry(), n, np.random.default_rng(0), return_faces=True)
    assert pts.shape == (n, 3)
    counts = np.bincount(faces, minlength=6)
    sd = math.sqrt(n * (1 / 6) * (5 / 6))
    assert (np.abs(counts - 1000) <= 3 * sd).all()


def test_samples_lie_on_cube():
    pts = sample_points(cube_geometry(), 2000, np.random.default_rng(1))
    on_face = np.isclose(pts, 0, atol=1e-12) | np.isclose(pts, 1, atol=1e-12)
    assert on_face.any(axis=1).all()
    assert (pts >= -1e-12).all() and (pts <= 1 + 1e-12).all()


def test_samples_inside_triangles():
    rng = np.random.default_rng(2)
    g = cube_geometry()
    g.face_ctrl = g.face_ctrl + rng.normal(scale=0.05, size=g.face_ctrl.shape)
    mesh = tessellate(g, 4, 4)
    pts = sample_points(mesh, 300, rng)
    tri = mesh.vertices[mesh.triangles]
    # every point has barycentric coordinates in [0, 1] for some triangle
    for p in pts:
        a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
        v0, v1, v2 = b - a, c - a, p - a
        d00 = (v0 * v0).sum(1)
        d01 = (v0 * v1).sum(1)
        d11 = (v1 * v1).sum(1)
        d20 = (v2 * v0).sum(1)
        d21 = (v2 * v1).sum(1)
        den = d00 * d11 - d01 * d01
        v = (d11 * d20 - d01 * d21) / den
        w = (d00 * d21 - d01 * d20) / den
        u = 1 - v - w
        recon = u[:, None] * a + v[:, None] * b + w[:, None] * c
        ok = (u >= -1e-9) & (v >= -1e-9) & (w >= -1e-9) & (np.linalg.norm(recon - p, axis=1) < 1e-9)
        assert ok.any()


def test_chamfer_examples():
    x = np.random.default_rng(3).normal(size=(50, 3))
    assert chamfer(x, x) == 0.0
    assert chamfer([[0, 0, 0]], [[1, 0, 0]]) == 2.0
    with pytest.raises(EmptySet):
        chamfer(np.zeros((0, 3)), x)


def test_chamfer_matches_bruteforce():
    rng = np.random.default_rng(4)
    for _ in range(5):
        x, y = rng.normal(size=(100, 3)), rng.normal(size=(100, 3))
        assert chamfer(x, y) == chamfer_oracle(x, y)


def test_chamfer_tree_path_matches_bruteforce():
    rng = np.random.default_rng(5)
    x, y = rng.normal(size=(700, 3)), rng.normal(size=(800, 3))
    assert chamfer(x, y) == chamfer_oracle(x, y)


def test_cov_mmd_identical():
    sets = [np.random.default_rng(i).normal(size=(30, 3)) for i in range(6)]
    assert cov_mmd(sets, sets) == (100.0, 0.0)


def test_cov_mmd_single_far_set():
    rng = np.random.default_rng(6)
    ref = [rng.normal(size=(20, 3)) for _ in range(4)]
    far = rng.normal(size=(20, 3)) + 100
    cov, mmd = cov_mmd([far], ref)
    d = [chamfer(far, r) for r in ref]
    assert cov == 25.0  # one generated set can match a single reference
    assert mmd == math.fsum(d) / 4
    assert cov_mmd([far], ref[:1]) == (100.0, d[0])


def test_cov_mmd_matches_bruteforce():
    rng = np.random.default_rng(7)
    gen = [rng.normal(size=(15, 3)) for _ in range(10)]
    ref = [rng.normal(size=(15, 3)) for _ in range(10)]
    assert cov_mmd(gen, ref) == cov_mmd_oracle(gen, ref)


def test_jsd_examples():
    sets = [np.random.default_rng(8).uniform(-1, 1, (200, 3))]
    assert jsd(sets, sets) == 0.0
    a = [np.full((5, 3), -0.99)]
    b = [np.full((5, 3), 0.99)]
    assert jsd(a, b) == pytest.approx(1.0, abs=1e-15)


def test_jsd_matches_oracle():
    rng = np.random.default_rng(9)
    for res in (4, 28):
        gen = [rng.uniform(-1, 1, (60, 3)) * rng.random() for _ in range(12)]
        ref = [rng.uniform(-1.2, 1.2, (60, 3)) for _ in range(9)]
        assert abs(jsd(gen, ref, res) - jsd_oracle(gen, ref, res)) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_jsd_bounds_and_symmetry(seed):
    rng = np.random.default_rng(seed)
    a = [rng.uniform(-1, 1, (20, 3)) for _ in range(3)]
    b = [rng.uniform(-1, 1, (20, 3)) * 0.5 for _ in range(2)]
    v = jsd(a, b, 8)
    assert -1e-12 <= v <= 1 + 1e-12
    assert v == pytest.approx(jsd(b, a, 8), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_chamfer_symmetric_nonnegative(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(13, 3)), rng.normal(size=(9, 3))
    assert chamfer(x, y) == chamfer(y, x) >= 0


def test_cad_metric_examples(cube):
    m, _ = assemble(cube, cube_geometry(cube))
    h = model_hash(cube, m.geometry)
    assert cad_metrics([m, m], set())["unique"] == 0.0
    assert cad_metrics([m], {h}) == {"novel": 0.0, "unique": 100.0, "valid": 100.0}
    ev = list(CUBE_EV)
    ev[0] = (0, 6)
    broken = BRepModel(build_topology(CUBE_EF, ev, unchecked=True), cube_geometry(cube))
    assert cad_metrics([m, broken], {h})["valid"] == 50.0


def test_model_hash_geometry_sensitive(cube):
    a = cube_geometry(cube)
    b = cube_geometry(cube, scale=0.5)
    assert model_hash(cube, a) != model_hash(cube, b)
    assert model_hash(cube, a) == model_hash(cube, cube_geometry(cube))
