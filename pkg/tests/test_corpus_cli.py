import json
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest

from brepforge.assembly import assemble
from brepforge.cli import build_parser, main
from brepforge.corpus import (
    CorpusRecord,
    filter_corpus,
    gen_synthetic_corpus,
    load_corpus,
    load_topologies,
    make_box,
    make_prism,
    save_corpus,
    save_topologies,
)
from brepforge.errors import BadSpec, InvalidRecord, ParseError
from brepforge.validate import validate

from conftest import cube_geometry


def _ngon(n):
    th = np.linspace(0, 2 * np.pi, n, endpoint=False)
    return np.column_stack([np.cos(th), np.sin(th)])


def test_save_load_bit_identical(tmp_path):
    recs = gen_synthetic_corpus({"n_models": 100}, np.random.default_rng(0))
    p = tmp_path / "c.json"
    save_corpus(recs, p)
    back = load_corpus(p)
    assert len(back) == 100
    for a, b in zip(recs, back):
        assert a.id == b.id and a.topology == b.topology
        for x, y in zip(a.geometry.arrays(), b.geometry.arrays()):
            assert x.shape == y.shape and np.array_equal(x, y)
    q = tmp_path / "d.json"
    save_corpus(back, q)
    assert p.read_bytes() == q.read_bytes()


def test_malformed_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"schema": "brepforge.corpus",\n "version": 1,\n "records": [}\n')
    with pytest.raises(ParseError) as err:
        load_corpus(p)
    assert err.value.line == 3


def test_c2_record_rejected(tmp_path, cube):
    d = CorpusRecord("bad", cube, cube_geometry(cube)).to_dict()
    d["topology"]["ev"][2 * 5 : 2 * 5 + 2] = [3, 3]
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"schema": "brepforge.corpus", "version": 1, "records": [d]}))
    with pytest.raises(InvalidRecord, match=r"C2 violated at edge \[5\]"):
        load_corpus(p)


def test_filter_thresholds(cube):
    big = make_prism(_ngon(49), 1.0)
    wide = make_prism(_ngon(31), 1.0)
    recs = [CorpusRecord(str(i), t, g) for i, (t, g) in enumerate([big, wide, (cube, cube_geometry(cube))])]
    assert big[0].num_faces == 51
    kept, rejected = filter_corpus(recs)
    assert [r.id for r in kept] == ["2"]
    assert rejected == {"too_many_faces": 1, "face_too_many_edges": 1}


def test_shape_counts():
    t, _ = make_box(1, 2, 3)
    assert t.counts == (6, 12, 8) and t.euler_characteristic() == 2
    t, _ = make_prism(_ngon(6), 1.0)
    assert t.counts == (8, 18, 12)


def test_synthetic_corpus_bad_spec():
    with pytest.raises(BadSpec):
        gen_synthetic_corpus({"n_models": 0}, 0)
    with pytest.raises(BadSpec):
        gen_synthetic_corpus({"n_models": 3, "mix": {"torus": 1}}, 0)


def _watertight(r):
    return assemble(r.topology, r.geometry)[1].watertight


def test_synthetic_corpus_valid_and_watertight():
    recs = gen_synthetic_corpus({"n_models": 1000}, np.random.default_rng(1))
    assert all(validate(r.topology).valid for r in recs)
    assert len({r.metadata["shape"] for r in recs}) == 6
    with ProcessPoolExecutor(max_workers=min(4, os.cpu_count() or 1)) as ex:
        tight = list(ex.map(_watertight, recs, chunksize=50))
    assert all(tight)


def test_topology_file_round_trip(tmp_path):
    tops = [r.topology for r in gen_synthetic_corpus({"n_models": 20}, np.random.default_rng(2))]
    p = tmp_path / "t.json"
    save_topologies(tops, p)
    assert load_topologies(p) == tops


# command line


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    return code, json.loads(capsys.readouterr().out.strip().splitlines()[-1])


def test_synth_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert _run(capsys, "synth", "--n", 100, "--seed", 7, "--out", a)[0] == 0
    assert _run(capsys, "synth", "--n", 100, "--seed", 7, "--out", b)[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_pipeline_commands(tmp_path, capsys):
    corpus, model = tmp_path / "c.json", tmp_path / "m.json"
    tops, gen = tmp_path / "t.json", tmp_path / "g.json"
    _run(capsys, "synth", "--n", 60, "--seed", 1, "--out", corpus)
    code, out = _run(capsys, "train", "--corpus", corpus, "--model-out", model, "--epochs-scale", 0.02)
    assert code == 0 and out["cascade"]
    code, out = _run(capsys, "gen-topo", "--model-in", model, "--count", 10, "--seed", 3, "--out", tops)
    assert code == 0 and out["completed"] == 10
    code, out = _run(capsys, "validate", tops)
    assert code == 0 and out["valid"] == 10 and out["count"] == 10
    code, out = _run(capsys, "gen-geom", "--model-in", model, "--topologies", tops, "--seed", 4, "--out", gen)
    assert code == 0 and out["topologies"] == 10
    first = gen.read_bytes()
    _run(capsys, "gen-geom", "--model-in", model, "--topologies", tops, "--seed", 4, "--out", gen, "--jobs", 2)
    assert gen.read_bytes() == first
    code, out = _run(capsys, "eval", "--gen", corpus, "--ref", corpus, "--n-points", 200)
    assert code == 0 and out["COV"] == 100.0 and out["MMD"] == 0.0 and out["JSD"] == 0.0
    assert out["Novel"] == 0.0 and out["Valid"] == 100.0
    obj = tmp_path / "m.obj"
    code, out = _run(capsys, "export", corpus, "--index", 0, "--format", "obj", "--out", obj)
    assert code == 0 and obj.read_text().startswith("v ")
    js = tmp_path / "m.json.mesh"
    code, out = _run(capsys, "export", corpus, "--format", "json", "--out", js)
    assert len(json.loads(js.read_text())["meshes"]) == 60


def test_errors_are_json(tmp_path, capsys):
    code, out = _run(capsys, "validate", tmp_path / "missing.json")
    assert code == 1 and out["error"] == "IOError"
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, out = _run(capsys, "validate", bad)
    assert code == 1 and out["error"] == "ParseError"
    code, out = _run(capsys, "synth", "--n", 0, "--out", tmp_path / "x.json")
    assert code == 1 and out["error"] == "BadSpec"


def test_topology_only_model_refuses_geometry(tmp_path, capsys):
    corpus, model = tmp_path / "c.json", tmp_path / "m.json"
    _run(capsys, "synth", "--n", 20, "--seed", 1, "--out", corpus)
    _run(capsys, "train", "--corpus", corpus, "--model-out", model, "--topology-only")
    code, out = _run(capsys, "gen-geom", "--model-in", model, "--topologies", corpus, "--out", tmp_path / "g.json")
    assert code == 1 and out["error"] == "BadSpec"


def test_unknown_flag_rejected():
    with pytest.raises(SystemExit) as err:
        main(["synth", "--out", "x.json", "--bogus"])
    assert err.value.code == 2


def test_help_lists_every_flag():
    p = build_parser()
    sub = p._subparsers._group_actions[0].choices
    assert set(sub) == {"synth", "train", "gen-topo", "gen-geom", "validate", "eval", "export"}
    for name, sp in sub.items():
        text = sp.format_help()
        for action in sp._actions:
            for flag in action.option_strings:
                assert flag in text, (name, flag)
            if action.option_strings and action.dest != "help":
                assert action.help, (name, action.dest)
