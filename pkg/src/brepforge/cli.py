"""Command-line front end.

Every command reads and writes JSON files, prints a JSON summary on stdout
and draws all randomness from ``--seed``. Module errors exit with status 1
and a ``{"error": ..., "message": ...}`` object.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from .assembly import assemble, tessellate, to_obj
from .core import M_E, M_F
from .corpus import (
    SHAPES,
    TOPOLOGY_SCHEMA,
    CorpusRecord,
    filter_corpus,
    gen_synthetic_corpus,
    load_corpus,
    load_topologies,
    save_corpus,
    save_topologies,
)
from .errors import BadSpec, BrepError
from .metrics import cad_metrics, chamfer_matrix, cov_mmd, jsd, model_hash, sample_points
from .pipeline import (
    child_rngs,
    load_pipeline,
    sample_models,
    sample_topologies,
    save_pipeline,
    train_geometry,
    train_topology_baseline,
)
from .validate import validate

log = logging.getLogger("brepforge")


@dataclass
class RunConfig:
    seed: int = 0
    m_f: int = M_F
    m_e: int = M_E
    T: int = 1000
    beta: tuple = (1e-4, 2e-2)
    fit_threshold: float = 1e-3
    sew_tol: float = 1e-3
    counts: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)


def _emit(obj):
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def _parse_mix(text):
    """``box=2,prism=1`` or a JSON object."""
    if text is None:
        return None
    text = text.strip()
    if text.startswith("{"):
        try:
            mix = json.loads(text)
        except json.JSONDecodeError as exc:
            raise BadSpec(f"--mix: {exc.msg}") from exc
    else:
        mix = {}
        for part in filter(None, text.split(",")):
            k, _, w = part.partition("=")
            try:
                mix[k.strip()] = float(w) if w else 1.0
            except ValueError as exc:
                raise BadSpec(f"--mix: bad weight in {part!r}") from exc
    return mix


def cmd_synth(a):
    spec = {"n_models": a.count, "size_range": (a.size_min, a.size_max)}
    mix = _parse_mix(a.mix)
    if mix:
        spec["mix"] = mix
    records = gen_synthetic_corpus(spec, np.random.default_rng(a.seed))
    kept, rejected = filter_corpus(records, max_faces=a.max_faces)
    save_corpus(kept, a.out)
    _emit({"written": len(kept), "rejected": rejected, "out": a.out})
    return 0


def cmd_train(a):
    records = load_corpus(a.corpus)
    if not records:
        raise BadSpec("corpus is empty")
    cfg = RunConfig(seed=a.seed, T=a.T, beta=(a.beta_start, a.beta_end), paths={"corpus": a.corpus})
    ef, ev = train_topology_baseline(records)
    log.info("topology models fitted on %d records", len(records))
    dens = s = None
    if not a.topology_only:
        epochs = None
        if a.epochs_scale != 1.0:
            from .cascade import STAGE_EPOCHS

            epochs = {k: max(1, int(round(v * a.epochs_scale))) for k, v in STAGE_EPOCHS.items()}
        dens, s = train_geometry(records, np.random.default_rng(a.seed), epochs, cfg.T, *cfg.beta)
    save_pipeline(a.model_out, ef, ev, dens, s)
    _emit({"records": len(records), "cascade": dens is not None, "model": a.model_out})
    return 0


def cmd_gen_topo(a):
    ef, ev, m_f, _, _ = load_pipeline(a.model_in)
    got = sample_topologies(ef, ev, a.count, a.seed, max_retries=a.max_retries, m_f=m_f, jobs=a.jobs)
    ok = [t for t in got if t is not None]
    save_topologies(ok, a.out, failed=len(got) - len(ok))
    _emit({"requested": a.count, "completed": len(ok), "out": a.out})
    return 0


def _read_topologies(path):
    """Topologies from either a topology list or a corpus file."""
    with open(path) as f:
        head = f.read(200)
    if TOPOLOGY_SCHEMA in head:
        return load_topologies(path)
    return [r.topology for r in load_corpus(path, check=False)]


def cmd_gen_geom(a):
    _, _, _, dens, s = load_pipeline(a.model_in)
    if dens is None:
        raise BadSpec(f"{a.model_in} holds no geometry models (trained with --topology-only)")
    tops = _read_topologies(a.topologies)
    out = sample_models(tops, dens, s, a.seed, fit_threshold=a.fit_threshold, sew_tol=a.sew_tol, jobs=a.jobs)
    records, errors = [], []
    for i, r in enumerate(out):
        if "error" in r:
            errors.append({"index": i, **r["error"]})
            continue
        m = r["model"]
        meta = {"source_index": i, "sewing": r["report"].to_dict(), "valid": validate(m.topology).valid}
        meta["surfaces"] = [None if p is None else p.kind for p in m.face_surface]
        records.append(CorpusRecord(f"gen-{i:05d}", m.topology, m.geometry, meta))
    save_corpus(records, a.out)
    tight = sum(rec.metadata["sewing"]["watertight"] and rec.metadata["valid"] for rec in records)
    _emit(
        {
            "topologies": len(tops),
            "assembled": len(records),
            "watertight_valid": tight,
            "rate": tight / len(tops) if tops else 0.0,
            "errors": errors,
            "out": a.out,
        }
    )
    return 0


def cmd_validate(a):
    tops = _read_topologies(a.input)
    reps = [validate(t) for t in tops]
    n_ok = sum(r.valid for r in reps)
    res = {"count": len(reps), "valid": n_ok, "invalid": len(reps) - n_ok}
    if a.details:
        res["reports"] = [r.to_dict() for r in reps]
    else:
        res["invalid_indices"] = [i for i, r in enumerate(reps) if not r.valid]
    _emit(res)
    return 0 if n_ok == len(reps) or not a.strict else 1


def _points(records, n, seed, n_grid):
    return [sample_points(r.geometry, n, rng, n_grid, n_grid) for r, rng in zip(records, child_rngs(seed, len(records)))]


def cmd_eval(a):
    gen = load_corpus(a.gen, check=False)
    ref = load_corpus(a.ref, check=False)
    if not gen or not ref:
        raise BadSpec("eval needs non-empty --gen and --ref corpora")
    pg = _points(gen, a.n_points, a.seed, a.n_grid)
    # the same root seed on both sides: identical files give identical samples
    pr = _points(ref, a.n_points, a.seed, a.n_grid)
    cov, mmd = cov_mmd(pg, pr, chamfer_matrix(pg, pr))
    res = {"COV": cov, "MMD": mmd, "JSD": jsd(pg, pr, a.grid_res)}
    train = load_corpus(a.corpus, check=False) if a.corpus else ref
    hashes = {model_hash(r.topology, r.geometry) for r in train}
    models = []
    for r in gen:
        try:
            models.append(assemble(r.topology, r.geometry, a.fit_threshold, a.sew_tol)[0])
        except BrepError:
            models.append(r)  # counted as invalid
    cad = cad_metrics(models, hashes, a.sew_tol)
    res.update(Novel=cad["novel"], Unique=cad["unique"], Valid=cad["valid"])
    _emit(res)
    return 0


def _mesh_dict(rec, mesh):
    return {
        "id": rec.id,
        "vertices": mesh.vertices.round(12).tolist(),
        "triangles": mesh.triangles.tolist(),
        "face_ids": mesh.face_ids.tolist(),
    }


def cmd_export(a):
    with open(a.input) as f:
        head = f.read(200)
    if TOPOLOGY_SCHEMA in head:
        raise BadSpec("export needs a corpus file with geometry")
    records = load_corpus(a.input, check=False)
    if a.index is not None:
        if not 0 <= a.index < len(records):
            raise BadSpec(f"--index {a.index} out of range for {len(records)} records")
        records = [records[a.index]]
    meshes = [tessellate(r.geometry, a.resolution, a.resolution) for r in records]
    if a.format == "json":
        with open(a.out, "w") as f:
            json.dump({"meshes": [_mesh_dict(r, m) for r, m in zip(records, meshes)]}, f)
        written = [a.out]
    elif len(records) == 1:
        with open(a.out, "w") as f:
            f.write(to_obj(meshes[0]))
        written = [a.out]
    else:
        os.makedirs(a.out, exist_ok=True)
        written = []
        for r, m in zip(records, meshes):
            p = os.path.join(a.out, f"{r.id}.obj")
            with open(p, "w") as f:
                f.write(to_obj(m))
            written.append(p)
    _emit({"exported": len(records), "files": written})
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="brepforge", description="Topology-first B-rep generation toolkit.")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")
    d = RunConfig()

    def seed(sp):
        sp.add_argument("--seed", type=int, default=d.seed, help="root random seed (default %(default)s)")

    def jobs(sp):
        sp.add_argument("--jobs", type=int, default=1, help="worker processes, parallel across models only")

    s = sub.add_parser("synth", help="generate a synthetic corpus of closed solids")
    s.add_argument("--count", "--n", dest="count", type=int, default=100, help="number of models")
    seed(s)
    s.add_argument("--out", required=True, help="output corpus JSON")
    s.add_argument("--max-faces", type=int, default=d.m_f, help="drop models with more faces")
    s.add_argument("--mix", help=f"shape weights, e.g. 'box=2,prism=1' (shapes: {', '.join(SHAPES)})")
    s.add_argument("--size-min", type=float, default=0.5, help="smallest dimension before normalization")
    s.add_argument("--size-max", type=float, default=2.0, help="largest dimension before normalization")
    s.set_defaults(fn=cmd_synth)

    s = sub.add_parser("train", help="fit topology count models and the geometry cascade")
    s.add_argument("--corpus", required=True, help="training corpus JSON")
    s.add_argument("--model-out", required=True, help="output model file")
    seed(s)
    s.add_argument("--T", type=int, default=d.T, help="diffusion steps")
    s.add_argument("--beta-start", type=float, default=d.beta[0], help="first noise variance")
    s.add_argument("--beta-end", type=float, default=d.beta[1], help="last noise variance")
    s.add_argument("--epochs-scale", type=float, default=1.0, help="multiply every stage's epoch count")
    s.add_argument("--topology-only", action="store_true", help="skip the geometry cascade")
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("gen-topo", help="sample topologies from a trained model")
    s.add_argument("--model-in", required=True, help="model file from 'train'")
    s.add_argument("--count", type=int, default=10, help="number of topologies to sample")
    seed(s)
    jobs(s)
    s.add_argument("--max-retries", type=int, default=50, help="restarts allowed per topology")
    s.add_argument("--out", required=True, help="output topology JSON")
    s.set_defaults(fn=cmd_gen_topo)

    s = sub.add_parser("gen-geom", help="generate geometry for topologies and assemble solids")
    s.add_argument("--model-in", required=True, help="model file from 'train'")
    s.add_argument("--topologies", required=True, help="topology JSON from 'gen-topo' or a corpus")
    seed(s)
    jobs(s)
    s.add_argument("--fit-threshold", type=float, default=d.fit_threshold, help="primitive fit threshold, relative to face diagonal")
    s.add_argument("--sew-tol", type=float, default=d.sew_tol, help="absolute seam tolerance")
    s.add_argument("--out", required=True, help="output corpus JSON of assembled models")
    s.set_defaults(fn=cmd_gen_geom)

    s = sub.add_parser("validate", help="check C1-C3 and manifoldness of topologies")
    s.add_argument("input", help="topology JSON or corpus JSON")
    s.add_argument("--details", action="store_true", help="include one report per topology")
    s.add_argument("--strict", action="store_true", help="exit 1 when any topology is invalid")
    s.set_defaults(fn=cmd_validate)

    s = sub.add_parser("eval", help="COV/MMD/JSD and Novel/Unique/Valid of generated models")
    s.add_argument("--gen", required=True, help="generated corpus JSON")
    s.add_argument("--ref", required=True, help="reference corpus JSON")
    s.add_argument("--corpus", help="training corpus for Novel (default: --ref)")
    seed(s)
    s.add_argument("--n-points", type=int, default=1000, help="surface samples per model")
    s.add_argument("--n-grid", type=int, default=8, help="tessellation resolution per face")
    s.add_argument("--grid-res", type=int, default=28, help="voxels per axis for JSD")
    s.add_argument("--fit-threshold", type=float, default=d.fit_threshold, help="primitive fit threshold")
    s.add_argument("--sew-tol", type=float, default=d.sew_tol, help="seam tolerance for Valid")
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("export", help="tessellate corpus models to JSON or OBJ")
    s.add_argument("input", help="corpus JSON")
    s.add_argument("--format", choices=("json", "obj"), default="obj", help="output format")
    s.add_argument("--out", required=True, help="output file (or directory for several OBJ files)")
    s.add_argument("--index", type=int, help="export only this record")
    s.add_argument("--resolution", type=int, default=8, help="samples per patch direction")
    s.set_defaults(fn=cmd_export)
    return p


def main(argv=None):
    level = os.environ.get("BREPFORGE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except BrepError as exc:
        _emit(exc.to_dict())
    except OSError as exc:
        _emit({"error": "IOError", "message": str(exc)})
    return 1


if __name__ == "__main__":
    sys.exit(main())
