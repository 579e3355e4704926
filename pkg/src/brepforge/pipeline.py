"""End-to-end helpers: train the baselines on a corpus, sample topologies
and geometry, and assemble the results.

Every sampled model draws from its own child seed of one root seed, so the
output does not depend on how work is split across processes.
"""

from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .assembly import assemble
from .cascade import generate_geometry_cascade, train_cascade
from .core import M_F, derive_fef
from .corpus import load_model, save_model
from .diffusion import DiffusionSchedule, MLPDenoiser, linear_schedule
from .errors import BrepError, MaxRetriesExceeded
from .generate import CountModel, fef_key, fit_count_model, generate_topology
from .serialize import topology_to_sequences

# baseline count-model settings; see README for how they were chosen
EF_ORDER = 30
EV_ORDER = 4
ALPHA = 0.01


def train_topology_baseline(records, ef_order=EF_ORDER, ev_order=EV_ORDER, alpha=ALPHA, m_f=M_F):
    """Fit the EF and EV count models on the topologies of ``records``."""
    seqs = [topology_to_sequences(r.topology, m_f) for r in records]
    ef = fit_count_model([a for a, _ in seqs], ef_order, positional=True, alpha=alpha)
    keys = [fef_key(derive_fef(r.topology)) for r in records]
    ev = fit_count_model([b for _, b in seqs], ev_order, alpha=alpha, conds=keys)
    return ef, ev


def save_topology_baseline(path, ef, ev, m_f=M_F):
    save_model(path, "topology-baseline", {"m_f": m_f, "ef": ef.to_dict(), "ev": ev.to_dict()})


def load_topology_baseline(path):
    p = load_model(path, "topology-baseline")
    return CountModel.from_dict(p["ef"]), CountModel.from_dict(p["ev"]), p["m_f"]


def save_pipeline(path, ef, ev, dens, s, m_f=M_F):
    """One model file holding both count models and the cascade denoisers."""
    payload = {
        "topology": {"m_f": m_f, "ef": ef.to_dict(), "ev": ev.to_dict()},
        "cascade": None if dens is None else {"schedule": s.to_dict(), "stages": {k: d.to_dict() for k, d in dens.items()}},
    }
    save_model(path, "pipeline", payload)


def load_pipeline(path):
    """Returns ``(ef, ev, m_f, denoisers, schedule)``; the last two are None
    when the file holds only the topology models."""
    p = load_model(path, "pipeline")
    topo = p["topology"]
    ef, ev = CountModel.from_dict(topo["ef"]), CountModel.from_dict(topo["ev"])
    dens = s = None
    if p.get("cascade"):
        s = DiffusionSchedule.from_dict(p["cascade"]["schedule"])
        dens = {k: MLPDenoiser.from_dict(v) for k, v in p["cascade"]["stages"].items()}
    return ef, ev, topo["m_f"], dens, s


def train_geometry(records, rng, epochs=None, T=1000, beta_start=1e-4, beta_end=2e-2):
    s = linear_schedule(T, beta_start, beta_end)
    dens = train_cascade([(r.topology, r.geometry) for r in records], s, rng, epochs)
    return dens, s


def child_rngs(seed, n):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _map(fn, items, jobs):
    if jobs and jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _one_topology(args):
    ef, ev, rng, max_retries, m_f = args
    try:
        return generate_topology(ef, ev, rng, max_retries=max_retries, m_f=m_f)
    except MaxRetriesExceeded:
        return None


def sample_topologies(ef, ev, n, seed, max_retries=50, m_f=M_F, jobs=1):
    """``n`` topologies (``None`` where generation gave up)."""
    items = [(ef, ev, r, max_retries, m_f) for r in child_rngs(seed, n)]
    return _map(_one_topology, items, jobs)


def _one_model(args):
    t, dens, s, rng, fit_threshold, sew_tol = args
    try:
        g = generate_geometry_cascade(t, dens, s, rng)
        m, rep = assemble(t, g, fit_threshold=fit_threshold, sew_tol=sew_tol)
    except BrepError as exc:
        return {"topology": t, "error": exc.to_dict()}
    return {"topology": t, "geometry": g, "model": m, "report": rep}


def sample_models(topologies, dens, s, seed, fit_threshold=1e-3, sew_tol=1e-3, jobs=1):
    """Generate geometry for each topology and assemble it.

    Returns one dict per topology with ``model`` and ``report`` on success or
    ``error`` when a stage or the assembly failed.
    """
    items = [(t, dens, s, r, fit_threshold, sew_tol) for t, r in zip(topologies, child_rngs(seed, len(topologies)))]
    return _map(_one_model, items, jobs)
