"""Autoregressive topology generation with constraint masking.

Token distributions are pluggable: anything with a
``next_token_probs(prefix, context)`` method returning probabilities over
``context["vocab"]`` works. :class:`CountModel` is the reference baseline.
"""

import copy
import hashlib
from collections import Counter, defaultdict

import numpy as np

from .core import M_E, M_F
from .errors import EmptyCorpus, EmptyTopology, MaxRetriesExceeded
from .serialize import (
    FACE_END,
    LOOP_END,
    EvDecoder,
    opposite,
    seq_length,
    sequence_to_ev,
    sequence_to_fef,
)


# padding token for contexts reaching before the sequence start
BOS = -9


class CountModel:
    """Back-off n-gram model with additive smoothing.

    Counts the next token after every context of up to ``order`` previous
    tokens. With ``positional=True`` the context also includes the position
    in the sequence, which suits fixed-length EF sequences. Sequences may
    carry a conditioning key (``context["cond"]`` at query time); counts are
    kept both with and without it. Queries back off to shorter contexts,
    then drop the key, until a context seen in training is found.
    """

    def __init__(self, order, positional=False, alpha=1.0):
        self.order = order
        self.positional = positional
        self.alpha = alpha
        self.tables = defaultdict(Counter)

    def _key(self, prefix, k, cond=None):
        # prefixes are padded with BOS so early tokens get start-specific contexts
        padded = [BOS] * self.order + list(prefix)
        ctx = tuple(padded[len(padded) - k:]) if k else ()
        return (len(prefix) if self.positional else None, cond, ctx)

    def update(self, seq, cond=None):
        seq = [int(x) for x in seq]
        for i, tok in enumerate(seq):
            prefix = seq[:i]
            for k in range(self.order + 1):
                self.tables[self._key(prefix, k)][tok] += 1
                if cond is not None:
                    self.tables[self._key(prefix, k, cond)][tok] += 1
            if self.positional:
                # position-free unigram for positions never seen in training
                self.tables[(None, None, ())][tok] += 1

    def counts_for(self, prefix, cond=None):
        for c in ([cond] if cond is not None else []) + [None]:
            for k in range(self.order, -1, -1):
                got = self.tables.get(self._key(prefix, k, c))
                if got:
                    return got
        return self.tables.get((None, None, ()), Counter())

    def next_token_probs(self, prefix, context):
        vocab = context["vocab"]
        c = self.counts_for(list(prefix), context.get("cond"))
        counts = np.array([c.get(t, 0) for t in vocab], dtype=float) + self.alpha
        return counts / counts.sum()

    def perplexity(self, seqs, vocab, conds=None):
        nll, n = 0.0, 0
        index = {t: i for i, t in enumerate(vocab)}
        conds = conds or [None] * len(seqs)
        for seq, cond in zip(seqs, conds):
            ctx = {"vocab": list(vocab), "cond": cond}
            for i, tok in enumerate(seq):
                p = self.next_token_probs(seq[:i], ctx)[index[tok]]
                nll -= np.log(p)
                n += 1
        return float(np.exp(nll / max(n, 1)))

    def to_dict(self):
        def order(kv):
            pos, cond, ctx = kv[0]
            return (pos is None, pos or 0, cond or "", ctx)

        return {
            "order": self.order,
            "positional": self.positional,
            "alpha": self.alpha,
            "tables": [
                [pos, cond, list(ctx), sorted([int(t), int(c)] for t, c in cnt.items())]
                for (pos, cond, ctx), cnt in sorted(self.tables.items(), key=order)
            ],
        }

    @classmethod
    def from_dict(cls, d):
        m = cls(d["order"], d["positional"], d["alpha"])
        for pos, cond, ctx, items in d["tables"]:
            m.tables[(pos, cond, tuple(ctx))] = Counter({t: c for t, c in items})
        return m


def fit_count_model(corpus, order, positional=False, alpha=1.0, conds=None):
    """Fit a :class:`CountModel`; ``conds`` optionally gives one key per sequence."""
    corpus = list(corpus)
    if not corpus:
        raise EmptyCorpus("no sequences to fit")
    if order < 1:
        raise ValueError("order must be at least 1")
    m = CountModel(order, positional, alpha)
    for seq, cond in zip(corpus, conds or [None] * len(corpus)):
        m.update(seq, cond)
    return m


def fef_key(fef):
    """Short digest of a FeF matrix, used as the EV model's conditioning key."""
    fef = np.asarray(fef, dtype=np.int64)
    n = len(fef)
    while n and not fef[n - 1].any():
        n -= 1
    tri = fef[:n, :n][np.triu_indices(n, k=1)]
    return hashlib.blake2b(tri.tobytes() + bytes([n]), digest_size=8).hexdigest()


class PointMass:
    """Distribution that always prefers the next token of a fixed sequence."""

    def __init__(self, seq):
        self.seq = [int(x) for x in seq]

    def next_token_probs(self, prefix, context):
        vocab = context["vocab"]
        p = np.zeros(len(vocab))
        i = len(prefix)
        if i < len(self.seq) and self.seq[i] in vocab:
            p[vocab.index(self.seq[i])] = 1.0
        else:
            p[:] = 1.0 / len(vocab)
        return p


class Uniform:
    def next_token_probs(self, prefix, context):
        n = len(context["vocab"])
        return np.full(n, 1.0 / n)


def _draw(rng, p):
    c = np.cumsum(p)
    return int(min(np.searchsorted(c, rng.random() * c[-1], side="right"), len(p) - 1))


# ---------------------------------------------------------------- EF sampling


def fef_is_plausible(fef):
    """Every used face shares at least two edges (a face needs a closed loop)."""
    deg = fef.sum(axis=1)
    return bool((deg >= 2).all())


def sample_ef_sequence(d, rng, m_f=M_F, m_e=M_E, max_retries=50, context=None):
    """Sample a full-length EF sequence, retrying samples with isolated faces."""
    vocab = list(range(m_e + 1))
    ctx = dict(context or {}, vocab=vocab)
    n = seq_length(m_f)
    for _ in range(max_retries + 1):
        seq = []
        for _ in range(n):
            seq.append(vocab[_draw(rng, d.next_token_probs(seq, ctx))])
        try:
            fef = sequence_to_fef(seq, m_f)
        except EmptyTopology:
            continue
        if fef_is_plausible(fef):
            return seq
    raise MaxRetriesExceeded(f"no usable EF sequence after {max_retries} retries")


# ---------------------------------------------------------------- EV sampling


class DecoderState:
    """Decoding state plus a one-step feasibility mask.

    The mask is computed from the union-find state without mutating it: a
    token is feasible exactly when :meth:`EvDecoder.push` would accept it.
    """

    def __init__(self, fef):
        self.dec = EvDecoder(fef)
        self.vocab = list(range(2 * self.dec.num_edges)) + [LOOP_END, FACE_END]

    @property
    def tokens(self):
        return self.dec.tokens

    def determined_edges(self):
        """Edges of the current face already placed by an earlier face."""
        d = self.dec
        if d.done:
            return []
        return sorted(e for e in d.face_edges[d.face] if d.usage[e] > 0 and e not in d.placed)

    def _merge_ok(self, r1, r2, extra=()):
        """Would merging classes r1 and r2 (r2 gaining one end in each face
        of ``extra``) keep both endpoints of every edge apart and every
        per-face degree at most two?"""
        dsu = self.dec.dsu
        if dsu.edges[r1] & dsu.edges[r2]:
            return False
        d1, d2 = dsu.deg[r1], dsu.deg[r2]
        for g in set(d1) | set(d2) | set(extra):
            if d1.get(g, 0) + d2.get(g, 0) + (g in extra) > 2:
                return False
        return True

    def feasible(self, tok):
        d = self.dec
        if d.done:
            return False
        f = d.face
        if tok == FACE_END:
            return not d.loop and len(d.placed) == len(d.face_edges[f])
        if tok == LOOP_END:
            if not d.loop:
                return False
            r1, r2 = d.dsu.find(opposite(d.loop[-1])), d.dsu.find(d.loop[0])
            return r1 == r2 or self._merge_ok(r1, r2)
        if not 0 <= tok < 2 * d.num_edges:
            return False
        j = tok // 2
        if j not in d.face_edge_sets[f] or j in d.placed or d.usage[j] >= 2:
            return False
        add = d.ef[j] if d.usage[j] == 0 else ()
        deg = d.dsu.deg
        ra, rb = d.dsu.find(tok), d.dsu.find(opposite(tok))
        if any(deg[rb].get(g, 0) + 1 > 2 for g in add):
            return False
        if not d.loop:
            return all(deg[ra].get(g, 0) + 1 <= 2 for g in add)
        rp = d.dsu.find(opposite(d.loop[-1]))
        if rp == ra:
            return all(deg[ra].get(g, 0) + 1 <= 2 for g in add)
        if rp == rb:
            return False
        return self._merge_ok(rp, ra, add)

    def mask(self):
        return np.array([self.feasible(t) for t in self.vocab], dtype=bool)

    def push(self, tok):
        self.dec.push(tok)


def sample_ev_sequence(d, fef, rng, max_retries=50, context=None, patience=3):
    """Constraint-checked autoregressive EV decoding.

    Faces are decoded in order. Before every token the candidates that would
    break C1-C3 are masked and the distribution is renormalized over what is
    left; a single remaining candidate is taken directly. A face that hits a
    dead end is restarted from its first token. After ``patience``
    consecutive dead ends on the same face the previous face is restarted
    too, since its loop choices can make the current face unsatisfiable.
    At most ``max_retries`` restarts happen in total.
    """
    state = DecoderState(fef)
    vocab = state.vocab
    snapshots = []  # decoder state at the start of each decoded face
    retries = 0
    strikes = 0
    while not state.dec.done:
        if len(snapshots) <= state.dec.face:
            snapshots.append(copy.deepcopy(state.dec))
        face = state.dec.face
        while True:
            m = state.mask()
            if not m.any():
                break
            if m.sum() == 1:
                tok = vocab[int(np.flatnonzero(m)[0])]
            else:
                ctx = dict(context or {}, vocab=vocab, face=face, determined=state.determined_edges())
                p = np.asarray(d.next_token_probs(state.tokens, ctx), dtype=float) * m
                if p.sum() <= 0:
                    p = m.astype(float)
                tok = vocab[_draw(rng, p)]
            state.push(tok)
            if state.dec.face != face:
                break
        if state.dec.face != face:
            strikes = 0
            continue
        retries += 1
        if retries > max_retries:
            raise MaxRetriesExceeded(f"face {face} has no feasible completion")
        strikes += 1
        back = face
        if strikes >= patience and face > 0:
            back = face - 1
            strikes = 0
        del snapshots[back + 1:]
        state.dec = copy.deepcopy(snapshots[back])
    return list(state.tokens)


def generate_topology(ef_model, ev_model, rng, max_retries=50, m_f=M_F):
    """Sample EF then EV sequences and decode them into a valid Topology."""
    last = None
    for _ in range(max_retries + 1):
        ef_seq = sample_ef_sequence(ef_model, rng, m_f=m_f, max_retries=max_retries)
        fef = sequence_to_fef(ef_seq, m_f)
        try:
            ev_seq = sample_ev_sequence(ev_model, fef, rng, max_retries=max_retries, context={"cond": fef_key(fef)})
        except MaxRetriesExceeded as exc:
            last = exc
            continue
        return sequence_to_ev(ev_seq, fef)
    raise MaxRetriesExceeded(f"topology generation failed: {last}")
