"""DDPM machinery: linear schedule, forward noising, ancestral sampling, and a
small numpy MLP noise predictor used as the desk-scale denoiser.

Steps are 1-indexed throughout: ``t`` runs from 1 to ``T``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BadRange, InsufficientData, NonFiniteState, StepOutOfRange


@dataclass(frozen=True)
class DiffusionSchedule:
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    @property
    def T(self):
        return len(self.beta)

    def at(self, t):
        if not 1 <= t <= self.T:
            raise StepOutOfRange(f"step {t} outside 1..{self.T}")
        i = t - 1
        return self.beta[i], self.alpha[i], self.alpha_bar[i]

    def posterior_variance(self, t):
        """(1 - abar_{t-1}) / (1 - abar_t) * beta_t, zero at t = 1."""
        beta, _, ab = self.at(t)
        ab_prev = self.alpha_bar[t - 2] if t > 1 else 1.0
        return (1.0 - ab_prev) / (1.0 - ab) * beta

    def to_dict(self):
        return {"T": self.T, "beta_start": float(self.beta[0]), "beta_end": float(self.beta[-1])}

    @classmethod
    def from_dict(cls, d):
        return linear_schedule(d["T"], d["beta_start"], d["beta_end"])


def linear_schedule(T=1000, beta_start=1e-4, beta_end=2e-2):
    if T < 1:
        raise BadRange("T must be at least 1")
    if not 0 < beta_start < 1 or not 0 < beta_end < 1 or (T > 1 and not beta_start < beta_end):
        raise BadRange("need 0 < beta_start < beta_end < 1")
    if T == 1:
        beta = np.array([beta_start])
    else:
        beta = beta_start + np.arange(T) * (beta_end - beta_start) / (T - 1)
    alpha = 1.0 - beta
    # running product, one factor at a time, so abar_t == abar_{t-1} * alpha_t exactly
    alpha_bar = np.empty(T)
    acc = 1.0
    for i, a in enumerate(alpha):
        acc = acc * a
        alpha_bar[i] = acc
    return DiffusionSchedule(beta, alpha, alpha_bar)


def forward_noise(x0, t, s, rng, eps=None):
    """Sample x_t ~ q(x_t | x_0); returns ``(x_t, eps)``."""
    _, _, ab = s.at(t)
    x0 = np.asarray(x0, dtype=float)
    if eps is None:
        eps = rng.standard_normal(x0.shape)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps, eps


def reverse_sample(denoiser, shape, s, cond, rng, x_T=None):
    """Ancestral DDPM sampling from t = T down to 1 (no noise on the last step)."""
    x = rng.standard_normal(shape) if x_T is None else np.array(x_T, dtype=float)
    for t in range(s.T, 0, -1):
        beta, alpha, ab = s.at(t)
        eps = denoiser.predict_noise(x, t, cond)
        x = (x - beta / np.sqrt(1.0 - ab) * eps) / np.sqrt(alpha)
        if t > 1:
            x = x + np.sqrt(s.posterior_variance(t)) * rng.standard_normal(shape)
        if not np.all(np.isfinite(x)):
            raise NonFiniteState(f"non-finite state at step {t}")
    return x


class PointMassDenoiser:
    """Exact noise predictor for data concentrated at a single array ``c``."""

    def __init__(self, c, s):
        self.c = np.asarray(c, dtype=float)
        self.s = s

    def predict_noise(self, x, t, cond=None):
        _, _, ab = self.s.at(t)
        return (x - np.sqrt(ab) * self.c) / np.sqrt(1.0 - ab)


class GaussianDenoiser:
    """Exact noise predictor for data ~ N(mu, sigma^2 I)."""

    def __init__(self, mu, sigma, s):
        self.mu = np.asarray(mu, dtype=float)
        self.sigma = float(sigma)
        self.s = s

    def predict_noise(self, x, t, cond=None):
        _, _, ab = self.s.at(t)
        var = ab * self.sigma**2 + (1.0 - ab)
        return np.sqrt(1.0 - ab) * (x - np.sqrt(ab) * self.mu) / var


class ZeroDenoiser:
    def predict_noise(self, x, t, cond=None):
        return np.zeros_like(x)


def timestep_embedding(t, dim=64, max_period=10000.0):
    """Sinusoidal features of the step index; ``t`` may be an array."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    half = dim // 2
    freqs = np.exp(-np.log(max_period) * np.arange(half) / half)
    args = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.cos(args), np.sin(args)], axis=1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros((len(t), 1))], axis=1)
    return emb


def _silu(z):
    return z / (1.0 + np.exp(-z))


def _silu_grad(z):
    sg = 1.0 / (1.0 + np.exp(-z))
    return sg * (1.0 + z * (1.0 - sg))


class MLPDenoiser:
    """Feed-forward network on ``[x_t, emb(t), cond]``.

    Rows are independent elements; ``x_t`` is ``(n, x_dim)`` and ``cond``
    ``(n, cond_dim)``. With ``param="eps"`` the network output is the noise
    estimate. With ``param="x0"`` (needs the schedule) it is the clean sample
    and the noise estimate is derived from it; the last reverse step then
    returns the network's x0 estimate directly. With ``param="edm"`` it is
    preconditioned in the style of Karras et al.: writing ``y = x_t / sqrt(abar_t)`` and
    ``sigma^2 = (1 - abar_t) / abar_t``, the clean estimate is
    ``c_skip * y + c_out * F(c_in * y, t, cond)`` and the noise estimate is
    derived from it. Near t = 1 the network error is then scaled by roughly
    sigma, so small-noise steps stay accurate.
    """

    def __init__(
        self, x_dim, cond_dim, hidden=(256, 256), t_dim=64, rng=None, stage=None, param="eps", s=None, sigma_data=1.0
    ):
        if param not in ("eps", "x0", "edm"):
            raise ValueError("param must be 'eps', 'x0' or 'edm'")
        if param != "eps" and s is None:
            raise ValueError(f"{param} parametrization needs the schedule")
        self.x_dim, self.cond_dim, self.t_dim = x_dim, cond_dim, t_dim
        self.hidden = tuple(hidden)
        self.stage = stage
        self.param = param
        self.s = s
        self.sigma_data = float(sigma_data)
        rng = np.random.default_rng(0) if rng is None else rng
        sizes = [x_dim + t_dim + cond_dim, *self.hidden, x_dim]
        self.params = []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            scale = np.sqrt(2.0 / a) if i < len(sizes) - 2 else 0.0
            self.params.append([rng.standard_normal((a, b)) * scale, np.zeros(b)])

    def _precond(self, t):
        ab = self.s.alpha_bar[np.asarray(t) - 1]
        sig2 = (1.0 - ab) / ab
        sd2 = self.sigma_data**2
        c_skip = sd2 / (sig2 + sd2)
        c_out = np.sqrt(sig2 * sd2 / (sig2 + sd2))
        c_in = 1.0 / np.sqrt(sig2 + sd2)
        return ab, c_skip, c_out, c_in

    def _inputs(self, x, t, cond):
        x = np.asarray(x, dtype=float).reshape(-1, self.x_dim)
        n = len(x)
        temb = timestep_embedding(np.broadcast_to(np.asarray(t), (n,)), self.t_dim)
        parts = [x, temb]
        if self.cond_dim:
            parts.append(np.asarray(cond, dtype=float).reshape(n, self.cond_dim))
        return np.concatenate(parts, axis=1)

    def training_pair(self, x_t, t, x0, eps, snr_gamma=5.0):
        """Network input, regression target and per-row loss weight for a
        noised batch; ``t`` holds one step per row.

        Every choice is a reweighting of the noise-prediction error: uniform
        for ``eps``, ``min(SNR, snr_gamma) / SNR`` for ``x0`` and
        ``1 + sigma^2 / sigma_data^2`` for ``edm``.
        """
        if self.param == "eps":
            return x_t, eps, np.ones(len(x_t))
        if self.param == "x0":
            ab = self.s.alpha_bar[np.asarray(t) - 1]
            return x_t, x0, np.minimum(ab / (1.0 - ab), snr_gamma)
        ab, c_skip, c_out, c_in = (np.asarray(c)[:, None] for c in self._precond(t))
        y = x_t / np.sqrt(ab)
        return c_in * y, (x0 - c_skip * y) / c_out, np.ones(len(x_t))

    def predict_noise(self, x, t, cond=None):
        shape = np.shape(x)
        x = np.asarray(x, dtype=float).reshape(-1, self.x_dim)
        if self.param == "eps":
            out, _ = self._forward(self._inputs(x, t, cond))
            return out.reshape(shape)
        if self.param == "x0":
            ab = self.s.alpha_bar[t - 1]
            out, _ = self._forward(self._inputs(x, t, cond))
            return ((x - np.sqrt(ab) * out) / np.sqrt(1.0 - ab)).reshape(shape)
        ab, c_skip, c_out, c_in = self._precond(t)
        y = x / np.sqrt(ab)
        out, _ = self._forward(self._inputs(c_in * y, t, cond))
        x0 = c_skip * y + c_out * out
        return ((x - np.sqrt(ab) * x0) / np.sqrt(1.0 - ab)).reshape(shape)

    def _forward(self, h):
        cache = []
        for i, (w, b) in enumerate(self.params):
            z = h @ w + b
            cache.append((h, z))
            h = _silu(z) if i < len(self.params) - 1 else z
        return h, cache

    def loss_and_grads(self, x, t, cond, target, weight=None):
        """Weighted squared error of the raw network output against ``target``."""
        out, cache = self._forward(self._inputs(x, t, cond))
        diff = out - target
        w = np.ones(len(diff)) if weight is None else np.asarray(weight, dtype=float)
        loss = float((w[:, None] * diff**2).mean())
        g = 2.0 * w[:, None] * diff / diff.size
        grads = []
        for i in range(len(self.params) - 1, -1, -1):
            h, z = cache[i]
            if i < len(self.params) - 1:
                g = g * _silu_grad(z)
            grads.append((h.T @ g, g.sum(axis=0)))
            g = g @ self.params[i][0].T
        return loss, grads[::-1]

    def to_dict(self):
        return {
            "x_dim": self.x_dim,
            "cond_dim": self.cond_dim,
            "t_dim": self.t_dim,
            "hidden": list(self.hidden),
            "stage": self.stage,
            "param": self.param,
            "schedule": self.s.to_dict() if self.s is not None else None,
            "sigma_data": self.sigma_data,
            "params": [[w.tolist(), b.tolist()] for w, b in self.params],
        }

    @classmethod
    def from_dict(cls, d):
        s = DiffusionSchedule.from_dict(d["schedule"]) if d.get("schedule") else None
        m = cls(d["x_dim"], d["cond_dim"], d["hidden"], d["t_dim"], stage=d.get("stage"), param=d.get("param", "eps"), s=s, sigma_data=d.get("sigma_data", 1.0))
        m.params = [[np.array(w, dtype=float).reshape(-1, len(b)), np.array(b, dtype=float)] for w, b in d["params"]]
        return m


class _Adam:
    def __init__(self, params, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.params, self.lr, self.b1, self.b2, self.eps = params, lr, b1, b2, eps
        self.m = [[np.zeros_like(p) for p in layer] for layer in params]
        self.v = [[np.zeros_like(p) for p in layer] for layer in params]
        self.k = 0

    def step(self, grads, lr=None):
        lr = self.lr if lr is None else lr
        self.k += 1
        c1 = 1 - self.b1**self.k
        c2 = 1 - self.b2**self.k
        for layer, glayer, mlayer, vlayer in zip(self.params, grads, self.m, self.v):
            for j, g in enumerate(glayer):
                mlayer[j] = self.b1 * mlayer[j] + (1 - self.b1) * g
                vlayer[j] = self.b2 * vlayer[j] + (1 - self.b2) * g * g
                layer[j] -= lr * (mlayer[j] / c1) / (np.sqrt(vlayer[j] / c2) + self.eps)


def train_toy_denoiser(
    data,
    s,
    epochs,
    rng,
    hidden=(256, 256),
    t_dim=64,
    batch_models=32,
    lr=2e-3,
    stage=None,
    steps_per_epoch=None,
    param="x0",
):
    """Fit an :class:`MLPDenoiser` by noise-prediction regression.

    ``data`` is a list of ``(x0, cond)`` pairs, one per model, with ``x0`` of
    shape ``(n_i, x_dim)`` and ``cond`` of shape ``(n_i, cond_dim)``. Every
    element of a model shares one diffusion step per update. The loss is the
    noise-prediction error under the weighting of
    :meth:`MLPDenoiser.training_pair`.
    Returns the denoiser with the mean loss of each epoch in ``loss_history``.
    """
    data = [(np.asarray(x, dtype=float), np.asarray(c, dtype=float)) for x, c in data]
    if len(data) < 10:
        raise InsufficientData(f"need at least 10 samples, got {len(data)}")
    x_dim = data[0][0].shape[1]
    cond_dim = data[0][1].shape[1] if data[0][1].ndim == 2 else 0
    sigma_data = float(np.concatenate([x for x, _ in data]).std()) or 1.0
    net = MLPDenoiser(x_dim, cond_dim, hidden, t_dim, rng=rng, stage=stage, param=param, s=s, sigma_data=sigma_data)
    opt = _Adam(net.params, lr)
    n_models = len(data)
    if steps_per_epoch is None:
        steps_per_epoch = max(1, int(np.ceil(n_models / batch_models)))
    total = epochs * steps_per_epoch
    history = []
    step = 0
    for _ in range(epochs):
        losses = []
        for _ in range(steps_per_epoch):
            idx = rng.integers(0, n_models, size=min(batch_models, n_models))
            xs, cs, ts, x0s, eps = [], [], [], [], []
            for i in idx:
                x0, c = data[i]
                t = int(rng.integers(1, s.T + 1))
                xt, e = forward_noise(x0, t, s, rng)
                xs.append(xt)
                cs.append(c.reshape(len(x0), cond_dim))
                ts.append(np.full(len(x0), t))
                x0s.append(x0)
                eps.append(e)
            t_rows = np.concatenate(ts)
            inp, target, w = net.training_pair(np.concatenate(xs), t_rows, np.concatenate(x0s), np.concatenate(eps))
            lr_now = lr * 0.5 * (1 + np.cos(np.pi * step / max(total, 1)))
            loss, grads = net.loss_and_grads(inp, t_rows, np.concatenate(cs), target, w)
            opt.step(grads, lr_now)
            losses.append(loss)
            step += 1
        history.append(float(np.mean(losses)))
    net.loss_history = history
    return net
