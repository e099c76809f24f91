"""Conditional denoising diffusion over short action sequences.

Forward noising is ``sqrt(abar_k) * A0 + sqrt(1 - abar_k) * eps``. Reverse
steps use ``A_{k-1} = alpha_k (A_k - gamma_k eps_theta) + sigma_k z`` with
``alpha_k = 1/sqrt(a_k)``, ``gamma_k = beta_k / sqrt(1 - abar_k)`` and the
posterior standard deviation for ``sigma_k`` (zero at k = 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx

T_EMB = 32
HIDDEN = (256, 256)


@dataclass(frozen=True)
class NoiseSchedule:
    betas: np.ndarray  # index k-1 holds beta_k

    @property
    def K(self):
        return len(self.betas)

    @property
    def a(self):
        return 1.0 - self.betas

    @property
    def abar(self):
        return np.cumprod(self.a)

    @property
    def abar_prev(self):
        return np.concatenate([[1.0], self.abar[:-1]])

    @property
    def signal(self):
        """sqrt(abar_k): weight on the clean actions."""
        return np.sqrt(self.abar)

    @property
    def noise(self):
        """sqrt(1 - abar_k): weight on the injected noise."""
        return np.sqrt(1.0 - self.abar)

    @property
    def alpha(self):
        return 1.0 / np.sqrt(self.a)

    @property
    def gamma(self):
        return self.betas / np.sqrt(1.0 - self.abar)

    @property
    def sigma(self):
        return np.sqrt((1.0 - self.abar_prev) / (1.0 - self.abar) * self.betas)


def default_betas(K):
    """Linear range rescaled to the step count (1e-4..0.02 at K = 1000)."""
    scale = 1000.0 / K
    return min(1e-4 * scale, 0.5), min(0.02 * scale, 0.999)


def make_schedule(K=50, beta_start=None, beta_end=None):
    if beta_start is None or beta_end is None:
        b0, b1 = default_betas(K)
        beta_start = b0 if beta_start is None else beta_start
        beta_end = b1 if beta_end is None else beta_end
    if K < 1:
        raise ValueError("K must be at least 1")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    betas = np.linspace(beta_start, beta_end, K) if K > 1 else np.array([beta_start])
    return NoiseSchedule(betas)


def add_noise(a0, k, eps, sched):
    """Noised actions at step ``k`` (scalar or per-item array, 1-based)."""
    k = np.asarray(k)
    s = sched.signal[k - 1]
    n = sched.noise[k - 1]
    if k.ndim:
        s = s.reshape((-1,) + (1,) * (np.ndim(a0) - 1))
        n = n.reshape(s.shape)
    return nx.as_tensor(a0) * s + nx.as_tensor(eps) * n


def timestep_embedding(k, dim=T_EMB):
    k = np.atleast_1d(np.asarray(k, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    ang = k[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


class Denoiser:
    """MLP noise predictor over [noisy actions, step embedding, conditioning]."""

    def __init__(self, params, gen, t_pred, d_act, d_ctx, prefix="denoiser"):
        self.params = params
        self.prefix = prefix
        self.t_pred, self.d_act = t_pred, d_act
        sizes = (t_pred * d_act + T_EMB + d_ctx,) + HIDDEN + (t_pred * d_act,)
        self.depth = len(sizes) - 1
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            std = np.sqrt(1.0 / a) if i < self.depth - 1 else 1e-2 * np.sqrt(1.0 / a)
            params.add(f"{prefix}.w{i}", gen.normal(0.0, std, (a, b)))
            params.add(f"{prefix}.b{i}", np.zeros(b))

    def __call__(self, a_k, k, ctx):
        """Predicted noise, same shape as ``a_k`` (B x T_p x d_act)."""
        a_k = nx.as_tensor(a_k)
        b = a_k.shape[0]
        temb = timestep_embedding(np.broadcast_to(k, (b,)))
        h = nx.concat([nx.reshape(a_k, (b, -1)), nx.Tensor(temb), ctx], axis=1)
        p = self.params
        for i in range(self.depth):
            h = h @ p[f"{self.prefix}.w{i}"] + p[f"{self.prefix}.b{i}"]
            if i < self.depth - 1:
                h = nx.elu(h)
        return nx.reshape(h, (b, self.t_pred, self.d_act))


def predict_noise(denoiser, a_k, k, ctx):
    return denoiser(a_k, k, ctx)


def denoise_step(denoiser, a_k, k, ctx, sched, gens=None, eps=None):
    """One reverse step from ``k`` to ``k - 1`` for a batch.

    ``gens`` holds one generator per batch item; fresh noise is drawn only when
    ``sigma_k > 0``. ``eps`` overrides the network's prediction (for testing).
    """
    a_k = np.asarray(a_k.data if isinstance(a_k, nx.Tensor) else a_k)
    if eps is None:
        eps = denoiser(a_k, k, nx.as_tensor(ctx)).data
    out = sched.alpha[k - 1] * (a_k - sched.gamma[k - 1] * np.asarray(eps))
    sig = sched.sigma[k - 1]
    if sig > 0:
        z = np.stack([g.standard_normal(a_k.shape[1:]) for g in gens])
        out = out + sig * z
    return out


def sample_actions(denoiser, ctx, sched, gens, shape):
    """Run the full reverse chain from Gaussian noise; one generator per item.

    Returns normalised actions clamped to [-1, 1], shape (B,) + ``shape``.
    """
    ctx = nx.as_tensor(ctx.data if isinstance(ctx, nx.Tensor) else ctx)
    a = np.stack([g.standard_normal(shape) for g in gens])
    for k in range(sched.K, 0, -1):
        a = denoise_step(denoiser, a, k, ctx, sched, gens)
    return np.clip(a, -1.0, 1.0)


def draw_training_noise(gen, sched, shape, n=None):
    """Diffusion steps (uniform on 1..K) and standard Gaussian noise.

    With ``n`` given, returns ``n`` steps and an ``(n,) + shape`` noise array;
    row ``i`` then depends only on ``gen``'s stream and ``i``.
    """
    if n is None:
        k = int(gen.integers(1, sched.K + 1))
        return k, gen.standard_normal(shape)
    return gen.integers(1, sched.K + 1, size=n), gen.standard_normal((n,) + tuple(shape))


def training_loss(denoiser, ctx, a0, ks, eps, sched):
    """Mean squared error between injected and predicted noise over the batch."""
    noisy = add_noise(a0, ks, eps, sched)
    return nx.mse(denoiser(noisy, ks, ctx), eps)
