"""Bayesian neural network surrogate trained by Bayes-by-backprop.

Every weight and bias is a factorized Gaussian ``N(mu, softplus(rho)^2)``.
A forward pass realizes the parameters as ``w = mu + softplus(rho) * eps``
for caller-supplied standard-normal noise ``eps``, so a pass is a pure
function of ``(net, input, noise)``. Gradients are written out by hand: the
likelihood gradient flows through ``w`` (``dw/dmu = 1``,
``dw/drho = eps * sigmoid(rho)``) and the KL gradient is added in closed form.

Two output heads share a tanh backbone of Bayesian linear layers:

* ``point`` mode takes ``(geometry, frequency)`` and predicts one dB value
  per channel through a small fully connected head;
* ``vector`` mode takes the geometry alone and emits the whole spectrum
  ``(grid count, channels)`` through two 1-D transposed convolutions.

All arrays are float64 NumPy arrays.
"""

from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.special import expit

from .core import Dataset, DesignSpace, FrequencyGrid, rng_stream

logger = logging.getLogger(__name__)


class TrainingError(FloatingPointError):
    """Loss or gradient became non-finite; the message names the layer."""


def softplus(x):
    return np.logaddexp(0.0, x)


def kl_gaussian(mu, sigma, prior_mu: float, prior_sigma: float):
    """Elementwise ``KL(N(mu, sigma^2) || N(prior_mu, prior_sigma^2))``."""
    return (np.log(prior_sigma / sigma)
            + (sigma ** 2 + (mu - prior_mu) ** 2) / (2.0 * prior_sigma ** 2) - 0.5)


@dataclass
class VariationalParam:
    mu: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.rho = np.asarray(self.rho, dtype=float)
        if self.mu.shape != self.rho.shape:
            raise ValueError("mu and rho must have the same shape")

    @property
    def sigma(self) -> np.ndarray:
        return softplus(self.rho)

    @property
    def shape(self):
        return self.mu.shape

    def realize(self, eps) -> np.ndarray:
        if eps is None:
            return self.mu
        return self.mu + softplus(self.rho) * eps

    def kl(self, prior_mu: float, prior_sigma: float) -> float:
        return float(np.sum(kl_gaussian(self.mu, self.sigma, prior_mu, prior_sigma)))

    def kl_grads(self, prior_mu: float, prior_sigma: float):
        sig = self.sigma
        g_mu = (self.mu - prior_mu) / prior_sigma ** 2
        g_rho = (-1.0 / sig + sig / prior_sigma ** 2) * expit(self.rho)
        return g_mu, g_rho


def _act(z, name):
    return np.tanh(z) if name == "tanh" else z


def _act_grad(a, g, name):
    return g * (1.0 - a * a) if name == "tanh" else g


class BayesLinear:
    def __init__(self, d_in: int, d_out: int, activation: str, rng, init_rho: float):
        std = 1.0 / math.sqrt(d_in)
        self.weight = VariationalParam(rng.normal(0.0, std, (d_out, d_in)), np.full((d_out, d_in), init_rho))
        self.bias = VariationalParam(np.zeros(d_out), np.full(d_out, init_rho))
        self.activation = activation

    @property
    def params(self):
        return [self.weight, self.bias]

    def forward(self, x, noise):
        W = self.weight.realize(noise[0])
        b = self.bias.realize(noise[1])
        a = _act(x @ W.T + b, self.activation)
        return a, (x, W, a)

    def backward(self, cache, g):
        x, W, a = cache
        gz = _act_grad(a, g, self.activation)
        return gz @ W, [gz.T @ x, gz.sum(axis=0)]

    def describe(self):
        return {"type": "linear", "activation": self.activation}


class BayesTConv1D:
    """1-D transposed convolution; kernel shape (c_in, c_out, k)."""

    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int, output_padding: int,
                 activation: str, rng, init_rho: float):
        if not 0 <= output_padding < stride:
            raise ValueError("output padding must be in [0, stride)")
        std = 1.0 / math.sqrt(c_in * kernel / stride)
        self.kernel = VariationalParam(rng.normal(0.0, std, (c_in, c_out, kernel)),
                                       np.full((c_in, c_out, kernel), init_rho))
        self.bias = VariationalParam(np.zeros(c_out), np.full(c_out, init_rho))
        self.stride = stride
        self.output_padding = output_padding
        self.activation = activation

    @property
    def params(self):
        return [self.kernel, self.bias]

    def output_length(self, n_in: int) -> int:
        return (n_in - 1) * self.stride + self.kernel.shape[2] + self.output_padding

    def forward(self, x, noise):
        K = self.kernel.realize(noise[0])
        b = self.bias.realize(noise[1])
        B, ci, n = x.shape
        k = K.shape[2]
        Z = np.einsum("bit,iok->botk", x, K, optimize=True)
        y = np.zeros((B, K.shape[1], self.output_length(n)))
        span = self.stride * (n - 1) + 1
        for j in range(k):
            y[:, :, j:j + span:self.stride] += Z[..., j]
        a = _act(y + b[None, :, None], self.activation)
        return a, (x, K, a)

    def backward(self, cache, g):
        x, K, a = cache
        gy = _act_grad(a, g, self.activation)
        n = x.shape[2]
        k = K.shape[2]
        span = self.stride * (n - 1) + 1
        gZ = np.stack([gy[:, :, j:j + span:self.stride] for j in range(k)], axis=-1)
        gK = np.einsum("bit,botk->iok", x, gZ, optimize=True)
        gx = np.einsum("botk,iok->bit", gZ, K, optimize=True)
        return gx, [gK, gy.sum(axis=(0, 2))]

    def describe(self):
        return {"type": "tconv1d", "activation": self.activation, "stride": self.stride,
                "output_padding": self.output_padding}


def tconv_plan(length: int, layers: int = 2, kernel: int = 4, stride: int = 2) -> tuple[int, list]:
    """Seed length and per-layer output paddings so ``layers`` transposed convs reach ``length``."""
    pads = []
    n = length
    for _ in range(layers):
        op = (n - kernel) % stride
        prev = (n - kernel - op) // stride + 1
        if prev < 1:
            raise ValueError(f"grid of {length} points is too short for {layers} transposed convolutions")
        pads.append(op)
        n = prev
    return n, pads[::-1]


@dataclass(frozen=True)
class NetConfig:
    """Architecture, prior, likelihood and training schedule.

    ``head`` holds the hidden widths of the fully connected head in point
    mode, and ``(seed channels, middle channels)`` of the convolutional head
    in vector mode.
    """

    mode: str = "point"
    geometry_dims: int = 1
    channels: int = 4
    grid_count: int = 0
    backbone: tuple = (64, 64, 64, 64)
    head: tuple = (64,)
    kernel: int = 4
    stride: int = 2
    prior_mu: float = 0.0
    prior_sigma: float = 1.0
    noise_sigma: float = 0.1
    kl_weight: float = 1.0
    init_rho: float = -5.0
    deterministic: bool = False
    optimizer: str = "gd"
    learning_rate: float = 3e-5
    epochs: int = 100
    batch_size: int = 64
    mc_samples: int = 1
    ensemble_size: int = 32
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "backbone", tuple(int(w) for w in self.backbone))
        object.__setattr__(self, "head", tuple(int(w) for w in self.head))
        if self.mode not in ("point", "vector"):
            raise ValueError("mode must be 'point' or 'vector'")
        if self.optimizer not in ("gd", "adam"):
            raise ValueError("optimizer must be 'gd' or 'adam'")
        if self.mode == "vector":
            if self.geometry_dims < 1:
                raise ValueError("vector mode needs at least one geometry input")
            if self.grid_count < 1 or len(self.head) != 2:
                raise ValueError("vector mode needs grid_count and head=(seed channels, middle channels)")
        if self.prior_sigma <= 0 or self.noise_sigma <= 0:
            raise ValueError("prior and noise sigmas must be positive")

    @property
    def input_dim(self) -> int:
        return self.geometry_dims + (1 if self.mode == "point" else 0)

    @property
    def output_shape(self) -> tuple:
        return (self.channels,) if self.mode == "point" else (self.grid_count, self.channels)


@dataclass
class Normalization:
    """Input bounds (mapped to [-1, 1]) and frozen per-channel output z-score."""

    in_lo: np.ndarray
    in_hi: np.ndarray
    f_lo: float
    f_hi: float
    out_mean: np.ndarray | None = None
    out_std: np.ndarray | None = None

    @property
    def frozen(self) -> bool:
        return self.out_mean is not None

    def inputs(self, geometry, freq=None) -> np.ndarray:
        g = np.atleast_2d(np.asarray(geometry, dtype=float))
        span = np.where(self.in_hi > self.in_lo, self.in_hi - self.in_lo, 1.0)
        gn = np.where(self.in_hi > self.in_lo, 2.0 * (g - self.in_lo) / span - 1.0, 0.0)
        if freq is None:
            return gn
        fspan = self.f_hi - self.f_lo if self.f_hi > self.f_lo else 1.0
        fn = 2.0 * (np.asarray(freq, dtype=float) - self.f_lo) / fspan - 1.0
        return np.concatenate([gn, fn.reshape(-1, 1)], axis=1)

    def outputs(self, y):
        return (y - self.out_mean) / self.out_std

    def denormalize(self, y):
        return y * self.out_std + self.out_mean


class BayesNet:
    """Backbone plus head; see the module docstring for the two modes."""

    def __init__(self, config: NetConfig, space: DesignSpace | None = None,
                 band: tuple | None = None, grid: FrequencyGrid | None = None):
        if space is not None and space.dims != config.geometry_dims:
            raise ValueError("design space dimension does not match geometry_dims")
        if config.mode == "vector":
            if grid is None or grid.count != config.grid_count:
                raise ValueError("vector mode needs the output grid")
        self.config = config
        self.grid = grid
        lo = space.lower if space is not None else -np.ones(config.geometry_dims)
        hi = space.upper if space is not None else np.ones(config.geometry_dims)
        if band is None:
            band = (grid.min, grid.max) if grid is not None else (0.0, 1.0)
        self.norm = Normalization(lo, hi, float(band[0]), float(band[1]))
        rng = rng_stream(config.seed, "bnn-init")
        ir = config.init_rho
        dims = [config.input_dim, *config.backbone]
        self.backbone = [BayesLinear(a, b, "tanh", rng, ir) for a, b in zip(dims[:-1], dims[1:])]
        width = dims[-1]
        if config.mode == "point":
            hd = [width, *config.head]
            self.head = [BayesLinear(a, b, "tanh", rng, ir) for a, b in zip(hd[:-1], hd[1:])]
            self.head.append(BayesLinear(hd[-1], config.channels, "linear", rng, ir))
            self.seed_shape = None
        else:
            c0, c1 = config.head
            n0, pads = tconv_plan(config.grid_count, 2, config.kernel, config.stride)
            self.seed_shape = (c0, n0)
            self.head = [
                BayesLinear(width, c0 * n0, "tanh", rng, ir),
                BayesTConv1D(c0, c1, config.kernel, config.stride, pads[0], "tanh", rng, ir),
                BayesTConv1D(c1, config.channels, config.kernel, config.stride, pads[1], "linear", rng, ir),
            ]
        self.trained_epochs = 0

    # -- structure ------------------------------------------------------
    @property
    def layers(self) -> list:
        return self.backbone + self.head

    @property
    def params(self) -> list[VariationalParam]:
        return [p for layer in self.layers for p in layer.params]

    @property
    def n_params(self) -> int:
        return sum(p.mu.size for p in self.params)

    def copy(self) -> "BayesNet":
        return copy.deepcopy(self)

    def layer_names(self) -> list[str]:
        names = [f"backbone[{i}]" for i in range(len(self.backbone))]
        return names + [f"head[{i}]" for i in range(len(self.head))]

    # -- noise ----------------------------------------------------------
    def draw_noise(self, rng) -> list:
        if self.config.deterministic:
            return self.zero_noise()
        return [rng.standard_normal(p.shape) for p in self.params]

    def zero_noise(self) -> list:
        return [None] * len(self.params)

    # -- forward / backward --------------------------------------------
    def _forward(self, x, noise):
        caches = []
        a = x
        k = 0
        for i, layer in enumerate(self.layers):
            if self.seed_shape is not None and i == len(self.backbone) + 1:
                a = a.reshape(a.shape[0], *self.seed_shape)
            a, c = layer.forward(a, noise[k:k + 2])
            caches.append(c)
            k += 2
        if self.seed_shape is not None:
            a = np.swapaxes(a, 1, 2)  # (B, grid, channels)
        return a, caches

    def forward(self, x, noise=None) -> np.ndarray:
        """Normalized outputs for normalized inputs ``x`` (B, input_dim)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.config.input_dim:
            raise ValueError(f"input dimension {x.shape[1]} != {self.config.input_dim}")
        if noise is None:
            noise = self.zero_noise()
        return self._forward(x, noise)[0]

    def _backward(self, caches, g):
        if self.seed_shape is not None:
            g = np.swapaxes(g, 1, 2)
        grads = [None] * (2 * len(self.layers))
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            g, gw = layer.backward(caches[i], g)
            grads[2 * i:2 * i + 2] = gw
            if self.seed_shape is not None and i == len(self.backbone) + 1:
                g = g.reshape(g.shape[0], -1)
        return grads

    # -- data -----------------------------------------------------------
    def encode(self, data: Dataset):
        """Normalized (inputs, raw dB targets, mask) arrays for a dataset."""
        if self.config.mode == "point":
            xs, ys = [], []
            for r in data.records:
                g = np.repeat(r.point.as_array()[None, :], r.grid.count, axis=0)
                xs.append(self.norm.inputs(g, r.grid.points))
                ys.append(r.response.values)
            if not xs:
                return np.zeros((0, self.config.input_dim)), np.zeros((0, self.config.channels)), None
            return np.concatenate(xs), np.concatenate(ys), None
        n, c = self.config.grid_count, self.config.channels
        xs = np.zeros((len(data), self.config.geometry_dims))
        ys = np.zeros((len(data), n, c))
        mask = np.zeros((len(data), n), dtype=bool)
        for k, r in enumerate(data.records):
            idx = self.grid.index_of(r.grid)
            xs[k] = r.point.as_array()
            ys[k, idx] = r.response.values
            mask[k, idx] = True
        return self.norm.inputs(xs), ys, mask

    def freeze_output_stats(self, y, mask=None):
        if self.norm.frozen:
            return
        flat = y[mask] if mask is not None else y.reshape(-1, self.config.channels)
        std = flat.std(axis=0)
        self.norm.out_mean = flat.mean(axis=0)
        self.norm.out_std = np.where(std > 1e-12, std, 1.0)


def forward_sample(net: BayesNet, x, noise) -> np.ndarray:
    return net.forward(x, noise)


# ----------------------------------------------------------------------------
# Loss and gradients
# ----------------------------------------------------------------------------

def _nll(pred, y, mask, sigma_n):
    r = pred - y
    cell = 0.5 * (r / sigma_n) ** 2 + 0.5 * math.log(2.0 * math.pi * sigma_n ** 2)
    if mask is not None:
        cell = cell * mask[..., None]
    return float(np.sum(cell)), r / sigma_n ** 2 * (mask[..., None] if mask is not None else 1.0)


def loss_and_grads(net: BayesNet, x, y, noises: Sequence[list], mask=None, n_batches: int = 1,
                   need_grad: bool = True):
    """Negative ELBO of one minibatch for fixed noise draws.

    ``y`` is already output-normalized. Returns ``(loss, terms, grads)`` where
    grads is a list of ``(g_mu, g_rho)`` per variational parameter (``None``
    if ``need_grad`` is false).
    """
    cfg = net.config
    params = net.params
    nll = 0.0
    grads = [[np.zeros_like(p.mu), np.zeros_like(p.rho)] for p in params] if need_grad else None
    inv_m = 1.0 / len(noises)
    for noise in noises:
        pred, caches = net._forward(x, noise)
        val, g = _nll(pred, y, mask, cfg.noise_sigma)
        nll += val * inv_m
        if need_grad:
            gws = net._backward(caches, g * inv_m)
            for k, (p, gw) in enumerate(zip(params, gws)):
                grads[k][0] += gw
                if not cfg.deterministic:
                    grads[k][1] += gw * noise[k] * expit(p.rho)
    kl = 0.0
    if not cfg.deterministic:
        scale = cfg.kl_weight / n_batches
        for k, p in enumerate(params):
            kl += p.kl(cfg.prior_mu, cfg.prior_sigma)
            if need_grad:
                gm, gr = p.kl_grads(cfg.prior_mu, cfg.prior_sigma)
                grads[k][0] += scale * gm
                grads[k][1] += scale * gr
        kl_term = kl * scale
    else:
        kl_term = 0.0
    loss = nll + kl_term
    terms = {"nll": nll, "kl": kl, "kl_term": kl_term, "loss": loss}
    return loss, terms, grads


def elbo_loss(net: BayesNet, x, y, rng, mc_samples: int | None = None, n_batches: int = 1, mask=None):
    """Monte-Carlo negative ELBO with the per-term breakdown; ``y`` is normalized."""
    m = mc_samples or net.config.mc_samples
    noises = [net.draw_noise(rng) for _ in range(m)]
    loss, terms, _ = loss_and_grads(net, x, y, noises, mask, n_batches, need_grad=False)
    return loss, terms


class GradientDescent:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, net: BayesNet, grads, update_rho: bool = True):
        for p, (gm, gr) in zip(net.params, grads):
            p.mu -= self.lr * gm
            if update_rho:
                p.rho -= self.lr * gr


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, net: BayesNet, grads, update_rho: bool = True):
        if self.m is None:
            self.m = [[np.zeros_like(g) for g in pair] for pair in grads]
            self.v = [[np.zeros_like(g) for g in pair] for pair in grads]
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, gpair, mpair, vpair in zip(net.params, grads, self.m, self.v):
            targets = (p.mu, p.rho) if update_rho else (p.mu,)
            for arr, g, m, v in zip(targets, gpair, mpair, vpair):
                m *= self.b1
                m += (1 - self.b1) * g
                v *= self.b2
                v += (1 - self.b2) * g * g
                arr -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(config: NetConfig, learning_rate: float | None = None):
    lr = config.learning_rate if learning_rate is None else learning_rate
    return Adam(lr) if config.optimizer == "adam" else GradientDescent(lr)


def _check_finite(net: BayesNet, loss, grads):
    names = net.layer_names()
    bad_param = next((names[k // 2] for k, p in enumerate(net.params)
                      if not (np.all(np.isfinite(p.mu)) and np.all(np.isfinite(p.rho)))), None)
    bad_grad = next((names[k // 2] for k, (gm, gr) in enumerate(grads)
                     if not (np.all(np.isfinite(gm)) and np.all(np.isfinite(gr)))), None)
    if not np.isfinite(loss):
        where = bad_param or bad_grad
        raise TrainingError("non-finite loss" + (f" (parameters of {where})" if where else ""))
    if bad_grad:
        raise TrainingError(f"non-finite gradient in {bad_grad}")


def train_step(net: BayesNet, x, y, rng, mask=None, n_batches: int = 1, optimizer=None, inplace: bool = False):
    """One reparameterized gradient step on the negative ELBO; returns ``(net, loss)``.

    Unless ``inplace`` is set the input net is left untouched and an updated
    copy is returned. Plain gradient descent with the configured learning
    rate is used when no optimizer is given.
    """
    if not inplace:
        net = net.copy()
    cfg = net.config
    noises = [net.draw_noise(rng) for _ in range(cfg.mc_samples)]
    loss, _, grads = loss_and_grads(net, x, y, noises, mask, n_batches)
    _check_finite(net, loss, grads)
    (optimizer or make_optimizer(cfg)).step(net, grads, update_rho=not cfg.deterministic)
    return net, loss


# ----------------------------------------------------------------------------
# Training loop and prediction
# ----------------------------------------------------------------------------

@dataclass
class FitHistory:
    loss: list = field(default_factory=list)
    val_rmse: list = field(default_factory=list)


def fit(net: BayesNet, train: Dataset, val: Dataset | None = None, epochs: int | None = None,
        batch_size: int | None = None, learning_rate: float | None = None, seed: int | None = None,
        label: str = "bnn-fit") -> tuple[BayesNet, FitHistory]:
    """Train a copy of ``net`` on ``train`` (warm start from its current parameters).

    Output statistics are frozen from the first data a net is fitted on.
    Minibatches are reshuffled every epoch from the ``(seed, label)`` stream.
    Zero epochs returns the net unchanged.
    """
    cfg = net.config
    epochs = cfg.epochs if epochs is None else epochs
    hist = FitHistory()
    if epochs <= 0 or len(train) == 0:
        return net, hist
    net = net.copy()
    x, y_raw, mask = net.encode(train)
    net.freeze_output_stats(y_raw, mask)
    y = net.norm.outputs(y_raw)
    bs = batch_size or cfg.batch_size
    n = x.shape[0]
    n_batches = max(1, math.ceil(n / bs))
    rng = rng_stream(cfg.seed if seed is None else seed, label)
    opt = make_optimizer(cfg, learning_rate)
    xv = yv = mv = None
    if val is not None and len(val):
        xv, yv, mv = net.encode(val)
    for _ in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for b in range(n_batches):
            idx = order[b * bs:(b + 1) * bs]
            _, loss = train_step(net, x[idx], y[idx], rng, None if mask is None else mask[idx],
                                 n_batches, opt, inplace=True)
            total += loss
        hist.loss.append(total)
        if xv is not None:
            pred = net.norm.denormalize(net.forward(xv))
            err = (pred - yv) if mv is None else (pred - yv)[mv]
            hist.val_rmse.append(float(np.sqrt(np.mean(err ** 2))))
    net.trained_epochs += epochs
    return net, hist


def ensemble_predict(net: BayesNet, x, M: int | None = None, rng=None, noises=None):
    """``M`` posterior samples of the normalized output and their mean.

    The noise blocks are drawn up front (or passed in) so sample ``m`` is
    the same network realization however the work is split.
    """
    if noises is None:
        M = M or net.config.ensemble_size
        if M < 2:
            raise ValueError("ensemble size must be >= 2")
        rng = rng if rng is not None else rng_stream(net.config.seed, "ensemble")
        noises = [net.draw_noise(rng) for _ in range(M)]
    samples = np.stack([net.forward(x, nz) for nz in noises])
    return samples.mean(axis=0), samples


def predict_db(net: BayesNet, geometry, grid: FrequencyGrid, noise=None) -> np.ndarray:
    """dB prediction of shape (n_geometries, grid count, channels) for one realization."""
    g = np.atleast_2d(np.asarray(geometry, dtype=float))
    if net.config.mode == "point":
        gg = np.repeat(g, grid.count, axis=0)
        ff = np.tile(grid.points, g.shape[0])
        out = net.forward(net.norm.inputs(gg, ff), noise)
        out = out.reshape(g.shape[0], grid.count, -1)
    else:
        idx = net.grid.index_of(grid)
        out = net.forward(net.norm.inputs(g), noise)[:, idx, :]
    return net.norm.denormalize(out)


# ----------------------------------------------------------------------------
# Checkpoints
# ----------------------------------------------------------------------------

def _arr(a) -> dict:
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": [float(f"{v:.17g}") for v in a.ravel()]}


def _unarr(d) -> np.ndarray:
    return np.array(d["data"], dtype=float).reshape(d["shape"])


def dumps(net: BayesNet) -> str:
    """JSON checkpoint; values are written with 17 significant digits and restore exactly."""
    n = net.norm
    doc = {
        "config": asdict(net.config),
        "grid": None if net.grid is None else _arr(net.grid.points),
        "normalization": {
            "in_lo": _arr(n.in_lo), "in_hi": _arr(n.in_hi), "f_lo": n.f_lo, "f_hi": n.f_hi,
            "out_mean": None if n.out_mean is None else _arr(n.out_mean),
            "out_std": None if n.out_std is None else _arr(n.out_std),
        },
        "trained_epochs": net.trained_epochs,
        "layers": [
            {**layer.describe(), "params": [{"mu": _arr(p.mu), "rho": _arr(p.rho)} for p in layer.params]}
            for layer in net.layers
        ],
    }
    return json.dumps(doc, indent=1)


def loads(text: str) -> BayesNet:
    doc = json.loads(text)
    cfg = NetConfig(**doc["config"])
    grid = None if doc["grid"] is None else FrequencyGrid(_unarr(doc["grid"]))
    nd = doc["normalization"]
    net = BayesNet(cfg, None, (nd["f_lo"], nd["f_hi"]), grid)
    net.norm = Normalization(_unarr(nd["in_lo"]), _unarr(nd["in_hi"]), nd["f_lo"], nd["f_hi"],
                             None if nd["out_mean"] is None else _unarr(nd["out_mean"]),
                             None if nd["out_std"] is None else _unarr(nd["out_std"]))
    net.trained_epochs = doc["trained_epochs"]
    for layer, ld in zip(net.layers, doc["layers"]):
        for p, pd in zip(layer.params, ld["params"]):
            p.mu = _unarr(pd["mu"])
            p.rho = _unarr(pd["rho"])
    return net
