"""Differentiable layers: linear, layer norm, attention, GRU, losses.

Shapes use trailing (sequence, feature) axes so batch axes broadcast.
Attention blocks are pre-norm residual: x + attn(norm(x)), then
x + ff(norm(x)).  Probability inputs to the losses are clamped at
PROB_FLOOR before any log.
"""

import math
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .rng import Rng, derive

PROB_FLOOR = 1e-12


# --- initialization --------------------------------------------------------

def glorot(shape, seed: int) -> Tensor:
    """Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)), trainable."""
    if len(shape) == 1:
        fan_in = fan_out = shape[0]
    else:
        fan_in, fan_out = shape[-2], shape[-1]
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    data = Rng(seed).uniform_fill(shape, -bound, bound)
    return Tensor(data, requires_grad=True)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def ones(shape) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)


# --- basic layers ----------------------------------------------------------

def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    out = ad.matmul(x, w)
    return out if b is None else ad.add(out, b)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean, unit variance, then affine."""
    mu = ad.tmean(x, axis=-1, keepdims=True)
    centered = ad.sub(x, mu)
    var = ad.tmean(ad.mul(centered, centered), axis=-1, keepdims=True)
    inv = ad.pow_const(ad.add(var, Tensor(eps)), -0.5)
    return ad.add(ad.mul(ad.mul(centered, inv), gain), bias)


@lru_cache(maxsize=64)
def positional_encoding(length: int, d_model: int) -> np.ndarray:
    """Sinusoidal table, (length, d_model), cached per shape."""
    positions = np.arange(length, dtype=np.float64)[:, None]
    dims = np.arange(d_model, dtype=np.float64)[None, :]
    angles = positions / np.power(10000.0, 2.0 * (dims // 2) / d_model)
    table = np.where(dims % 2 == 0, np.sin(angles), np.cos(angles))
    return table


# --- attention -------------------------------------------------------------

def scaled_dot_product_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """softmax(q k^T / sqrt(d)) v over trailing (sequence, feature) axes."""
    d = q.shape[-1]
    scores = ad.mul(ad.matmul(q, ad.swapaxes(k, -1, -2)), Tensor(1.0 / math.sqrt(d)))
    return ad.matmul(ad.softmax(scores, axis=-1), v)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    # (..., L, d) -> (..., heads, L, d // heads)
    *batch, length, d = x.shape
    split = ad.reshape(x, (*batch, length, heads, d // heads))
    return ad.swapaxes(split, -2, -3)


def _merge_heads(x: Tensor) -> Tensor:
    # (..., heads, L, dh) -> (..., L, heads * dh)
    merged = ad.swapaxes(x, -2, -3)
    *batch, length, heads, dh = merged.shape
    return ad.reshape(merged, (*batch, length, heads * dh))


def init_mha_block(params: dict, prefix: str, d_model: int, ff_width: int, seed: int) -> None:
    """Create one pre-norm attention + feed-forward block under `prefix`."""
    for name in ("wq", "wk", "wv", "wo"):
        params[f"{prefix}.attn.{name}"] = glorot((d_model, d_model), derive(seed, prefix, name))
        params[f"{prefix}.attn.{name[1:]}b"] = zeros((d_model,))
    params[f"{prefix}.ln1.g"] = ones((d_model,))
    params[f"{prefix}.ln1.b"] = zeros((d_model,))
    params[f"{prefix}.ln2.g"] = ones((d_model,))
    params[f"{prefix}.ln2.b"] = zeros((d_model,))
    params[f"{prefix}.ff.w1"] = glorot((d_model, ff_width), derive(seed, prefix, "ff1"))
    params[f"{prefix}.ff.b1"] = zeros((ff_width,))
    params[f"{prefix}.ff.w2"] = glorot((ff_width, d_model), derive(seed, prefix, "ff2"))
    params[f"{prefix}.ff.b2"] = zeros((d_model,))


def mha_block(x: Tensor, params: dict, prefix: str, heads: int,
              memory: Tensor | None = None) -> Tensor:
    """Pre-norm residual block; cross-attends to `memory` when given.

    Queries come from the normed input; keys and values come from the
    memory as-is in the cross-attention case, from the normed input in
    the self-attention case.
    """
    p = lambda name: params[f"{prefix}.{name}"]
    normed = layer_norm(x, p("ln1.g"), p("ln1.b"))
    source = normed if memory is None else memory
    q = _split_heads(linear(normed, p("attn.wq"), p("attn.qb")), heads)
    k = _split_heads(linear(source, p("attn.wk"), p("attn.kb")), heads)
    v = _split_heads(linear(source, p("attn.wv"), p("attn.vb")), heads)
    attended = _merge_heads(scaled_dot_product_attention(q, k, v))
    x = ad.add(x, linear(attended, p("attn.wo"), p("attn.ob")))
    normed = layer_norm(x, p("ln2.g"), p("ln2.b"))
    hidden = ad.relu(linear(normed, p("ff.w1"), p("ff.b1")))
    return ad.add(x, linear(hidden, p("ff.w2"), p("ff.b2")))


# --- recurrent cell ----------------------------------------------------------

def init_gru(params: dict, prefix: str, d_in: int, d_hidden: int, seed: int) -> None:
    for gate in ("z", "r", "n"):
        params[f"{prefix}.w{gate}"] = glorot((d_in, d_hidden), derive(seed, prefix, "w" + gate))
        params[f"{prefix}.u{gate}"] = glorot((d_hidden, d_hidden), derive(seed, prefix, "u" + gate))
        params[f"{prefix}.b{gate}"] = zeros((d_hidden,))


def gru_cell(x: Tensor, h: Tensor, params: dict, prefix: str) -> Tensor:
    """One gated recurrent step; x (..., d_in), h (..., d_hidden)."""
    p = lambda name: params[f"{prefix}.{name}"]
    z = ad.sigmoid(ad.add(ad.add(ad.matmul(x, p("wz")), ad.matmul(h, p("uz"))), p("bz")))
    r = ad.sigmoid(ad.add(ad.add(ad.matmul(x, p("wr")), ad.matmul(h, p("ur"))), p("br")))
    n = ad.tanh(ad.add(ad.add(ad.matmul(x, p("wn")), ad.matmul(ad.mul(r, h), p("un"))), p("bn")))
    one_minus_z = ad.sub(Tensor(1.0), z)
    return ad.add(ad.mul(one_minus_z, n), ad.mul(z, h))


def gru_forward(xs: Tensor, params: dict, prefix: str, d_hidden: int) -> Tensor:
    """Run the cell over axis -2; returns the final hidden state."""
    *batch, length, _ = xs.shape
    h = Tensor(np.zeros((*batch, d_hidden)))
    for t in range(length):
        x_t = ad.slice_index(xs, xs.ndim - 2, t)
        h = gru_cell(x_t, h, params, prefix)
    return h


# --- losses ------------------------------------------------------------------

def cross_entropy(pred: Tensor, target: int) -> Tensor:
    """-log pred[target] with the floor clamp; pred is a probability vector."""
    if pred.ndim != 1:
        raise ValueError("cross_entropy expects a 1-D probability vector")
    if not (0 <= target < pred.shape[0]):
        raise ValueError(f"target index {target} out of range for {pred.shape[0]} classes")
    if abs(float(pred.data.sum()) - 1.0) > 1e-6:
        raise ValueError("prediction does not sum to 1")
    row = ad.reshape(pred, (1, pred.shape[0]))
    picked = ad.gather_rows(ad.clamp_min(row, PROB_FLOOR), np.array([target]))
    return ad.reshape(ad.mul(ad.log(picked), Tensor(-1.0)), ())


def cross_entropy_rows(pred: Tensor, targets) -> Tensor:
    """Mean of -log pred[i, targets[i]] over the rows of a (N, C) tensor."""
    targets = np.asarray(targets, dtype=np.int64)
    picked = ad.gather_rows(ad.clamp_min(pred, PROB_FLOOR), targets)
    return ad.mul(ad.tmean(ad.log(picked)), Tensor(-1.0))


def kl_divergence(p: Tensor, q: Tensor) -> Tensor:
    """sum p * (log p - log q), both clamped at the floor; natural log."""
    if p.shape != q.shape:
        raise ValueError(f"distribution shapes differ: {p.shape} vs {q.shape}")
    pc = ad.clamp_min(p, PROB_FLOOR)
    qc = ad.clamp_min(q, PROB_FLOOR)
    return ad.tsum(ad.mul(pc, ad.sub(ad.log(pc), ad.log(qc))))


def kl_divergence_rows(p: Tensor, q: Tensor) -> Tensor:
    """Row-wise KL of (N, C) distributions, averaged over rows."""
    if p.shape != q.shape:
        raise ValueError(f"distribution shapes differ: {p.shape} vs {q.shape}")
    pc = ad.clamp_min(p, PROB_FLOOR)
    qc = ad.clamp_min(q, PROB_FLOOR)
    per_row = ad.tsum(ad.mul(pc, ad.sub(ad.log(pc), ad.log(qc))), axis=-1)
    return ad.tmean(per_row)
