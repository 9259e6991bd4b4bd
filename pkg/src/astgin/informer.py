"""Temporal extraction: an Informer-style encoder-decoder.

Each station's feature sequence is treated as an independent sequence with
shared weights (stations are folded into the batch axis).  Encoder
self-attention is ProbSparse; decoder self-attention is causal full
attention, followed by cross attention over the encoder output.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass

import numpy as np

from .gcn import glorot
from .nncore import (
    ParameterStore,
    Tensor,
    add,
    as_tensor,
    concat,
    dropout,
    layer_norm,
    matmul,
    mean,
    mul,
    relu,
    reshape,
    softmax,
    swapaxes,
    transpose,
)

EXACT_MEASURE_MAX_KEYS = 25

_captured: list | None = None


@contextlib.contextmanager
def capture_attention():
    """Collect ``(name, weights)`` for every attention call inside the block."""
    global _captured
    old, _captured = _captured, []
    try:
        yield _captured
    finally:
        _captured = old


def _record(name: str, weights: np.ndarray) -> None:
    if _captured is not None:
        _captured.append((name, weights.copy()))


@dataclass
class InformerConfig:
    d_model: int = 64
    n_heads: int = 4
    encoder_layers: int = 2
    decoder_layers: int = 3
    d_ff: int = 128
    factor: float = 5.0
    label_len: int | None = None  # default ceil((L+1)/2)
    horizon: int = 1
    distilling: bool = False
    dropout: float = 0.0
    sample_seed: int = 0

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if self.encoder_layers < 1 or self.decoder_layers < 1:
            raise ValueError("need at least one encoder and one decoder layer")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.factor <= 0:
            raise ValueError("sampling factor must be > 0")

    def resolve_label_len(self, seq_len: int) -> int:
        lab = self.label_len if self.label_len is not None else math.ceil(seq_len / 2)
        if not 1 <= lab <= seq_len:
            raise ValueError(f"label_len={lab} outside [1, {seq_len}]")
        return lab


# ---------------------------------------------------------------- attention kernels


def full_attention(Q, K, V, causal: bool = False, name: str = "attention") -> Tensor:
    """softmax(Q K^T / sqrt(d)) V over the last two axes, optional causal mask."""
    Q, K, V = as_tensor(Q), as_tensor(K), as_tensor(V)
    if Q.shape[-1] != K.shape[-1] or K.shape[-2] != V.shape[-2]:
        raise ValueError(f"attention: incompatible Q {Q.shape}, K {K.shape}, V {V.shape}")
    lq, lk = Q.shape[-2], K.shape[-2]
    scores = mul(matmul(Q, swapaxes(K, -1, -2)), 1.0 / math.sqrt(Q.shape[-1]))
    mask = np.tril(np.ones((lq, lk), dtype=bool), k=lk - lq) if causal else None
    weights = softmax(scores, axis=-1, mask=mask)
    _record(name, weights.data)
    return matmul(weights, V)


def n_active_queries(lq: int, factor: float) -> int:
    return max(1, min(lq, math.ceil(factor * math.log(lq)))) if lq > 1 else 1


def sparsity_measure(q: np.ndarray, k: np.ndarray, factor: float,
                     rng: np.random.Generator | None = None) -> np.ndarray:
    """max - mean of scaled scores per query; keys subsampled when there are many."""
    lk = k.shape[-2]
    if lk > EXACT_MEASURE_MAX_KEYS:
        n = min(lk, math.ceil(factor * math.log(lk)))
        rng = rng if rng is not None else np.random.default_rng(0)
        k = k[..., np.sort(rng.choice(lk, size=n, replace=False)), :]
    s = q @ np.swapaxes(k, -1, -2) / math.sqrt(q.shape[-1])
    return s.max(axis=-1) - s.mean(axis=-1)


def prob_sparse_attention(Q, K, V, factor: float = 5.0, rng: np.random.Generator | None = None,
                          name: str = "probsparse") -> Tensor:
    """Top-u queries by sparsity measure attend; the rest return mean(V)."""
    if factor <= 0:
        raise ValueError(f"sampling factor must be > 0, got {factor}")
    Q, K, V = as_tensor(Q), as_tensor(K), as_tensor(V)
    lq = Q.shape[-2]
    if lq != K.shape[-2]:
        raise ValueError("ProbSparse self-attention needs Lq == Lk")
    u = n_active_queries(lq, factor)
    attended = full_attention(Q, K, V, name=name)
    if u >= lq:
        return attended
    measure = sparsity_measure(Q.data, K.data, factor, rng)
    # stable sort keeps the lowest index first among ties
    top = np.argsort(-measure, axis=-1, kind="stable")[..., :u]
    sel = np.zeros(measure.shape, dtype=Q.dtype)
    np.put_along_axis(sel, top, 1.0, axis=-1)
    sel = sel[..., None]
    lazy = mean(V, axis=-2, keepdims=True)
    return add(mul(attended, sel), mul(lazy, 1.0 - sel))


# ---------------------------------------------------------------- layers


def _linear(x: Tensor, params: ParameterStore, name: str) -> Tensor:
    out = matmul(x, params[f"{name}.W"])
    b = f"{name}.b"
    return add(out, params[b]) if b in params else out


def _add_linear(store, rng, name, fan_in, fan_out, bias=True):
    store.add(f"{name}.W", glorot(rng, fan_in, fan_out))
    if bias:
        store.add(f"{name}.b", np.zeros(fan_out), decay=False)


def _add_norm(store, name, d):
    store.add(f"{name}.g", np.ones(d), decay=False)
    store.add(f"{name}.b", np.zeros(d), decay=False)


def _norm(x: Tensor, params: ParameterStore, name: str) -> Tensor:
    return layer_norm(x, params[f"{name}.g"], params[f"{name}.b"])


def _heads(x: Tensor, h: int) -> Tensor:
    b, t, d = x.shape
    return transpose(reshape(x, (b, t, h, d // h)), (0, 2, 1, 3))


def _merge(x: Tensor) -> Tensor:
    b, h, t, dh = x.shape
    return reshape(transpose(x, (0, 2, 1, 3)), (b, t, h * dh))


def multi_head_attention(x_q: Tensor, x_kv: Tensor, params: ParameterStore, name: str, n_heads: int,
                         kind: str = "full", causal: bool = False, factor: float = 5.0,
                         rng: np.random.Generator | None = None) -> Tensor:
    Q = _heads(_linear(x_q, params, f"{name}.q"), n_heads)
    K = _heads(_linear(x_kv, params, f"{name}.k"), n_heads)
    V = _heads(_linear(x_kv, params, f"{name}.v"), n_heads)
    if kind == "probsparse":
        out = prob_sparse_attention(Q, K, V, factor, rng, name=name)
    else:
        out = full_attention(Q, K, V, causal=causal, name=name)
    return _linear(_merge(out), params, f"{name}.o")


def _feed_forward(x: Tensor, params: ParameterStore, name: str) -> Tensor:
    return _linear(relu(_linear(x, params, f"{name}.ff1")), params, f"{name}.ff2")


def _drop(x: Tensor, config: InformerConfig, rng) -> Tensor:
    if rng is None or config.dropout == 0.0:
        return x
    return dropout(x, config.dropout, rng)


def _distil(x: Tensor, params: ParameterStore, name: str) -> Tensor:
    # kernel-3 circular conv, norm, relu, then stride-2 average pooling
    t = x.shape[1]
    left = concat([x[:, -1:, :], x[:, :-1, :]], axis=1)
    right = concat([x[:, 1:, :], x[:, :1, :]], axis=1)
    h = relu(_norm(_linear(concat([left, x, right], axis=-1), params, f"{name}.conv"), params, f"{name}.norm"))
    if t % 2:
        h = concat([h, h[:, -1:, :]], axis=1)
    return mul(add(h[:, 0::2, :], h[:, 1::2, :]), 0.5)


def init_informer(store: ParameterStore, config: InformerConfig, rng: np.random.Generator,
                  prefix: str = "informer") -> None:
    d, f = config.d_model, config.d_ff
    for i in range(config.encoder_layers):
        base = f"{prefix}.enc.{i}"
        for proj in "qkvo":
            _add_linear(store, rng, f"{base}.attn.{proj}", d, d)
        _add_norm(store, f"{base}.norm1", d)
        _add_linear(store, rng, f"{base}.ff1", d, f)
        _add_linear(store, rng, f"{base}.ff2", f, d)
        _add_norm(store, f"{base}.norm2", d)
        if config.distilling and i < config.encoder_layers - 1:
            _add_linear(store, rng, f"{base}.distil.conv", 3 * d, d)
            _add_norm(store, f"{base}.distil.norm", d)
    for i in range(config.decoder_layers):
        base = f"{prefix}.dec.{i}"
        for block in ("self", "cross"):
            for proj in "qkvo":
                _add_linear(store, rng, f"{base}.{block}.{proj}", d, d)
        for k in (1, 2, 3):
            _add_norm(store, f"{base}.norm{k}", d)
        _add_linear(store, rng, f"{base}.ff1", d, f)
        _add_linear(store, rng, f"{base}.ff2", f, d)
    _add_linear(store, rng, f"{prefix}.head", d, 1)


def positional_encoding(length: int, d_model: int, offset: int = 0) -> np.ndarray:
    pos = np.arange(offset, offset + length, dtype=np.float64)[:, None]
    i = np.arange(0, d_model, 2, dtype=np.float64)
    angle = pos / np.power(10000.0, i / d_model)
    pe = np.zeros((length, d_model))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : d_model // 2])
    return pe


def encoder_forward(seq, config: InformerConfig, params: ParameterStore, prefix: str = "informer",
                    rng: np.random.Generator | None = None) -> Tensor:
    """(B, T, d) -> (B, T', d); T' = T unless distilling is on."""
    x = as_tensor(seq)
    if x.shape[-1] != config.d_model:
        raise ValueError(f"encoder input width {x.shape[-1]} != d_model {config.d_model}")
    sample_rng = np.random.default_rng(config.sample_seed)
    for i in range(config.encoder_layers):
        base = f"{prefix}.enc.{i}"
        a = multi_head_attention(x, x, params, f"{base}.attn", config.n_heads, "probsparse",
                                 factor=config.factor, rng=sample_rng)
        x = _norm(add(x, _drop(a, config, rng)), params, f"{base}.norm1")
        x = _norm(add(x, _drop(_feed_forward(x, params, base), config, rng)), params, f"{base}.norm2")
        if config.distilling and i < config.encoder_layers - 1:
            x = _distil(x, params, f"{base}.distil")
    return x


def decoder_forward(dec_in, enc_out, config: InformerConfig, params: ParameterStore,
                    prefix: str = "informer", label_len: int | None = None,
                    rng: np.random.Generator | None = None) -> Tensor:
    """(B, label_len + M, d) tokens attending causally to themselves and fully to ``enc_out``."""
    x, enc = as_tensor(dec_in), as_tensor(enc_out)
    if label_len is not None and x.shape[-2] != label_len + config.horizon:
        raise ValueError(f"decoder input length {x.shape[-2]} != label_len {label_len} + horizon {config.horizon}")
    for i in range(config.decoder_layers):
        base = f"{prefix}.dec.{i}"
        a = multi_head_attention(x, x, params, f"{base}.self", config.n_heads, "full", causal=True)
        x = _norm(add(x, _drop(a, config, rng)), params, f"{base}.norm1")
        c = multi_head_attention(x, enc, params, f"{base}.cross", config.n_heads, "full")
        x = _norm(add(x, _drop(c, config, rng)), params, f"{base}.norm2")
        x = _norm(add(x, _drop(_feed_forward(x, params, base), config, rng)), params, f"{base}.norm3")
    return x


def informer_forward(gcn_seq, config: InformerConfig, params: ParameterStore, prefix: str = "informer",
                     rng: np.random.Generator | None = None) -> Tensor:
    """(B, L+1, N, d) or (L+1, N, d) features -> (B, M, N) or (M, N) raw forecasts."""
    x = as_tensor(gcn_seq)
    single = x.ndim == 3
    if single:
        x = reshape(x, (1, *x.shape))
    b, t, n, d = x.shape
    if d != config.d_model:
        raise ValueError(f"feature width {d} != d_model {config.d_model}")
    m = config.horizon
    lab = config.resolve_label_len(t)
    seqs = reshape(transpose(x, (0, 2, 1, 3)), (b * n, t, d))
    pe = positional_encoding(t + m, d).astype(x.dtype)
    enc = encoder_forward(add(seqs, pe[:t]), config, params, prefix, rng)
    # decoder tokens sit at absolute positions t-lab .. t+m-1
    tokens = concat([seqs[:, t - lab:, :], np.zeros((b * n, m, d), dtype=x.dtype)], axis=1)
    dec = decoder_forward(add(tokens, pe[t - lab:]), enc, config, params, prefix, lab, rng)
    y = _linear(dec[:, lab:, :], params, f"{prefix}.head")  # (b*n, m, 1)
    y = transpose(reshape(y, (b, n, m)), (0, 2, 1))
    return reshape(y, (m, n)) if single else y
