"""Spatial extraction: stacked first-order graph convolutions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nncore import ACTIVATIONS, ParameterStore, Tensor, add, as_tensor, matmul


@dataclass
class GcnConfig:
    in_dim: int
    hidden_dims: list[int] = field(default_factory=lambda: [64, 64, 64])
    activations: list[str] = field(default_factory=lambda: ["relu", "relu", "identity"])
    bias: bool = False

    def __post_init__(self):
        if len(self.hidden_dims) < 1:
            raise ValueError("GCN needs at least one layer")
        if len(self.activations) != len(self.hidden_dims):
            raise ValueError("one activation per GCN layer")
        if self.in_dim < 1 or any(d < 1 for d in self.hidden_dims):
            raise ValueError("GCN dimensions must be positive")
        unknown = [a for a in self.activations if a not in ACTIVATIONS]
        if unknown:
            raise ValueError(f"unknown activation(s) {unknown}; choose from {sorted(ACTIVATIONS)}")

    @property
    def layers(self) -> int:
        return len(self.hidden_dims)

    @property
    def out_dim(self) -> int:
        return self.hidden_dims[-1]


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_gcn(store: ParameterStore, config: GcnConfig, rng: np.random.Generator, prefix: str = "gcn") -> None:
    dims = [config.in_dim, *config.hidden_dims]
    for i in range(config.layers):
        store.add(f"{prefix}.{i}.W", glorot(rng, dims[i], dims[i + 1]))
        if config.bias:
            store.add(f"{prefix}.{i}.b", np.zeros(dims[i + 1]), decay=False)


def gcn_layer(A_hat, H, W, activation: str = "relu", bias=None) -> Tensor:
    """activation(A_hat @ H @ W); H may carry leading batch axes (..., N, F_in)."""
    A_hat, H, W = as_tensor(A_hat), as_tensor(H), as_tensor(W)
    if A_hat.shape[-1] != H.shape[-2]:
        raise ValueError(f"gcn_layer: A_hat {A_hat.shape} does not match H {H.shape}")
    if H.shape[-1] != W.shape[0]:
        raise ValueError(f"gcn_layer: H {H.shape} does not match W {W.shape}")
    # H @ W first: the feature width usually shrinks or stays equal
    out = matmul(A_hat, matmul(H, W))
    if bias is not None:
        out = add(out, bias)
    return ACTIVATIONS[activation](out)


def gcn_forward(A_hat, E, config: GcnConfig, params: ParameterStore, prefix: str = "gcn") -> Tensor:
    """Apply the stack to every (…, N, K) slice with shared weights."""
    H = as_tensor(E)
    for i in range(config.layers):
        name = f"{prefix}.{i}.W"
        if name not in params:
            raise KeyError(f"missing parameter for GCN layer {i}: {name!r}")
        bias = params[f"{prefix}.{i}.b"] if config.bias else None
        H = gcn_layer(A_hat, H, params[name], config.activations[i], bias)
    return H
