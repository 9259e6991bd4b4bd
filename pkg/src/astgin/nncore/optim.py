"""Named parameter storage, Adam and the L2 penalty."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, add, get_default_dtype, is_checked, mul, sum_


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


class ParameterStore:
    """Ordered mapping of parameter name to leaf :class:`Tensor`.

    Parameters registered with ``decay=False`` (biases, norm gains) are left
    out of :func:`l2_penalty`.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._decay: dict[str, bool] = {}
        self.state: dict[str, AdamState] = {}

    def add(self, name: str, value, decay: bool = True) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(value, requires_grad=True, name=name, dtype=get_default_dtype())
        self._params[name] = t
        self._decay[name] = decay
        return t

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._params[name]
        except KeyError:
            raise KeyError(f"missing parameter {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def decays(self, name: str) -> bool:
        return self._decay[name]

    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self._params.values()))

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        """Current gradients; parameters untouched by backward get zeros."""
        return {n: (p.grad if p.grad is not None else np.zeros_like(p.data))
                for n, p in self._params.items()}

    def astype(self, dtype) -> None:
        for p in self._params.values():
            p.data = p.data.astype(dtype)
            p.grad = None
        for s in self.state.values():
            s.m = s.m.astype(dtype)
            s.v = s.v.astype(dtype)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self._params.items()}

    def restore(self, values: dict[str, np.ndarray]) -> None:
        for n, arr in values.items():
            p = self[n]
            if p.data.shape != arr.shape:
                raise ValueError(f"parameter {n!r}: shape {arr.shape} does not match {p.data.shape}")
            p.data = arr.astype(p.data.dtype, copy=True)


def adam_step(store: ParameterStore, grads: dict[str, np.ndarray], lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Bias-corrected Adam update, in place."""
    missing = [n for n in store if n not in grads]
    if missing:
        raise KeyError(f"no gradient for parameters {missing}")
    for name, p in store.items():
        g = grads[name]
        if is_checked() and not np.all(np.isfinite(g)):
            raise FloatingPointError(f"adam_step: non-finite gradient for {name!r}")
        st = store.state.get(name)
        if st is None:
            st = store.state[name] = AdamState(np.zeros_like(p.data), np.zeros_like(p.data))
        st.t += 1
        st.m = beta1 * st.m + (1.0 - beta1) * g
        st.v = beta2 * st.v + (1.0 - beta2) * (g * g)
        m_hat = st.m / (1.0 - beta1 ** st.t)
        v_hat = st.v / (1.0 - beta2 ** st.t)
        p.data = (p.data - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.data.dtype, copy=False)


def l2_penalty(store: ParameterStore) -> Tensor:
    """Sum of squared entries over all decayed (weight) parameters."""
    total = Tensor(0.0)
    for name, p in store.items():
        if store.decays(name):
            total = add(total, sum_(mul(p, p)))
    return total
