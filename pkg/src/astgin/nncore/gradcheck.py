"""Central finite-difference checks of the tape's gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor


def grad_check(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray], h: float = 1e-5,
               max_coords: int | None = None, seed: int = 0) -> float:
    """Largest relative error between tape and central-difference gradients.

    ``fn`` maps tensors (one per input array) to a scalar tensor.  The error
    per coordinate is ``|a - n| / max(1, |a|, |n|)``.  With ``max_coords``
    each input is probed at that many randomly chosen coordinates only.
    """
    pick = np.random.default_rng(seed)
    with T.precision(np.float64):
        arrays = [np.array(x, dtype=np.float64) for x in inputs]
        leaves = [Tensor(a, requires_grad=True) for a in arrays]
        out = fn(*leaves)
        out.backward()
        analytic = [leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data) for leaf in leaves]

        def value() -> float:
            with T.no_grad():
                return float(fn(*[Tensor(a) for a in arrays]).data)

        worst = 0.0
        for a, ga in zip(arrays, analytic):
            flat, gflat = a.reshape(-1), ga.reshape(-1)
            coords = range(flat.size)
            if max_coords is not None and flat.size > max_coords:
                coords = pick.choice(flat.size, size=max_coords, replace=False)
            for i in coords:
                orig = flat[i]
                flat[i] = orig + h
                up = value()
                flat[i] = orig - h
                down = value()
                flat[i] = orig
                num = (up - down) / (2.0 * h)
                err = abs(gflat[i] - num) / max(1.0, abs(gflat[i]), abs(num))
                worst = max(worst, err)
        return worst


class _Projection:
    """Fixed random projection to a scalar, drawn once per output shape."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.weights: dict[tuple, np.ndarray] = {}

    def __call__(self, out: Tensor) -> Tensor:
        w = self.weights.get(out.shape)
        if w is None:
            w = self.weights[out.shape] = self.rng.standard_normal(out.shape)
        return T.sum_(T.mul(out, w))


def _shape(rng, lo=2, hi=5, ndim=2):
    return tuple(int(n) for n in rng.integers(lo, hi, size=ndim))


def _case_matmul(rng):
    proj = _Projection(rng)
    n, k, m = _shape(rng, ndim=3)
    b = int(rng.integers(1, 3))
    return (lambda x, w: proj(T.matmul(x, w))), [rng.standard_normal((b, n, k)), rng.standard_normal((k, m))]


def _case_matmul_left(rng):
    proj = _Projection(rng)
    n, k = _shape(rng)
    return (lambda a, x: proj(T.matmul(a, x))), [rng.standard_normal((n, n)), rng.standard_normal((2, 3, n, k))]


def _case_bmm(rng):
    proj = _Projection(rng)
    n, k, m = _shape(rng, ndim=3)
    return (lambda a, b: proj(T.matmul(a, b))), [rng.standard_normal((2, n, k)), rng.standard_normal((2, k, m))]


def _case_add(rng):
    proj = _Projection(rng)
    s = _shape(rng)
    return (lambda a, b: proj(T.add(a, b))), [rng.standard_normal(s), rng.standard_normal(s[-1:])]


def _case_sub(rng):
    proj = _Projection(rng)
    s = _shape(rng)
    return (lambda a, b: proj(T.sub(a, b))), [rng.standard_normal(s), rng.standard_normal((s[0], 1))]


def _case_mul(rng):
    proj = _Projection(rng)
    s = _shape(rng)
    return (lambda a, b: proj(T.mul(a, b))), [rng.standard_normal(s), rng.standard_normal(s)]


def _case_div(rng):
    proj = _Projection(rng)
    s = _shape(rng)
    return (lambda a, b: proj(T.div(a, b))), [rng.standard_normal(s), rng.uniform(1.0, 2.0, s)]


def _case_concat(rng):
    proj = _Projection(rng)
    s = _shape(rng)
    return (lambda a, b: proj(T.concat([a, b], axis=1))), [rng.standard_normal(s), rng.standard_normal((s[0], 3))]


def _case_slice(rng):
    proj = _Projection(rng)
    s = _shape(rng, 3, 6)
    return (lambda a: proj(a[1:, :2])), [rng.standard_normal(s)]


def _case_transpose(rng):
    proj = _Projection(rng)
    s = _shape(rng, ndim=3)
    return (lambda a: proj(T.transpose(a, (2, 0, 1)))), [rng.standard_normal(s)]


def _case_reshape(rng):
    proj = _Projection(rng)
    return (lambda a: proj(T.reshape(a, (3, 4)))), [rng.standard_normal((2, 6))]


def _case_relu(rng):
    proj = _Projection(rng)
    x = rng.standard_normal(_shape(rng))
    x[np.abs(x) < 1e-3] = 0.5  # keep clear of the kink
    return (lambda a: proj(T.relu(a))), [x]


def _case_sigmoid(rng):
    proj = _Projection(rng)
    return (lambda a: proj(T.sigmoid(a))), [3 * rng.standard_normal(_shape(rng))]


def _case_tanh(rng):
    proj = _Projection(rng)
    return (lambda a: proj(T.tanh(a))), [rng.standard_normal(_shape(rng))]


def _case_softmax(rng):
    proj = _Projection(rng)
    return (lambda a: proj(T.softmax(a, axis=-1))), [rng.standard_normal(_shape(rng))]


def _case_softmax_masked(rng):
    proj = _Projection(rng)
    n = int(rng.integers(2, 6))
    mask = np.tril(np.ones((n, n), dtype=bool))
    return (lambda a: proj(T.softmax(a, axis=-1, mask=mask))), [rng.standard_normal((n, n))]


def _case_layer_norm(rng):
    proj = _Projection(rng)
    s = _shape(rng, 2, 6)
    return (lambda x, g, b: proj(T.layer_norm(x, g, b))), [
        rng.standard_normal(s), rng.standard_normal(s[-1]), rng.standard_normal(s[-1])]


def _case_dropout(rng):
    proj = _Projection(rng)
    seed = int(rng.integers(1 << 30))
    return (lambda a: proj(T.dropout(a, 0.3, seed))), [rng.standard_normal(_shape(rng))]


def _case_embedding(rng):
    proj = _Projection(rng)
    ids = rng.integers(0, 4, size=6)
    return (lambda t: proj(T.embedding_lookup(t, ids))), [rng.standard_normal((4, 3))]


def _case_mse(rng):
    s = _shape(rng)
    return (lambda a, b: T.mse(a, b)), [rng.standard_normal(s), rng.standard_normal(s)]


def _case_sum(rng):
    proj = _Projection(rng)
    return (lambda a: proj(T.sum_(a, axis=0))), [rng.standard_normal(_shape(rng))]


def _case_mean(rng):
    proj = _Projection(rng)
    return (lambda a: proj(T.mean(a, axis=-1, keepdims=True))), [rng.standard_normal(_shape(rng))]


# Every differentiable op on the tape.  Each builder returns (fn, inputs).
REGISTRY: dict[str, Callable] = {
    "matmul": _case_matmul,
    "matmul_left_broadcast": _case_matmul_left,
    "matmul_batched": _case_bmm,
    "add": _case_add,
    "sub": _case_sub,
    "mul": _case_mul,
    "div": _case_div,
    "concat": _case_concat,
    "slice": _case_slice,
    "transpose": _case_transpose,
    "reshape": _case_reshape,
    "relu": _case_relu,
    "sigmoid": _case_sigmoid,
    "tanh": _case_tanh,
    "softmax": _case_softmax,
    "softmax_masked": _case_softmax_masked,
    "layer_norm": _case_layer_norm,
    "dropout": _case_dropout,
    "embedding_lookup": _case_embedding,
    "mse": _case_mse,
    "sum": _case_sum,
    "mean": _case_mean,
}


def run_registry(seeds: Sequence[int], extra: dict[str, Callable] | None = None,
                 tol: float = 1e-4) -> dict[str, float]:
    """Worst error per registered case over ``seeds``."""
    cases = dict(REGISTRY)
    if extra:
        cases.update(extra)
    worst = {}
    for name, build in cases.items():
        errs = []
        for seed in seeds:
            fn, inputs = build(np.random.default_rng(seed))
            errs.append(grad_check(fn, inputs))
        worst[name] = max(errs)
    return worst
