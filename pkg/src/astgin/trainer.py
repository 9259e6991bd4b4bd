"""Model assembly (augmentation -> GCN -> Informer), training and evaluation."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import metrics as M
from .a2unit import AugmentedSample
from .gcn import GcnConfig, gcn_forward, glorot, init_gcn
from .informer import InformerConfig, informer_forward, init_informer
from .ingest import TimeGrid
from .nncore import (
    ParameterStore,
    Tensor,
    adam_step,
    add,
    as_tensor,
    l2_penalty,
    matmul,
    mse,
    mul,
    no_grad,
    precision,
)

log = logging.getLogger(__name__)

ABLATIONS = ("full", "no_attributes", "no_gcn", "poi_only", "weather_only")
HORIZON_MINUTES = {30: 1, 60: 2, 90: 3, 120: 4}


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class ModelConfig:
    """Architecture knobs shared by the GCN and the Informer."""

    d_model: int = 64
    gcn_hidden: list[int] = field(default_factory=lambda: [64, 64])
    gcn_activations: list[str] = field(default_factory=lambda: ["relu", "relu", "identity"])
    gcn_bias: bool = False
    n_heads: int = 4
    encoder_layers: int = 2
    decoder_layers: int = 3
    d_ff: int = 128
    factor: float = 5.0
    label_len: int | None = None
    distilling: bool = False
    dropout: float = 0.0

    def gcn_config(self, in_dim: int) -> GcnConfig:
        return GcnConfig(in_dim, [*self.gcn_hidden, self.d_model], list(self.gcn_activations), self.gcn_bias)

    def informer_config(self, horizon: int) -> InformerConfig:
        return InformerConfig(self.d_model, self.n_heads, self.encoder_layers, self.decoder_layers,
                              self.d_ff, self.factor, self.label_len, horizon, self.distilling, self.dropout)


@dataclass
class TrainConfig:
    L: int = 12
    M: int = 1
    batch_size: int = 32
    epochs: int = 50
    lr0: float = 1e-4
    lr_decay: float = 0.1
    lr_decay_every: int = 2
    lr_floor: float = 1e-8
    lam: float = 1.5e-3
    patience: int | None = 5
    warmup_steps: int = 0
    seed: int = 0
    ablation: str = "full"
    split: str = "random"
    dtype: str = "float32"

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValueError("lr0 must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}; choose from {ABLATIONS}")
        if self.L < 1 or self.M < 1:
            raise ValueError("L and M must be >= 1")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")


def horizon_steps(minutes: int) -> int:
    try:
        return HORIZON_MINUTES[int(minutes)]
    except KeyError:
        raise ValueError(f"horizon must be one of {sorted(HORIZON_MINUTES)} minutes, got {minutes}") from None


def attribute_columns(ablation: str, p: int, w: int, L: int) -> np.ndarray:
    """Columns of E kept by an ablation (column 0 is availability)."""
    dyn = np.arange(1 + p, 1 + p + w * (L + 1))
    static = np.arange(1, 1 + p)
    keep = {
        "full": [static, dyn],
        "no_gcn": [static, dyn],
        "no_attributes": [],
        "poi_only": [static],
        "weather_only": [dyn],
    }[ablation]
    return np.concatenate([[0], *keep]).astype(np.int64)


class AstGin:
    """Parameters plus the static shape facts needed to run a forward pass."""

    def __init__(self, model: ModelConfig, L: int, horizon: int, p: int, w: int,
                 ablation: str = "full", seed: int = 0, params: ParameterStore | None = None):
        if ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {ablation!r}")
        self.model, self.L, self.horizon, self.p, self.w, self.ablation = model, L, horizon, p, w, ablation
        self.columns = attribute_columns(ablation, p, w, L)
        self.gcn_cfg = model.gcn_config(len(self.columns))
        self.inf_cfg = model.informer_config(horizon)
        if params is None:
            rng = np.random.default_rng(seed)
            params = ParameterStore()
            if ablation == "no_gcn":
                params.add("proj.W", glorot(rng, len(self.columns), model.d_model))
            else:
                init_gcn(params, self.gcn_cfg, rng)
            init_informer(params, self.inf_cfg, rng)
        self.params = params

    @property
    def full_K(self) -> int:
        return 1 + self.p + self.w * (self.L + 1)

    def meta(self) -> dict:
        return {"model": asdict(self.model), "L": self.L, "horizon": self.horizon,
                "p": self.p, "w": self.w, "ablation": self.ablation}

    @classmethod
    def from_meta(cls, meta: dict, params: ParameterStore) -> "AstGin":
        return cls(ModelConfig(**meta["model"]), meta["L"], meta["horizon"], meta["p"], meta["w"],
                   meta["ablation"], params=params)

    def forward(self, E, A_hat, params: Mapping | None = None, rng=None) -> Tensor:
        """E: (B, L+1, N, K) or (L+1, N, K) -> (B, M, N) or (M, N) raw predictions."""
        params = self.params if params is None else params
        E = np.asarray(E)
        if E.shape[-1] != self.full_K:
            raise ValueError(f"a2unit: sample has K={E.shape[-1]}, model expects {self.full_K}")
        if E.shape[-3] != self.L + 1:
            raise ValueError(f"a2unit: window length {E.shape[-3]} != L+1 = {self.L + 1}")
        x = as_tensor(E[..., self.columns])
        A_hat = as_tensor(A_hat, like=x)
        try:
            if self.ablation == "no_gcn":
                h = matmul(x, params["proj.W"])
            else:
                h = gcn_forward(A_hat, x, self.gcn_cfg, params)
        except (ValueError, KeyError) as exc:
            raise type(exc)(f"gcn: {exc}") from exc
        try:
            return informer_forward(h, self.inf_cfg, params, rng=rng)
        except (ValueError, KeyError) as exc:
            raise type(exc)(f"informer: {exc}") from exc


def stack(samples: Sequence[AugmentedSample], dtype=np.float64) -> tuple[np.ndarray, np.ndarray]:
    return (np.stack([s.E for s in samples]).astype(dtype, copy=False),
            np.stack([s.Y for s in samples]).astype(dtype, copy=False))


def astgin_forward(sample: AugmentedSample, A_hat, model: AstGin) -> np.ndarray:
    with no_grad():
        return model.forward(sample.E, A_hat).data


def loss(Y, Y_hat, params: ParameterStore | None = None, lam: float = 0.0) -> Tensor:
    """Mean squared error plus lam times the L2 penalty of the weights."""
    Y_hat = as_tensor(Y_hat)
    data = mse(Y_hat, as_tensor(Y, like=Y_hat))
    if lam == 0.0 or params is None:
        return data
    return add(data, mul(l2_penalty(params), lam))


def lr_at(epoch: int, lr0: float, decay_every: int = 2, decay: float = 0.1, floor: float = 1e-8) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return max(lr0 * decay ** (epoch // decay_every), floor)


class EarlyStopper:
    """Track the best validation loss; signal a stop after ``patience`` stale epochs."""

    def __init__(self, patience: int | None):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = -1

    def update(self, epoch: int, val: float) -> bool:
        if val < self.best:
            self.best, self.best_epoch = val, epoch
            return False
        return bool(self.patience) and epoch - self.best_epoch >= self.patience


@dataclass
class TrainReport:
    epochs: list[dict]
    best_epoch: int
    test_metrics: M.MetricsReport | None
    wall_seconds: float
    seed: int
    ablation: str = "full"
    horizon: int = 1
    stopped_early: bool = False

    @property
    def val_loss(self) -> list[float]:
        return [e["val_loss"] for e in self.epochs]

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "val_loss": self.val_loss,
            "best_epoch": self.best_epoch,
            "test_metrics": self.test_metrics.to_dict() if self.test_metrics else None,
            "seed": self.seed,
            "wall_seconds": self.wall_seconds,
            "ablation": self.ablation,
            "horizon": self.horizon,
            "stopped_early": self.stopped_early,
        }


def predict(model: AstGin, samples: Sequence[AugmentedSample], A_hat, batch_size: int = 256,
            dtype=None) -> np.ndarray:
    """Raw predictions (S, M, N) for a list of samples."""
    dtype = dtype or model.params[next(iter(model.params))].dtype
    out = []
    with precision(dtype), no_grad():
        for i in range(0, len(samples), batch_size):
            E, _ = stack(samples[i:i + batch_size], dtype)
            out.append(model.forward(E, A_hat).data.astype(np.float64))
    return np.concatenate(out, axis=0)


def _val_loss(model, samples, A_hat, dtype) -> float:
    Y = np.stack([s.Y for s in samples])
    return float(np.mean((predict(model, samples, A_hat, dtype=dtype) - Y) ** 2))


def train(train_set: Sequence[AugmentedSample], val_set: Sequence[AugmentedSample], A_hat,
          model_cfg: ModelConfig, cfg: TrainConfig, test_set: Sequence[AugmentedSample] | None = None,
          progress: bool = False) -> tuple[AstGin, TrainReport]:
    """Minibatch Adam with stepwise LR decay and early stopping on validation MSE.

    Returns the model restored to its best-validation parameters.
    """
    if not train_set or not val_set:
        raise ValueError("train and validation splits must be nonempty")
    dtype = np.dtype(cfg.dtype).type
    t0 = time.perf_counter()
    s0 = train_set[0]
    with precision(dtype):
        model = AstGin(model_cfg, cfg.L, cfg.M, s0.p, s0.w, cfg.ablation, cfg.seed)
        model.params.astype(dtype)
        A = np.asarray(A_hat, dtype=dtype)
        rng = np.random.default_rng(cfg.seed)
        drop_rng = np.random.default_rng(cfg.seed + 1) if model_cfg.dropout > 0 else None
        stopper = EarlyStopper(cfg.patience)
        best = model.params.snapshot()
        history, stopped, step = [], False, 0
        for epoch in range(cfg.epochs):
            lr = lr_at(epoch, cfg.lr0, cfg.lr_decay_every, cfg.lr_decay, cfg.lr_floor)
            order = rng.permutation(len(train_set))
            total, batches = 0.0, 0
            for b, i in enumerate(range(0, len(order), cfg.batch_size)):
                E, Y = stack([train_set[j] for j in order[i:i + cfg.batch_size]], dtype)
                model.params.zero_grad()
                pred = model.forward(E, A, rng=drop_rng)
                data_loss = mse(pred, as_tensor(Y, like=pred))
                obj = add(data_loss, mul(l2_penalty(model.params), cfg.lam)) if cfg.lam else data_loss
                if not np.isfinite(obj.data):
                    raise TrainingDiverged(f"loss is not finite at epoch {epoch}, batch {b}")
                obj.backward()
                step += 1
                warm = min(1.0, step / cfg.warmup_steps) if cfg.warmup_steps else 1.0
                adam_step(model.params, model.params.grads(), lr * warm)
                total += float(data_loss.data)
                batches += 1
            val = _val_loss(model, val_set, A, dtype)
            history.append({"epoch": epoch, "lr": lr, "train_loss": total / batches, "val_loss": val})
            if progress:
                log.info("epoch %d lr %.2e train %.5f val %.5f", epoch, lr, total / batches, val)
            improved_before = stopper.best_epoch
            stop = stopper.update(epoch, val)
            if stopper.best_epoch != improved_before:
                best = model.params.snapshot()
            if stop:
                stopped = True
                break
        model.params.restore(best)
    test_metrics = evaluate(model, test_set, A_hat) if test_set else None
    report = TrainReport(history, max(stopper.best_epoch, 0), test_metrics, time.perf_counter() - t0,
                         cfg.seed, cfg.ablation, cfg.M, stopped)
    return model, report


def evaluate(model: AstGin, test_set: Sequence[AugmentedSample], A_hat) -> M.MetricsReport:
    if not test_set:
        raise ValueError("empty test split")
    Y = np.stack([s.Y for s in test_set])
    return M.compute_metrics(Y, predict(model, test_set, A_hat))


def perturb_samples(samples: Sequence[AugmentedSample], sigma: float, seed: int) -> list[AugmentedSample]:
    """Add seeded Gaussian noise to the availability column only, clamped to [0, 1]."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return list(samples)
    rng = np.random.default_rng(seed)
    out = []
    for s in samples:
        E = s.E.copy()
        E[..., 0] = np.clip(E[..., 0] + sigma * rng.standard_normal(E[..., 0].shape), 0.0, 1.0)
        out.append(AugmentedSample(E, s.Y, s.start, s.p, s.w))
    return out


def perturb_eval(model: AstGin, test_set: Sequence[AugmentedSample], A_hat, sigmas: Sequence[float],
                 seed: int = 0) -> list[tuple[float, M.MetricsReport]]:
    # the same seed per sigma gives nested noise: only the scale changes
    return [(float(s), evaluate(model, perturb_samples(test_set, s, seed), A_hat)) for s in sigmas]


def persistence_forecast(samples: Sequence[AugmentedSample]) -> np.ndarray:
    return np.stack([np.repeat(s.E[-1:, :, 0], s.Y.shape[0], axis=0) for s in samples])


def historical_average_forecast(train_set: Sequence[AugmentedSample], samples: Sequence[AugmentedSample],
                                grid: TimeGrid) -> np.ndarray:
    """Mean training target per station and time-of-day slot."""
    steps_per_day = 24 * 60 // grid.step_minutes
    n = train_set[0].Y.shape[1]
    sums = np.zeros((steps_per_day, n))
    counts = np.zeros(steps_per_day)
    for s in train_set:
        L1 = s.E.shape[0]
        slots = grid.slot_of_day(s.start + L1 + np.arange(s.Y.shape[0]))
        np.add.at(sums, slots, s.Y)
        np.add.at(counts, slots, 1)
    overall = np.mean([s.Y for s in train_set], axis=(0, 1))
    table = np.where(counts[:, None] > 0, sums / np.maximum(counts, 1)[:, None], overall[None, :])
    out = []
    for s in samples:
        L1 = s.E.shape[0]
        out.append(table[grid.slot_of_day(s.start + L1 + np.arange(s.Y.shape[0]))])
    return np.stack(out)


def baselines(test_set: Sequence[AugmentedSample], train_set: Sequence[AugmentedSample] | None = None,
              grid: TimeGrid | None = None) -> dict[str, M.MetricsReport]:
    if not test_set:
        raise ValueError("empty test split")
    Y = np.stack([s.Y for s in test_set])
    out = {"persistence": M.compute_metrics(Y, persistence_forecast(test_set))}
    if train_set and grid is not None:
        out["historical_average"] = M.compute_metrics(Y, historical_average_forecast(train_set, test_set, grid))
    return out


MICRO_MODEL = ModelConfig(d_model=8, gcn_hidden=[8], gcn_activations=["relu", "identity"], n_heads=1,
                          encoder_layers=2, decoder_layers=3, d_ff=8)


def micro_gradcheck_case(seed: int, N: int = 2, L: int = 4, M: int = 2, p: int = 2, w: int = 1):
    """(fn, inputs) for grad_check over the whole model: loss as a function of every weight."""
    rng = np.random.default_rng(seed)
    model = AstGin(MICRO_MODEL, L, M, p, w, seed=seed)
    names = list(model.params)
    coords = rng.uniform(-1, 1, size=(N, 2))
    A = np.exp(-np.sum((coords[:, None] - coords[None]) ** 2, axis=-1)) + np.eye(N)
    d = A.sum(axis=1) ** -0.5
    A_hat = A * d[:, None] * d[None, :]
    E = rng.uniform(0, 1, size=(L + 1, N, model.full_K))
    Y = rng.uniform(0, 1, size=(M, N))

    def fn(*weights):
        params = dict(zip(names, weights))
        return mse(model.forward(E, A_hat, params=params), as_tensor(Y, like=weights[0]))

    return fn, [model.params[n].data for n in names]
