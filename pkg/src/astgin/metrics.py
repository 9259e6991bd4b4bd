"""Forecast quality metrics, pooled over every station and horizon step."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class MetricsReport:
    rmse: float
    r2: float
    var_score: float
    mae: float
    accuracy: float
    n_points: int

    def to_dict(self) -> dict:
        # serialised key names are fixed: rmse, r2, var, mae, accuracy
        d = asdict(self)
        d["var"] = d.pop("var_score")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(rmse=d["rmse"], r2=d["r2"], var_score=d["var"], mae=d["mae"],
                   accuracy=d["accuracy"], n_points=d.get("n_points", 0))


def _pair(y, y_hat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ValueError(f"shape mismatch: truth {y.shape} vs prediction {y_hat.shape}")
    if y.size == 0:
        raise ValueError("empty input")
    return y, y_hat


def rmse(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


def r2(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    denom = np.sum((y - y.mean()) ** 2)
    if denom == 0:
        raise ValueError("undefined R2: ground truth is constant")
    return float(1.0 - np.sum((y - y_hat) ** 2) / denom)


def var_score(y, y_hat) -> float:
    """Explained variance, with population variances over all entries."""
    y, y_hat = _pair(y, y_hat)
    vy = np.var(y)
    if vy == 0:
        raise ValueError("undefined explained variance: ground truth is constant")
    return float(1.0 - np.var(y - y_hat) / vy)


def mae(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def accuracy(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    norm = np.linalg.norm(y.ravel())
    if norm == 0:
        raise ValueError("undefined accuracy: ground truth is all zero")
    return float(1.0 - np.linalg.norm((y - y_hat).ravel()) / norm)


def compute_metrics(y, y_hat) -> MetricsReport:
    y, y_hat = _pair(y, y_hat)
    return MetricsReport(rmse=rmse(y, y_hat), r2=r2(y, y_hat), var_score=var_score(y, y_hat),
                         mae=mae(y, y_hat), accuracy=accuracy(y, y_hat), n_points=int(y.size))


def per_step_metrics(y, y_hat) -> list[MetricsReport]:
    """Breakdown by horizon step; inputs are (..., M, N) with the step axis second to last."""
    y, y_hat = _pair(y, y_hat)
    return [compute_metrics(y[..., j, :], y_hat[..., j, :]) for j in range(y.shape[-2])]
