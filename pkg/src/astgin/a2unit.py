"""Attribute augmentation: fuse availability with static and dynamic attributes."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ingest import WindowPrecursor


@dataclass
class AugmentedSample:
    E: np.ndarray  # (L+1, N, K), K = p + 1 + w * (L + 1)
    Y: np.ndarray  # (M, N)
    start: int
    p: int
    w: int

    @property
    def K(self) -> int:
        return self.E.shape[-1]

    @property
    def n_attributes(self) -> int:
        return self.p + self.w


def augment(X_window, alpha, beta_window) -> np.ndarray:
    """Build E for every step of the window.

    Each step's slice is ``[X_t | alpha | beta_{s} ... beta_{s+L}]``: the
    availability column, the static block, then the whole dynamic window
    flattened step-major.  The attribute blocks are the same for every step.
    """
    X_window = np.asarray(X_window, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    beta_window = np.asarray(beta_window, dtype=np.float64)
    if X_window.ndim != 2:
        raise ValueError(f"X_window must be (L+1, N), got {X_window.shape}")
    steps, n = X_window.shape
    if alpha.ndim != 2 or alpha.shape[0] != n:
        raise ValueError(f"station axis mismatch: X has N={n}, alpha has shape {alpha.shape}")
    if beta_window.ndim != 3 or beta_window.shape[1] != n:
        raise ValueError(f"station axis mismatch: X has N={n}, beta window has shape {beta_window.shape}")
    if beta_window.shape[0] != steps:
        raise ValueError(f"window axis mismatch: X has L+1={steps}, beta window has {beta_window.shape[0]}")
    w = beta_window.shape[2]
    beta_flat = np.transpose(beta_window, (1, 0, 2)).reshape(n, steps * w)
    attrs = np.concatenate([alpha, beta_flat], axis=1)
    E = np.empty((steps, n, 1 + attrs.shape[1]))
    E[:, :, 0] = X_window
    E[:, :, 1:] = attrs[None, :, :]
    return E


def augment_dataset(precursors: Sequence[WindowPrecursor]) -> list[AugmentedSample]:
    if not precursors:
        raise ValueError("no windows to augment")
    out = []
    for i, pre in enumerate(precursors):
        try:
            E = augment(pre.X, pre.alpha, pre.beta)
        except ValueError as exc:
            raise ValueError(f"sample {i} (start {pre.start}): {exc}") from exc
        out.append(AugmentedSample(E, pre.Y, pre.start, pre.alpha.shape[1], pre.beta.shape[2]))
    return out


def minmax_normalize(values: np.ndarray, lo: float | None = None, hi: float | None = None):
    """Rescale to [0, 1]; returns the array and the (lo, hi) used."""
    values = np.asarray(values, dtype=np.float64)
    lo = float(values.min()) if lo is None else lo
    hi = float(values.max()) if hi is None else hi
    if hi <= lo:
        return np.zeros_like(values), (lo, hi)
    return (values - lo) / (hi - lo), (lo, hi)


def dump_sample_csv(path, sample: AugmentedSample) -> None:
    """One row per (step, station) with all K columns, for eyeballing E."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "station", "availability",
                    *(f"poi_{j}" for j in range(sample.p)),
                    *(f"dyn_{j}" for j in range(sample.K - 1 - sample.p))])
        for t in range(sample.E.shape[0]):
            for i in range(sample.E.shape[1]):
                w.writerow([t, i, *(repr(float(v)) for v in sample.E[t, i])])
