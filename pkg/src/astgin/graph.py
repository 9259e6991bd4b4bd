"""Station graph: distances, Gaussian-kernel adjacency and its normalisation."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

EARTH_RADIUS_M = 6371000.0


@dataclass
class StationGraph:
    station_ids: list[str]
    coords: np.ndarray  # (N, 2) lat, lon degrees
    dist: np.ndarray  # (N, N) metres
    A: np.ndarray
    A_hat: np.ndarray
    sigma: float
    kappa: float

    @property
    def n(self) -> int:
        return len(self.station_ids)

    def permuted(self, perm) -> "StationGraph":
        perm = np.asarray(perm)
        return StationGraph([self.station_ids[i] for i in perm], self.coords[perm],
                            self.dist[np.ix_(perm, perm)], self.A[np.ix_(perm, perm)],
                            self.A_hat[np.ix_(perm, perm)], self.sigma, self.kappa)


def pairwise_distance(coords) -> np.ndarray:
    """Great-circle (haversine) distances in metres between (lat, lon) rows."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ValueError(f"coords must be (N, 2), got {coords.shape}")
    lat, lon = coords[:, 0], coords[:, 1]
    if np.any(np.abs(lat) > 90) or np.any(np.abs(lon) > 180):
        raise ValueError("coordinates out of range: lat must be in [-90, 90], lon in [-180, 180]")
    phi = np.radians(lat)
    lam = np.radians(lon)
    dphi = phi[:, None] - phi[None, :]
    dlam = lam[:, None] - lam[None, :]
    h = np.sin(dphi / 2) ** 2 + np.cos(phi[:, None]) * np.cos(phi[None, :]) * np.sin(dlam / 2) ** 2
    d = 2 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return d


def _check_dist(dist: np.ndarray) -> np.ndarray:
    dist = np.asarray(dist, dtype=np.float64)
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
        raise ValueError(f"distance matrix must be square, got {dist.shape}")
    if np.any(dist < 0) or not np.allclose(dist, dist.T) or np.any(np.diag(dist) != 0):
        raise ValueError("distance matrix must be symmetric, nonnegative, zero on the diagonal")
    return dist


def _upper(dist: np.ndarray) -> np.ndarray:
    return dist[np.triu_indices(dist.shape[0], k=1)]


def default_sigma(dist) -> float:
    """Population standard deviation of the distinct pairwise distances."""
    dist = _check_dist(dist)
    if dist.shape[0] < 2:
        raise ValueError("need at least two stations")
    return float(np.std(_upper(dist)))


def default_kappa(dist, percentile: float = 95.0) -> float:
    dist = _check_dist(dist)
    if dist.shape[0] < 2:
        raise ValueError("need at least two stations")
    return float(np.percentile(_upper(dist), percentile))


def build_adjacency(dist, sigma: float, kappa: float) -> np.ndarray:
    dist = _check_dist(dist)
    if not sigma > 0:
        raise ValueError(f"degenerate bandwidth: sigma must be > 0, got {sigma}")
    if not kappa > 0:
        raise ValueError(f"kappa must be > 0, got {kappa}")
    A = np.exp(-(dist ** 2) / sigma ** 2)
    A[dist > kappa] = 0.0
    return A


def normalize_adjacency(A) -> np.ndarray:
    """Return D^-1/2 (A + I) D^-1/2 with D the row sums of A + I."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"adjacency must be square, got {A.shape}")
    if np.any(A < 0):
        raise ValueError("adjacency has negative entries")
    A_tilde = A + np.eye(A.shape[0])
    d = 1.0 / np.sqrt(A_tilde.sum(axis=1))
    out = A_tilde * d[:, None] * d[None, :]
    return 0.5 * (out + out.T)


def build_station_graph(station_ids, coords, dist=None, sigma: float | None = None,
                        kappa: float | None = None) -> StationGraph:
    """Assemble the graph; ``dist`` overrides the haversine distances."""
    coords = np.asarray(coords, dtype=np.float64)
    dist = pairwise_distance(coords) if dist is None else _check_dist(dist)
    if len(station_ids) != dist.shape[0]:
        raise ValueError(f"{len(station_ids)} station ids for a {dist.shape[0]}x{dist.shape[0]} distance matrix")
    if len(station_ids) == 1:
        A = np.ones((1, 1))
        return StationGraph(list(station_ids), coords, dist, A, normalize_adjacency(A),
                            sigma or 1.0, kappa or 1.0)
    sigma = default_sigma(dist) if sigma is None else sigma
    kappa = default_kappa(dist) if kappa is None else kappa
    A = build_adjacency(dist, sigma, kappa)
    return StationGraph(list(station_ids), coords, dist, A, normalize_adjacency(A), sigma, kappa)


def read_matrix_csv(path) -> tuple[list[str], np.ndarray]:
    """Read an N x N matrix with a station-id header row and first column."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = [h.strip() for h in rows[0][1:]]
    ids, values = [], []
    for row in rows[1:]:
        if not row:
            continue
        ids.append(row[0].strip())
        values.append([float(v) for v in row[1:]])
    if ids != header:
        raise ValueError("row labels must match the header order")
    return ids, np.asarray(values)


def write_matrix_csv(path, station_ids, matrix) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["station_id", *station_ids])
        for sid, row in zip(station_ids, np.asarray(matrix)):
            w.writerow([sid, *(repr(float(v)) for v in row)])
