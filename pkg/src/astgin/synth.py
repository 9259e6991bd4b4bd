"""Synthetic availability traces with known daily, POI, weather and spatial effects.

The generator writes the same raw CSV files the ingest step reads, so the
whole pipeline can be exercised without the real dataset.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .graph import StationGraph, build_station_graph, default_sigma, pairwise_distance
from .ingest import (
    CHARGER_TYPES,
    POI_CATEGORIES,
    WEATHER_LABELS,
    AvailabilitySeries,
    DynamicAttributes,
    ProcessedData,
    StaticAttributes,
    StationInfo,
    TimeGrid,
    encode_poi,
    encode_weather,
    format_time,
    parse_time,
    write_processed,
)

KM_PER_DEG_LAT = 111.32
CHARGER_POWER_KW = {"slow": 7.0, "fast": 22.0, "rapid": 50.0}


@dataclass
class SynthConfig:
    n_stations: int = 10
    days: int = 60
    seed: int = 0
    base: float = 0.35
    daily_amplitude: float = 0.2
    weather_effect: float = 0.3
    poi_phase_shift: float = 3.0
    spatial_smoothing: float = 0.3
    noise_std: float = 0.05
    weather_persistence: float = 0.8
    radius_km: float = 5.0
    center: tuple[float, float] = (56.462, -2.9707)
    start: str = "2018-03-05 00:00"
    max_connectors: int = 2

    def __post_init__(self):
        if not 0 <= self.spatial_smoothing < 1:
            raise ValueError("spatial_smoothing must be in [0, 1)")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.n_stations < 1 or self.days < 1:
            raise ValueError("need at least one station and one day")
        if not 0 <= self.weather_persistence <= 1:
            raise ValueError("weather_persistence must be in [0, 1]")


@dataclass
class SynthDataset:
    config: SynthConfig
    series: AvailabilitySeries
    static: StaticAttributes
    dynamic: DynamicAttributes
    graph: StationGraph
    stations: list[StationInfo]
    hourly_weather: np.ndarray  # labels 1..5, one per hour
    poi: dict[str, str] = field(default_factory=dict)

    @property
    def processed(self) -> ProcessedData:
        return ProcessedData(self.series, self.static, self.dynamic, self.stations)


def weather_chain(hours: int, rng: np.random.Generator, persistence: float = 0.8) -> np.ndarray:
    """Labels 1..5; stay with ``persistence``, else step to a neighbouring state."""
    move = (1.0 - persistence) / 2.0
    labels = np.empty(hours, dtype=np.int64)
    labels[0] = rng.integers(1, 6)
    u = rng.random(hours)
    for h in range(1, hours):
        prev = labels[h - 1]
        if u[h] < move and prev > 1:
            labels[h] = prev - 1
        elif move <= u[h] < 2 * move and prev < 5:
            labels[h] = prev + 1
        else:
            labels[h] = prev
    return labels


def _station_layout(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    r = cfg.radius_km * np.sqrt(rng.random(cfg.n_stations))
    theta = 2 * np.pi * rng.random(cfg.n_stations)
    lat0, lon0 = cfg.center
    lat = lat0 + r * np.sin(theta) / KM_PER_DEG_LAT
    lon = lon0 + r * np.cos(theta) / (KM_PER_DEG_LAT * np.cos(np.radians(lat0)))
    return np.column_stack([lat, lon])


def _neighbour_average(A: np.ndarray, signal: np.ndarray) -> np.ndarray:
    W = A - np.diag(np.diag(A))
    deg = W.sum(axis=1, keepdims=True)
    avg = np.divide(W @ signal, deg, out=signal.copy(), where=deg > 0)
    return avg


def generate(cfg: SynthConfig) -> SynthDataset:
    rng = np.random.default_rng(cfg.seed)
    n, T = cfg.n_stations, cfg.days * 48
    ids = [f"S{i:03d}" for i in range(n)]
    coords = _station_layout(cfg, rng)
    dist = pairwise_distance(coords)
    # Two stations (or coincident layouts) give a zero-variance bandwidth; use the layout radius instead.
    sigma = default_sigma(dist) if n > 2 else 0.0
    graph = build_station_graph(ids, coords, dist, sigma=sigma if sigma > 0 else cfg.radius_km * 1000.0)
    poi = {sid: POI_CATEGORIES[i % len(POI_CATEGORIES)] for i, sid in enumerate(ids)}
    connectors = rng.integers(1, cfg.max_connectors + 1, size=n)
    hourly = weather_chain(cfg.days * 24, rng, cfg.weather_persistence)
    noise = rng.standard_normal((n, T))

    grid = TimeGrid(parse_time(cfg.start), T)
    severity = (np.repeat(hourly, 2) - 1) / 4.0  # (T,)
    hours = ((grid.origin.hour * 60 + grid.origin.minute) / 60.0 + np.arange(T) * 0.5) % 24
    phase = cfg.poi_phase_shift * np.array([POI_CATEGORIES.index(poi[s]) for s in ids], dtype=np.float64)
    daily = cfg.daily_amplitude * np.sin(2 * np.pi * (hours[None, :] - phase[:, None]) / 24.0)
    signal = cfg.base + daily + cfg.weather_effect * (1.0 - severity)[None, :]
    s = cfg.spatial_smoothing
    if s > 0 and n > 1:
        signal = (1 - s) * signal + s * _neighbour_average(graph.A, signal)
    values = np.clip(signal + cfg.noise_std * noise, 0.0, 1.0)

    series = AvailabilitySeries(grid, ids, values, connectors)
    static = encode_poi(poi, ids)
    t0 = grid.origin
    records = [(t0 + timedelta(hours=h), int(lab)) for h, lab in enumerate(hourly)]
    dynamic = encode_weather(records, grid, ids)
    stations = [StationInfo(sid, float(coords[i, 0]), float(coords[i, 1]),
                            CHARGER_TYPES[i % len(CHARGER_TYPES)], int(connectors[i]))
                for i, sid in enumerate(ids)]
    return SynthDataset(cfg, series, static, dynamic, graph, stations, hourly, poi)


def sessions_from_availability(data: SynthDataset) -> list[tuple]:
    """Charging sessions whose re-aggregation reproduces the series to the minute."""
    rows = []
    grid, series = data.series.grid, data.series
    for i, st in enumerate(data.stations):
        m = st.connectors
        busy = np.rint((1.0 - series.values[i]) * grid.step_minutes * m).astype(int)
        for k in np.nonzero(busy)[0]:
            left = int(busy[k])
            t = grid.origin + timedelta(minutes=grid.step_minutes * int(k))
            for c in range(m):
                dur = min(left, grid.step_minutes)
                if dur <= 0:
                    break
                energy = CHARGER_POWER_KW[st.charger_type] * dur / 60.0
                rows.append((st.station_id, str(c + 1), t, t + timedelta(minutes=dur), energy,
                             st.lat, st.lon, st.charger_type))
                left -= dur
    return rows


def write_raw(out_dir, data: SynthDataset) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "sessions.csv", out / "weather_raw.csv", out / "poi_raw.csv", out / "connectors.csv"]
    with open(paths[0], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["station_id", "connector_id", "start", "end", "energy_kwh", "lat", "lon", "charger_type"])
        for sid, conn, a, b, e, lat, lon, ctype in sessions_from_availability(data):
            w.writerow([sid, conn, format_time(a), format_time(b), f"{e:.3f}", f"{lat:.6f}", f"{lon:.6f}", ctype])
    t0: datetime = data.series.grid.origin
    with open(paths[1], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "description"])
        for h, lab in enumerate(data.hourly_weather):
            w.writerow([format_time(t0 + timedelta(hours=h)), WEATHER_LABELS[int(lab)]])
    with open(paths[2], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["station_id", "category"])
        w.writerows(data.poi.items())
    with open(paths[3], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["station_id", "connectors"])
        w.writerows((s.station_id, s.connectors) for s in data.stations)
    return paths


def write_dataset(out_dir, data: SynthDataset) -> list[Path]:
    """Raw files under ``raw/`` plus the processed files the trainer reads."""
    out = Path(out_dir)
    return write_raw(out / "raw", data) + write_processed(out, data.processed)
