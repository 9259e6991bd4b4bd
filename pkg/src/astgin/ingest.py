"""Raw file parsing and aggregation onto the 30-minute availability grid.

File formats (all comma-delimited with a header row, timestamps ``YYYY-MM-DD HH:MM``):

* sessions:   ``station_id,connector_id,start,end,energy_kwh,lat,lon,charger_type``
* weather:    ``timestamp,description``
* POI:        ``station_id,category``
* connectors: ``station_id,connectors``

Processed outputs written by :func:`write_processed` live in one directory:
``availability.csv`` (timestamp + one column per station), ``weather.csv``
(timestamp + normalised city-wide weather), ``poi.csv`` (one-hot rows) and
``stations.csv`` (coordinates, charger type, connector count).
"""

from __future__ import annotations

import csv
import io
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

STEP_MINUTES = 30
TIME_FORMATS = ("%Y-%m-%d %H:%M", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%dT%H:%M:%S")
CHARGER_TYPES = ("slow", "fast", "rapid")
SESSION_COLUMNS = ("station_id", "connector_id", "start", "end", "energy_kwh", "lat", "lon", "charger_type")
POI_CATEGORIES = ("transportation", "catering", "shopping", "education",
                  "accommodation", "medical", "living", "other")
WEATHER_LABELS = {1: "sunny", 2: "cloudy", 3: "foggy", 4: "light rain", 5: "heavy rain"}

# checked in order; first keyword contained in the description wins
_WEATHER_KEYWORDS = (
    (5, ("heavy rain", "thunder", "storm")),
    (4, ("light rain", "rain", "shower")),
    (3, ("fog", "mist", "haze")),
    (2, ("cloud", "overcast")),
    (1, ("sun", "clear", "fair")),
)


class IngestError(ValueError):
    """Raised for malformed inputs that cannot be skipped row by row."""


def parse_time(text: str) -> datetime:
    text = text.strip()
    for fmt in TIME_FORMATS:
        try:
            return datetime.strptime(text, fmt)
        except ValueError:
            continue
    raise ValueError(f"bad timestamp {text!r}")


def format_time(t: datetime) -> str:
    return t.strftime("%Y-%m-%d %H:%M")


def _open_text(source):
    """Accept a path, raw CSV text, or an open text stream."""
    if isinstance(source, Path):
        return open(source, newline="")
    if isinstance(source, str):
        if "\n" not in source and Path(source).is_file():
            return open(source, newline="")
        return io.StringIO(source)
    return source


def _read_rows(source, required: Sequence[str]) -> tuple[list[str], list[tuple[int, list[str]]]]:
    fh = _open_text(source)
    try:
        reader = csv.reader(fh, skipinitialspace=True)
        header = next(reader, None)
        if header is None:
            raise IngestError("empty input: no header row")
        header = [h.strip().lower() for h in header]
        missing = [c for c in required if c not in header]
        if missing:
            raise IngestError(f"missing required column(s): {', '.join(missing)}")
        rows = [(reader.line_num, row) for row in reader if any(cell.strip() for cell in row)]
    finally:
        if fh is not source:
            fh.close()
    return header, rows


# ---------------------------------------------------------------- sessions


@dataclass(frozen=True)
class ChargingSession:
    station_id: str
    connector_id: str
    start: datetime
    end: datetime
    energy_kwh: float
    lat: float
    lon: float
    charger_type: str

    def __post_init__(self):
        if self.end < self.start:
            raise ValueError("negative duration")
        if not self.energy_kwh >= 0:
            raise ValueError("negative energy")
        if self.charger_type not in CHARGER_TYPES:
            raise ValueError(f"unknown charger type {self.charger_type!r}")

    @property
    def duration_minutes(self) -> float:
        return (self.end - self.start).total_seconds() / 60.0


@dataclass
class ParseReport:
    rows_total: int = 0
    skipped: list[tuple[int, str]] = field(default_factory=list)

    @property
    def rows_parsed(self) -> int:
        return self.rows_total - len(self.skipped)

    def reasons(self) -> dict[str, int]:
        return dict(Counter(reason for _, reason in self.skipped))


def parse_sessions(source) -> tuple[list[ChargingSession], ParseReport]:
    """Parse a sessions CSV.  Bad rows are skipped and listed in the report."""
    header, rows = _read_rows(source, SESSION_COLUMNS)
    idx = {name: header.index(name) for name in SESSION_COLUMNS}
    sessions, report = [], ParseReport(rows_total=len(rows))
    for line, row in rows:
        try:
            if len(row) < len(header):
                raise ValueError("wrong field count")
            get = {name: row[i].strip() for name, i in idx.items()}
            if not get["station_id"]:
                raise ValueError("missing station id")
            try:
                start, end = parse_time(get["start"]), parse_time(get["end"])
            except ValueError:
                raise ValueError("bad timestamp") from None
            try:
                energy, lat, lon = float(get["energy_kwh"]), float(get["lat"]), float(get["lon"])
            except ValueError:
                raise ValueError("bad number") from None
            if not (-90 <= lat <= 90 and -180 <= lon <= 180):
                raise ValueError("coordinates out of range")
            ctype = get["charger_type"].lower()
            if ctype not in CHARGER_TYPES:
                raise ValueError("unknown charger type")
            sessions.append(ChargingSession(get["station_id"], get["connector_id"], start, end,
                                            energy, lat, lon, ctype))
        except ValueError as exc:
            report.skipped.append((line, str(exc)))
    if report.skipped:
        log.warning("skipped %d of %d session rows: %s", len(report.skipped), report.rows_total, report.reasons())
    return sessions, report


# ---------------------------------------------------------------- time grid


@dataclass(frozen=True)
class TimeGrid:
    origin: datetime
    count: int
    step_minutes: int = STEP_MINUTES

    def __post_init__(self):
        if self.step_minutes != STEP_MINUTES:
            raise ValueError(f"step must be {STEP_MINUTES} minutes, got {self.step_minutes}")
        if self.count < 1:
            raise ValueError("grid needs at least one step")

    @classmethod
    def covering(cls, start: datetime, end: datetime) -> "TimeGrid":
        """Smallest aligned grid containing [start, end)."""
        day = start.replace(hour=0, minute=0, second=0, microsecond=0)
        lo = day + timedelta(minutes=STEP_MINUTES * math.floor((start - day).total_seconds() / 60 / STEP_MINUTES))
        span = (end - lo).total_seconds() / 60
        return cls(lo, max(1, math.ceil(span / STEP_MINUTES)))

    @property
    def end(self) -> datetime:
        return self.origin + timedelta(minutes=self.step_minutes * self.count)

    def times(self) -> list[datetime]:
        return [self.origin + timedelta(minutes=self.step_minutes * k) for k in range(self.count)]

    def minutes_since_origin(self, t: datetime) -> float:
        return (t - self.origin).total_seconds() / 60.0

    def slot_of_day(self, k) -> np.ndarray:
        """Index of the 30-minute slot within the day (0..47) of step(s) ``k``."""
        first = (self.origin.hour * 60 + self.origin.minute) // self.step_minutes
        return (np.asarray(k) + first) % (24 * 60 // self.step_minutes)


@dataclass
class AvailabilitySeries:
    grid: TimeGrid
    station_ids: list[str]
    values: np.ndarray  # (N, T), each entry in [0, 1]
    connector_counts: np.ndarray  # (N,)
    clamps: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if len(set(self.station_ids)) != len(self.station_ids):
            raise ValueError("duplicate station ids")
        if self.values.shape != (len(self.station_ids), self.grid.count):
            raise ValueError(f"values shape {self.values.shape} != ({len(self.station_ids)}, {self.grid.count})")
        if self.values.size and (self.values.min() < 0 or self.values.max() > 1):
            raise ValueError("availability outside [0, 1]")

    @property
    def n_stations(self) -> int:
        return len(self.station_ids)


def occupancy_minutes(sessions: Iterable[ChargingSession], grid: TimeGrid,
                      station_ids: Sequence[str]) -> np.ndarray:
    """Charging minutes per (station, window), sessions clipped at window edges."""
    pos = {sid: i for i, sid in enumerate(station_ids)}
    occ = np.zeros((len(station_ids), grid.count))
    step, total = grid.step_minutes, grid.step_minutes * grid.count
    for s in sessions:
        if s.station_id not in pos:
            raise IngestError(f"unknown station id {s.station_id!r} (not in connector counts)")
        a = max(grid.minutes_since_origin(s.start), 0.0)
        b = min(grid.minutes_since_origin(s.end), float(total))
        if b <= a:
            continue
        row = occ[pos[s.station_id]]
        k = int(a // step)
        while k * step < b:
            row[k] += min(b, (k + 1) * step) - max(a, k * step)
            k += 1
    return occ


def aggregate_availability(sessions: Sequence[ChargingSession], grid: TimeGrid,
                           connector_counts: dict[str, int]) -> AvailabilitySeries:
    """Availability per window: 1 - occupied minutes / (30 x connectors)."""
    station_ids = list(connector_counts)
    counts = np.array([connector_counts[s] for s in station_ids], dtype=np.int64)
    if np.any(counts < 1):
        bad = [s for s, c in zip(station_ids, counts) if c < 1]
        raise IngestError(f"connector count must be >= 1 for {bad}")
    occ = occupancy_minutes(sessions, grid, station_ids)
    raw = 1.0 - occ / (grid.step_minutes * counts[:, None])
    clamps = int(np.count_nonzero(raw < 0))
    if clamps:
        log.warning("%d window(s) over capacity clamped to 0 availability", clamps)
    return AvailabilitySeries(grid, station_ids, np.clip(raw, 0.0, 1.0), counts, clamps)


# ---------------------------------------------------------------- weather


def weather_label(description: str) -> int | None:
    text = " ".join(description.strip().lower().split())
    for label, keys in _WEATHER_KEYWORDS:
        if any(k in text for k in keys):
            return label
    return None


def parse_weather(source) -> list[tuple[datetime, int]]:
    """Map hourly weather descriptions to labels 1 (sunny) .. 5 (heavy rain).

    Unrecognised descriptions repeat the previous known label; records are
    sorted by time if they arrive out of order.
    """
    _, rows = _read_rows(source, ("timestamp", "description"))
    if not rows:
        raise IngestError("empty weather input")
    parsed = []
    for line, row in rows:
        if len(row) < 2:
            log.warning("weather line %d: wrong field count, skipped", line)
            continue
        try:
            t = parse_time(row[0])
        except ValueError:
            log.warning("weather line %d: bad timestamp %r, skipped", line, row[0])
            continue
        parsed.append((t, row[1]))
    if any(b[0] < a[0] for a, b in zip(parsed, parsed[1:])):
        log.warning("weather timestamps not monotone; sorting")
        parsed.sort(key=lambda r: r[0])
    records, last = [], None
    for t, desc in parsed:
        label = weather_label(desc)
        if label is None:
            if last is None:
                log.warning("unknown weather %r at %s with no earlier label, skipped", desc, format_time(t))
                continue
            log.warning("unknown weather %r at %s, carrying label %d forward", desc, format_time(t), last)
            label = last
        records.append((t, label))
        last = label
    if not records:
        raise IngestError("no usable weather records")
    return records


@dataclass
class DynamicAttributes:
    grid: TimeGrid
    station_ids: list[str]
    beta: np.ndarray  # (N, w, T) in [0, 1]

    @property
    def w(self) -> int:
        return self.beta.shape[1]


def encode_weather(records: Sequence[tuple[datetime, int]], grid: TimeGrid,
                   station_ids: Sequence[str]) -> DynamicAttributes:
    """Each grid step takes the latest record at or before it, scaled to (label-1)/4."""
    times = np.array([np.datetime64(t, "m") for t, _ in records])
    labels = np.array([lab for _, lab in records], dtype=np.float64)
    order = np.argsort(times, kind="stable")
    times, labels = times[order], labels[order]
    steps = np.array([np.datetime64(t, "m") for t in grid.times()])
    idx = np.searchsorted(times, steps, side="right") - 1
    if idx[0] < 0:
        raise IngestError(f"uncovered grid start: no weather record at or before {format_time(grid.origin)}")
    city = (labels[idx] - 1.0) / 4.0
    beta = np.broadcast_to(city, (len(station_ids), 1, grid.count)).copy()
    return DynamicAttributes(grid, list(station_ids), beta)


# ---------------------------------------------------------------- POI


@dataclass
class StaticAttributes:
    station_ids: list[str]
    alpha: np.ndarray  # (N, p) one-hot

    @property
    def p(self) -> int:
        return self.alpha.shape[1]


def encode_poi(poi_table: dict[str, str], station_ids: Sequence[str] | None = None) -> StaticAttributes:
    station_ids = list(poi_table) if station_ids is None else list(station_ids)
    missing = [s for s in station_ids if s not in poi_table]
    if missing:
        raise IngestError(f"no POI category for station(s) {missing}")
    alpha = np.zeros((len(station_ids), len(POI_CATEGORIES)))
    for i, sid in enumerate(station_ids):
        name = poi_table[sid].strip().lower()
        if name not in POI_CATEGORIES:
            raise IngestError(f"unknown POI category {poi_table[sid]!r}; valid: {', '.join(POI_CATEGORIES)}")
        alpha[i, POI_CATEGORIES.index(name)] = 1.0
    return StaticAttributes(station_ids, alpha)


def read_poi_table(source) -> dict[str, str]:
    header, rows = _read_rows(source, ("station_id", "category"))
    i, j = header.index("station_id"), header.index("category")
    return {row[i].strip(): row[j].strip() for _, row in rows}


def read_connector_counts(source) -> dict[str, int]:
    header, rows = _read_rows(source, ("station_id", "connectors"))
    i, j = header.index("station_id"), header.index("connectors")
    out = {}
    for line, row in rows:
        try:
            out[row[i].strip()] = int(row[j])
        except ValueError:
            raise IngestError(f"connectors line {line}: not an integer {row[j]!r}") from None
    return out


# ---------------------------------------------------------------- windows and splits


@dataclass
class WindowPrecursor:
    start: int
    X: np.ndarray  # (L+1, N)
    alpha: np.ndarray  # (N, p)
    beta: np.ndarray  # (L+1, N, w)
    Y: np.ndarray  # (M, N)


def make_windows(avail: AvailabilitySeries, static: StaticAttributes | None,
                 dynamic: DynamicAttributes | None, L: int, M: int) -> list[WindowPrecursor]:
    """Slide over the series: inputs s..s+L, targets s+L+1..s+L+M."""
    if L < 1 or M < 1:
        raise ValueError(f"L and M must be >= 1, got L={L}, M={M}")
    N, T = avail.values.shape
    need = L + 1 + M
    if T < need:
        raise ValueError(f"series too short: T={T}, need at least L+1+M={need}")
    X = avail.values.T  # (T, N)
    alpha = static.alpha if static is not None else np.zeros((N, 0))
    beta = np.transpose(dynamic.beta, (2, 0, 1)) if dynamic is not None else np.zeros((T, N, 0))
    if alpha.shape[0] != N or beta.shape[:2] != (T, N):
        raise ValueError("attribute station/time axes do not match the availability series")
    return [WindowPrecursor(s, X[s:s + L + 1].copy(), alpha, beta[s:s + L + 1].copy(),
                            X[s + L + 1:s + L + 1 + M].copy())
            for s in range(T - L - M)]


def split_dataset(samples: Sequence, ratios: tuple[float, float, float] = (0.50, 0.33, 0.17),
                  seed: int = 0, method: str = "random") -> tuple[list, list, list]:
    """Partition into train/val/test; sizes are floor, floor, remainder."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    n = len(samples)
    if n < 3:
        raise ValueError(f"need at least 3 samples to split, got {n}")
    if method == "random":
        order = np.random.default_rng(seed).permutation(n)
    elif method == "chronological":
        order = np.arange(n)
    else:
        raise ValueError(f"unknown split method {method!r}")
    n_train = int(math.floor(n * ratios[0] + 1e-9))
    n_val = int(math.floor(n * ratios[1] + 1e-9))
    take = [samples[i] for i in order]
    return take[:n_train], take[n_train:n_train + n_val], take[n_train + n_val:]


# ---------------------------------------------------------------- processed files


@dataclass
class StationInfo:
    station_id: str
    lat: float
    lon: float
    charger_type: str
    connectors: int


@dataclass
class ProcessedData:
    series: AvailabilitySeries
    static: StaticAttributes
    dynamic: DynamicAttributes
    stations: list[StationInfo]

    @property
    def coords(self) -> np.ndarray:
        return np.array([[s.lat, s.lon] for s in self.stations])


def station_info(sessions: Sequence[ChargingSession], connector_counts: dict[str, int]) -> list[StationInfo]:
    first: dict[str, ChargingSession] = {}
    for s in sessions:
        first.setdefault(s.station_id, s)
    missing = [sid for sid in connector_counts if sid not in first]
    if missing:
        raise IngestError(f"no sessions (hence no coordinates) for station(s) {missing}")
    return [StationInfo(sid, first[sid].lat, first[sid].lon, first[sid].charger_type, int(n))
            for sid, n in connector_counts.items()]


def write_processed(out_dir, data: ProcessedData) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    series, times = data.series, data.series.grid.times()
    paths = [out / "availability.csv", out / "weather.csv", out / "poi.csv", out / "stations.csv"]
    with open(paths[0], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", *series.station_ids])
        for k, t in enumerate(times):
            w.writerow([format_time(t), *(repr(float(v)) for v in series.values[:, k])])
    with open(paths[1], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "weather"])
        for k, t in enumerate(times):
            w.writerow([format_time(t), repr(float(data.dynamic.beta[0, 0, k]))])
    with open(paths[2], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["station_id", *POI_CATEGORIES])
        for sid, row in zip(data.static.station_ids, data.static.alpha):
            w.writerow([sid, *(int(v) for v in row)])
    with open(paths[3], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["station_id", "lat", "lon", "charger_type", "connectors"])
        for s in data.stations:
            w.writerow([s.station_id, repr(s.lat), repr(s.lon), s.charger_type, s.connectors])
    return paths


def load_processed(data_dir) -> ProcessedData:
    d = Path(data_dir)
    for name in ("availability.csv", "weather.csv", "poi.csv", "stations.csv"):
        if not (d / name).is_file():
            raise FileNotFoundError(str(d / name))
    with open(d / "availability.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    station_ids = rows[0][1:]
    times = [parse_time(r[0]) for r in rows[1:]]
    values = np.array([[float(v) for v in r[1:]] for r in rows[1:]]).T
    grid = TimeGrid(times[0], len(times))
    with open(d / "stations.csv", newline="") as fh:
        info = {r["station_id"]: StationInfo(r["station_id"], float(r["lat"]), float(r["lon"]),
                                             r["charger_type"], int(r["connectors"]))
                for r in csv.DictReader(fh)}
    stations = [info[s] for s in station_ids]
    series = AvailabilitySeries(grid, station_ids, values, np.array([s.connectors for s in stations]))
    with open(d / "weather.csv", newline="") as fh:
        city = np.array([float(r["weather"]) for r in csv.DictReader(fh)])
    if city.size != grid.count:
        raise IngestError("weather.csv and availability.csv cover different grids")
    dynamic = DynamicAttributes(grid, station_ids, np.broadcast_to(city, (len(station_ids), 1, grid.count)).copy())
    with open(d / "poi.csv", newline="") as fh:
        poi = {r[0]: [float(v) for v in r[1:]] for r in list(csv.reader(fh))[1:]}
    static = StaticAttributes(station_ids, np.array([poi[s] for s in station_ids]))
    return ProcessedData(series, static, dynamic, stations)


def ingest_files(sessions_path, weather_path, poi_path, connectors_path,
                 start: datetime | None = None, periods: int | None = None) -> tuple[ProcessedData, dict]:
    """Full ingest of the four raw files; returns the data and a summary report."""
    sessions, report = parse_sessions(Path(sessions_path))
    counts = read_connector_counts(Path(connectors_path))
    known = set(counts)
    unknown = sorted({s.station_id for s in sessions} - known)
    if unknown:
        raise IngestError(f"sessions reference station(s) missing from the connectors file: {unknown}")
    if start is not None and periods is not None:
        grid = TimeGrid(start, periods)
    else:
        if not sessions:
            raise IngestError("no valid sessions and no explicit grid")
        lo = start or min(s.start for s in sessions)
        grid = TimeGrid.covering(lo, max(s.end for s in sessions))
        if periods is not None:
            grid = TimeGrid(grid.origin, periods)
    series = aggregate_availability(sessions, grid, counts)
    dynamic = encode_weather(parse_weather(Path(weather_path)), grid, series.station_ids)
    static = encode_poi(read_poi_table(Path(poi_path)), series.station_ids)
    stations = station_info(sessions, counts)
    by_type = Counter(s.charger_type for s in sessions)
    station_types = Counter(s.charger_type for s in stations)
    summary = {
        "n_stations": len(stations),
        "n_sessions": len(sessions),
        "sessions_by_type": {t: by_type.get(t, 0) for t in CHARGER_TYPES},
        "stations_by_type": {t: station_types.get(t, 0) for t in CHARGER_TYPES},
        "rows_total": report.rows_total,
        "rows_skipped": len(report.skipped),
        "skip_reasons": report.reasons(),
        "skipped_rows": [{"line": ln, "reason": r} for ln, r in report.skipped],
        "clamps": series.clamps,
        "grid": {"origin": format_time(grid.origin), "periods": grid.count, "step_minutes": grid.step_minutes},
    }
    return ProcessedData(series, static, dynamic, stations), summary
