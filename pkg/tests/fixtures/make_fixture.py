"""Regenerate the 200-row ingest fixture and its expected outputs.

The expected values come from a minute-by-minute occupancy count that shares
no code with the package.  Run from this directory: ``python make_fixture.py``.
"""

import csv
import json
import random
from datetime import datetime, timedelta
from fractions import Fraction

ORIGIN = datetime(2018, 3, 5, 0, 0)
PERIODS = 192
STATIONS = {  # id: (lat, lon, type, connectors, poi)
    "CP001": (56.4620, -2.9707, "rapid", 2, "shopping"),
    "CP002": (56.4580, -2.9820, "slow", 1, "education"),
    "CP003": (56.4700, -2.9600, "fast", 2, "transportation"),
    "CP004": (56.4550, -2.9500, "slow", 1, "other"),
}
FMT = "%Y-%m-%d %H:%M"
BAD_ROWS = [
    ["CP001", "1", "2018-03-05 10:00", "2018-03-05 09:30", "3.0", "56.4620", "-2.9707", "rapid"],
    ["CP002", "1", "2018-03-05 25:00", "2018-03-05 26:00", "3.0", "56.4580", "-2.9820", "slow"],
    ["CP003", "1", "2018-03-05 11:00", "2018-03-05 11:20", "-1.0", "56.4700", "-2.9600", "fast"],
    ["CP004", "1", "2018-03-05 12:00", "2018-03-05 12:40", "2.0", "56.4550", "-2.9500", "ultra"],
    ["", "1", "2018-03-05 13:00", "2018-03-05 13:10", "2.0", "56.4550", "-2.9500", "slow"],
    ["CP001", "2", "2018-03-05 14:00", "2018-03-05 14:30", "abc", "56.4620", "-2.9707", "rapid"],
]


def make_rows(seed=7):
    rng = random.Random(seed)
    rows = []
    ids = sorted(STATIONS)
    while len(rows) < 200 - len(BAD_ROWS):
        sid = rng.choice(ids)
        lat, lon, ctype, m, _ = STATIONS[sid]
        # a few sessions start before the grid or run past its end
        start = ORIGIN + timedelta(minutes=rng.randint(-60, PERIODS * 30 - 10))
        dur = rng.choice([0, 5, 17, 30, 45, 61, 95, 130])
        end = start + timedelta(minutes=dur)
        rows.append([sid, str(rng.randint(1, m)), start.strftime(FMT), end.strftime(FMT),
                     f"{dur / 60 * 7:.2f}", f"{lat:.4f}", f"{lon:.4f}", ctype])
    for k, bad in enumerate(BAD_ROWS):
        rows.insert(20 + 30 * k, bad)
    return rows


def minute_oracle(rows):
    ids = sorted(STATIONS)
    busy = {sid: [0] * (PERIODS * 30) for sid in ids}
    n_sessions, by_type = 0, {"slow": 0, "fast": 0, "rapid": 0}
    for r in rows:
        if r in BAD_ROWS:
            continue
        n_sessions += 1
        by_type[r[7]] += 1
        a = int((datetime.strptime(r[2], FMT) - ORIGIN).total_seconds() // 60)
        b = int((datetime.strptime(r[3], FMT) - ORIGIN).total_seconds() // 60)
        for minute in range(max(a, 0), min(b, PERIODS * 30)):
            busy[r[0]][minute] += 1
    values, clamps = [], 0
    for sid in ids:
        m = STATIONS[sid][3]
        row = []
        for k in range(PERIODS):
            occ = sum(busy[sid][30 * k:30 * k + 30])
            x = 1 - Fraction(occ, 30 * m)
            if x < 0:
                clamps += 1
                x = Fraction(0)
            row.append(float(x))
        values.append(row)
    return {"n_sessions": n_sessions, "sessions_by_type": by_type, "clamps": clamps,
            "rows_total": len(rows), "skipped_lines": [rows.index(b) + 2 for b in BAD_ROWS],
            "station_ids": ids, "availability": values}


def main():
    rows = make_rows()
    with open("sessions_200.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["station_id", "connector_id", "start", "end", "energy_kwh", "lat", "lon", "charger_type"])
        w.writerows(rows)
    with open("weather.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "description"])
        labels = ["sunny", "cloudy", "cloudy", "light rain", "heavy rain", "drizzle?", "foggy", "sunny"]
        for h in range(0, 96, 3):
            w.writerow([(ORIGIN + timedelta(hours=h)).strftime(FMT), labels[(h // 3) % len(labels)]])
    with open("poi.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["station_id", "category"])
        w.writerows((sid, v[4]) for sid, v in sorted(STATIONS.items()))
    with open("connectors.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["station_id", "connectors"])
        w.writerows((sid, v[3]) for sid, v in sorted(STATIONS.items()))
    with open("expected_200.json", "w") as fh:
        json.dump(minute_oracle(rows), fh, indent=1)


if __name__ == "__main__":
    main()
