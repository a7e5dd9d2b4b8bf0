"""CSV persistence for events plus a JSON manifest.

Each event file has the header ``t,alpha,x,y,dx,dy,dv`` and one row per
sample. Externally produced files in the same schema load the same way.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..errors import ParameterError
from .events import FEATURES, LaneChangeEvent

HEADER = ("t",) + FEATURES
MANIFEST = "manifest.json"


def write_event_csv(path, event: LaneChangeEvent) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for t, row in zip(event.t, event.series):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def read_event_csv(path, driver_id: int, speed_kmh: int, seed: int | None = None) -> LaneChangeEvent:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(h.strip() for h in next(reader))
        if header != HEADER:
            raise ParameterError(f"{path}: expected header {','.join(HEADER)}, got {','.join(header)}")
        rows = np.array([[float(v) for v in r] for r in reader if r], dtype=np.float64)
    if len(rows) < 2:
        raise ParameterError(f"{path}: need at least two samples")
    dt = float(rows[1, 0] - rows[0, 0])
    return LaneChangeEvent(int(driver_id), int(speed_kmh), rows[:, 1:], dt, seed)


def write_events(events, out_dir, root_seed: int | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for ev in events:
        name = f"driver{ev.driver_id:03d}_speed{ev.speed_kmh}.csv"
        write_event_csv(out / name, ev)
        entries.append({"driver_id": ev.driver_id, "speed_kmh": ev.speed_kmh, "seed": ev.seed, "path": name})
    manifest = {"root_seed": root_seed, "sample_rate_hz": 60, "events": entries}
    path = out / MANIFEST
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_events(data_dir) -> list[LaneChangeEvent]:
    data_dir = Path(data_dir)
    mpath = data_dir / MANIFEST
    if not mpath.exists():
        raise FileNotFoundError(f"no {MANIFEST} in {data_dir}")
    manifest = json.loads(mpath.read_text())
    return [
        read_event_csv(data_dir / e["path"], e["driver_id"], e["speed_kmh"], e.get("seed"))
        for e in manifest["events"]
    ]
