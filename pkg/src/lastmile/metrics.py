"""Delimited metrics output and aggregation.

CSV files are byte-deterministic: fixed column order, fixed-point floats with
six decimals, LF line endings, and a schema-version comment line above the
header so downstream parsers can detect drift.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass

import numpy as np

SCHEMA_VERSION = "v1"
_VERSION_PREFIX = "# lastmile-csv "

CURVE_COLUMNS = [
    "episode", "seed", "epsilon", "sum_reward",
    "mean_distance_reward", "mean_trip_reward", "mean_utilization_reward",
    "trips", "served_per_trip", "served", "dropped", "deferred", "open_end",
    "mean_utilization", "c2s_loss", "vrp_loss",
]

TRIP_COLUMNS = [
    "trip_id", "depot_id", "vehicle_id", "start_time", "order_sequence",
    "leg_distances", "return_distance", "load", "utilization",
]

TRACE_COLUMNS = ["order_id", "state_hash", "action", "settled_reward"]


@dataclass
class EpisodeMetrics:
    """One row of the learning-curve / evaluation tables."""

    episode: int
    seed: int
    epsilon: float
    sum_reward: float
    mean_distance_reward: float
    mean_trip_reward: float
    mean_utilization_reward: float
    trips: int
    served_per_trip: float
    served: int
    dropped: int
    deferred: int
    open_end: int
    mean_utilization: float
    c2s_loss: float
    vrp_loss: float

    def to_row(self) -> dict:
        return asdict(self)


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6f}"
    return str(value)


def export_csv(records: list[dict], path: str, columns: list[str] | None = None) -> None:
    """Write records to a deterministic CSV; empty input yields a header-only file."""
    if columns is None:
        if not records:
            raise ValueError("export_csv needs explicit columns for an empty record list")
        columns = list(records[0].keys())
    with open(path, "w", newline="") as fh:
        fh.write(f"{_VERSION_PREFIX}{SCHEMA_VERSION}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for record in records:
            writer.writerow([_format_cell(record[c]) for c in columns])


def read_csv(path: str) -> list[dict]:
    """Read back an exported file; numeric-looking cells become floats."""
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith(_VERSION_PREFIX):
            raise ValueError(f"{path}: missing schema version line")
        version = first[len(_VERSION_PREFIX):].strip()
        if version != SCHEMA_VERSION:
            raise ValueError(f"{path}: schema {version} not supported (expected {SCHEMA_VERSION})")
        reader = csv.DictReader(fh)
        rows = []
        for raw in reader:
            row = {}
            for key, cell in raw.items():
                try:
                    row[key] = float(cell)
                except (TypeError, ValueError):
                    row[key] = cell
            rows.append(row)
        return rows


def summarize(records: list[dict], group_by: str = "episode") -> list[dict]:
    """Per-group mean and population standard deviation of every numeric column."""
    groups: dict = {}
    for record in records:
        groups.setdefault(record[group_by], []).append(record)
    out = []
    for key in sorted(groups):
        bucket = groups[key]
        row = {group_by: key, "count": len(bucket)}
        for column in bucket[0]:
            if column == group_by:
                continue
            values = [r[column] for r in bucket]
            if not all(isinstance(v, (int, float, np.integer, np.floating)) for v in values):
                continue
            arr = np.asarray(values, dtype=float)
            row[f"{column}_mean"] = float(arr.mean())
            row[f"{column}_std"] = float(arr.std())  # population std
        out.append(row)
    return out


def trip_rows(trips, capacity: int) -> list[dict]:
    """Trip log records (order sequence and legs joined with '|')."""
    rows = []
    for trip in trips:
        rows.append({
            "trip_id": trip.id,
            "depot_id": trip.depot_id,
            "vehicle_id": trip.vehicle_id,
            "start_time": trip.start_time,
            "order_sequence": "|".join(str(v.order_id) for v in trip.visits),
            "leg_distances": "|".join(f"{d:.6f}" for d in trip.leg_distances),
            "return_distance": trip.return_distance,
            "load": trip.total_load,
            "utilization": trip.total_load / capacity,
        })
    return rows
