"""ADS-B ingestion and cleaning.

The pipeline takes raw per-flight state reports on a 10-second grid and
produces fixed-length trajectories of exactly 100 points:

    parse CSV -> decompose horizontal velocity -> cut gap-free runs of
    100 consecutive points -> reject any run with a z-score outlier ->
    chronological (or seeded random) 8:1:1 split.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .errors import DataError, SchemaError
from .geo import STATE_FIELDS

POINT_INTERVAL_S = 10
TRAJECTORY_LEN = 100
ZSCORE_THRESHOLD = 3.0

CSV_COLUMNS = ("time", "lon", "lat", "geoaltitude", "velocity", "heading", "vertrate")
FLIGHT_ID_COLUMN = "icao24"  # optional; a file without it is one stream


class RawRecord(NamedTuple):
    timestamp: int
    lon: float
    lat: float
    alt: float
    hspeed: float
    heading: float
    vspeed: float


@dataclass
class FlightTrajectory:
    """100 points at exact 10 s spacing, already in model feature order."""

    flight_id: str
    start_time: int
    states: np.ndarray  # (100, 6) rows of STATE_FIELDS

    def __post_init__(self):
        if self.states.shape != (TRAJECTORY_LEN, len(STATE_FIELDS)):
            raise DataError(
                f"trajectory needs shape {(TRAJECTORY_LEN, len(STATE_FIELDS))}, "
                f"got {self.states.shape}"
            )

    @property
    def key(self) -> str:
        return f"{self.flight_id}@{self.start_time}"


@dataclass
class ParseResult:
    streams: dict[str, list[RawRecord]]
    rejected_rows: int
    total_rows: int


@dataclass
class DatasetSplit:
    train: list[FlightTrajectory]
    validation: list[FlightTrajectory]
    test: list[FlightTrajectory]

    def __iter__(self):
        yield from (("train", self.train), ("val", self.validation), ("test", self.test))


def parse_adsb_csv(path) -> ParseResult:
    """Group a state-vector CSV into time-ordered per-flight streams.

    Required columns: time,lon,lat,geoaltitude,velocity,heading,vertrate.
    An icao24 column, when present, separates flights; otherwise the whole
    file is a single stream. Malformed rows (non-numeric fields, missing
    values, out-of-range coordinates, duplicate timestamps) are counted
    and dropped, never fatal.
    """
    try:
        handle = open(path, newline="")
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    with handle:
        reader = csv.DictReader(handle)
        columns = reader.fieldnames or []
        for col in CSV_COLUMNS:
            if col not in columns:
                raise SchemaError(f"{path}: missing required column {col!r}")
        has_id = FLIGHT_ID_COLUMN in columns
        streams: dict[str, list[RawRecord]] = {}
        rejected = 0
        total = 0
        for row in reader:
            total += 1
            record = _parse_row(row)
            if record is None:
                rejected += 1
                continue
            flight = row[FLIGHT_ID_COLUMN].strip() if has_id else "flight0"
            streams.setdefault(flight, []).append(record)
    ordered: dict[str, list[RawRecord]] = {}
    for flight in sorted(streams):
        recs = sorted(streams[flight], key=lambda r: r.timestamp)
        kept: list[RawRecord] = []
        for r in recs:
            if kept and r.timestamp == kept[-1].timestamp:
                rejected += 1
                continue
            kept.append(r)
        ordered[flight] = kept
    return ParseResult(streams=ordered, rejected_rows=rejected, total_rows=total)


def _parse_row(row: dict) -> RawRecord | None:
    try:
        values = [float(row[c]) for c in CSV_COLUMNS]
    except (TypeError, ValueError, KeyError):
        return None
    if not all(math.isfinite(v) for v in values):
        return None
    t, lon, lat, alt, hspeed, heading, vspeed = values
    if t != int(t):
        return None
    if not (-180.0 <= lon <= 180.0 and -90.0 <= lat <= 90.0):
        return None
    if alt < 0 or hspeed < 0:
        return None
    return RawRecord(int(t), lon, lat, alt, hspeed, heading, vspeed)


def decompose_velocity(hspeed: float, heading: float) -> tuple[float, float]:
    """Split horizontal speed into east (vx) and north (vy) components.

    Heading is degrees clockwise from true north, so the east component
    (the longitude dimension) takes the sine.
    """
    if hspeed < 0:
        raise DataError(f"horizontal speed must be nonnegative, got {hspeed}")
    rad = math.radians(heading)
    return hspeed * math.sin(rad), hspeed * math.cos(rad)


def zscore_filter(states: np.ndarray, threshold: float = ZSCORE_THRESHOLD) -> bool:
    """Accept a candidate iff no feature point sits more than `threshold`
    standard deviations from that feature's own mean. Constant features
    (sigma = 0) never flag outliers."""
    states = np.asarray(states, dtype=np.float64)
    mu = states.mean(axis=0)
    sigma = states.std(axis=0)
    safe = np.where(sigma == 0.0, 1.0, sigma)
    z = np.abs(states - mu) / safe
    z[:, sigma == 0.0] = 0.0
    return bool(np.all(z <= threshold))


def _records_to_states(records: list[RawRecord]) -> np.ndarray:
    states = np.empty((len(records), 6))
    for i, r in enumerate(records):
        vx, vy = decompose_velocity(r.hspeed, r.heading)
        states[i] = (r.lon, r.lat, r.alt, vx, vy, r.vspeed)
    return states


def segment(streams: dict[str, list[RawRecord]]) -> tuple[list[FlightTrajectory], int]:
    """Cut each stream into non-overlapping 100-point trajectories.

    A gap (time step other than 10 s) ends the current run; runs shorter
    than 100 points are dropped, longer runs yield consecutive blocks and
    the remainder is dropped. Returns the accepted trajectories plus the
    count of blocks rejected by the z-score filter.
    """
    out: list[FlightTrajectory] = []
    rejected = 0
    for flight, records in streams.items():
        run_start = 0
        for i in range(1, len(records) + 1):
            contiguous = (
                i < len(records)
                and records[i].timestamp - records[i - 1].timestamp == POINT_INTERVAL_S
            )
            if contiguous:
                continue
            run = records[run_start:i]
            run_start = i
            for block_start in range(0, len(run) - TRAJECTORY_LEN + 1, TRAJECTORY_LEN):
                block = run[block_start:block_start + TRAJECTORY_LEN]
                states = _records_to_states(block)
                if not zscore_filter(states):
                    rejected += 1
                    continue
                out.append(FlightTrajectory(
                    flight_id=flight,
                    start_time=block[0].timestamp,
                    states=states,
                ))
    return out, rejected


def split_dataset(trajectories: Iterable[FlightTrajectory], seed: int = 0,
                  mode: str = "chrono") -> DatasetSplit:
    """8:1:1 split, chronological by start time (default) or seeded random."""
    trajs = sorted(trajectories, key=lambda t: (t.start_time, t.flight_id))
    n = len(trajs)
    if n < 10:
        raise DataError(f"need at least 10 trajectories for an 8:1:1 split, got {n}")
    if mode == "random":
        order = np.random.default_rng(seed).permutation(n)
        trajs = [trajs[i] for i in order]
    elif mode != "chrono":
        raise DataError(f"unknown split mode {mode!r} (expected chrono or random)")
    n_train = round(0.8 * n)
    n_val = round(0.1 * n)
    return DatasetSplit(
        train=trajs[:n_train],
        validation=trajs[n_train:n_train + n_val],
        test=trajs[n_train + n_val:],
    )


def records_from_states(timestamps: np.ndarray, states: np.ndarray) -> list[RawRecord]:
    """Inverse of the feature decomposition, for writing CSV fixtures."""
    out = []
    for t, row in zip(timestamps, states):
        lon, lat, alt, vx, vy, vz = (float(v) for v in row)
        hspeed = math.hypot(vx, vy)
        heading = math.degrees(math.atan2(vx, vy)) % 360.0 if hspeed > 0 else 0.0
        out.append(RawRecord(int(t), lon, lat, alt, hspeed, heading, vz))
    return out


def write_adsb_csv(path, flights: dict[str, list[RawRecord]]) -> None:
    """Write streams in the input schema (with the icao24 id column)."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow((FLIGHT_ID_COLUMN,) + CSV_COLUMNS)
        for flight in sorted(flights):
            for r in flights[flight]:
                writer.writerow([
                    flight, r.timestamp,
                    repr(r.lon), repr(r.lat), repr(r.alt),
                    repr(r.hspeed), repr(r.heading), repr(r.vspeed),
                ])
