"""Sliding-window samples and the on-disk dataset, format "flightpatch-data-v1".

A 100-point trajectory yields a 99-step coded series (one point is
consumed by first-order differencing). A window with lookback L and
horizon T covers L+T+1 raw points: L coded input steps, the anchor
point that ends them, and T future points coded against that anchor.
Windows slide with stride 1, giving max(0, 99 - (L + T) + 1) windows
per trajectory.

With differential coding disabled the same window geometry applies but
the lon/lat input channels carry raw degrees and the targets raw-degree
offsets from the anchor.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import TRAJECTORY_LEN, DatasetSplit, FlightTrajectory
from .errors import CheckpointError, DataError
from .geo import (
    EARTH_RADIUS_M, SIGN_CONVENTION, EarthModel, GeoPoint, delta_arrays,
    encode_input_series, wrap_longitude_delta,
)
from .tensor import Tensor

DATA_MAGIC = b"flightpatch-data-v1\n"
INPUT_CHANNELS = 6
TARGET_CHANNELS = 3


@dataclass
class WindowSample:
    """One training instance: coded input, coded target, anchor point."""

    x: Tensor  # (6, L)
    y: Tensor  # (3, T)
    anchor: GeoPoint


@dataclass
class WindowDataset:
    """A stack of window samples plus everything needed to decode them."""

    x: np.ndarray        # (n, 6, L)
    y: np.ndarray        # (n, 3, T)
    anchors: np.ndarray  # (n, 3) lon, lat, alt of the last observation
    diff: bool
    meta: dict

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def lookback(self) -> int:
        return self.x.shape[2]

    @property
    def horizon(self) -> int:
        return self.y.shape[2]

    def sample(self, i: int) -> WindowSample:
        return WindowSample(
            x=Tensor(self.x[i]), y=Tensor(self.y[i]),
            anchor=GeoPoint(*self.anchors[i]),
        )

    def save(self, path: str | Path) -> None:
        header = dict(self.meta)
        header.update({
            "format": "flightpatch-data-v1",
            "n": int(self.n),
            "input_channels": INPUT_CHANNELS,
            "target_channels": TARGET_CHANNELS,
            "lookback": int(self.lookback),
            "horizon": int(self.horizon),
            "diff": bool(self.diff),
            "earth_radius_m": EARTH_RADIUS_M,
            "sign_convention": SIGN_CONVENTION,
            "sections": ["x", "y", "anchors"],
        })
        header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
        payload = (
            np.ascontiguousarray(self.x, dtype="<f8").tobytes()
            + np.ascontiguousarray(self.y, dtype="<f8").tobytes()
            + np.ascontiguousarray(self.anchors, dtype="<f8").tobytes()
        )
        with open(path, "wb") as fh:
            fh.write(DATA_MAGIC)
            fh.write(struct.pack("<I", len(header_bytes)))
            fh.write(header_bytes)
            fh.write(hashlib.sha256(header_bytes).digest())
            fh.write(payload)
            fh.write(hashlib.sha256(payload).digest())

    @classmethod
    def load(cls, path: str | Path) -> "WindowDataset":
        raw = Path(path).read_bytes()
        if not raw.startswith(DATA_MAGIC):
            raise CheckpointError(f"{path}: not a flightpatch-data-v1 file")
        off = len(DATA_MAGIC)
        (hlen,) = struct.unpack_from("<I", raw, off)
        off += 4
        header_bytes = raw[off:off + hlen]
        off += hlen
        if hashlib.sha256(header_bytes).digest() != raw[off:off + 32]:
            raise CheckpointError(f"{path}: header checksum mismatch")
        off += 32
        header = json.loads(header_bytes)
        payload = raw[off:-32]
        if hashlib.sha256(payload).digest() != raw[-32:]:
            raise CheckpointError(f"{path}: payload checksum mismatch")
        n, lb, hz = header["n"], header["lookback"], header["horizon"]
        sizes = [n * INPUT_CHANNELS * lb, n * TARGET_CHANNELS * hz, n * 3]
        if len(payload) != 8 * sum(sizes):
            raise CheckpointError(f"{path}: payload size does not match header")
        arrays = []
        pos = 0
        for count in sizes:
            arrays.append(np.frombuffer(payload, dtype="<f8", count=count, offset=pos)
                          .astype(np.float64))
            pos += 8 * count
        meta = {k: v for k, v in header.items()
                if k not in {"format", "n", "input_channels", "target_channels",
                             "lookback", "horizon", "diff", "sections"}}
        return cls(
            x=arrays[0].reshape(n, INPUT_CHANNELS, lb),
            y=arrays[1].reshape(n, TARGET_CHANNELS, hz),
            anchors=arrays[2].reshape(n, 3),
            diff=bool(header["diff"]),
            meta=meta,
        )


def window_count(lookback: int, horizon: int) -> int:
    coded_steps = TRAJECTORY_LEN - 1
    return max(0, coded_steps - (lookback + horizon) + 1)


def windows_from_trajectory(traj: FlightTrajectory, lookback: int, horizon: int,
                            diff: bool = True,
                            earth: EarthModel = EarthModel()) -> WindowDataset:
    """All stride-1 windows of one trajectory, stacked in start order."""
    coded_steps = TRAJECTORY_LEN - 1
    if lookback + horizon > coded_steps:
        raise DataError(
            f"lookback {lookback} + horizon {horizon} exceeds the {coded_steps}-step "
            f"budget of a {TRAJECTORY_LEN}-point trajectory"
        )
    n = window_count(lookback, horizon)
    states = traj.states
    if diff:
        coded = encode_input_series(states, earth)  # (6, 99)
    else:
        coded = states[1:].T  # raw degrees in the lon/lat rows, same step grid
    x = np.empty((n, INPUT_CHANNELS, lookback))
    y = np.empty((n, TARGET_CHANNELS, horizon))
    anchors = np.empty((n, 3))
    offsets = np.arange(1, horizon + 1)
    for s in range(n):
        anchor_idx = s + lookback  # raw index of the last observed point
        x[s] = coded[:, s:s + lookback]
        future = states[anchor_idx + offsets]
        anchor = states[anchor_idx]
        if diff:
            d_lon, d_lat = delta_arrays(anchor[0], anchor[1], future[:, 0], future[:, 1], earth)
        else:
            d_lon = wrap_longitude_delta(future[:, 0] - anchor[0])
            d_lat = future[:, 1] - anchor[1]
        y[s, 0] = d_lon
        y[s, 1] = d_lat
        y[s, 2] = future[:, 2]
        anchors[s] = anchor[:3]
    return WindowDataset(x=x, y=y, anchors=anchors, diff=diff, meta={})


def make_windows(traj: FlightTrajectory, lookback: int, horizon: int,
                 diff: bool = True, earth: EarthModel = EarthModel()) -> list[WindowSample]:
    ds = windows_from_trajectory(traj, lookback, horizon, diff, earth)
    return [ds.sample(i) for i in range(ds.n)]


def build_windows(trajectories: list[FlightTrajectory], lookback: int, horizon: int,
                  diff: bool = True, earth: EarthModel = EarthModel(),
                  meta: dict | None = None) -> WindowDataset:
    """Windows for a whole split, ordered by trajectory then start index."""
    if not trajectories:
        raise DataError("cannot build windows from an empty trajectory list")
    parts = [windows_from_trajectory(t, lookback, horizon, diff, earth)
             for t in trajectories]
    ds = WindowDataset(
        x=np.concatenate([p.x for p in parts]),
        y=np.concatenate([p.y for p in parts]),
        anchors=np.concatenate([p.anchors for p in parts]),
        diff=diff,
        meta=meta or {},
    )
    if not np.all(np.isfinite(ds.x)) or not np.all(np.isfinite(ds.y)):
        raise DataError("non-finite values in coded windows")
    return ds


def build_manifest(split: DatasetSplit, counts: dict[str, int], *, config_hash: str,
                   diff: bool, seed: int, split_mode: str, lookback: int,
                   horizon: int, extra: dict | None = None) -> str:
    """Deterministic text manifest: config, per-split window counts and
    trajectory membership."""
    lines = [
        "flightpatch-data-v1",
        f"config_hash {config_hash}",
        f"lookback {lookback}",
        f"horizon {horizon}",
        f"diff {str(diff).lower()}",
        f"seed {seed}",
        f"split_mode {split_mode}",
    ]
    for key, value in sorted((extra or {}).items()):
        lines.append(f"{key} {value}")
    for name, trajs in split:
        lines.append(f"windows {name} {counts[name]}")
    for name, trajs in split:
        lines.append(f"trajectories {name} {len(trajs)}")
        for t in trajs:
            lines.append(f"member {name} {t.key}")
    return "\n".join(lines) + "\n"
