"""Differential coding between geographic coordinates and metric offsets.

Consecutive longitude/latitude values are turned into signed
along-axis distances on a sphere of radius R = 6,371,000 m:

    d_lat_m = 2R asin(|sin(dphi/2)|)                      (sign of dphi)
    d_lon_m = 2R asin(sqrt(cos^2(phi_prev) sin^2(dlam/2)))  (sign of dlam)

with the longitude difference reduced to (-180, 180] first, so the sign
always follows the shorter arc. Targets over a horizon are coded the
same way against a single anchor point, which keeps the inverse map
well-defined from the anchor alone: given a signed pair of metric
offsets, the latitude inverts as lat + d_lat_m / R (in radians) and the
longitude through asin with the anchor-latitude cosine.

All public interfaces speak degrees and meters; radians stay internal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DataError, DomainError

EARTH_RADIUS_M = 6_371_000.0
SIGN_CONVENTION = "shorter-arc"

# state-vector row order used across the package
STATE_FIELDS = ("lon", "lat", "alt", "vx", "vy", "vz")


class GeoPoint(NamedTuple):
    lon: float
    lat: float
    alt: float


class SignedDelta(NamedTuple):
    d_lon_m: float
    d_lat_m: float
    ref_lat: float


@dataclass(frozen=True)
class EarthModel:
    radius_m: float = EARTH_RADIUS_M


def validate_geo_point(p: GeoPoint) -> None:
    if not -180.0 <= p.lon <= 180.0:
        raise DataError(f"longitude {p.lon} outside [-180, 180]")
    if not -90.0 <= p.lat <= 90.0:
        raise DataError(f"latitude {p.lat} outside [-90, 90]")
    if not np.isfinite(p.alt):
        raise DataError(f"altitude {p.alt} is not finite")


def wrap_longitude_delta(deg):
    """Reduce a longitude difference in degrees to (-180, 180]."""
    return -(np.remainder(-np.asarray(deg, dtype=np.float64) + 180.0, 360.0) - 180.0)


def delta_arrays(lon_prev, lat_prev, lon_curr, lat_curr, earth: EarthModel = EarthModel()):
    """Vectorized signed metric differences; reference latitude is `lat_prev`."""
    lon_prev = np.asarray(lon_prev, dtype=np.float64)
    lat_prev = np.asarray(lat_prev, dtype=np.float64)
    lon_curr = np.asarray(lon_curr, dtype=np.float64)
    lat_curr = np.asarray(lat_curr, dtype=np.float64)
    two_r = 2.0 * earth.radius_m
    dlam = np.radians(wrap_longitude_delta(lon_curr - lon_prev))
    dphi = np.radians(lat_curr - lat_prev)
    lat_mag = two_r * np.arcsin(np.abs(np.sin(0.5 * dphi)))
    lon_mag = two_r * np.arcsin(np.abs(np.cos(np.radians(lat_prev)) * np.sin(0.5 * dlam)))
    return np.sign(dlam) * lon_mag, np.sign(dphi) * lat_mag


def delta_between(prev: GeoPoint, curr: GeoPoint, earth: EarthModel = EarthModel()) -> SignedDelta:
    """Signed metric difference from `prev` to `curr`."""
    validate_geo_point(prev)
    validate_geo_point(curr)
    d_lon, d_lat = delta_arrays(prev.lon, prev.lat, curr.lon, curr.lat, earth)
    return SignedDelta(float(d_lon), float(d_lat), prev.lat)


def encode_input_series(states: np.ndarray, earth: EarthModel = EarthModel()) -> np.ndarray:
    """Code an (n, 6) state matrix into a (6, n-1) network input.

    Row order follows STATE_FIELDS: the lon/lat rows carry the signed
    metric step into each point, the remaining rows pass through the
    current point's raw altitude and velocities.
    """
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2 or states.shape[1] != 6:
        raise DataError(f"expected an (n, 6) state matrix, got {states.shape}")
    if states.shape[0] < 2:
        raise DataError(
            f"need at least 2 points to take first-order differences, got {states.shape[0]}"
        )
    lon, lat = states[:, 0], states[:, 1]
    d_lon, d_lat = delta_arrays(lon[:-1], lat[:-1], lon[1:], lat[1:], earth)
    out = np.empty((6, states.shape[0] - 1))
    out[0] = d_lon
    out[1] = d_lat
    out[2:] = states[1:, 2:].T
    return out


def encode_targets(states: np.ndarray, lookback: int, horizon: int,
                   earth: EarthModel = EarthModel()) -> np.ndarray:
    """Code the horizon after an anchor into a (3, horizon) target block.

    The anchor is the point at index `lookback`, i.e. the endpoint of the
    last coded input step. Column i holds the signed metric offset of
    point lookback+1+i from the anchor (reference latitude: the anchor's)
    and that point's raw altitude.
    """
    states = np.asarray(states, dtype=np.float64)
    if states.shape[0] < lookback + horizon + 1:
        raise DataError(
            f"need {lookback + horizon + 1} points for lookback {lookback} "
            f"and horizon {horizon}, got {states.shape[0]}"
        )
    anchor = states[lookback]
    future = states[lookback + 1: lookback + 1 + horizon]
    d_lon, d_lat = delta_arrays(anchor[0], anchor[1], future[:, 0], future[:, 1], earth)
    return np.stack([d_lon, d_lat, future[:, 2]])


def reconstruct(last_obs: GeoPoint, predicted: np.ndarray,
                earth: EarthModel = EarthModel()) -> list[GeoPoint]:
    """Invert anchor-relative coding back to absolute coordinates.

    `predicted` is a (3, T) block of signed lon/lat offsets in meters and
    raw altitudes. Raises DomainError, naming the first offending step,
    when an offset is too large to invert.
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    if predicted.ndim != 2 or predicted.shape[0] != 3:
        raise DataError(f"expected a (3, T) prediction block, got {predicted.shape}")
    two_r = 2.0 * earth.radius_m
    half = np.abs(predicted[:2]) / two_r
    bad = np.argwhere(half > 1.0)
    if bad.size:
        row, step = bad[0]
        raise DomainError(
            f"step {int(step)}: |{('lon', 'lat')[int(row)]} offset| "
            f"{abs(predicted[int(row), int(step)]):.1f} m exceeds 2R"
        )
    lat0 = np.radians(last_obs.lat)
    dphi = np.degrees(np.sign(predicted[1]) * 2.0 * np.arcsin(np.sin(np.abs(predicted[1]) / two_r)))
    lat = last_obs.lat + dphi
    sine = np.sin(np.abs(predicted[0]) / two_r)
    # cos never underflows to exactly zero for |lat| <= 90 in float64
    ratio = sine / np.cos(lat0)
    over = np.argwhere(ratio > 1.0)
    if over.size:
        step = int(over[0, 0])
        raise DomainError(
            f"step {step}: longitude offset {predicted[0, step]:.1f} m "
            f"is unreachable at reference latitude {last_obs.lat}"
        )
    dlam = np.degrees(np.sign(predicted[0]) * 2.0 * np.arcsin(ratio))
    lon = wrap_longitude_delta(last_obs.lon + dlam)
    return [GeoPoint(float(lon[i]), float(lat[i]), float(predicted[2, i]))
            for i in range(predicted.shape[1])]
