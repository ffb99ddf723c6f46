"""MAE/RMSE evaluation in raw physical units, plus the persistence baseline.

Per window the coded predictions are inverted back to absolute
longitude/latitude (degrees) and altitude (meters); errors are averaged
over the horizon per window and then over windows. Windows whose
predicted offsets cannot be inverted are excluded and counted. A
diagnostic mode evaluates directly in the coded target space instead.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import DomainError
from .geo import EarthModel, GeoPoint, reconstruct, wrap_longitude_delta
from .model import FlightPatchNet
from .tensor import Tensor
from .windows import WindowDataset

VARIABLES = ("lon", "lat", "alt")


@dataclass
class EvalReport:
    mae: dict[str, float]
    rmse: dict[str, float]
    sample_count: int
    excluded: int
    space: str  # "reconstructed" or "coded"
    diff: bool
    config_hash: str = ""
    predictor: str = "model"
    units: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.units:
            if self.space == "reconstructed":
                self.units = {"lon": "deg", "lat": "deg", "alt": "m"}
            elif self.diff:
                self.units = {"lon": "m", "lat": "m", "alt": "m"}
            else:
                self.units = {"lon": "deg", "lat": "deg", "alt": "m"}

    def check(self) -> None:
        for var in VARIABLES:
            if self.rmse[var] < self.mae[var] - 1e-12:
                raise AssertionError(f"RMSE < MAE for {var}")

    def render_table(self) -> str:
        lines = [
            f"evaluation ({self.predictor}, {self.space} space, "
            f"{'differential' if self.diff else 'raw'} coding)",
            f"windows {self.sample_count}   excluded {self.excluded}",
            f"{'variable':<10} {'MAE':>16} {'RMSE':>16}  unit",
        ]
        for var in VARIABLES:
            unit = self.units[var]
            lines.append(
                f"{var:<10} {self.mae[var]:>16.9f} {self.rmse[var]:>16.9f}  {unit}"
            )
            if unit == "deg":
                lines.append(
                    f"{'':<10} {self.mae[var] * 1e5:>16.4f} {self.rmse[var] * 1e5:>16.4f}  1e-5 deg"
                )
        if self.config_hash:
            lines.append(f"config_hash {self.config_hash}")
        return "\n".join(lines) + "\n"

    def render_kv(self) -> str:
        pairs = {
            "predictor": self.predictor,
            "space": self.space,
            "diff": str(self.diff).lower(),
            "windows": self.sample_count,
            "excluded": self.excluded,
            "config_hash": self.config_hash,
        }
        for var in VARIABLES:
            pairs[f"{var}_mae_{self.units[var]}"] = repr(self.mae[var])
            pairs[f"{var}_rmse_{self.units[var]}"] = repr(self.rmse[var])
        return "".join(f"{k} {v}\n" for k, v in pairs.items())


def worker_count() -> int:
    value = os.environ.get("FLIGHTPATCH_THREADS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def predict_batches(model: FlightPatchNet, ds: WindowDataset,
                    batch_size: int = 512) -> np.ndarray:
    """Eval-mode predictions for a whole dataset, in window order.

    Batches may be dispatched to FLIGHTPATCH_THREADS worker threads;
    results are reassembled by index so the output never depends on
    scheduling.
    """
    starts = list(range(0, ds.n, batch_size))

    def run(start: int) -> np.ndarray:
        with T.no_grad():
            pred, _ = model.forward(Tensor(ds.x[start:start + batch_size]), training=False)
        return pred.data

    threads = worker_count()
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    return np.concatenate(parts) if parts else np.zeros((0,) + ds.y.shape[1:])


def persistence_predictions(ds: WindowDataset) -> np.ndarray:
    """The no-motion forecaster: zero offsets, last observed altitude."""
    pred = np.zeros_like(ds.y)
    pred[:, 2, :] = ds.anchors[:, 2:3]
    return pred


def _window_errors(truth_block: np.ndarray, pred_block: np.ndarray,
                   anchor: GeoPoint, diff: bool, space: str,
                   earth: EarthModel) -> np.ndarray:
    """Signed per-step errors (3, T) for one window in the report units."""
    if space == "coded":
        return pred_block - truth_block
    if diff:
        truth_pts = reconstruct(anchor, truth_block, earth)
        pred_pts = reconstruct(anchor, pred_block, earth)
        lon_t = np.array([p.lon for p in truth_pts])
        lat_t = np.array([p.lat for p in truth_pts])
        lon_p = np.array([p.lon for p in pred_pts])
        lat_p = np.array([p.lat for p in pred_pts])
    else:
        lon_t = anchor.lon + truth_block[0]
        lat_t = anchor.lat + truth_block[1]
        lon_p = anchor.lon + pred_block[0]
        lat_p = anchor.lat + pred_block[1]
    return np.stack([
        wrap_longitude_delta(lon_p - lon_t),
        lat_p - lat_t,
        pred_block[2] - truth_block[2],
    ])


def metrics_from_predictions(ds: WindowDataset, predictions: np.ndarray,
                             earth: EarthModel = EarthModel(),
                             space: str = "reconstructed",
                             predictor: str = "model",
                             config_hash: str = "") -> EvalReport:
    if space not in ("reconstructed", "coded"):
        raise ValueError(f"unknown evaluation space {space!r}")
    horizon = ds.y.shape[2]
    mae_sum = np.zeros(3)
    rmse_sum = np.zeros(3)
    included = 0
    excluded = 0
    for i in range(ds.n):
        anchor = GeoPoint(*ds.anchors[i])
        try:
            err = _window_errors(ds.y[i], predictions[i], anchor, ds.diff, space, earth)
        except DomainError:
            excluded += 1
            continue
        mae_sum += np.abs(err).sum(axis=1) / horizon
        rmse_sum += np.sqrt((err * err).sum(axis=1) / horizon)
        included += 1
    scale = 1.0 / included if included else 0.0
    report = EvalReport(
        mae={v: float(mae_sum[j] * scale) for j, v in enumerate(VARIABLES)},
        rmse={v: float(rmse_sum[j] * scale) for j, v in enumerate(VARIABLES)},
        sample_count=included,
        excluded=excluded,
        space=space,
        diff=ds.diff,
        predictor=predictor,
        config_hash=config_hash,
    )
    report.check()
    return report


def evaluate(model: FlightPatchNet, ds: WindowDataset,
             earth: EarthModel = EarthModel(), coded: bool = False,
             batch_size: int = 512, config_hash: str = "") -> EvalReport:
    predictions = predict_batches(model, ds, batch_size)
    return metrics_from_predictions(
        ds, predictions, earth,
        space="coded" if coded else "reconstructed",
        predictor="model", config_hash=config_hash,
    )


def persistence_baseline(ds: WindowDataset, earth: EarthModel = EarthModel(),
                         coded: bool = False, config_hash: str = "") -> EvalReport:
    return metrics_from_predictions(
        ds, persistence_predictions(ds), earth,
        space="coded" if coded else "reconstructed",
        predictor="persistence", config_hash=config_hash,
    )
