"""Command-line entry point.

Subcommands cover the whole workflow: `preprocess` raw CSV or `synth`
generated trajectories into dataset files, `train` a model, `eval` it
against the test split (optionally with the persistence baseline),
`predict` one window from raw points, and `export-plot` aligned
truth/prediction series for external plotting.

Configuration is resolved in three layers: package defaults (the
reference setup), then a flat `key = value` config file, then explicit
command-line flags. The fully resolved configuration is written next to
every artifact as run_config.txt; hashes embedded in artifacts never
include filesystem paths, so same-seed runs are byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .data import (
    parse_adsb_csv, segment, split_dataset, _records_to_states,
)
from .errors import CheckpointError, ConfigError, DataError, FlightPatchError
from .evaluate import evaluate, persistence_baseline
from .geo import (
    EARTH_RADIUS_M, SIGN_CONVENTION, EarthModel, GeoPoint,
    encode_input_series, reconstruct,
)
from .model import FlightPatchNet, ModelConfig
from .synthetic import synthesize_trajectories
from .tensor import Tensor
from .train import TrainConfig, history_csv, train
from .windows import WindowDataset, build_manifest, build_windows, window_count

SPLIT_NAMES = ("train", "val", "test")


@dataclass
class RunConfig:
    """Every knob of the pipeline, one flat namespace."""

    # data
    input: str = ""
    data: str = ""
    checkpoint: str = ""
    out: str = ""
    n: int = 100
    profile: str = "cruise"
    lookback: int = 60
    horizon: int = 15
    diff: bool = True
    split: str = "chrono"
    seed: int = 0
    # model
    embed_dim: int = 128
    heads: int = 8
    temporal_layers: int = 3
    scale_layers: int = 3
    channel_layers: int = 3
    patches: str = "30,20,10,6,2"
    dropout: float = 0.1
    mlp_hidden_factor: int = 2
    predictor_hidden: int = 128
    # training
    max_epochs: int = 30
    patience: int = 3
    batch_size: int = 64
    lr: float = 1e-4
    shuffle: bool = True
    # evaluation / export
    baseline: str = ""
    coded_space: bool = False
    windows: str = "0"

    def patch_sizes(self) -> tuple[int, ...]:
        try:
            return tuple(int(p) for p in self.patches.split(","))
        except ValueError:
            raise ConfigError(f"cannot parse patch list {self.patches!r}") from None

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            lookback=self.lookback, horizon=self.horizon,
            embed_dim=self.embed_dim, heads=self.heads,
            temporal_layers=self.temporal_layers, scale_layers=self.scale_layers,
            channel_layers=self.channel_layers, patch_sizes=self.patch_sizes(),
            dropout=self.dropout, mlp_hidden_factor=self.mlp_hidden_factor,
            predictor_hidden=self.predictor_hidden, seed=self.seed,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            max_epochs=self.max_epochs, patience=self.patience,
            batch_size=self.batch_size, lr=self.lr, seed=self.seed,
            shuffle=self.shuffle,
        )

    def render(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                value = str(value).lower()
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


_PATH_FIELDS = {"input", "data", "checkpoint", "out"}


def parse_config_file(path: str | Path) -> dict:
    """Flat `key = value` document; '#' starts a comment."""
    values: dict[str, str] = {}
    known = {f.name: f for f in fields(RunConfig)}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


def _coerce(name: str, value: str):
    kind = {f.name: f.type for f in fields(RunConfig)}[name]
    if kind == "bool" or kind is bool:
        lowered = value.lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ConfigError(f"cannot parse boolean {name} = {value!r}")
    if kind == "int" or kind is int:
        return int(value)
    if kind == "float" or kind is float:
        return float(value)
    return value


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        for key, value in parse_config_file(args.config).items():
            setattr(cfg, key, _coerce(key, value))
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            setattr(cfg, f.name, flag)
    return cfg


def data_identity_hash(cfg: RunConfig, source: str, content_digest: str = "") -> str:
    """Hash of everything that determines dataset content, path-free."""
    parts = [
        f"source {source}",
        f"content {content_digest}",
        f"n {cfg.n if source == 'synth' else ''}",
        f"profile {cfg.profile if source == 'synth' else ''}",
        f"lookback {cfg.lookback}",
        f"horizon {cfg.horizon}",
        f"diff {str(cfg.diff).lower()}",
        f"split {cfg.split}",
        f"seed {cfg.seed}",
    ]
    return hashlib.sha256("\n".join(parts).encode()).hexdigest()


def _write_splits(cfg: RunConfig, split, out_dir: Path, config_hash: str,
                  extra: dict) -> dict[str, int]:
    counts = {}
    for name, trajs in split:
        ds = build_windows(trajs, cfg.lookback, cfg.horizon, diff=cfg.diff,
                           meta={"config_hash": config_hash, "seed": cfg.seed,
                                 "split": name})
        counts[name] = ds.n
        ds.save(out_dir / f"{name}.fpd")
    manifest = build_manifest(
        split, counts, config_hash=config_hash, diff=cfg.diff, seed=cfg.seed,
        split_mode=cfg.split, lookback=cfg.lookback, horizon=cfg.horizon,
        extra=extra,
    )
    (out_dir / "manifest.txt").write_text(manifest)
    return counts


def _prepare_out(cfg: RunConfig) -> Path:
    if not cfg.out:
        raise ConfigError("--out is required")
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run_config.txt").write_text(cfg.render())
    return out_dir


def cmd_preprocess(args) -> int:
    cfg = resolve_config(args)
    if not cfg.input:
        raise ConfigError("--input CSV path is required")
    out_dir = _prepare_out(cfg)
    digest = hashlib.sha256(Path(cfg.input).read_bytes()).hexdigest() \
        if Path(cfg.input).exists() else ""
    parsed = parse_adsb_csv(cfg.input)
    trajectories, filtered = segment(parsed.streams)
    split = split_dataset(trajectories, seed=cfg.seed, mode=cfg.split)
    config_hash = data_identity_hash(cfg, "csv", digest)
    counts = _write_splits(cfg, split, out_dir, config_hash,
                           extra={"source": "csv", "content_digest": digest})
    print(f"flights {len(parsed.streams)}")
    print(f"rows {parsed.total_rows} rejected_rows {parsed.rejected_rows}")
    print(f"trajectories {len(trajectories)} filtered_out {filtered}")
    for name in SPLIT_NAMES:
        print(f"windows {name} {counts[name]}")
    return 0


def cmd_synth(args) -> int:
    cfg = resolve_config(args)
    if cfg.n < 10:
        raise ConfigError(f"need n >= 10 for an 8:1:1 split, got {cfg.n}")
    out_dir = _prepare_out(cfg)
    trajectories = synthesize_trajectories(cfg.n, seed=cfg.seed, profile=cfg.profile)
    split = split_dataset(trajectories, seed=cfg.seed, mode=cfg.split)
    config_hash = data_identity_hash(cfg, "synth")
    counts = _write_splits(cfg, split, out_dir, config_hash,
                           extra={"source": "synth", "n": cfg.n,
                                  "profile": cfg.profile})
    print(f"trajectories {len(trajectories)}")
    for name in SPLIT_NAMES:
        print(f"windows {name} {counts[name]}")
    return 0


def _load_split(data_dir: str, name: str) -> WindowDataset:
    path = Path(data_dir) / f"{name}.fpd"
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    return WindowDataset.load(path)


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    if not cfg.data:
        raise ConfigError("--data directory is required")
    train_set = _load_split(cfg.data, "train")
    val_set = _load_split(cfg.data, "val")
    if (train_set.lookback, train_set.horizon) != (cfg.lookback, cfg.horizon):
        raise ConfigError(
            f"dataset windows are (L={train_set.lookback}, T={train_set.horizon}) "
            f"but the configuration requests (L={cfg.lookback}, T={cfg.horizon})"
        )
    cfg.diff = train_set.diff
    out_dir = _prepare_out(cfg)
    model = FlightPatchNet(cfg.model_config())
    print(f"parameters {model.parameter_count()}")
    result = train(model, train_set, val_set, cfg.train_config(),
                   log=lambda msg: print(msg))
    data_hash = str(train_set.meta.get("config_hash", ""))
    header = {
        "format": "flightpatch-ckpt-v1",
        "model": model.cfg.to_dict(),
        "train": {"max_epochs": cfg.max_epochs, "patience": cfg.patience,
                  "batch_size": cfg.batch_size, "lr": cfg.lr,
                  "shuffle": cfg.shuffle},
        "seed": cfg.seed,
        "diff": train_set.diff,
        "data_config_hash": data_hash,
        "earth_radius_m": EARTH_RADIUS_M,
        "sign_convention": SIGN_CONVENTION,
        "best_epoch": result.best_epoch,
        "best_val_mse": result.best_val_mse,
    }
    save_checkpoint(out_dir / "model.ckpt", model.state(), header)
    (out_dir / "loss_history.csv").write_text(history_csv(result.history))
    print(f"best_epoch {result.best_epoch}")
    print(f"best_val_mse {result.best_val_mse!r}")
    return 0


def _load_model(checkpoint_path: str) -> tuple[FlightPatchNet, dict]:
    header, state = load_checkpoint(checkpoint_path)
    if header.get("format") != "flightpatch-ckpt-v1":
        raise CheckpointError(f"{checkpoint_path}: unsupported checkpoint format")
    model = FlightPatchNet(ModelConfig.from_dict(header["model"]))
    model.load_state(state)
    return model, header


def cmd_eval(args) -> int:
    cfg = resolve_config(args)
    if not cfg.data or not cfg.checkpoint:
        raise ConfigError("--data and --checkpoint are required")
    out_dir = _prepare_out(cfg)
    test_set = _load_split(cfg.data, "test")
    model, header = _load_model(cfg.checkpoint)
    ckpt_hash = str(header.get("data_config_hash", ""))
    data_hash = str(test_set.meta.get("config_hash", ""))
    if ckpt_hash != data_hash:
        raise CheckpointError(
            "checkpoint/config hash mismatch: the checkpoint was trained on "
            f"dataset config {ckpt_hash or '<missing>'} but the test set has "
            f"{data_hash or '<missing>'}; refusing to evaluate"
        )
    report = evaluate(model, test_set, EarthModel(), coded=cfg.coded_space,
                      config_hash=data_hash)
    (out_dir / "report_model.txt").write_text(report.render_table())
    (out_dir / "report_model.kv").write_text(report.render_kv())
    print(report.render_table())
    if cfg.baseline:
        if cfg.baseline != "persistence":
            raise ConfigError(f"unknown baseline {cfg.baseline!r}")
        base = persistence_baseline(test_set, EarthModel(), coded=cfg.coded_space,
                                    config_hash=data_hash)
        (out_dir / "report_persistence.txt").write_text(base.render_table())
        (out_dir / "report_persistence.kv").write_text(base.render_kv())
        print(base.render_table())
    return 0


def cmd_predict(args) -> int:
    cfg = resolve_config(args)
    if not cfg.checkpoint or not cfg.input:
        raise ConfigError("--checkpoint and --input are required")
    model, header = _load_model(cfg.checkpoint)
    lookback = model.cfg.lookback
    parsed = parse_adsb_csv(cfg.input)
    records = [r for stream in parsed.streams.values() for r in stream]
    records.sort(key=lambda r: r.timestamp)
    needed = lookback + 1
    if len(records) != needed:
        raise DataError(
            f"prediction input must contain exactly {needed} points "
            f"({lookback} coded steps), got {len(records)}"
        )
    for prev, curr in zip(records, records[1:]):
        if curr.timestamp - prev.timestamp != 10:
            raise DataError("prediction input must be contiguous at 10 s spacing")
    states = _records_to_states(records)
    diff = bool(header.get("diff", True))
    x = encode_input_series(states) if diff else states[1:].T
    prediction = model.predict(Tensor(x)).data
    anchor = GeoPoint(*states[-1, :3])
    rows = _absolute_rows(anchor, prediction, diff)
    out_path = Path(cfg.out) if cfg.out else Path("prediction.csv")
    if out_path.suffix != ".csv":
        out_path = out_path / "prediction.csv"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    (out_path.parent / "run_config.txt").write_text(cfg.render())
    text = "step,lon,lat,alt\n" + "".join(
        f"{i + 1},{lon!r},{lat!r},{alt!r}\n" for i, (lon, lat, alt) in enumerate(rows)
    )
    out_path.write_text(text)
    print(f"wrote {len(rows)} predicted points to {out_path}")
    return 0


def _absolute_rows(anchor: GeoPoint, prediction: np.ndarray, diff: bool):
    if diff:
        points = reconstruct(anchor, prediction)
        return [(p.lon, p.lat, p.alt) for p in points]
    return [(float(anchor.lon + prediction[0, i]), float(anchor.lat + prediction[1, i]),
             float(prediction[2, i])) for i in range(prediction.shape[1])]


def cmd_export_plot(args) -> int:
    cfg = resolve_config(args)
    if not cfg.data or not cfg.checkpoint:
        raise ConfigError("--data and --checkpoint are required")
    out_dir = _prepare_out(cfg)
    test_set = _load_split(cfg.data, "test")
    model, _ = _load_model(cfg.checkpoint)
    try:
        indices = [int(i) for i in cfg.windows.split(",") if i != ""]
    except ValueError:
        raise ConfigError(f"cannot parse window list {cfg.windows!r}") from None
    for idx in indices:
        if not 0 <= idx < test_set.n:
            raise DataError(
                f"window index {idx} out of range [0, {test_set.n})"
            )
    lookback, horizon = test_set.lookback, test_set.horizon
    lines = ["window,variable,t,truth,prediction"]
    variables = ("lon", "lat", "alt")
    channel = {"lon": 0, "lat": 1, "alt": 2}
    for idx in indices:
        pred = model.predict(Tensor(test_set.x[idx])).data
        for var in variables:
            ch = channel[var]
            for t in range(1, lookback + 1):
                truth = float(test_set.x[idx, ch, t - 1])
                lines.append(f"{idx},{var},{t},{truth!r},")
            for i in range(horizon):
                truth = float(test_set.y[idx, ch, i])
                value = float(pred[ch, i])
                lines.append(f"{idx},{var},{lookback + 1 + i},{truth!r},{value!r}")
    path = out_dir / "plot_data.csv"
    path.write_text("\n".join(lines) + "\n")
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flightpatch",
        description="Multi-scale patch network for flight trajectory prediction",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")

    def data_flags(p):
        p.add_argument("--lookback", type=int)
        p.add_argument("--horizon", type=int)
        diff = p.add_mutually_exclusive_group()
        diff.add_argument("--diff", dest="diff", action="store_true", default=None)
        diff.add_argument("--no-diff", dest="diff", action="store_false", default=None)
        p.add_argument("--split", choices=("chrono", "random"))

    def model_flags(p):
        p.add_argument("--patches", help="comma-separated patch sizes, largest first")
        p.add_argument("--embed-dim", dest="embed_dim", type=int)
        p.add_argument("--heads", type=int)
        p.add_argument("--temporal-layers", dest="temporal_layers", type=int)
        p.add_argument("--scale-layers", dest="scale_layers", type=int)
        p.add_argument("--channel-layers", dest="channel_layers", type=int)
        p.add_argument("--dropout", type=float)
        p.add_argument("--predictor-hidden", dest="predictor_hidden", type=int)
        p.add_argument("--mlp-hidden-factor", dest="mlp_hidden_factor", type=int)

    p = sub.add_parser("preprocess", help="CSV -> dataset files + manifest")
    common(p)
    data_flags(p)
    p.add_argument("--input", help="ADS-B state-vector CSV")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("synth", help="synthetic trajectories -> dataset files")
    common(p)
    data_flags(p)
    p.add_argument("--n", type=int, help="number of trajectories (>= 10)")
    p.add_argument("--profile", help="generator profile")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit a model on a dataset directory")
    common(p)
    data_flags(p)
    model_flags(p)
    p.add_argument("--data", help="dataset directory from preprocess/synth")
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    common(p)
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--checkpoint", help="model checkpoint file")
    p.add_argument("--baseline", choices=("persistence",))
    p.add_argument("--coded-space", dest="coded_space", action="store_true",
                   default=None, help="evaluate in the coded target space")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="predict one window from raw points")
    common(p)
    p.add_argument("--checkpoint", help="model checkpoint file")
    p.add_argument("--input", help="CSV with exactly lookback+1 points")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("export-plot", help="aligned truth/prediction series")
    common(p)
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--checkpoint", help="model checkpoint file")
    p.add_argument("--windows", help="comma-separated test window indices")
    p.set_defaults(func=cmd_export_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FlightPatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
