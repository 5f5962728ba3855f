"""Multi-seed training runs with periodic information-plane logging."""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, is_dataclass
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import nn, svg
from .gibbs import tables_from_trace
from .infotheory import BoundConfig, MiEpochRecord, layer_names, make_record

log = logging.getLogger(__name__)

ARCHITECTURES = {
    "MLP1": (1024, 11, 6, 2),
    "MLP2": (1024, 7, 6, 2),
    "MLP3": (1024, 3, 6, 2),
    "MLP4": (784, 512, 256, 10),
    "MLP5": (784, 256, 128, 10),
    "MLP6": (784, 32, 16, 10),
}

SCALAR_FIELDS = ["loss_train", "loss_test", "acc_train", "acc_test"]


@dataclass(frozen=True)
class IdxSource:
    images: str
    labels: str
    test_images: str | None = None
    test_labels: str | None = None
    subset_size: int | None = 2000
    subset_seed: int = 0


@dataclass
class ExperimentConfig:
    dataset: ds.SynthConfig | IdxSource = field(default_factory=ds.SynthConfig)
    architecture: tuple[int, ...] = ARCHITECTURES["MLP1"]
    epochs: int = 1000
    lr: float = 0.03
    batch_size: int | None = None
    seeds: tuple[int, ...] = tuple(range(10))
    mi_log_interval: int = 10
    sigma: float = 1.0
    train_fraction: float = 0.5
    split_seed: int = 0
    center_inputs: bool = True
    output_dir: str | None = None

    def validate(self) -> None:
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.mi_log_interval < 1:
            raise ValueError("mi_log_interval must be >= 1")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if len(self.architecture) < 3:
            raise ValueError("architecture needs at least one hidden layer")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dataset"] = {"kind": type(self.dataset).__name__, **asdict(self.dataset)}
        return d


@dataclass
class SeedRun:
    seed: int
    records: list[MiEpochRecord]
    failure: str | None = None

    @property
    def ok(self) -> bool:
        return self.failure is None


@dataclass
class RunArtifacts:
    config: ExperimentConfig
    runs: list[SeedRun]
    epochs: list[int]
    aggregate: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    @property
    def good_runs(self) -> list[SeedRun]:
        return [r for r in self.runs if r.ok]

    def final(self, column: str) -> float:
        return float(self.aggregate[column][-1])


# --- data -----------------------------------------------------------------


@dataclass
class PreparedData:
    train: ds.Dataset
    test: ds.Dataset
    offset: float = 0.0


def center(train: ds.Dataset, test: ds.Dataset) -> PreparedData:
    """Subtract the scalar mean pixel of the training split from both splits."""
    offset = float(train.data.mean())
    shifted = [
        ds.Dataset(d.data - offset, d.labels, d.num_classes, d.source, d.meta) for d in (train, test)
    ]
    return PreparedData(*shifted, offset=offset)


def prepare_data(config: ExperimentConfig) -> PreparedData:
    source = config.dataset
    if isinstance(source, ds.SynthConfig):
        train, test = ds.split(ds.generate_synthetic(source), config.train_fraction, config.split_seed)
    else:
        full = ds.load_idx(source.images, source.labels)
        if source.test_images:
            train = full
            test = ds.load_idx(source.test_images, source.test_labels, full.num_classes)
            if source.subset_size:
                train = ds.stratified_subset(train, source.subset_size, source.subset_seed)
                test = ds.stratified_subset(test, source.subset_size, source.subset_seed + 1)
        else:
            if source.subset_size:
                full = ds.stratified_subset(
                    full, int(source.subset_size / config.train_fraction), source.subset_seed
                )
            train, test = ds.split(full, config.train_fraction, config.split_seed)
    if config.center_inputs:
        return center(train, test)
    return PreparedData(train, test)


# --- runs -----------------------------------------------------------------


def epoch_grid(epochs: int, interval: int) -> list[int]:
    grid = list(range(0, epochs + 1, interval))
    if grid[-1] != epochs:
        grid.append(epochs)
    return grid


def evaluate(
    params: nn.MlpParams, epoch: int, train: ds.Dataset, test: ds.Dataset, sigma: float
) -> MiEpochRecord:
    """Inference-mode snapshot of losses, accuracies and layer information."""
    trace = nn.forward(params, train.data)
    test_probs = nn.forward(params, test.data).probs
    return make_record(
        epoch,
        tables_from_trace(trace),
        train.labels,
        train.num_classes,
        loss_train=nn.cross_entropy(trace.probs, train.labels),
        loss_test=nn.cross_entropy(test_probs, test.labels),
        acc_train=float(np.mean(np.argmax(trace.probs, axis=1) == train.labels)),
        acc_test=float(np.mean(np.argmax(test_probs, axis=1) == test.labels)),
        bound_cfg=BoundConfig(sigma, train.count),
    )


def train_config(config: ExperimentConfig, seed: int) -> nn.TrainConfig:
    return nn.TrainConfig(epochs=config.epochs, batch_size=config.batch_size, lr=config.lr, seed=seed)


def run_single(config: ExperimentConfig, seed: int, data: PreparedData | None = None) -> SeedRun:
    """Train one seed, recording an :class:`MiEpochRecord` on the epoch grid."""
    config.validate()
    data = data or prepare_data(config)
    grid = set(epoch_grid(config.epochs, config.mi_log_interval))
    params = nn.init_mlp(config.architecture, seed)
    records = [evaluate(params, 0, data.train, data.test, config.sigma)]

    def observe(epoch, snapshot):
        if epoch in grid:
            records.append(evaluate(snapshot, epoch, data.train, data.test, config.sigma))

    try:
        nn.train(params, data.train, train_config(config, seed), observer=observe)
    except nn.DivergedTrainingError as err:
        log.warning("seed %d excluded: %s", seed, err)
        return SeedRun(seed, records, failure=str(err))
    return SeedRun(seed, records)


def worker_count() -> int:
    env = os.environ.get("GMI_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def aggregate_runs(runs: list[SeedRun]) -> dict[str, np.ndarray]:
    """Per-epoch mean and population std of every record column, in seed order."""
    runs = sorted(runs, key=lambda r: r.seed)
    rows = [[rec.flat() for rec in run.records] for run in runs]
    columns = [c for c in rows[0][0] if c != "epoch"]
    out = {"epoch": np.array([r["epoch"] for r in rows[0]], dtype=np.int64)}
    for col in columns:
        values = np.array([[r[col] for r in seq] for seq in rows], dtype=np.float64)
        out[f"{col}_mean"] = values.mean(axis=0)
        out[f"{col}_std"] = values.std(axis=0)
    return out


def run_experiment(config: ExperimentConfig, threads: int | None = None) -> RunArtifacts:
    config.validate()
    started = time.time()
    data = prepare_data(config)
    threads = threads or worker_count()
    seeds = list(config.seeds)
    if threads > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(lambda s: run_single(config, s, data), seeds))
    else:
        runs = [run_single(config, s, data) for s in seeds]
    good = [r for r in runs if r.ok]
    if not good:
        raise RuntimeError("every seed diverged; nothing to aggregate")
    grid = epoch_grid(config.epochs, config.mi_log_interval)
    for r in good:
        if [rec.epoch for rec in r.records] != grid:
            raise RuntimeError(f"seed {r.seed} produced an inconsistent epoch grid")
    return RunArtifacts(
        config=config,
        runs=sorted(runs, key=lambda r: r.seed),
        epochs=grid,
        aggregate=aggregate_runs(good),
        meta={
            "wall_clock_seconds": time.time() - started,
            "threads": threads,
            "excluded_seeds": [r.seed for r in runs if not r.ok],
            "input_offset": data.offset,
            "train_count": data.train.count,
            "test_count": data.test.count,
        },
    )


def generalization_gap(records: list[MiEpochRecord]) -> dict[str, np.ndarray]:
    """acc_train - acc_test per record, plus loss_test - loss_train."""
    return {
        "epoch": np.array([r.epoch for r in records]),
        "acc_gap": np.array([r.acc_train - r.acc_test for r in records]),
        "loss_gap": np.array([r.loss_test - r.loss_train for r in records]),
    }


# --- export ---------------------------------------------------------------


def aggregate_columns(num_hidden: int) -> list[str]:
    """Exact header of the aggregate CSV."""
    cols = ["epoch"]
    for name in SCALAR_FIELDS:
        cols += [f"{name}_mean", f"{name}_std"]
    mi = []
    for layer in layer_names(num_hidden)[:-1]:
        mi += [f"i_x_{layer}", f"i_y_{layer}"]
    mi += ["i_xbar_t1", "i_y_yhat", "i_sw", "bound", "gap"]
    for name in mi:
        cols += [f"{name}_mean", f"{name}_std"]
    return cols


def seed_columns(num_hidden: int) -> list[str]:
    cols = ["epoch", *SCALAR_FIELDS]
    for layer in layer_names(num_hidden)[:-1]:
        cols += [f"i_x_{layer}", f"i_y_{layer}"]
    return cols + ["i_x_yhat", "i_xbar_t1", "i_y_yhat", "i_sw", "h_y", "bound", "gap"]


def _cell(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def read_csv(path) -> list[dict[str, float]]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def _jsonable(obj):
    if is_dataclass(obj):
        return _jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def export(artifacts: RunArtifacts, directory) -> list[Path]:
    """Write CSVs, a config echo, metadata and SVG plots; returns written paths."""
    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise OSError(f"cannot create output directory {out}: {err}") from err
    num_hidden = len(artifacts.config.architecture) - 2
    written = []

    for run in artifacts.runs:
        for rec in run.records:
            assert abs(rec.i_sw - (rec.i_xbar_t1 + rec.i_y_yhat)) <= 1e-12
        path = out / f"seed_{run.seed}.csv"
        cols = seed_columns(num_hidden)
        _write_csv(path, cols, ([rec.flat()[c] for c in cols] for rec in run.records))
        written.append(path)

    agg = artifacts.aggregate
    cols = aggregate_columns(num_hidden)
    path = out / "aggregate.csv"
    _write_csv(path, cols, ([agg[c][i] for c in cols] for i in range(len(agg["epoch"]))))
    written.append(path)

    path = out / "config.json"
    path.write_text(json.dumps(_jsonable(artifacts.config.to_dict()), indent=2, sort_keys=True) + "\n")
    written.append(path)
    path = out / "metadata.json"
    path.write_text(json.dumps(_jsonable(artifacts.meta), indent=2, sort_keys=True) + "\n")
    written.append(path)

    epochs = agg["epoch"]
    plots = {
        "i_sw.svg": ({"I(S;W)": "i_sw_mean", "I(Xbar;T1)": "i_xbar_t1_mean", "I(Y;Yhat)": "i_y_yhat_mean"}, "bits"),
        "bound.svg": ({"MI bound": "bound_mean", "generalization gap": "gap_mean"}, "value"),
        "gap.svg": ({"acc_train - acc_test": "gap_mean"}, "accuracy gap"),
        "loss.svg": ({"train loss": "loss_train_mean", "test loss": "loss_test_mean"}, "nats"),
    }
    for name, (series, ylabel) in plots.items():
        chart = svg.line_chart(
            {label: (epochs, agg[col]) for label, col in series.items()},
            title=name[:-4],
            ylabel=ylabel,
        )
        svg.write(out / name, chart)
        written.append(out / name)
    layers = {}
    for layer in layer_names(num_hidden):
        layers[f"I(Xbar;{layer})"] = (epochs, _xbar_series(artifacts, layer))
    svg.write(out / "layers.svg", svg.line_chart(layers, title="layer information", ylabel="bits"))
    written.append(out / "layers.svg")
    return written


def _xbar_series(artifacts: RunArtifacts, layer: str) -> np.ndarray:
    runs = sorted(artifacts.good_runs, key=lambda r: r.seed)
    values = np.array(
        [[r.flat()[f"i_x_{layer}"] - r.flat()[f"i_y_{layer}"] for r in run.records] for run in runs]
    )
    return np.maximum(values, 0.0).mean(axis=0)
