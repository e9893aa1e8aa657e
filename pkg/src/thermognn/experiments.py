"""Training to equilibrium, measurement windows, sweeps and the pruning probe.

Every trial derives its randomness from ``RngStream(seed)`` children keyed by
epoch, so a trial is a pure function of its inputs and sweep trials can run
in any order or concurrently.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .data import DatasetSplit, Graph, load_dataset, make_batches
from .engine import (PRESETS, ModelSpec, ParamSet, accuracy, copy_params, init_params,
                     loss_and_grads, predict)
from .errors import ConfigurationError, NumericError
from .fitting import FITTERS, FitResult
from .linalg import RngStream
from .optim import LrSchedule, Optimizer, schedule_eta
from .thermometer import (SnapshotLog, TemperatureSeries, cs_temperature, layer_temperatures,
                          per_weight_msv)

log = logging.getLogger(__name__)

DEFAULT_ETA_GRID = (7e-4, 1e-3, 1.5e-3, 2e-3, 3e-3)
DEFAULT_BATCH_GRID = (8, 16, 32, 64, 128)


@dataclass
class TrainConfig:
    preset: str = "gcn"
    model_spec: str | None = None  # path to a ModelSpec JSON, overrides preset
    data: str = "synth"
    n_graphs: int = 500
    nodes_per_graph: int = 75
    optimizer: str = "adam"
    base_eta: float = 1e-3
    decay_factor: float = 0.1
    decay_every: int = 200
    epochs: int = 600
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be positive")
        if self.model_spec is None and self.preset not in PRESETS:
            raise ConfigurationError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")

    @property
    def schedule(self) -> LrSchedule:
        return LrSchedule(self.base_eta, self.decay_factor, self.decay_every)

    def to_dict(self) -> dict:
        return asdict(self)


def paper_config(**kw) -> TrainConfig:
    """600 epochs from 1e-3, decayed tenfold every 200 epochs, batch 32."""
    return TrainConfig(**{"epochs": 600, "base_eta": 1e-3, "decay_every": 200, **kw})


def desk_config(**kw) -> TrainConfig:
    """Synthetic 500-graph set, 60 epochs, decay every 20."""
    return TrainConfig(**{"data": "synth", "n_graphs": 500, "epochs": 60, "decay_every": 20, **kw})


def resolve_spec(config: TrainConfig, dataset: DatasetSplit) -> ModelSpec:
    if config.model_spec:
        with open(config.model_spec) as fh:
            return ModelSpec.from_json(fh.read())
    return PRESETS[config.preset](in_dim=dataset.feature_dim, num_classes=dataset.num_classes)


def dataset_for(config: TrainConfig) -> DatasetSplit:
    return load_dataset(config.data, config.seed, config.n_graphs, config.nodes_per_graph)


def evaluate(spec: ModelSpec, params: ParamSet, graphs: Sequence[Graph], batch_size: int = 128) -> float:
    if not graphs:
        return float("nan")
    logits, labels = predict(spec, params, make_batches(graphs, batch_size, shuffle=False))
    return accuracy(logits, labels)


def run_epoch(spec, params, graphs, optimizer: Optimizer, eta, batch_size, stream,
              on_step=None):
    """One pass over ``graphs``; returns (params, mean loss, running accuracy)."""
    total_loss, correct, seen = 0.0, 0, 0
    for batch in make_batches(graphs, batch_size, stream, shuffle=True):
        loss, grads, logits = loss_and_grads(spec, params, batch)
        params = optimizer.step(params, grads, eta)
        total_loss += loss * batch.size
        correct += int(np.sum(np.argmax(logits, 1) == batch.labels))
        seen += batch.size
        if on_step is not None:
            on_step(params)
    return params, total_loss / seen, correct / seen


@dataclass
class TrainResult:
    spec: ModelSpec
    params: ParamSet
    history: list[dict]
    snapshots: SnapshotLog
    dataset: DatasetSplit


def train_to_equilibrium(config: TrainConfig, dataset: DatasetSplit | None = None,
                         spec: ModelSpec | None = None, keep_snapshots: bool = True,
                         eval_every: int = 1, on_epoch=None) -> TrainResult:
    dataset = dataset or dataset_for(config)
    spec = spec or resolve_spec(config, dataset)
    root = RngStream(config.seed)
    params = init_params(spec, root.child(0))
    opt = Optimizer(config.optimizer)
    snaps = SnapshotLog()
    if keep_snapshots:
        snaps.append(0, params)
    history = []
    for epoch in range(config.epochs):
        eta = schedule_eta(config.schedule, epoch)
        try:
            params, loss, _ = run_epoch(spec, params, dataset.train, opt, eta, config.batch_size,
                                        root.child(1, epoch))
        except NumericError as exc:
            raise NumericError(f"epoch {epoch + 1}: {exc}") from exc
        if not np.isfinite(loss):
            raise NumericError(f"epoch {epoch + 1}: non-finite loss")
        row = {"epoch": epoch + 1, "eta": eta, "loss": loss}
        if (epoch + 1) % eval_every == 0 or epoch + 1 == config.epochs:
            row["train_acc"] = evaluate(spec, params, dataset.train)
            row["test_acc"] = evaluate(spec, params, dataset.test)
        history.append(row)
        if on_epoch is not None:
            on_epoch(row)
        log.info("epoch %d eta %.3g loss %.5f", epoch + 1, eta, loss)
        if keep_snapshots:
            snaps.append(epoch + 1, params)
    return TrainResult(spec, params, history, snaps, dataset)


@dataclass
class WindowResult:
    series: list[TemperatureSeries]
    snapshots: SnapshotLog
    params: ParamSet

    def temperatures(self) -> dict[str, float]:
        return {s.layer: s.thermodynamic for s in self.series}


def measure_window(spec: ModelSpec, params: ParamSet, graphs: Sequence[Graph], eta: float,
                   batch_size: int, window_epochs: int = 100, seed: int = 0,
                   optimizer: str = "sgd", granularity: str = "epoch", k_B: float = 1.0,
                   include: Sequence[str] | None = None) -> WindowResult:
    """Continue training a copy of ``params`` at constant ``eta`` and ``batch_size``.

    Snapshots are taken after every epoch (or every optimizer step when
    ``granularity="step"``); the returned series hold one thermodynamic
    temperature per layer.
    """
    if window_epochs < 2:
        raise ConfigurationError("measurement window must span at least 2 epochs")
    if granularity not in ("epoch", "step"):
        raise ConfigurationError("granularity must be 'epoch' or 'step'")
    if eta < 0:
        raise ConfigurationError("eta must be non-negative")
    work = copy_params(params)
    opt = Optimizer(optimizer)
    root = RngStream(seed)
    snaps = SnapshotLog(granularity=granularity)
    snaps.append(0, work)

    def on_step(p):
        snaps.append(len(snaps), p)

    for epoch in range(window_epochs):
        work, loss, _ = run_epoch(spec, work, graphs, opt, eta, batch_size, root.child(2, epoch),
                                  on_step if granularity == "step" else None)
        if not np.isfinite(loss):
            raise NumericError(f"window epoch {epoch + 1}: non-finite loss")
        if granularity == "epoch":
            snaps.append(epoch + 1, work)
    return WindowResult(layer_temperatures(snaps, k_B, include), snaps, work)


@dataclass
class SweepSpec:
    varied: str
    values: Sequence[float]
    fixed_eta: float = 1e-5
    fixed_beta: int = 32
    window_epochs: int = 100
    seed: int = 0
    optimizer: str = "sgd"

    def __post_init__(self):
        if self.varied not in ("eta", "batch_size"):
            raise ConfigurationError("varied must be 'eta' or 'batch_size'")
        if len(self.values) < 3:
            raise ConfigurationError("a sweep needs at least 3 values")
        if self.window_epochs < 2:
            raise ConfigurationError("window_epochs must be >= 2")
        if self.varied == "eta" and any(v < 0 for v in self.values):
            raise ConfigurationError("learning rates must be non-negative")
        if self.varied == "batch_size":
            if any(v < 1 or int(v) != v for v in self.values):
                raise ConfigurationError("batch sizes must be positive integers")
            self.values = [int(v) for v in self.values]

    def trial(self, value) -> tuple[float, int]:
        return (float(value), self.fixed_beta) if self.varied == "eta" else (self.fixed_eta, int(value))


@dataclass
class SweepRow:
    varied: str
    value: float
    zeta: float
    layer: str
    T: float


@dataclass
class SweepResult:
    varied: str
    rows: list[SweepRow] = field(default_factory=list)

    def layers(self) -> list[str]:
        return list(dict.fromkeys(r.layer for r in self.rows))

    def by_layer(self, layer: str) -> tuple[np.ndarray, np.ndarray]:
        sel = [r for r in self.rows if r.layer == layer]
        return np.array([r.value for r in sel]), np.array([r.T for r in sel])


def sweep_threads() -> int:
    try:
        return max(1, int(os.environ.get("THERMOGNN_THREADS", "1")))
    except ValueError:
        return 1


def sweep(spec: ModelSpec, params: ParamSet, graphs: Sequence[Graph], sweep_spec: SweepSpec,
          threads: int | None = None) -> SweepResult:
    """Run one measurement window per value, each from the same ``params``."""
    values = sorted(set(sweep_spec.values))

    def trial(value):
        eta, beta = sweep_spec.trial(value)
        res = measure_window(spec, params, graphs, eta, beta, sweep_spec.window_epochs,
                             sweep_spec.seed, sweep_spec.optimizer)
        zeta = cs_temperature(eta, beta) if eta > 0 else 0.0
        return [SweepRow(sweep_spec.varied, value, zeta, s.layer, s.thermodynamic) for s in res.series]

    threads = threads or sweep_threads()
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(trial, values))
    else:
        results = [trial(v) for v in values]
    return SweepResult(sweep_spec.varied, [row for rows in results for row in rows])


def fit_sweep(result: SweepResult, form: str | None = None) -> list[FitResult]:
    """Per-layer fits: power law in eta, linear in 1/batch_size by default."""
    form = form or ("power_law" if result.varied == "eta" else "linear")
    fits = []
    for layer in result.layers():
        x, t = result.by_layer(layer)
        if result.varied == "batch_size":
            x = 1.0 / x
        fits.append(FITTERS[form](x, t, layer))
    return fits


# --- pruning probe -----------------------------------------------------------

@dataclass
class PruneReport:
    layer: str
    pruned_rows: list[int]
    mode: str
    fraction: float
    accuracy_before: float
    accuracy_after: float
    delta_T: dict[str, float] | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def select_rows(row_means: np.ndarray, fraction: float, mode: str) -> list[int]:
    if mode not in ("hot", "cold"):
        raise ConfigurationError("mode must be 'hot' or 'cold'")
    if not 0 < fraction < 1:
        raise ConfigurationError("fraction must be in (0, 1)")
    k = int(round(fraction * len(row_means)))
    if k == 0:
        raise ConfigurationError(f"fraction {fraction} of {len(row_means)} rows rounds to zero")
    # stable sort: equal MSVs resolve to the lower row index in both modes
    key = -row_means if mode == "hot" else row_means
    picked = np.argsort(key, kind="stable")[:k]
    return sorted(int(i) for i in picked)


def zero_rows(params: ParamSet, layer: str, rows: Sequence[int]) -> ParamSet:
    """Copy of ``params`` with the given output units of ``layer`` zeroed."""
    out = copy_params(params)
    rows = list(rows)
    out[layer]["W"][:, rows] = 0.0
    out[layer]["b"][:, rows] = 0.0
    return out


def prune_rows_by_msv(spec: ModelSpec, params: ParamSet, layer: str, fraction: float, mode: str,
                      eval_graphs: Sequence[Graph], snapshots: SnapshotLog,
                      train_graphs: Sequence[Graph] | None = None, retrain_epochs: int = 0,
                      eta: float = 1e-3, batch_size: int = 32, seed: int = 0) -> PruneReport:
    """Zero the hottest (or coldest) output rows of ``layer`` and re-evaluate.

    Rows are ranked by their mean squared velocity over ``snapshots``. When
    ``retrain_epochs >= 2`` both the original and the pruned model are trained
    for that many more epochs and the per-layer temperature change is reported.
    """
    if layer not in params:
        raise ConfigurationError(f"unknown layer {layer!r}; valid layers: {', '.join(params)}")
    msv = per_weight_msv(snapshots, layer, "W", "out_in")
    rows = select_rows(msv.row_means, fraction, mode)
    pruned = zero_rows(params, layer, rows)
    before = evaluate(spec, params, eval_graphs)
    after = evaluate(spec, pruned, eval_graphs)
    delta = None
    if retrain_epochs >= 2:
        if not train_graphs:
            raise ConfigurationError("continued training needs train_graphs")
        t0 = measure_window(spec, params, train_graphs, eta, batch_size, retrain_epochs, seed).temperatures()
        t1 = measure_window(spec, pruned, train_graphs, eta, batch_size, retrain_epochs, seed).temperatures()
        delta = {k: t1[k] - t0[k] for k in t0}
    return PruneReport(layer, rows, mode, fraction, before, after, delta)
