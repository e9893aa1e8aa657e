"""Weight-temperature measurements.

Weights are treated as unit-mass particles whose velocity is the change of a
parameter between consecutive snapshots (``dt = 1`` epoch, or step in step
mode). For a layer with ``d`` counted scalars the instantaneous temperature is
the kinetic energy ``sum(v**2) / 2`` divided by ``k_B * d``; the
thermodynamic temperature is its arithmetic mean over a measurement window.
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .engine import ParamSet, copy_params
from .errors import ConfigurationError, ValidationError

MASS = 1.0


@dataclass(frozen=True)
class Snapshot:
    epoch: int
    tensors: ParamSet


class GapError(ValidationError):
    """Snapshots that are not consecutive."""


@dataclass
class SnapshotLog:
    """Ordered, copy-on-append record of parameter snapshots."""
    snapshots: list[Snapshot] = field(default_factory=list)
    granularity: str = "epoch"

    def append(self, epoch: int, params: ParamSet) -> Snapshot:
        if self.snapshots and epoch <= self.snapshots[-1].epoch:
            raise ValidationError("snapshot epochs must be strictly increasing")
        snap = Snapshot(int(epoch), copy_params(params))
        for tensors in snap.tensors.values():
            for arr in tensors.values():
                arr.setflags(write=False)
        self.snapshots.append(snap)
        return snap

    def __len__(self):
        return len(self.snapshots)

    def __iter__(self):
        return iter(self.snapshots)

    def __getitem__(self, i):
        return self.snapshots[i]

    @property
    def epochs(self) -> list[int]:
        return [s.epoch for s in self.snapshots]

    @property
    def layers(self) -> list[str]:
        return list(self.snapshots[0].tensors) if self.snapshots else []

    def window(self, n_velocities: int | None = None) -> "SnapshotLog":
        """The trailing ``n_velocities + 1`` snapshots (all when ``None``)."""
        if n_velocities is None:
            return self
        if n_velocities < 1:
            raise ConfigurationError("window must contain at least one velocity")
        if n_velocities + 1 > len(self.snapshots):
            raise ConfigurationError(
                f"window of {n_velocities} needs {n_velocities + 1} snapshots, log has {len(self)}")
        return SnapshotLog(self.snapshots[-(n_velocities + 1):], self.granularity)

    def check_consecutive(self):
        ep = self.epochs
        for a, b in zip(ep, ep[1:]):
            if b != a + 1:
                raise GapError(f"snapshot log jumps from {self.granularity} {a} to {b}")

    # persistence: one .npz per snapshot plus a JSON manifest
    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for s in self.snapshots:
            np.savez(d / f"{self.granularity}_{s.epoch:06d}.npz",
                     **{f"{layer}/{t}": a for layer, ts in s.tensors.items() for t, a in ts.items()})
        manifest = {
            "granularity": self.granularity,
            "epochs": self.epochs,
            "layers": {layer: {t: list(a.shape) for t, a in ts.items()}
                       for layer, ts in (self.snapshots[0].tensors.items() if self.snapshots else [])},
        }
        tmp = d / "manifest.json.tmp"
        tmp.write_text(json.dumps(manifest, indent=2))
        os.replace(tmp, d / "manifest.json")

    @classmethod
    def load(cls, directory) -> "SnapshotLog":
        d = Path(directory)
        manifest_path = d / "manifest.json"
        if not manifest_path.exists():
            raise ConfigurationError(f"no snapshot manifest in {d}")
        manifest = json.loads(manifest_path.read_text())
        log = cls(granularity=manifest["granularity"])
        for ep in manifest["epochs"]:
            with np.load(d / f"{log.granularity}_{ep:06d}.npz") as z:
                tensors: ParamSet = {}
                for layer, shapes in manifest["layers"].items():
                    tensors[layer] = {t: z[f"{layer}/{t}"] for t in shapes}
            log.append(ep, tensors)
        return log


@dataclass
class VelocityRecord:
    epoch: int
    velocities: ParamSet


def velocities(prev: Snapshot, cur: Snapshot) -> VelocityRecord:
    if cur.epoch != prev.epoch + 1:
        raise GapError(f"velocity undefined between epochs {prev.epoch} and {cur.epoch}")
    if list(prev.tensors) != list(cur.tensors):
        raise ConfigurationError("snapshots hold different layers")
    v = {}
    for layer, ts in cur.tensors.items():
        v[layer] = {}
        for t, w in ts.items():
            w0 = prev.tensors[layer][t]
            if w0.shape != w.shape:
                raise ConfigurationError(f"shape changed for {layer}.{t}")
            v[layer][t] = w - w0
    return VelocityRecord(cur.epoch, v)


def _select(tensors: dict, include: Sequence[str] | None) -> list[np.ndarray]:
    if include is None:
        return list(tensors.values())
    missing = [t for t in include if t not in tensors]
    if missing:
        raise ConfigurationError(f"tensors {missing} not present")
    return [tensors[t] for t in include]


def degrees_of_freedom(tensors: dict, include: Sequence[str] | None = None) -> int:
    return sum(a.size for a in _select(tensors, include))


def kinetic_energy(arrays: Iterable[np.ndarray]) -> float:
    return float(sum(0.5 * MASS * np.sum(np.square(a)) for a in arrays))


def instantaneous_temperature(v: VelocityRecord, layer: str, k_B: float = 1.0,
                              include: Sequence[str] | None = None) -> float:
    if layer not in v.velocities:
        raise ConfigurationError(f"unknown layer {layer!r}")
    arrays = _select(v.velocities[layer], include)
    d = sum(a.size for a in arrays)
    if d < 1:
        raise ConfigurationError("layer has no degrees of freedom")
    return kinetic_energy(arrays) / (k_B * d)


def thermodynamic_temperature(series: Sequence[float]) -> float:
    if len(series) == 0:
        raise ValidationError("empty temperature window")
    return float(np.mean(np.asarray(series, dtype=np.float64)))


@dataclass
class TemperatureSeries:
    layer: str
    epochs: list[int]
    instantaneous: list[float]
    thermodynamic: float
    dof: int
    k_B: float = 1.0
    mass: float = MASS


def layer_temperatures(log: SnapshotLog, k_B: float = 1.0, include: Sequence[str] | None = None,
                       layers: Sequence[str] | None = None) -> list[TemperatureSeries]:
    """One temperature series per layer over every consecutive snapshot pair.

    ``include`` restricts the counted tensors (e.g. ``("W",)``); by default
    weights and biases both count.
    """
    if len(log) < 2:
        raise ValidationError("need at least two snapshots")
    log.check_consecutive()
    layers = list(log.layers if layers is None else layers)
    records = [velocities(a, b) for a, b in zip(log.snapshots, log.snapshots[1:])]
    out = []
    for layer in layers:
        inst = [instantaneous_temperature(r, layer, k_B, include) for r in records]
        out.append(TemperatureSeries(
            layer, [r.epoch for r in records], inst, thermodynamic_temperature(inst),
            degrees_of_freedom(log[0].tensors[layer], include), k_B))
    return out


def merge_series(series: Sequence[TemperatureSeries], name: str = "merged") -> TemperatureSeries:
    """Treat several layers as one system: dof-weighted mean of their temperatures."""
    if not series:
        raise ValidationError("nothing to merge")
    dof = sum(s.dof for s in series)
    inst = [sum(s.dof * s.instantaneous[i] for s in series) / dof
            for i in range(len(series[0].instantaneous))]
    return TemperatureSeries(name, list(series[0].epochs), inst, thermodynamic_temperature(inst),
                             dof, series[0].k_B)


@dataclass
class MsvMap:
    layer: str
    msv: np.ndarray
    row_means: np.ndarray
    tensor: str = "W"
    orientation: str = "out_in"

    def flattened(self) -> np.ndarray:
        return self.msv.ravel()


def per_weight_msv(log: SnapshotLog, layer: str, tensor: str = "W",
                   orientation: str = "out_in") -> MsvMap:
    """Mean over the window of each weight's squared velocity.

    With ``orientation="out_in"`` rows index output units (the transpose of
    the stored ``(in, out)`` weight), so ``row_means`` is per output unit.
    """
    if orientation not in ("out_in", "in_out"):
        raise ConfigurationError("orientation must be 'out_in' or 'in_out'")
    if len(log) < 2:
        raise ValidationError("need at least two snapshots")
    log.check_consecutive()
    if layer not in log[0].tensors:
        raise ConfigurationError(f"unknown layer {layer!r}; have {log.layers}")
    acc = np.zeros_like(log[0].tensors[layer][tensor])
    for a, b in zip(log.snapshots, log.snapshots[1:]):
        acc += np.square(velocities(a, b).velocities[layer][tensor])
    msv = acc / (len(log) - 1)
    if msv.ndim == 2 and orientation == "out_in":
        msv = msv.T
    msv = np.ascontiguousarray(np.atleast_2d(msv))
    return MsvMap(layer, msv, msv.mean(axis=1), tensor, orientation)


def cs_temperature(eta: float, batch_size: int) -> float:
    """Noise-scale temperature eta / (2 * batch_size) of the SDE model of SGD."""
    if eta <= 0 or batch_size < 1:
        raise ConfigurationError("need eta > 0 and batch_size >= 1")
    return eta / (2.0 * batch_size)


def write_temperature_csv(series: Sequence[TemperatureSeries], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["layer", "epoch", "T_inst"])
        for s in series:
            for ep, t in zip(s.epochs, s.instantaneous):
                w.writerow([s.layer, ep, f"{t:.17e}"])


def temperature_summary(series: Sequence[TemperatureSeries]) -> list[dict]:
    return [{"layer": s.layer, "T": s.thermodynamic, "dof": s.dof, "k_B": s.k_B,
             "n_epochs": len(s.instantaneous)} for s in series]
