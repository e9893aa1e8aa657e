"""Command-line entry point.

Subcommands: synth, train, measure, sweep, fit, msv, prune. Each writes its
outputs plus a ``manifest.json`` into ``--out``. Settings resolve as
flags > ``--config`` JSON > preset defaults.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .data import load_dataset, save_jsonl, synth_dataset
from .errors import ConfigurationError, NumericError, ThermoGNNError
from .experiments import (SweepSpec, TrainConfig, desk_config, evaluate, fit_sweep, measure_window,
                          paper_config, prune_rows_by_msv, sweep, train_to_equilibrium)
from .fitting import FITTERS
from .io import fmt, load_checkpoint, save_params, sha256_file, write_csv, write_json
from .thermometer import GapError, SnapshotLog, per_weight_msv, temperature_summary, write_temperature_csv

log = logging.getLogger("thermognn")


class Run:
    """Collects outputs and writes the manifest when the command finishes."""

    def __init__(self, args, config: dict):
        self.args = args
        self.config = config
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self.start = time.perf_counter()

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out / name

    def input(self, path) -> None:
        p = Path(path)
        if p.is_file():
            self.inputs[str(p)] = sha256_file(p)

    def finish(self) -> int:
        missing = [o for o in self.outputs if not (self.out / o).exists()]
        write_json(self.out / "manifest.json", {
            "command": self.args.command,
            "argv": sys.argv[1:],
            "config": self.config,
            "seed": self.config.get("seed"),
            "version": __version__,
            "inputs": self.inputs,
            "duration_s": round(time.perf_counter() - self.start, 3),
            "outputs": self.outputs,
        })
        return 1 if missing else 0


def _resolve(args, defaults: dict, keys: list[str]) -> dict:
    cfg = dict(defaults)
    if args.config:
        with open(args.config) as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(keys) - {"seed"}
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated number list: {text!r}")


# --- commands ----------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = _resolve(args, {"n_graphs": 500, "nodes": 75, "classes": 10, "seed": 0},
                   ["n_graphs", "nodes", "classes"])
    run = Run(args, cfg)
    ds = synth_dataset(cfg["seed"], cfg["n_graphs"], cfg["nodes"], cfg["classes"])
    save_jsonl(ds, run.path("dataset.jsonl"))
    return run.finish()


TRAIN_KEYS = ["preset", "model_spec", "data", "n_graphs", "nodes_per_graph", "optimizer",
              "base_eta", "decay_factor", "decay_every", "epochs", "batch_size"]


def cmd_train(args) -> int:
    base = (desk_config() if args.scale == "desk" else paper_config()).to_dict()
    cfg = _resolve(args, base, TRAIN_KEYS)
    config = TrainConfig(**cfg)
    run = Run(args, config.to_dict())
    if config.data != "synth":
        run.input(config.data)
    if config.model_spec:
        run.input(config.model_spec)
    dataset = load_dataset(config.data, config.seed, config.n_graphs, config.nodes_per_graph)
    header = ["epoch", "eta", "loss", "train_acc", "test_acc"]
    log_path = run.path("train_log.csv")
    fh = open(log_path, "w", newline="")
    writer = csv.writer(fh)
    writer.writerow(header)

    def on_epoch(row):
        writer.writerow([row["epoch"], fmt(row["eta"]), fmt(row["loss"]),
                         fmt(row.get("train_acc", float("nan"))), fmt(row.get("test_acc", float("nan")))])
        fh.flush()

    try:
        result = train_to_equilibrium(config, dataset, eval_every=args.eval_every, on_epoch=on_epoch)
    finally:
        fh.close()
    save_params(run.path("checkpoint.npz"), result.params)
    (run.path("model_spec.json")).write_text(result.spec.to_json() + "\n")
    write_json(run.path("config.json"), config.to_dict())
    snaps = result.snapshots
    if args.keep_snapshots is not None:
        snaps = snaps.window(min(args.keep_snapshots, len(snaps) - 1))
    snaps.save(run.out / "snapshots")
    run.outputs.append("snapshots/manifest.json")
    return run.finish()


def _checkpoint_and_data(run, directory):
    spec, params, config = load_checkpoint(directory)
    run.input(Path(directory) / "checkpoint.npz")
    dataset = load_dataset(config["data"], config["seed"], config["n_graphs"], config["nodes_per_graph"])
    return spec, params, config, dataset


def _require_dir(path, what):
    if not Path(path).is_dir():
        raise FileNotFoundError(f"{what} not found: {path}")


def cmd_measure(args) -> int:
    _require_dir(args.checkpoint, "checkpoint")
    cfg = _resolve(args, {"eta": 1e-3, "batch_size": 32, "window": 100, "optimizer": "sgd",
                          "granularity": "epoch", "k_B": 1.0, "seed": 0},
                   ["eta", "batch_size", "window", "optimizer", "granularity", "k_B"])
    cfg["checkpoint"] = str(args.checkpoint)
    cfg["weights_only"] = args.weights_only
    run = Run(args, cfg)
    spec, params, _, dataset = _checkpoint_and_data(run, args.checkpoint)
    res = measure_window(spec, params, dataset.train, cfg["eta"], cfg["batch_size"], cfg["window"],
                         cfg["seed"], cfg["optimizer"], cfg["granularity"], cfg["k_B"],
                         ("W",) if args.weights_only else None)
    write_temperature_csv(res.series, run.path("temperatures.csv"))
    write_json(run.path("summary.json"), temperature_summary(res.series))
    res.snapshots.save(run.out / "snapshots")
    run.outputs.append("snapshots/manifest.json")
    return run.finish()


def _write_fits(path, fits):
    write_json(path, [f.to_dict() for f in fits])


def cmd_sweep(args) -> int:
    _require_dir(args.checkpoint, "checkpoint")
    defaults = {"fixed_eta": 1e-5, "fixed_beta": 32, "window": 100, "optimizer": "sgd", "seed": 0}
    cfg = _resolve(args, defaults, ["vary", "values", "fixed_eta", "fixed_beta", "window", "optimizer", "fit_form"])
    if "values" not in cfg:
        raise ConfigurationError("--values is required")
    cfg["checkpoint"] = str(args.checkpoint)
    varied = "eta" if cfg["vary"] == "eta" else "batch_size"
    sspec = SweepSpec(varied, cfg["values"], cfg["fixed_eta"], cfg["fixed_beta"], cfg["window"],
                      cfg["seed"], cfg["optimizer"])
    run = Run(args, cfg)
    spec, params, _, dataset = _checkpoint_and_data(run, args.checkpoint)
    result = sweep(spec, params, dataset.train, sspec)
    write_csv(run.path("sweep.csv"), ["varied", "value", "zeta", "layer", "T"],
              [[r.varied, fmt(r.value), fmt(r.zeta), r.layer, fmt(r.T)] for r in result.rows])
    _write_fits(run.path("fits.json"), fit_sweep(result, cfg.get("fit_form")))
    return run.finish()


def read_sweep_csv(path):
    from .experiments import SweepResult, SweepRow
    with open(path, newline="") as fh:
        rows = [SweepRow(r["varied"], float(r["value"]), float(r["zeta"]), r["layer"], float(r["T"]))
                for r in csv.DictReader(fh)]
    if not rows:
        raise ConfigurationError(f"{path} holds no sweep rows")
    return SweepResult(rows[0].varied, rows)


def cmd_fit(args) -> int:
    if not Path(args.sweep).is_file():
        raise FileNotFoundError(f"sweep CSV not found: {args.sweep}")
    cfg = _resolve(args, {"seed": 0}, ["form"])
    cfg["sweep"] = str(args.sweep)
    run = Run(args, cfg)
    run.input(args.sweep)
    _write_fits(run.path("fits.json"), fit_sweep(read_sweep_csv(args.sweep), cfg.get("form")))
    return run.finish()


def _snapshot_dir(path) -> Path:
    p = Path(path)
    for cand in (p / "snapshots", p):
        manifest = cand / "manifest.json"
        if manifest.exists() and "granularity" in json.loads(manifest.read_text()):
            return cand
    raise FileNotFoundError(f"no snapshot log under {p}")


def cmd_msv(args) -> int:
    cfg = _resolve(args, {"seed": 0, "orientation": "out_in"}, ["layer", "window", "orientation"])
    cfg["snapshots"] = str(args.snapshots)
    run = Run(args, cfg)
    snaps = SnapshotLog.load(_snapshot_dir(args.snapshots)).window(cfg.get("window"))
    layers = [cfg["layer"]] if cfg.get("layer") else snaps.layers
    for layer in layers:
        if layer not in snaps.layers:
            raise ConfigurationError(f"unknown layer {layer!r}; valid layers: {', '.join(snaps.layers)}")
        m = per_weight_msv(snaps, layer, "W", cfg["orientation"])
        write_csv(run.path(f"msv_{layer}.csv"), [f"c{j}" for j in range(m.msv.shape[1])],
                  [[fmt(v) for v in row] for row in m.msv])
        write_csv(run.path(f"msv_{layer}_flat.csv"), ["index", "msv"],
                  [[i, fmt(v)] for i, v in enumerate(m.flattened())])
        write_csv(run.path(f"msv_{layer}_rows.csv"), ["row", "mean_msv"],
                  [[i, fmt(v)] for i, v in enumerate(m.row_means)])
    return run.finish()


def cmd_prune(args) -> int:
    _require_dir(args.checkpoint, "checkpoint")
    cfg = _resolve(args, {"seed": 0, "retrain_epochs": 0, "eta": 1e-3, "batch_size": 32},
                   ["layer", "mode", "fraction", "window", "retrain_epochs", "eta", "batch_size"])
    cfg["checkpoint"] = str(args.checkpoint)
    if not 0 < cfg["fraction"] < 1:
        raise ConfigurationError("--fraction must be in (0, 1)")
    run = Run(args, cfg)
    spec, params, _, dataset = _checkpoint_and_data(run, args.checkpoint)
    if cfg["layer"] not in params:
        raise ConfigurationError(f"unknown layer {cfg['layer']!r}; valid layers: {', '.join(params)}")
    snaps = SnapshotLog.load(_snapshot_dir(args.snapshots or args.checkpoint)).window(cfg.get("window"))
    report = prune_rows_by_msv(spec, params, cfg["layer"], cfg["fraction"], cfg["mode"], dataset.test,
                               snaps, dataset.train, cfg["retrain_epochs"], cfg["eta"],
                               cfg["batch_size"], cfg["seed"])
    write_json(run.path("prune_report.json"), report.to_dict())
    return run.finish()


# --- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--config", help="JSON file of settings (flags take precedence)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="thermognn", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic JSONL dataset")
    s.add_argument("--n-graphs", dest="n_graphs", type=int)
    s.add_argument("--nodes", type=int)
    s.add_argument("--classes", type=int)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", parents=[common], help="train to equilibrium")
    t.add_argument("--scale", choices=["desk", "paper"], default="paper",
                   help="default schedule: desk = 60 epochs/decay 20, paper = 600/200")
    t.add_argument("--preset", choices=["gcn", "gat"])
    t.add_argument("--model-spec", dest="model_spec")
    t.add_argument("--data", help="'synth' or a JSONL path")
    t.add_argument("--n-graphs", dest="n_graphs", type=int)
    t.add_argument("--nodes", dest="nodes_per_graph", type=int)
    t.add_argument("--optimizer", choices=["sgd", "adam"])
    t.add_argument("--lr", dest="base_eta", type=float)
    t.add_argument("--decay-factor", dest="decay_factor", type=float)
    t.add_argument("--decay-every", dest="decay_every", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", dest="batch_size", type=int)
    t.add_argument("--eval-every", dest="eval_every", type=int, default=1)
    t.add_argument("--keep-snapshots", dest="keep_snapshots", type=int,
                   help="persist only the trailing N epochs of snapshots")
    t.set_defaults(func=cmd_train)

    m = sub.add_parser("measure", parents=[common], help="temperature over a measurement window")
    m.add_argument("--checkpoint", required=True)
    m.add_argument("--lr", dest="eta", type=float)
    m.add_argument("--batch-size", dest="batch_size", type=int)
    m.add_argument("--window", type=int)
    m.add_argument("--optimizer", choices=["sgd", "adam"])
    m.add_argument("--granularity", choices=["epoch", "step"])
    m.add_argument("--k-b", dest="k_B", type=float)
    m.add_argument("--weights-only", dest="weights_only", action="store_true",
                   help="exclude biases and attention vectors from the temperature")
    m.set_defaults(func=cmd_measure)

    w = sub.add_parser("sweep", parents=[common], help="learning-rate or batch-size sweep")
    w.add_argument("--checkpoint", required=True)
    w.add_argument("--vary", choices=["eta", "batch"], required=True)
    w.add_argument("--values", type=_floats)
    w.add_argument("--fixed-eta", dest="fixed_eta", type=float)
    w.add_argument("--fixed-batch", dest="fixed_beta", type=int)
    w.add_argument("--window", type=int)
    w.add_argument("--optimizer", choices=["sgd", "adam"])
    w.add_argument("--fit-form", dest="fit_form", choices=sorted(FITTERS))
    w.set_defaults(func=cmd_sweep)

    f = sub.add_parser("fit", parents=[common], help="refit a sweep CSV")
    f.add_argument("--sweep", required=True)
    f.add_argument("--form", choices=sorted(FITTERS))
    f.set_defaults(func=cmd_fit)

    v = sub.add_parser("msv", parents=[common], help="per-weight mean squared velocity maps")
    v.add_argument("--snapshots", required=True, help="snapshot directory or run directory")
    v.add_argument("--layer")
    v.add_argument("--window", type=int, help="use the trailing N velocities")
    v.add_argument("--orientation", choices=["out_in", "in_out"])
    v.set_defaults(func=cmd_msv)

    r = sub.add_parser("prune", parents=[common], help="zero hot or cold rows and re-evaluate")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--snapshots", help="snapshot log used for ranking (default: checkpoint's)")
    r.add_argument("--layer", required=True)
    r.add_argument("--mode", choices=["hot", "cold"], required=True)
    r.add_argument("--fraction", type=float, required=True)
    r.add_argument("--window", type=int)
    r.add_argument("--retrain-epochs", dest="retrain_epochs", type=int)
    r.add_argument("--lr", dest="eta", type=float)
    r.add_argument("--batch-size", dest="batch_size", type=int)
    r.set_defaults(func=cmd_prune)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except GapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 1
    except (ThermoGNNError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
