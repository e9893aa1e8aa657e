"""Exit criteria for the package, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary
(see ``conftest.py``); run ``python tests/test_acceptance.py`` to print them
without pytest's capture.
"""
import time

import numpy as np
import pytest

from conftest import perturb_biases, random_graph
from gradcheck import TOL as GRAD_TOL, check as grad_check, grid as grad_grid
from oracles import brute_temperatures, dense_gat, dense_gcn, one_nn_accuracy
from thermognn import engine as E
from thermognn.cli import main as cli_main
from thermognn.data import Graph, collate
from thermognn.experiments import (SweepSpec, desk_config, fit_sweep, measure_window, sweep,
                                   train_to_equilibrium)
from thermognn.fitting import fit_linear, fit_power_law
from thermognn.linalg import RngStream
from thermognn.optim import sgd_step
from thermognn.thermometer import Snapshot, layer_temperatures, per_weight_msv, velocities

RESULTS: list[str] = []


def record(tag, ok, detail):
    RESULTS.append(f"[{'PASS' if ok else 'FAIL'}] {tag}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def desk():
    """Desk-scale GCN: synthetic 500 graphs, 60 epochs, lr decayed every 20."""
    t0 = time.perf_counter()
    res = train_to_equilibrium(desk_config(seed=0), keep_snapshots=False, eval_every=60)
    res.elapsed = time.perf_counter() - t0
    return res


@pytest.fixture(scope="module")
def window(desk):
    return measure_window(desk.spec, desk.params, desk.dataset.train, 1e-3, 32, 20, seed=0,
                          optimizer="sgd")


def test_ac01_gradient_correctness():
    t0 = time.perf_counter()
    worst = 0.0
    for act, readout in grad_grid():
        worst = max(worst, max(grad_check(act, readout).values()))
    elapsed = time.perf_counter() - t0
    record("AC1 gradient check", worst <= GRAD_TOL and elapsed < 10,
           f"max rel err {worst:.2e} (tol {GRAD_TOL:g}) over GCNConv/GATConv(2 heads)/Linear x "
           f"tanh,relu x concat_mean_max,mean,max; {elapsed:.2f}s (< 10s)")


def test_ac02_temperature_oracle(window):
    oracle = brute_temperatures([s.tensors for s in window.snapshots])
    diffs = {s.layer: abs(s.thermodynamic - oracle[s.layer][1]) for s in window.series}
    worst = max(diffs.values())
    record("AC2 temperature oracle", worst <= 1e-12 and len(window.snapshots) == 21,
           f"20-epoch window, max |T_pipeline - T_bruteforce| = {worst:.1e} (tol 1e-12)")


def test_ac03_time_average(window, desk):
    extra = measure_window(desk.spec, desk.params, desk.dataset.train, 3e-3, 8, 5, seed=4)
    worst = 0.0
    for res in (window, extra):
        for s in res.series:
            worst = max(worst, abs(s.thermodynamic - float(np.mean(s.instantaneous))))
    record("AC3 T = mean of instantaneous", worst <= 1e-12, f"max deviation {worst:.1e} (tol 1e-12)")


def test_ac04_msv_identity(window):
    worst = 0.0
    series = {s.layer: s for s in layer_temperatures(window.snapshots, include=("W",))}
    for layer in window.snapshots.layers:
        m = per_weight_msv(window.snapshots, layer)
        d = m.msv.size
        identity = 0.5 * m.msv.sum() / (1.0 * d)
        worst = max(worst, abs(identity - series[layer].thermodynamic))
    record("AC4 MSV identity", worst <= 1e-12, f"max |sum(MSV)/(2 k_B d) - T_W| = {worst:.1e} (tol 1e-12)")


def test_ac05_message_passing_oracle():
    worst_gcn = worst_gat = worst_att = 0.0
    for seed in range(40):
        s = RngStream(500 + seed)
        n = 1 + seed % 5
        g = random_graph(s, n)
        batch = collate([g])
        x = batch.node_features
        W, b = s.normal(3, 4), s.normal(1, 4)
        worst_gcn = max(worst_gcn, np.abs(E.gcn_forward(batch, W, b) - dense_gcn(x, batch.edges, W, b)).max())
        Wg, a_s, a_d, bg = s.normal(3, 6), s.normal(2, 3), s.normal(2, 3), s.normal(1, 6)
        out, alpha = E.gat_forward(batch, Wg, a_s, a_d, bg, 2, return_attention=True)
        ref, _ = dense_gat(x, batch.edges, Wg, a_s, a_d, bg, 2)
        worst_gat = max(worst_gat, np.abs(out - ref).max())
        _, dst = batch.gat_edges()
        sums = np.zeros((n, 2))
        np.add.at(sums, dst, alpha)
        worst_att = max(worst_att, np.abs(sums - 1).max())
    ok = worst_gcn <= 1e-12 and worst_gat <= 1e-12 and worst_att <= 1e-12
    record("AC5 message-passing oracle", ok,
           f"40 graphs (1-5 nodes): GCN {worst_gcn:.1e}, GAT {worst_gat:.1e}, attention row-sum {worst_att:.1e} (tol 1e-12)")


def test_ac06_permutation_invariance():
    worst = 0.0
    for preset in ("gcn", "gat"):
        spec = E.PRESETS[preset]()
        params = perturb_biases(E.init_params(spec, RngStream(3)))
        for seed in range(5):
            s = RngStream(900 + seed)
            g = random_graph(s, 12, p=0.3)
            perm = s.permutation(12)
            inv = np.argsort(perm)
            h = Graph(g.node_features[perm], inv[g.edges], g.label)
            a = E.model_forward(spec, params, collate([g]))[0]
            b = E.model_forward(spec, params, collate([h]))[0]
            worst = max(worst, np.abs(a - b).max())
    record("AC6 permutation invariance", worst <= 1e-9, f"max logit change {worst:.1e} (tol 1e-9)")


def test_ac07_fit_recovery():
    rng = np.random.default_rng(2024)
    x = np.linspace(0.5, 3.0, 20)
    pw = fit_power_law(x, 3 * x ** 2.4 * (1 + 0.01 * rng.standard_normal(20)))
    xl = 1.0 / np.linspace(8, 128, 20)
    lin = fit_linear(xl, 2 * xl * (1 + 0.01 * rng.standard_normal(20)))
    exact_p = fit_power_law(x, 3 * x ** 2.4)
    exact_l = fit_linear(x, 2 * x + 0.5)
    exact_err = max(abs(exact_p.c_or_b - 2.4), abs(exact_p.a - 3), abs(exact_l.a - 2), abs(exact_l.c_or_b - 0.5))
    ok = 2.3 <= pw.c_or_b <= 2.5 and 1.9 <= lin.a <= 2.1 and exact_err <= 1e-9
    record("AC7 fit recovery", ok,
           f"noisy power-law c={pw.c_or_b:.4f} in [2.3,2.5]; noisy slope={lin.a:.4f} in [1.9,2.1]; "
           f"exact-data error {exact_err:.1e} (tol 1e-9)")


def test_ac08_sgd_exactness():
    s = RngStream(8)
    # dyadic data and a power-of-two step: every floating-point operation is exact
    w = np.round(s.normal(16, 16) * 2 ** 20) / 2 ** 20
    g = np.round(s.normal(16, 16) * 2 ** 20) / 2 ** 20
    eta = 2.0 ** -10
    new = sgd_step({"l": {"W": w}}, {"l": {"W": g}}, eta)["l"]["W"]
    v = velocities(Snapshot(0, {"l": {"W": w}}), Snapshot(1, {"l": {"W": new}})).velocities["l"]["W"]
    exact_ok = np.array_equal(v, -eta * g) and np.array_equal((w - new) / eta, g)
    # general random tensors: the update is the correctly rounded w - eta*g and the
    # velocity differs from -eta*g by at most one rounding of w
    w2, g2, eta2 = s.normal(16, 16), s.normal(16, 16), 1.3e-3
    new2 = sgd_step({"l": {"W": w2}}, {"l": {"W": g2}}, eta2)["l"]["W"]
    v2 = new2 - w2
    general_ok = np.array_equal(new2, w2 - eta2 * g2) and np.all(np.abs(v2 + eta2 * g2) <= np.spacing(np.abs(w2)))
    record("AC8 SGD exactness", exact_ok and general_ok,
           f"dyadic instance bitwise exact: {exact_ok}; random instance correctly rounded, |v + eta g| <= ulp(w): {general_ok}")


def test_ac09_desk_trend(desk):
    t0 = time.perf_counter()
    eta_res = sweep(desk.spec, desk.params, desk.dataset.train,
                    SweepSpec("eta", [7e-4, 1.5e-3, 3e-3], fixed_beta=32, window_epochs=20, seed=0))
    beta_res = sweep(desk.spec, desk.params, desk.dataset.train,
                     SweepSpec("batch_size", [8, 32, 128], fixed_eta=1e-3, window_epochs=20, seed=0))
    elapsed = desk.elapsed + time.perf_counter() - t0
    inc = {l: bool(np.all(np.diff(eta_res.by_layer(l)[1]) > 0)) for l in eta_res.layers()}
    dec = {l: bool(np.all(np.diff(beta_res.by_layer(l)[1]) < 0)) for l in beta_res.layers()}
    pf = {f.layer: f for f in fit_sweep(eta_res)}
    lf = {f.layer: f for f in fit_sweep(beta_res)}
    for layer in eta_res.layers():
        RESULTS.append(f"       {layer}: T(eta) exponent {pf[layer].c_or_b:.3f} (R2 {pf[layer].r2:.4f}); "
                       f"T(1/beta) slope {lf[layer].a:.3e} (R2 {lf[layer].r2:.4f})")
    ok = all(inc.values()) and all(dec.values()) and elapsed < 600
    record("AC9 desk-scale trend", ok,
           f"T increasing in eta for {sum(inc.values())}/{len(inc)} layers, decreasing in beta for "
           f"{sum(dec.values())}/{len(dec)} layers; {elapsed:.0f}s total (< 600s)")


def test_ac10_determinism(tmp_path):
    def pipeline(root):
        small = ["--data", "synth", "--n-graphs", "30", "--nodes", "12", "--batch-size", "8", "--seed", "3"]
        codes = [
            cli_main(["train", "--preset", "gcn", "--scale", "desk", "--epochs", "3", *small, "--out", str(root / "run")]),
            cli_main(["measure", "--checkpoint", str(root / "run"), "--lr", "1e-2", "--batch-size", "8",
                      "--window", "2", "--out", str(root / "meas")]),
            cli_main(["sweep", "--checkpoint", str(root / "run"), "--vary", "batch", "--values", "4,8,16",
                      "--fixed-eta", "1e-2", "--window", "2", "--out", str(root / "sweep")]),
            cli_main(["fit", "--sweep", str(root / "sweep" / "sweep.csv"), "--out", str(root / "fit")]),
            cli_main(["msv", "--snapshots", str(root / "run"), "--out", str(root / "msv")]),
        ]
        return codes, {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*.csv"))}

    codes_a, a = pipeline(tmp_path / "a")
    codes_b, b = pipeline(tmp_path / "b")
    same = a.keys() == b.keys() and all(a[k] == b[k] for k in a)
    record("AC10 determinism", same and codes_a == codes_b == [0] * 5,
           f"{len(a)} CSV outputs from train/measure/sweep/fit/msv byte-identical across reruns: {same}")


def test_ac11_training_sanity(desk):
    acc = desk.history[-1]["train_acc"]
    chance = 1.0 / desk.dataset.num_classes
    baseline = one_nn_accuracy(desk.dataset.train, desk.dataset.test)
    ok = acc >= 3 * chance and baseline >= 3 * chance
    record("AC11 training sanity", ok,
           f"GCN train accuracy {acc:.3f} after 60 epochs vs 3x chance = {3 * chance:.2f} "
           f"(1-NN oracle baseline {baseline:.3f}); training took {desk.elapsed:.0f}s")


if __name__ == "__main__":
    import sys
    code = pytest.main([__file__, "-q", "-p", "no:cacheprovider"])
    sys.exit(code)
