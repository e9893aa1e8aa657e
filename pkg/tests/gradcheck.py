"""Finite-difference gradient check over small mixed-layer models."""
import itertools

import numpy as np

from conftest import perturb_biases, random_graph
from oracles import central_difference, relative_error
from thermognn import engine as E
from thermognn.data import collate
from thermognn.linalg import RngStream

H = 1e-5
TOL = 1e-4


def mixed_spec(activation, readout):
    convs = [E.LayerSpec("GCNConv", 3, 4, activation=activation),
             E.LayerSpec("GATConv", 4, 3, heads=2, activation=activation),
             E.LayerSpec("Linear", 6, 5, activation=activation)]
    width = 10 if readout == "concat_mean_max" else 5
    head = [E.LayerSpec("Linear", width, 4, activation=activation), E.LayerSpec("Linear", 4, 3)]
    return E.ModelSpec(convs, readout, head, 3)


def grid():
    return list(itertools.product(("tanh", "relu"), ("concat_mean_max", "mean", "max")))


def check(activation, readout, seed=0):
    """Worst per-tensor relative error between analytic and numeric gradients."""
    s = RngStream(100 + seed)
    batch = collate([random_graph(s, 6, 0), random_graph(s, 5, 2)])
    spec = mixed_spec(activation, readout)
    params = perturb_biases(E.init_params(spec, RngStream(seed)))
    _, grads, _ = E.loss_and_grads(spec, params, batch)
    worst = {}
    for layer, tensors in params.items():
        for t, arr in tensors.items():
            num = central_difference(lambda: E.loss_and_grads(spec, params, batch)[0], arr, H)
            worst[f"{layer}.{t}"] = relative_error(grads[layer][t], num)
    return worst
