import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from thermognn.data import Graph, collate, synth_dataset  # noqa: E402
from thermognn.linalg import RngStream  # noqa: E402


def random_graph(stream: RngStream, n: int, label: int = 0, p: float = 0.5, feat: int = 3) -> Graph:
    x = stream.normal(n, feat)
    g = stream.generator
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if g.random() < p]
    return Graph(x, edges, label)


@pytest.fixture
def small_batch():
    s = RngStream(11)
    return collate([random_graph(s, 6, 1), random_graph(s, 5, 3)])


@pytest.fixture(scope="session")
def tiny_dataset():
    return synth_dataset(seed=2, n_graphs=40, nodes_per_graph=12)


def perturb_biases(params, seed=5, scale=0.1):
    s = RngStream(seed)
    for tensors in params.values():
        tensors["b"] = tensors["b"] + scale * s.normal(*tensors["b"].shape)
        if "a_src" in tensors:
            tensors["a_src"] = tensors["a_src"] + scale * s.normal(*tensors["a_src"].shape)
    return params


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
