"""Graph containers, JSONL ingestion, the synthetic superpixel generator and
minibatching.

Node features default to ``[intensity, x, y]``. Edges are undirected pairs
stored once as ``(min, max)``; batches carry them mirrored in both
directions (self-loops once).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, ValidationError
from .linalg import RngStream


@dataclass
class Graph:
    node_features: np.ndarray
    edges: np.ndarray
    label: int
    positions: np.ndarray | None = None

    def __post_init__(self):
        self.node_features = np.asarray(self.node_features, dtype=np.float64)
        if self.node_features.ndim != 2 or self.node_features.shape[0] == 0:
            raise ValidationError("node_features must be a non-empty 2-D array")
        if not np.all(np.isfinite(self.node_features)):
            raise ValidationError("node_features contain non-finite values")
        self.edges = canonical_edges(self.edges, self.num_nodes)
        if self.positions is not None:
            self.positions = np.asarray(self.positions, dtype=np.float64)
            if self.positions.shape != (self.num_nodes, 2):
                raise ValidationError("positions must be (num_nodes, 2)")
        if int(self.label) < 0:
            raise ValidationError("label must be non-negative")
        self.label = int(self.label)

    @property
    def num_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.node_features.shape[1]

    @cached_property
    def directed_edges(self) -> np.ndarray:
        """Both directions of every edge; a self-loop appears once."""
        e = self.edges
        rev = e[e[:, 0] != e[:, 1]][:, ::-1]
        return np.concatenate([e, rev]).astype(np.int64)


def canonical_edges(edges, num_nodes: int) -> np.ndarray:
    """Validate undirected pairs and return them deduplicated as (min, max)."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2) if len(edges) else np.zeros((0, 2), np.int64)
    if e.size and (e.min() < 0 or e.max() >= num_nodes):
        bad = e[(e < 0).any(1) | (e >= num_nodes).any(1)][0]
        raise ValidationError(f"edge {bad.tolist()} out of range for {num_nodes} nodes")
    e = np.sort(e, axis=1)
    return np.unique(e, axis=0) if len(e) else e


@dataclass
class DatasetSplit:
    train: list[Graph]
    test: list[Graph]
    num_classes: int
    feature_dim: int

    def __post_init__(self):
        for g in self.train + self.test:
            if g.feature_dim != self.feature_dim:
                raise ValidationError("graphs disagree on feature_dim")
            if g.label >= self.num_classes:
                raise ValidationError(f"label {g.label} >= num_classes {self.num_classes}")
        if {id(g) for g in self.train} & {id(g) for g in self.test}:
            raise ValidationError("train and test share graphs")


@dataclass
class GraphBatch:
    node_features: np.ndarray
    edges: np.ndarray  # (E, 2) directed src -> dst
    node_to_graph: np.ndarray
    labels: np.ndarray
    size: int
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def num_nodes(self) -> int:
        return self.node_features.shape[0]

    def gcn_edges(self):
        """(src, dst, coef) with self-loops and symmetric normalization."""
        if "gcn" not in self._cache:
            e = add_self_loops(self.edges, self.num_nodes)
            self._cache["gcn"] = (e[:, 0], e[:, 1], sym_norm_coeffs(e, self.num_nodes))
        return self._cache["gcn"]

    def gat_edges(self):
        """(src, dst) with self-loops; attention normalizes over dst."""
        if "gat" not in self._cache:
            e = add_self_loops(self.edges, self.num_nodes)
            self._cache["gat"] = (e[:, 0], e[:, 1])
        return self._cache["gat"]


def add_self_loops(edges: np.ndarray, num_nodes: int) -> np.ndarray:
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    has_loop = np.zeros(num_nodes, dtype=bool)
    loops = edges[edges[:, 0] == edges[:, 1], 0]
    has_loop[loops] = True
    missing = np.flatnonzero(~has_loop)
    return np.concatenate([edges, np.stack([missing, missing], axis=1)])


def sym_norm_coeffs(edges: np.ndarray, num_nodes: int) -> np.ndarray:
    """Per-edge 1/sqrt(deg(src) * deg(dst)), degrees counting the self-loop."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    deg = np.bincount(edges[:, 1], minlength=num_nodes).astype(np.float64)
    if np.any(deg == 0):
        raise ConfigurationError("every node needs a self-loop before normalization")
    return 1.0 / np.sqrt(deg[edges[:, 0]] * deg[edges[:, 1]])


def collate(graphs: Sequence[Graph]) -> GraphBatch:
    if not graphs:
        raise ValidationError("cannot batch an empty graph list")
    offsets = np.cumsum([0] + [g.num_nodes for g in graphs[:-1]])
    x = np.concatenate([g.node_features for g in graphs])
    edges = np.concatenate([g.directed_edges + off for g, off in zip(graphs, offsets)])
    n2g = np.concatenate([np.full(g.num_nodes, i, dtype=np.int64) for i, g in enumerate(graphs)])
    labels = np.array([g.label for g in graphs], dtype=np.int64)
    return GraphBatch(x, edges, n2g, labels, len(graphs))


def make_batches(graphs: Sequence[Graph], batch_size: int, stream: RngStream | None = None,
                 shuffle: bool = True) -> list[GraphBatch]:
    if batch_size < 1:
        raise ConfigurationError("batch_size must be >= 1")
    if not graphs:
        raise ValidationError("cannot batch an empty graph list")
    order = np.arange(len(graphs))
    if shuffle:
        if stream is None:
            raise ConfigurationError("shuffle requires an RngStream")
        order = stream.permutation(len(graphs))
    return [collate([graphs[i] for i in order[s:s + batch_size]])
            for s in range(0, len(graphs), batch_size)]


# --- JSONL ------------------------------------------------------------------

def load_jsonl(path) -> DatasetSplit:
    train, test = [], []
    feature_dim = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                split = obj["split"]
                g = Graph(obj["features"], obj.get("edges", []), obj["label"], obj.get("pos"))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from exc
            if split not in ("train", "test"):
                raise ValidationError(f"{path}:{lineno}: split must be 'train' or 'test'")
            if feature_dim is None:
                feature_dim = g.feature_dim
            elif g.feature_dim != feature_dim:
                raise ValidationError(f"{path}:{lineno}: feature width {g.feature_dim} != {feature_dim}")
            (train if split == "train" else test).append(g)
    if feature_dim is None:
        raise ValidationError(f"{path}: no graphs")
    num_classes = 1 + max(g.label for g in train + test)
    return DatasetSplit(train, test, num_classes, feature_dim)


def graph_to_json(g: Graph, split: str) -> str:
    obj = {"label": g.label, "split": split, "features": g.node_features.tolist()}
    if g.positions is not None:
        obj["pos"] = g.positions.tolist()
    obj["edges"] = g.edges.tolist()
    return json.dumps(obj)


def save_jsonl(ds: DatasetSplit, path) -> None:
    with open(path, "w") as fh:
        for split, graphs in (("train", ds.train), ("test", ds.test)):
            for g in graphs:
                fh.write(graph_to_json(g, split) + "\n")


# --- synthetic superpixel-like data -----------------------------------------

def class_centers(num_classes: int) -> np.ndarray:
    """Motif locations: evenly spaced on a circle around the image centre."""
    ang = 2 * np.pi * np.arange(num_classes) / num_classes
    return 0.5 + 0.3 * np.stack([np.cos(ang), np.sin(ang)], axis=1)


def knn_edges(pos: np.ndarray, k: int) -> np.ndarray:
    d2 = ((pos[:, None, :] - pos[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d2, np.inf)
    nbrs = np.argsort(d2, axis=1, kind="stable")[:, :k]
    src = np.repeat(np.arange(len(pos)), nbrs.shape[1])
    return np.stack([src, nbrs.ravel()], axis=1)


def synth_graph(stream: RngStream, label: int, nodes: int, centers: np.ndarray,
                k: int = 6, width: float = 0.12, noise: float = 0.05) -> Graph:
    pos = stream.uniform(0.0, 1.0, (nodes, 2))
    d2 = ((pos - centers[label]) ** 2).sum(1)
    intensity = np.exp(-d2 / (2 * width ** 2)) + noise * stream.generator.standard_normal(nodes)
    feats = np.column_stack([intensity, pos])
    return Graph(feats, knn_edges(pos, min(k, nodes - 1)), label, pos)


def synth_dataset(seed: int, n_graphs: int, nodes_per_graph: int = 75, num_classes: int = 10,
                  k: int = 6, test_fraction: float = 0.2) -> DatasetSplit:
    """Seeded stratified dataset of random geometric graphs.

    Each class brightens the nodes around its own location, so a graph model
    that sees intensity together with position can separate the classes.
    """
    if n_graphs < num_classes:
        raise ConfigurationError("n_graphs must be >= num_classes")
    stream = RngStream(seed)
    centers = class_centers(num_classes)
    labels = np.arange(n_graphs) % num_classes
    graphs = [synth_graph(stream, int(c), nodes_per_graph, centers, k) for c in labels]
    train, test = [], []
    for c in range(num_classes):
        members = [g for g, lab in zip(graphs, labels) if lab == c]
        n_test = int(round(test_fraction * len(members)))
        train.extend(members[:len(members) - n_test])
        test.extend(members[len(members) - n_test:])
    return DatasetSplit(train, test, num_classes, 3)


def load_dataset(source: str, seed: int = 0, n_graphs: int = 500, nodes_per_graph: int = 75) -> DatasetSplit:
    """``"synth"`` builds the synthetic set; anything else is a JSONL path."""
    if source == "synth":
        return synth_dataset(seed, n_graphs, nodes_per_graph)
    if not Path(source).exists():
        raise ConfigurationError(f"dataset file not found: {source}")
    return load_jsonl(source)
