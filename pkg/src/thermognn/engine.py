"""Forward and backward passes for the GCN and GAT graph classifiers.

Parameters live in a :data:`ParamSet`, an ordered ``{layer: {tensor: array}}``
mapping. Weight matrices are stored ``(in_dim, out_dim)`` and applied as
``X @ W``; biases are ``(1, out_dim)`` rows. Gradients are hand-derived
adjoints of the recorded forward pass.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .data import GraphBatch
from .errors import ConfigurationError, NumericError
from .linalg import RngStream, check_finite, elementwise, glorot_init, matmul

ParamSet = dict[str, dict[str, np.ndarray]]

LEAKY_SLOPE = 0.2
LAYER_KINDS = ("GCNConv", "GATConv", "Linear")
ACTIVATIONS = ("tanh", "relu", "none")
READOUTS = ("concat_mean_max", "mean", "max")


@dataclass
class LayerSpec:
    kind: str
    in_dim: int
    out_dim: int
    heads: int = 1
    activation: str = "none"
    concat: bool = True

    @property
    def width(self) -> int:
        """Width of this layer's output rows."""
        if self.kind == "GATConv" and self.concat:
            return self.out_dim * self.heads
        return self.out_dim


@dataclass
class ModelSpec:
    layers: list[LayerSpec]
    readout: str
    head_mlp: list[LayerSpec]
    num_classes: int
    name: str = "custom"

    def __post_init__(self):
        self.layers = [l if isinstance(l, LayerSpec) else LayerSpec(**l) for l in self.layers]
        self.head_mlp = [l if isinstance(l, LayerSpec) else LayerSpec(**l) for l in self.head_mlp]
        self.validate()

    def validate(self):
        if self.readout not in READOUTS:
            raise ConfigurationError(f"unknown readout {self.readout!r}")
        if not self.head_mlp:
            raise ConfigurationError("head_mlp needs at least one Linear layer")
        for spec in self.layers + self.head_mlp:
            if spec.kind not in LAYER_KINDS:
                raise ConfigurationError(f"unknown layer kind {spec.kind!r}")
            if spec.activation not in ACTIVATIONS:
                raise ConfigurationError(f"unknown activation {spec.activation!r}")
            if spec.heads < 1 or spec.in_dim < 1 or spec.out_dim < 1:
                raise ConfigurationError("dimensions and heads must be >= 1")
        if any(s.kind != "Linear" for s in self.head_mlp):
            raise ConfigurationError("head_mlp may only contain Linear layers")
        width = self.layers[0].in_dim if self.layers else None
        for spec in self.layers:
            if spec.in_dim != width:
                raise ConfigurationError(f"layer expects in_dim {spec.in_dim}, previous width is {width}")
            width = spec.width
        if width is not None and self.readout == "concat_mean_max":
            width *= 2
        for spec in self.head_mlp:
            if width is not None and spec.in_dim != width:
                raise ConfigurationError(f"layer expects in_dim {spec.in_dim}, previous width is {width}")
            width = spec.out_dim
        if width != self.num_classes:
            raise ConfigurationError(f"final width {width} != num_classes {self.num_classes}")

    def layer_names(self) -> list[str]:
        return _names(self)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        return cls(**json.loads(text))


def _names(spec: ModelSpec) -> list[str]:
    names, counts = [], {"conv": 0, "lin": 0}
    for s in spec.layers + spec.head_mlp:
        key = "lin" if s.kind == "Linear" else "conv"
        counts[key] += 1
        names.append(f"{key}{counts[key]}")
    return names


def gcn_preset(in_dim: int = 3, hidden: int = 64, num_classes: int = 10) -> ModelSpec:
    convs = [LayerSpec("GCNConv", in_dim, hidden, activation="tanh")]
    convs += [LayerSpec("GCNConv", hidden, hidden, activation="tanh") for _ in range(3)]
    return ModelSpec(convs, "concat_mean_max", [LayerSpec("Linear", 2 * hidden, num_classes)],
                     num_classes, name="gcn")


def gat_preset(in_dim: int = 3, hidden: int = 32, heads: int = 2, num_classes: int = 10) -> ModelSpec:
    w = hidden * heads
    convs = [LayerSpec("GATConv", in_dim, hidden, heads, "relu")]
    convs += [LayerSpec("GATConv", w, hidden, heads, "relu") for _ in range(2)]
    head = [LayerSpec("Linear", w, 32, activation="relu"),
            LayerSpec("Linear", 32, 16, activation="relu"),
            LayerSpec("Linear", 16, num_classes)]
    return ModelSpec(convs, "mean", head, num_classes, name="gat")


PRESETS = {"gcn": gcn_preset, "gat": gat_preset}


def init_params(spec: ModelSpec, stream: RngStream) -> ParamSet:
    params: ParamSet = {}
    for i, (name, s) in enumerate(zip(spec.layer_names(), spec.layers + spec.head_mlp)):
        ls = stream.child(i)
        if s.kind == "GATConv":
            params[name] = {
                "W": glorot_init(s.in_dim, s.heads * s.out_dim, ls),
                "a_src": glorot_init(s.heads, s.out_dim, ls),
                "a_dst": glorot_init(s.heads, s.out_dim, ls),
                "b": np.zeros((1, s.width)),
            }
        else:
            params[name] = {"W": glorot_init(s.in_dim, s.out_dim, ls), "b": np.zeros((1, s.out_dim))}
    return params


def copy_params(params: ParamSet) -> ParamSet:
    return {k: {n: t.copy() for n, t in v.items()} for k, v in params.items()}


def zeros_like(params: ParamSet) -> ParamSet:
    return {k: {n: np.zeros_like(t) for n, t in v.items()} for k, v in params.items()}


def count_params(params: ParamSet) -> int:
    return sum(t.size for v in params.values() for t in v.values())


# --- activations -------------------------------------------------------------

def _activate(x, kind, context):
    if kind == "tanh":
        return elementwise(x, np.tanh, context)
    if kind == "relu":
        return elementwise(x, lambda v: np.maximum(v, 0.0), context)
    return check_finite(x, context)


def _activation_grad(pre, post, kind, upstream):
    if kind == "tanh":
        return upstream * (1.0 - post ** 2)
    if kind == "relu":
        return upstream * (pre > 0)
    return upstream


# --- layers ----------------------------------------------------------------

def _gcn(batch: GraphBatch, x, W, b):
    if x.shape[1] != W.shape[0]:
        raise ConfigurationError(f"GCN input width {x.shape[1]} != weight rows {W.shape[0]}")
    src, dst, coef = batch.gcn_edges()
    z = matmul(x, W)
    out = kernels.spmm(z[:, None, :], src, dst, coef[:, None], x.shape[0])[:, 0, :] + b
    return out, {"x": x}


def gcn_forward(batch: GraphBatch, W, b, x=None) -> np.ndarray:
    """Symmetric-normalized graph convolution ``S @ X @ W + b``."""
    x = batch.node_features if x is None else x
    return _gcn(batch, x, W, b)[0]


def _gcn_backward(batch, cache, W, dout, need_dx):
    src, dst, coef = batch.gcn_edges()
    dz = kernels.spmm(dout[:, None, :], dst, src, coef[:, None], dout.shape[0])[:, 0, :]
    grads = {"W": cache["x"].T @ dz, "b": dout.sum(0, keepdims=True)}
    return grads, (dz @ W.T if need_dx else None)


def _leaky(x):
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def _gat(batch: GraphBatch, x, W, a_src, a_dst, b, heads, concat=True):
    if x.shape[1] != W.shape[0]:
        raise ConfigurationError(f"GAT input width {x.shape[1]} != weight rows {W.shape[0]}")
    if W.shape[1] % heads or a_src.shape != (heads, W.shape[1] // heads) or a_dst.shape != a_src.shape:
        raise ConfigurationError("GAT parameter shapes do not match the head count")
    n = x.shape[0]
    feat = W.shape[1] // heads
    src, dst = batch.gat_edges()
    z = matmul(x, W).reshape(n, heads, feat)
    s_src = np.einsum("nhf,hf->nh", z, a_src)
    s_dst = np.einsum("nhf,hf->nh", z, a_dst)
    raw = s_src[src] + s_dst[dst]
    alpha = kernels.segment_softmax(_leaky(raw), dst, n)
    check_finite(alpha, "GAT attention")
    agg = kernels.spmm(z, src, dst, alpha, n)
    out = agg.reshape(n, heads * feat) if concat else agg.mean(1)
    out = out + b
    return out, {"x": x, "z": z, "raw": raw, "alpha": alpha, "heads": heads, "concat": concat}


def gat_forward(batch: GraphBatch, W, a_src, a_dst, b, heads: int, concat: bool = True,
                x=None, return_attention: bool = False):
    """Multi-head attention convolution.

    For an edge ``j -> i`` the score is
    ``LeakyReLU(a_src . (W x_j) + a_dst . (W x_i))``, normalized by softmax over
    the in-edges of ``i`` (self-loop included). Heads are concatenated, or
    averaged when ``concat`` is false.
    """
    x = batch.node_features if x is None else x
    out, cache = _gat(batch, x, W, a_src, a_dst, b, heads, concat)
    return (out, cache["alpha"]) if return_attention else out


def _gat_backward(batch, cache, params, dout, need_dx):
    W, a_src, a_dst = params["W"], params["a_src"], params["a_dst"]
    z, raw, alpha, heads = cache["z"], cache["raw"], cache["alpha"], cache["heads"]
    n, _, feat = z.shape
    src, dst = batch.gat_edges()
    db = dout.sum(0, keepdims=True)
    if cache["concat"]:
        dagg = dout.reshape(n, heads, feat)
    else:
        dagg = np.repeat(dout[:, None, :] / heads, heads, axis=1)
    dz = kernels.spmm(dagg, dst, src, alpha, n)
    dalpha = kernels.edge_dot(dagg, z, dst, src)
    # softmax adjoint within each destination segment
    weighted = kernels.segment_sum(alpha * dalpha, dst, n)
    de = alpha * (dalpha - weighted[dst])
    draw = de * np.where(raw > 0, 1.0, LEAKY_SLOPE)
    ds_src = kernels.segment_sum(draw, src, n)
    ds_dst = kernels.segment_sum(draw, dst, n)
    dz += ds_src[:, :, None] * a_src[None] + ds_dst[:, :, None] * a_dst[None]
    grads = {
        "W": cache["x"].T @ dz.reshape(n, heads * feat),
        "a_src": np.einsum("nh,nhf->hf", ds_src, z),
        "a_dst": np.einsum("nh,nhf->hf", ds_dst, z),
        "b": db,
    }
    return grads, (dz.reshape(n, heads * feat) @ W.T if need_dx else None)


def linear_forward(x, W, b) -> np.ndarray:
    if x.shape[1] != W.shape[0]:
        raise ConfigurationError(f"Linear input width {x.shape[1]} != weight rows {W.shape[0]}")
    return matmul(x, W) + b


def global_pool(h: np.ndarray, node_to_graph: np.ndarray, mode: str, num_graphs: int | None = None):
    """Per-graph mean or max of node rows.

    For ``mode="max"`` returns ``(pooled, argmax)`` where ``argmax`` holds the
    winning node row per (graph, column), lowest index on ties.
    """
    n_graphs = int(node_to_graph.max()) + 1 if num_graphs is None else num_graphs
    counts = np.bincount(node_to_graph, minlength=n_graphs)
    if np.any(counts == 0):
        raise ConfigurationError("graph with zero nodes in batch")
    if mode == "mean":
        return kernels.segment_sum(h, node_to_graph, n_graphs) / counts[:, None]
    if mode == "max":
        return kernels.segment_max(h, node_to_graph, n_graphs)
    raise ConfigurationError(f"unknown pooling mode {mode!r}")


def cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    check_finite(logits, "logits")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.max(initial=0) >= logits.shape[1] or labels.min(initial=0) < 0:
        raise ConfigurationError("label outside the class range")
    shifted = logits - logits.max(1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(1, keepdims=True))
    logp = shifted - lse
    m = logits.shape[0]
    loss = -logp[np.arange(m), labels].mean()
    d = np.exp(logp)
    d[np.arange(m), labels] -= 1.0
    return float(loss), d / m


def accuracy(logits: np.ndarray, labels) -> float:
    labels = np.asarray(labels)
    if len(labels) == 0:
        return 0.0
    return float(np.mean(np.argmax(logits, axis=1) == labels))


# --- whole model -------------------------------------------------------------

@dataclass
class ForwardCache:
    batch: GraphBatch
    layers: list[dict] = field(default_factory=list)
    pooled_from: np.ndarray | None = None
    argmax: np.ndarray | None = None


def _check_params(spec: ModelSpec, params: ParamSet):
    names = spec.layer_names()
    if list(params) != names:
        raise ConfigurationError(f"params layers {list(params)} do not match spec {names}")


def model_forward(spec: ModelSpec, params: ParamSet, batch: GraphBatch):
    _check_params(spec, params)
    cache = ForwardCache(batch)
    names = spec.layer_names()
    h = batch.node_features
    for name, s in zip(names, spec.layers):
        p = params[name]
        if s.kind == "GCNConv":
            pre, lc = _gcn(batch, h, p["W"], p["b"])
        elif s.kind == "GATConv":
            pre, lc = _gat(batch, h, p["W"], p["a_src"], p["a_dst"], p["b"], s.heads, s.concat)
        else:
            pre, lc = linear_forward(h, p["W"], p["b"]), {"x": h}
        h = _activate(pre, s.activation, name)
        lc.update(pre=pre, post=h)
        cache.layers.append(lc)
    cache.pooled_from = h
    if spec.readout == "concat_mean_max":
        mean = global_pool(h, batch.node_to_graph, "mean", batch.size)
        mx, cache.argmax = global_pool(h, batch.node_to_graph, "max", batch.size)
        h = np.concatenate([mean, mx], axis=1)
    elif spec.readout == "max":
        h, cache.argmax = global_pool(h, batch.node_to_graph, "max", batch.size)
    else:
        h = global_pool(h, batch.node_to_graph, "mean", batch.size)
    for name, s in zip(names[len(spec.layers):], spec.head_mlp):
        p = params[name]
        pre = linear_forward(h, p["W"], p["b"])
        post = _activate(pre, s.activation, name)
        cache.layers.append({"x": h, "pre": pre, "post": post})
        h = post
    return h, cache


def _max_backward(dpool, argmax, shape):
    dh = np.zeros(shape)
    cols = np.broadcast_to(np.arange(shape[1]), argmax.shape)
    np.add.at(dh, (argmax, cols), dpool)
    return dh


def model_backward(spec: ModelSpec, params: ParamSet, cache: ForwardCache, dlogits: np.ndarray) -> ParamSet:
    _check_params(spec, params)
    names = spec.layer_names()
    specs = spec.layers + spec.head_mlp
    if len(cache.layers) != len(specs):
        raise ConfigurationError("forward cache does not match the model spec")
    batch = cache.batch
    grads: ParamSet = {}
    d = dlogits
    n_conv = len(spec.layers)
    for idx in range(len(specs) - 1, n_conv - 1, -1):
        s, lc, p = specs[idx], cache.layers[idx], params[names[idx]]
        dpre = _activation_grad(lc["pre"], lc["post"], s.activation, d)
        grads[names[idx]] = {"W": lc["x"].T @ dpre, "b": dpre.sum(0, keepdims=True)}
        d = dpre @ p["W"].T
    h = cache.pooled_from
    counts = np.bincount(batch.node_to_graph, minlength=batch.size)[:, None]
    if spec.readout == "concat_mean_max":
        width = h.shape[1]
        dh = (d[:, :width] / counts)[batch.node_to_graph]
        dh += _max_backward(d[:, width:], cache.argmax, h.shape)
    elif spec.readout == "max":
        dh = _max_backward(d, cache.argmax, h.shape)
    else:
        dh = (d / counts)[batch.node_to_graph]
    for idx in range(n_conv - 1, -1, -1):
        s, lc, p = specs[idx], cache.layers[idx], params[names[idx]]
        dpre = _activation_grad(lc["pre"], lc["post"], s.activation, dh)
        need_dx = idx > 0
        if s.kind == "GCNConv":
            g, dh = _gcn_backward(batch, lc, p["W"], dpre, need_dx)
        elif s.kind == "GATConv":
            g, dh = _gat_backward(batch, lc, p, dpre, need_dx)
        else:
            g = {"W": lc["x"].T @ dpre, "b": dpre.sum(0, keepdims=True)}
            dh = dpre @ p["W"].T if need_dx else None
        grads[names[idx]] = g
    ordered = {name: grads[name] for name in names}
    for name, g in ordered.items():
        for t, arr in g.items():
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"non-finite gradient in {name}.{t}")
    return ordered


def loss_and_grads(spec: ModelSpec, params: ParamSet, batch: GraphBatch):
    logits, cache = model_forward(spec, params, batch)
    loss, dlogits = cross_entropy(logits, batch.labels)
    return loss, model_backward(spec, params, cache, dlogits), logits


def predict(spec: ModelSpec, params: ParamSet, batches) -> tuple[np.ndarray, np.ndarray]:
    logits, labels = [], []
    for b in batches:
        logits.append(model_forward(spec, params, b)[0])
        labels.append(b.labels)
    return np.concatenate(logits), np.concatenate(labels)
