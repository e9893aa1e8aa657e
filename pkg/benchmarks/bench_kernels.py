"""Compare the Cython kernels with the numpy fallback.

Times each kernel on a batch-sized problem (32 graphs x 75 nodes, 64-wide
features) and one full forward/backward pass of each preset.

    python benchmarks/bench_kernels.py [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from thermognn import engine, kernels
from thermognn.data import make_batches, synth_dataset
from thermognn.linalg import RngStream


def kernel_cases(batch):
    src, dst, coef = batch.gcn_edges()
    n = batch.num_nodes
    s = RngStream(0)
    z1 = s.normal(n, 64).reshape(n, 1, 64)
    z2 = s.normal(n, 64).reshape(n, 2, 32)
    w2 = s.normal(len(src), 2)
    h = s.normal(n, 64)
    return {
        "spmm (1 head)": lambda impl: kernels.spmm(z1, src, dst, coef[:, None], n, impl),
        "spmm (2 heads)": lambda impl: kernels.spmm(z2, src, dst, w2, n, impl),
        "edge_dot": lambda impl: kernels.edge_dot(z2, z2, dst, src, impl),
        "segment_softmax": lambda impl: kernels.segment_softmax(w2, dst, n, impl),
        "segment_sum": lambda impl: kernels.segment_sum(w2, dst, n, impl),
        "segment_max": lambda impl: kernels.segment_max(h, batch.node_to_graph, batch.size, impl),
    }


def model_case(preset, batch):
    spec = engine.PRESETS[preset]()
    params = engine.init_params(spec, RngStream(1))
    return lambda: engine.loss_and_grads(spec, params, batch)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    backends = kernels.available_backends()
    ds = synth_dataset(0, 60)
    batch = make_batches(ds.train, 32, shuffle=False)[0]
    print(f"batch: {batch.size} graphs, {batch.num_nodes} nodes, {len(batch.gcn_edges()[0])} edges")
    print(f"{'case':<22}" + "".join(f"{b:>14}" for b in backends) + f"{'speedup':>10}")

    def row(name, times):
        speed = times["numpy"] / times["cython"] if "cython" in times else float("nan")
        print(f"{name:<22}" + "".join(f"{times[b] * 1e3:>11.3f} ms" for b in backends) + f"{speed:>9.1f}x")

    for name, fn in kernel_cases(batch).items():
        row(name, {b: min(timeit.repeat(lambda: fn(impl), number=1, repeat=args.repeat))
                   for b, impl in backends.items()})
    saved = kernels._impl
    try:
        for preset in ("gcn", "gat"):
            fn = model_case(preset, batch)
            times = {}
            for b, impl in backends.items():
                kernels._impl = impl
                times[b] = min(timeit.repeat(fn, number=1, repeat=max(3, args.repeat // 4)))
            row(f"{preset} fwd+bwd", times)
    finally:
        kernels._impl = saved


if __name__ == "__main__":
    main()
