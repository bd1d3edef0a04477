"""Compare the numba and numpy circuit kernels on a training-sized batch.

    python3 benchmarks/bench_kernels.py [--qubits 7] [--layers 7] [--batch 99] [--repeat 5]

The batch default matches one training epoch for a 7x7 model (2K+1 nodes).
"""

import argparse
import time

import numpy as np

from qfprice.ansatz import AnsatzSpec, _obs_diag, parameter_count, plan
from qfprice.kernels import available_backends


def best_time(func, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        func()
        times.append(time.perf_counter() - start)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--qubits", type=int, default=7)
    parser.add_argument("--layers", type=int, default=7)
    parser.add_argument("--batch", type=int, default=None)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    spec = AnsatzSpec(args.qubits, args.layers)
    ops, obs = plan(spec), _obs_diag(spec.n_qubits)
    batch = args.batch or 2 * spec.n_qubits * spec.n_layers + 1
    rng = np.random.default_rng(0)
    theta = rng.uniform(0, 2 * np.pi, parameter_count(spec))
    xs = np.linspace(-np.pi, np.pi, batch, endpoint=False)

    backends = available_backends()
    print(f"spec {spec.n_qubits}x{spec.n_layers}, batch {batch}, best of {args.repeat}")
    results = {}
    for name, impl in backends.items():
        impl.forward_adjoint(ops, spec.n_qubits, theta, xs[:2], obs)  # compile / warm up
        fwd = best_time(lambda: impl.forward(ops, spec.n_qubits, theta, xs, obs), args.repeat)
        adj = best_time(lambda: impl.forward_adjoint(ops, spec.n_qubits, theta, xs, obs), args.repeat)
        results[name] = (fwd, adj, impl.forward_adjoint(ops, spec.n_qubits, theta, xs, obs))
        print(f"{name:>6}: forward {fwd * 1e3:9.2f} ms   forward+adjoint {adj * 1e3:9.2f} ms")
    if len(results) == 2:
        (f_nb, a_nb, out_nb), (f_np, a_np, out_np) = results["numba"], results["numpy"]
        dev = max(float(np.max(np.abs(x - y))) for x, y in zip(out_nb, out_np))
        print(f"speedup numba/numpy: forward {f_np / f_nb:.1f}x, adjoint {a_np / a_nb:.1f}x; max deviation {dev:.1e}")
    else:
        print("numba unavailable; only the numpy backend was timed")


if __name__ == "__main__":
    main()
