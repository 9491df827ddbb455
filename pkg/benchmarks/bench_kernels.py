"""Time the compiled and NumPy recurrent kernels on realistic shapes.

Usage::

    python3 benchmarks/bench_kernels.py [--hidden 32] [--length 48] [--patients 200] [--repeat 5]

Prints the best-of-``repeat`` wall time per operation for each backend and
the speedup of the compiled kernels. Both backends are also checked to agree.
"""
import argparse
import timeit

import numpy as np

from alrt import model as rnn
from alrt.kernels import get_backend
from alrt.preprocess import ClassWeights, FeatureSequence


def available_backends():
    out = {"python": get_backend("python")}
    try:
        out["cython"] = get_backend("cython")
    except ImportError:
        pass
    return out


def make_data(n, T, D, seed):
    rng = np.random.default_rng(seed)
    seqs = []
    for i in range(n):
        labels = np.zeros(T, dtype=np.int8)
        if i % 10 == 0:
            labels[T // 2:] = 1
        seqs.append(FeatureSequence(f"b{i:04d}", rng.normal(size=(T, D)), labels))
    return seqs


def best(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--hidden", type=int, default=32)
    ap.add_argument("--length", type=int, default=48)
    ap.add_argument("--patients", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    params = rnn.init_params(args.hidden, rng_seed=0)
    data = make_data(args.patients, args.length, params.input_dim, seed=1)
    X, y = data[0].matrix, data[0].labels
    weights = ClassWeights(0.55, 5.0)
    config = rnn.TrainConfig(class_weights=weights)
    backends = available_backends()

    results = {}
    for name, k in backends.items():
        cache = rnn.forward(params, X, backend=k)

        def epoch(k=k):
            rnn.train_epoch(params.copy(), data, config, epoch=0, backend=k)

        results[name] = {
            "forward": best(lambda: rnn.forward(params, X, backend=k), args.repeat, 200),
            "backward": best(lambda: rnn.backward(params, X, y, weights, cache=cache, backend=k), args.repeat, 200),
            "train_epoch": best(epoch, args.repeat, 1),
        }

    if len(backends) == 2:
        a = rnn.backward(params, X, y, weights, backend=backends["python"])
        b = rnn.backward(params, X, y, weights, backend=backends["cython"])
        print(f"max |grad difference| between backends: {np.max(np.abs(a.flat() - b.flat())):.2e}")

    print(f"H={args.hidden} T={args.length} patients={args.patients} (best of {args.repeat})")
    print(f"{'operation':<12}" + "".join(f"{n:>14}" for n in results) + ("     speedup" if len(results) == 2 else ""))
    for op in ("forward", "backward", "train_epoch"):
        line = f"{op:<12}" + "".join(f"{results[n][op] * 1e3:>12.3f}ms" for n in results)
        if len(results) == 2:
            line += f"{results['python'][op] / results['cython'][op]:>11.1f}x"
        print(line)
    if "cython" not in backends:
        print("compiled extension not built; only the NumPy fallback was timed")


if __name__ == "__main__":
    main()
