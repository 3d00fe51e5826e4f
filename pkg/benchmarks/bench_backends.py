"""Benchmark the numba kernel backend against the pure-numpy fallback.

Times each per-batch kernel on identical inputs via
``confcal.kernels.implementation`` and prints per-call microseconds plus
the speedup. ``--train`` additionally times one end-to-end training run
per backend in subprocesses (backend binding happens at import time, so
the end-to-end comparison needs fresh interpreters).

Usage:
    python benchmarks/bench_backends.py
    python benchmarks/bench_backends.py --rows 8192 --repeats 100 --train
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from confcal import kernels


def build_inputs(rng, rows, classes, hidden):
    raw = rng.random((rows, classes)) + 1e-3
    probs = raw / raw.sum(axis=1, keepdims=True)
    craw = rng.random((rows, classes)) + 1e-3
    conf = craw / craw.sum(axis=1, keepdims=True)
    h_prev = rng.standard_normal((rows, hidden))
    w = rng.standard_normal((hidden, classes))
    b = rng.standard_normal(classes)
    z = rng.standard_normal((rows, hidden))
    dz = rng.standard_normal((rows, classes))
    weights = np.full(rows, 1.0 / rows)
    return {
        "affine": (h_prev, w, b),
        "relu": (z,),
        "relu_backward": (z.copy(), z),
        "softmax_rows": (h_prev @ w + b,),
        "soft_ce_rows": (conf, probs),
        "softmax_ce_delta": (probs, conf, weights),
        "affine_backward": (h_prev, dz, w),
        "smooth_rows_uniform": (probs, 0.1),
        "smooth_rows_confidence": (probs, conf, 0.1, 0.2),
        "row_max": (probs,),
        "row_argmax": (probs,),
        "bin_index_rows": (probs.max(axis=1), 15),
        "population_std_rows": (conf,),
    }


def time_kernel(fn, args, repeats):
    fn(*args)  # warmup; first numba call triggers compilation
    best = float("inf")
    for _ in range(3):
        start = time.perf_counter()
        for _ in range(repeats):
            fn(*args)
        best = min(best, (time.perf_counter() - start) / repeats)
    return best * 1e6


def bench_train(backend):
    code = (
        "import time, confcal as cc\n"
        "ds = cc.generate_synthetic(3, 200, 10, 10, 0.25, seed=5)\n"
        "hc = cc.human_confidence_table(ds)\n"
        "cfg = cc.TrainConfig(epochs=5, hidden=(32,), seed=5, loss_kind='hcls',\n"
        "                     strategy='hccl', smoothing=cc.SmoothingConfig(0.1, 0.1),\n"
        "                     curriculum=cc.CurriculumParams(0.6, 4))\n"
        "cc.train(ds, cfg, human_confidence=hc)  # warmup\n"
        "start = time.perf_counter()\n"
        "cc.train(ds, cfg, human_confidence=hc)\n"
        "print(f'{time.perf_counter() - start:.3f}')\n"
    )
    env = dict(os.environ, CONFCAL_BACKEND=backend)
    out = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True
    )
    return float(out.stdout.strip())


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rows", type=int, default=4096)
    parser.add_argument("--classes", type=int, default=10)
    parser.add_argument("--hidden", type=int, default=64)
    parser.add_argument("--repeats", type=int, default=50)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--train", action="store_true",
                        help="also time an end-to-end training run per backend")
    args = parser.parse_args()

    numpy_impl = kernels.implementation("numpy")
    numba_impl = kernels.implementation("numba")
    inputs = build_inputs(np.random.default_rng(args.seed), args.rows, args.classes, args.hidden)

    print(f"rows={args.rows} classes={args.classes} hidden={args.hidden} "
          f"repeats={args.repeats} (best of 3 rounds, per-call us)")
    print(f"{'kernel':<24}{'numpy':>12}{'numba':>12}{'speedup':>10}")
    for name, call_args in inputs.items():
        t_np = time_kernel(getattr(numpy_impl, name), call_args, args.repeats)
        t_nb = time_kernel(getattr(numba_impl, name), call_args, args.repeats)
        print(f"{name:<24}{t_np:>12.1f}{t_nb:>12.1f}{t_np / t_nb:>9.2f}x")

    if args.train:
        print()
        t_np = bench_train("numpy")
        t_nb = bench_train("numba")
        print(f"{'train (5 epochs, hccl)':<24}{t_np * 1e3:>12.1f}{t_nb * 1e3:>12.1f}"
              f"{t_np / t_nb:>9.2f}x  (per-run ms, subprocess per backend)")


if __name__ == "__main__":
    main()
