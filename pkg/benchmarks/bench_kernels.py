"""Time the numba kernels against the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py            # kernel table + training step
    python3 benchmarks/bench_kernels.py --quick    # fewer repeats

Kernels are compared in-process through ``kernels.numpy_impl`` and
``kernels.numba_impl``. The training step is timed in a child process per
backend, since ``TS2IMG_BACKEND`` is read once at import.
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def best_of(fn, repeat):
    fn()  # warm-up (numba compiles or loads its cache here)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_cases(rng):
    T, lw, edge = 962, 40, 64
    rows = rng.integers(0, edge, T)
    cols = rng.integers(0, edge, T)
    vals = rng.integers(0, 256, T).astype(np.uint8)
    x1 = rng.random((32, 1, 64, 64)).astype(np.float32)
    w1 = rng.normal(size=(8, 1, 3, 3)).astype(np.float32)
    x2 = rng.random((32, 8, 31, 31)).astype(np.float32)
    w2 = rng.normal(size=(16, 8, 3, 3)).astype(np.float32)
    b8, b16 = np.zeros(8, np.float32), np.zeros(16, np.float32)
    d1 = rng.normal(size=(32, 8, 62, 62)).astype(np.float32)
    d2 = rng.normal(size=(32, 16, 29, 29)).astype(np.float32)
    p = rng.random((32, 8, 62, 62)).astype(np.float32)
    return [
        ("render_windows 962x40 @64", lambda k: k.render_windows(rows, cols, vals, lw, edge)),
        ("conv fwd 32x1x64x64 -> 8", lambda k: k.conv2d_forward(x1, w1, b8, 1)),
        ("conv fwd 32x8x31x31 -> 16", lambda k: k.conv2d_forward(x2, w2, b16, 1)),
        ("conv bwd first layer (no dx)", lambda k: k.conv2d_backward(d1, x1, w1, 1, False)),
        ("conv bwd second layer", lambda k: k.conv2d_backward(d2, x2, w2, 1, True)),
        ("maxpool fwd 32x8x62x62", lambda k: k.maxpool_forward(p, 2)),
    ]


def train_step_time(repeat):
    from ts2img.classifier import NetworkSpec, _loss_grad_logits, init_network

    rng = np.random.default_rng(0)
    net = init_network(NetworkSpec(), rng_seed=0, dtype=np.float32)
    x = (rng.random((32, 1, 64, 64)) < 0.01).astype(np.float32)
    y = rng.integers(0, 3, 32)
    return best_of(lambda: _loss_grad_logits(net, x, y), repeat)


def child_step(backend, repeat):
    env = dict(os.environ, TS2IMG_BACKEND=backend)
    out = subprocess.run([sys.executable, __file__, "--step-only", "--repeat", str(repeat)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)["seconds"]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--quick", action="store_true")
    ap.add_argument("--step-only", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args(argv)
    repeat = 3 if args.quick else args.repeat

    if args.step_only:
        print(json.dumps({"seconds": train_step_time(repeat)}))
        return 0

    from ts2img import kernels

    if kernels.numba_impl is None:
        print("numba is not installed; nothing to compare")
        return 1
    print(f"{'kernel':<32}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for name, fn in kernel_cases(np.random.default_rng(0)):
        t_np = best_of(lambda: fn(kernels.numpy_impl), repeat)
        t_nb = best_of(lambda: fn(kernels.numba_impl), repeat)
        print(f"{name:<32}{t_np * 1e3:>10.2f}{t_nb * 1e3:>10.2f}{t_np / t_nb:>8.1f}x")
    t_np = child_step("numpy", max(3, repeat // 4))
    t_nb = child_step("numba", max(3, repeat // 4))
    print(f"{'train step (batch 32, float32)':<32}{t_np * 1e3:>10.2f}{t_nb * 1e3:>10.2f}{t_np / t_nb:>8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
