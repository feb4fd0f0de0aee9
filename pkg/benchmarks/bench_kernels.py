"""Time the compiled and numpy kernel backends on model-sized inputs.

    python3 benchmarks/bench_kernels.py [--repeat N]

Also times one training step of the full SE-Res2Net50 on an LFCC batch.
"""

import argparse
import time

import numpy as np

from res2spoof import kernels
from res2spoof import tensor as T
from res2spoof.models import build_model, get_config

CASES = [
    ("im2col 3x3 s1", (8, 16, 60, 100), 3, 1, 1),
    ("im2col 3x3 s2", (8, 32, 60, 100), 3, 2, 1),
    ("im2col 7x7 s2", (8, 1, 60, 400), 7, 2, 3),
]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_backend(impl, repeat, rng):
    rows = []
    for name, shape, k, s, p in CASES:
        x = rng.standard_normal(shape).astype(np.float32)
        cols = impl.im2col(x, k, k, s, p)
        rows.append((name, best_of(lambda: impl.im2col(x, k, k, s, p), repeat)))
        rows.append((name.replace("im2col", "col2im"),
                     best_of(lambda: impl.col2im(cols, shape, k, k, s, p), repeat)))
    x = rng.standard_normal((8, 16, 120, 200)).astype(np.float32)
    out, idx = impl.maxpool_forward(x, 3, 2, 1)
    rows.append(("maxpool 3x3 s2 fwd", best_of(lambda: impl.maxpool_forward(x, 3, 2, 1), repeat)))
    rows.append(("maxpool 3x3 s2 bwd", best_of(lambda: impl.maxpool_backward(out, idx, x.shape), repeat)))
    return rows


def bench_step(repeat, rng):
    model = build_model(get_config("se_res2net50"), seed=0)
    x = rng.standard_normal((8, 1, 60, 400)).astype(np.float32)
    y = np.arange(8) % 2

    def step():
        model.train()
        loss, lp = T.softmax_xent(model(x), y)
        model.zero_grad()
        model.backward(T.softmax_xent_backward(lp, y).astype(np.float32))

    return best_of(step, repeat)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    rng = np.random.default_rng(0)
    results = {name: bench_backend(impl, args.repeat, rng) for name, impl in kernels.backends().items()}
    names = list(results)
    print(f"{'kernel':<22}" + "".join(f"{n:>12}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for i, (label, _) in enumerate(results["python"]):
        times = [results[n][i][1] for n in names]
        line = f"{label:<22}" + "".join(f"{1e3 * t:>10.2f}ms" for t in times)
        if len(names) > 1:
            line += f"{times[0] / times[1]:>11.2f}x"
        print(line)
    print(f"active backend: {kernels.BACKEND}")
    print(f"se_res2net50 train step, batch 8 x 60 x 400: {bench_step(max(1, args.repeat // 2), rng):.2f}s")


if __name__ == "__main__":
    main()
