"""Compiled vs NumPy kernels on the default network (H 5, K 15, batch 8).

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from prefall.net import NetConfig, init_params
from prefall.net import _kernels_py as pure

try:
    from prefall.net import _kernels as compiled
except ImportError:
    compiled = None


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--batch", type=int, default=8)
    ap.add_argument("--hidden", type=int, default=5)
    ap.add_argument("--k", type=int, default=15)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    p = init_params(NetConfig(hidden_units=args.hidden, K=args.k), 0)
    X = rng.normal(0, 0.3, (args.batch, args.k, 6))
    y = (np.arange(args.batch) % 2).astype(np.int64)
    big = rng.normal(0, 0.3, (1024, args.k, 6))

    cases = {
        "forward (batch)": lambda m: m.forward(*p.blocks, X),
        "loss_and_grad (batch)": lambda m: m.loss_and_grad(*p.blocks, X, y),
        "forward (1024 windows)": lambda m: m.forward(*p.blocks, big),
    }
    backends = [("numpy", pure)] + ([("cython", compiled)] if compiled else [])
    if compiled is None:
        print("compiled kernels not built; timing the NumPy path only")
    print(f"{'case':<24}" + "".join(f"{name:>14}" for name, _ in backends) + ("   speedup" if compiled else ""))
    for label, fn in cases.items():
        times = []
        for _, mod in backends:
            n, _ = timeit.Timer(lambda: fn(mod)).autorange()
            best = min(timeit.repeat(lambda: fn(mod), number=n, repeat=args.repeat)) / n
            times.append(best)
        row = f"{label:<24}" + "".join(f"{t * 1e6:>11.1f} us" for t in times)
        if compiled:
            row += f"   {times[0] / times[1]:>6.1f}x"
        print(row)


if __name__ == "__main__":
    main()
