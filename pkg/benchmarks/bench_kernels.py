"""Compare the compiled GRU kernels with the numpy fallback.

Times the raw time loops and one full loss-and-gradient evaluation at the
default training shape. Usage::

    python benchmarks/bench_kernels.py [--repeats N] [--T 365] [--batch 16] [--hidden 64]
"""
import argparse
import timeit

import numpy as np

from sdsa import kernels
from sdsa.kgloss import Batch, LossWeights, total_loss
from sdsa.model import ModelConfig, init_params
from sdsa.ndmath import RngStream
from sdsa.pipeline.preprocess import BASE_FEATURES


def _best(fn, repeats):
    return min(timeit.repeat(fn, number=1, repeat=repeats))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--T", type=int, default=365)
    ap.add_argument("--batch", type=int, default=16)
    ap.add_argument("--hidden", type=int, default=64)
    args = ap.parse_args()
    T, B, H = args.T, args.batch, args.hidden

    if kernels.BACKEND != "compiled":
        print("compiled extension not available; only the python backend will be timed")
    backends = ["python"] + (["compiled"] if kernels.BACKEND == "compiled" else [])

    rng = RngStream(0)
    A = rng.normal((T, B, 3 * H)) * 0.5
    U = rng.normal((3 * H, H)) * 0.1
    h0 = np.zeros((B, H))
    Hs, Z, R, HT = kernels.gru_forward(A, U, h0, backend="python")
    dHs = rng.normal((T, B, H))

    p = init_params(ModelConfig(BASE_FEATURES, H, 2, 32), rng)
    mask = rng.uniform((T, B)) < 0.5
    batch = Batch(rng.normal((T, B, len(BASE_FEATURES))), rng.normal((T, B, 2)) * mask[..., None], mask,
                  rng.normal(B), np.ones(B, bool), rng.uniform((T, B), 0.0, 5.0),
                  {"ra": (1.0, 0.5), "rh": (1.0, 0.5), "yield": (0.0, 1.0)}, 0, 5.0)
    w = LossWeights()

    cases = {
        "gru_forward": lambda b: kernels.gru_forward(A, U, h0, backend=b),
        "gru_backward": lambda b: kernels.gru_backward(dHs, Hs, Z, R, HT, h0, U, backend=b),
        "total_loss": lambda b: total_loss(p, batch, w, backend=b),
    }
    print(f"T={T} B={B} H={H}, best of {args.repeats}")
    print(f"{'case':<14}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for name, fn in cases.items():
        times = [_best(lambda: fn(b), args.repeats) for b in backends]
        row = f"{name:<14}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>11.2f}x"
        print(row)


if __name__ == "__main__":
    main()
