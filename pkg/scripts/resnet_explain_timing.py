"""Wall-clock profile of forward passes and explanations on the toy resnet.

Builds the [16-16-32]x2 bottleneck network at a few input sizes and
reports per-call times for forward inference and a bounded Deep Taylor
explanation. Single-threaded; a useful smoke check that the sliding
window convolutions stay vectorized after refactors.
"""
import pathlib
import sys
import time

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from rlpm.graph import forward
from rlpm.relprop import deep_taylor_bounded, explain
from rlpm.toynets import build_toy_resnet

SIZES = (64, 128, 256)
REPEATS = 3


def timed(fn, repeats=REPEATS) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    preset = deep_taylor_bounded(0.0, 1.0)
    print(f"{'input':>10} {'params':>9} {'forward':>9} {'explain':>9}")
    for size in SIZES:
        net = build_toy_resnet((size, size, 1), rng=np.random.default_rng(0))
        params = sum(
            s.weights.size + (s.bias.size if s.bias is not None else 0)
            for s in net.layers
            if s.weights is not None
        )
        x = np.random.default_rng(1).random((size, size, 1))
        t_fwd = timed(lambda: forward(net, x))
        t_exp = timed(lambda: explain(net, x, 0, preset))
        print(f"{size:>7}^2 {params:>9} {t_fwd:>8.3f}s {t_exp:>8.3f}s")


if __name__ == "__main__":
    main()
