"""Time each hot kernel under the numba and pure-numpy backends.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Also times one training epoch end to end under each backend, in a fresh
subprocess since the backend is fixed at import.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from qdiff.kernels import numba_backend, numpy_backend


def cases(rng):
    scores = rng.normal(size=(256, 64))
    mask = (rng.random((256, 64)) < 0.8).astype(np.float64)
    probs = numpy_backend.masked_softmax(scores, mask)
    x = rng.normal(size=(2048, 64))
    g, b = np.ones(64), np.zeros(64)
    _, xhat, inv = numpy_backend.layernorm(x, g, b, 1e-5)
    xs = rng.normal(size=(2048, 128))
    X = rng.normal(size=(2000, 300))
    y = np.where(rng.random(2000) < 0.5, 1.0, -1.0)
    order = np.tile(np.arange(2000), 5).astype(np.int64)
    diff = rng.integers(-1, 2, size=500).astype(np.float64)
    idx = rng.integers(0, 500, size=(2000, 500)).astype(np.int64)
    return {
        "masked_softmax": lambda k: k.masked_softmax(scores, mask),
        "masked_softmax_backward": lambda k: k.masked_softmax_backward(probs, scores),
        "layernorm": lambda k: k.layernorm(x, g, b, 1e-5),
        "layernorm_backward": lambda k: k.layernorm_backward(x, xhat, inv, g),
        "gelu": lambda k: k.gelu(xs),
        "gelu_backward": lambda k: k.gelu_backward(xs, xs),
        "pegasos_epochs": lambda k: k.pegasos_epochs(X, y, order, 1e-4, np.zeros(300), np.zeros(300), 0),
        "bootstrap_mean_diffs": lambda k: k.bootstrap_mean_diffs(diff, idx),
    }


EPOCH_SNIPPET = """
import time
from qdiff import kernels
from qdiff.data import SyntheticConfig, generate_synthetic
from qdiff.encoder import EncoderConfig
from qdiff.model import QDiffModel, TrainConfig, Variant, train
data = generate_synthetic(SyntheticConfig(n_samples=500, seed=0))
model = QDiffModel.create(Variant.IA, data, EncoderConfig(), seed=0)
train(model, data, None, TrainConfig(epochs=1))  # warm-up and JIT compile
start = time.perf_counter()
train(model, data, None, TrainConfig(epochs=2))
print(kernels.BACKEND_NAME, (time.perf_counter() - start) / 2)
"""


def epoch_time(flag):
    env = dict(os.environ, QDIFF_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", EPOCH_SNIPPET], env=env, check=True,
                         capture_output=True, text=True).stdout.split()
    return out[0], float(out[1])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--skip-epoch", action="store_true")
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':26s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, fn in cases(rng).items():
        fn(numba_backend)  # compile
        t_np = min(timeit.repeat(lambda: fn(numpy_backend), number=1, repeat=args.repeat))
        t_nb = min(timeit.repeat(lambda: fn(numba_backend), number=1, repeat=args.repeat))
        print(f"{name:26s} {t_np * 1e3:10.3f} {t_nb * 1e3:10.3f} {t_np / t_nb:8.2f}")
    if not args.skip_epoch:
        for flag in ("0", "1"):
            name, secs = epoch_time(flag)
            print(f"training epoch (500 examples, {name} backend): {secs:.2f}s")


if __name__ == "__main__":
    main()
