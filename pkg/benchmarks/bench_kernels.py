"""Compare the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Kernel timings call both modules directly. The end-to-end rows run a toy
encode plus wait-k decode in a subprocess per backend, since backend choice
is fixed at import.
"""
import argparse
import os
import random
import subprocess
import sys
import timeit
from array import array

from streamlag import _kernels_py as py

try:
    from streamlag import _kernels as cy
except ImportError:
    sys.exit("compiled extension not built; run `pip install -e . --no-build-isolation` first")

END_TO_END = """
import time
from streamlag.cif import OraclePredictor
from streamlag.masks import ChunkSpec
from streamlag.model import ModelConfig, ToyModel
from streamlag.policies import PolicyConfig, wait_k_decode
from streamlag.trace import TraceSpec, generate_trace
from streamlag.kernels import BACKEND
tr = generate_trace(TraceSpec(num_tokens=40, frames_per_token=8, frame_duration_s=0.04))
m = ToyModel(ModelConfig(seed=3))
t0 = time.perf_counter()
m.encode(tr.frames, ChunkSpec(16))
t1 = time.perf_counter()
wait_k_decode(tr.frames, PolicyConfig(k=2, chunk_length_s=0.64), m, OraclePredictor(tr.plan.weights))
t2 = time.perf_counter()
print(BACKEND, t1 - t0, t2 - t1)
"""


def rand_array(rng, n):
    return array("d", (rng.gauss(0.0, 1.0) for _ in range(n)))


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = random.Random(0)

    n = 64
    a, b = rand_array(rng, n * n), rand_array(rng, n * n)
    scores = rand_array(rng, n * n)
    allow = bytes(1 if j <= i else 0 for i in range(n) for j in range(n))
    g = array("d", sorted(rng.uniform(0, 100) for _ in range(10_000)))

    cases = [
        ("matmul 64x64", lambda m: m.matmul(a, b, n, n, n)),
        ("matmul_nt 64x64", lambda m: m.matmul_nt(a, b, n, n, n)),
        ("masked_softmax 64x64", lambda m: m.masked_softmax(scores, allow, n, n)),
        ("dal_sum 10k", lambda m: m.dal_sum(g, 0.01)),
    ]
    print(f"{'kernel':<24}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, fn in cases:
        assert fn(py) == fn(cy), f"{name}: backends disagree"
        tp = best(lambda: fn(py), args.repeat) * 1e3
        tc = best(lambda: fn(cy), args.repeat) * 1e3
        print(f"{name:<24}{tp:>12.3f}{tc:>12.3f}{tp / tc:>9.1f}x")

    rows = {}
    for forced in ("1", "0"):
        env = dict(os.environ, STREAMLAG_PURE_PYTHON=forced)
        out = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True, text=True, check=True)
        backend, enc, dec = out.stdout.split()
        rows[backend] = (float(enc), float(dec))
    for i, label in enumerate(("toy encode 320 frames", "wait-k decode 40 tok")):
        tp, tc = rows["python"][i] * 1e3, rows["cython"][i] * 1e3
        print(f"{label:<24}{tp:>12.3f}{tc:>12.3f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
