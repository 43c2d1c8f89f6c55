"""Timing comparison of the numba and numpy kernel implementations.

Run:  python benchmarks/bench_kernels.py [repeats]

Reports per-kernel timing for realistic workloads plus the maximum numeric
deviation between the two backends.
"""

import sys
import time

import numpy as np

from coadapt import kernels
from coadapt.generator import GeneratorConfig, Vocabulary, generate
from coadapt.prompts import tokenize
from coadapt.seeding import child_rng


def _workload():
    cfg = GeneratorConfig(seed=3)
    vocab = Vocabulary(cfg)
    prompt = tokenize("a tranquil garden with blooming flowers", vocab)
    generate(prompt, cfg)  # warm caches and JIT
    rng = child_rng(0, "bench")
    rows = cfg.h * cfg.w
    n = len(prompt)
    queries = rng.normal(size=(cfg.t_gen, rows, cfg.d))
    keys = np.stack([t.embedding for t in prompt.tokens])
    weights = np.ones(n)
    blobs = rng.uniform(0.0, 1.0, size=(n, rows, cfg.c))
    img_a = rng.random((cfg.h, cfg.w))
    img_b = np.clip(img_a + rng.normal(0, 0.05, img_a.shape), 0, 1)
    return queries, keys, weights, blobs, img_a, img_b


def _time(fn, repeats):
    fn()  # one warm call (jit compile for the numba path)
    t0 = time.perf_counter()
    for _ in range(repeats):
        out = fn()
    return (time.perf_counter() - t0) / repeats, out


def main(repeats: int = 200) -> None:
    queries, keys, weights, blobs, img_a, img_b = _workload()
    backends = {}
    for name in ("numpy", "numba"):
        try:
            backends[name] = kernels.backend_impls(name)
        except KeyError:
            print(f"backend {name} unavailable; skipping")
    results = {}
    print(f"active backend: {kernels.active_backend()}  (COADAPT_BACKEND overrides)")
    print(f"{'kernel':18s} " + " ".join(f"{n:>12s}" for n in backends))
    rows = [
        ("attention_maps", lambda fns: fns[0](queries, keys, 4.0, weights, True)),
        ("mix_pixels", lambda fns: fns[1](
            fns[0](queries, keys, 4.0, weights, True), blobs)),
        ("ssim_windows", lambda fns: fns[2](img_a, img_b, 8, 4, 1e-4, 9e-4)),
    ]
    for label, runner in rows:
        times = []
        outs = []
        for name, fns in backends.items():
            dt, out = _time(lambda: runner(fns), repeats)
            times.append(dt)
            outs.append(np.asarray(out))
        results[label] = outs
        cells = " ".join(f"{dt * 1e3:10.3f}ms" for dt in times)
        print(f"{label:18s} {cells}")
    if len(backends) == 2:
        print("\nmax |numpy - numba| deviation per kernel:")
        for label, outs in results.items():
            print(f"  {label:16s} {np.max(np.abs(outs[0] - outs[1])):.3e}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 200)
