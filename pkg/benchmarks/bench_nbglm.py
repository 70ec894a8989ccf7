#!/usr/bin/env python3
"""Benchmark the compiled NB-GLM kernel against the pure-numpy fallback.

Synthesizes an NB count matrix and times nb_glm_fit_many under both
backends, checking that the estimates agree.

    python benchmarks/bench_nbglm.py --genes 20000 --samples 12 --repeat 3
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from vctrace.delabel import glm


def synth(n_genes: int, n_samples: int, dispersion: float, seed: int):
    rng = np.random.default_rng(seed)
    mu0 = rng.uniform(20.0, 2000.0, size=n_genes)
    l2fc = rng.normal(0.0, 1.0, size=n_genes)
    n_per = n_samples // 2
    r = 1.0 / dispersion
    mu_c = np.repeat(mu0[:, None], n_per, axis=1)
    mu_t = np.repeat((mu0 * 2.0 ** l2fc)[:, None], n_samples - n_per, axis=1)
    counts = np.hstack(
        [
            rng.negative_binomial(r, r / (r + mu_c)),
            rng.negative_binomial(r, r / (r + mu_t)),
        ]
    ).astype(np.float64)
    treated = np.array([False] * n_per + [True] * (n_samples - n_per))
    return counts, np.ones(n_samples), treated


def run(fit, counts, sf, treated, repeat: int) -> tuple[float, dict]:
    best = float("inf")
    result = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fit(counts, sf, treated)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--genes", type=int, default=20000)
    ap.add_argument("--samples", type=int, default=12)
    ap.add_argument("--dispersion", type=float, default=0.1)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    counts, sf, treated = synth(args.genes, args.samples, args.dispersion, args.seed)

    try:
        from vctrace.delabel import _nbglm
        compiled_fit = _nbglm.nb_glm_fit_many
    except ImportError:
        compiled_fit = None

    t_pure, res_pure = run(glm.nb_glm_fit_many, counts, sf, treated, args.repeat)
    rate_pure = args.genes / t_pure
    print(f"{'backend':<10} {'seconds':>9} {'genes/s':>12}")
    print(f"{'pure':<10} {t_pure:>9.4f} {rate_pure:>12.0f}")
    if compiled_fit is None:
        print("compiled kernel not built (python setup.py build_ext --inplace)")
        return 0
    t_comp, res_comp = run(compiled_fit, counts, sf, treated, args.repeat)
    rate_comp = args.genes / t_comp
    print(f"{'compiled':<10} {t_comp:>9.4f} {rate_comp:>12.0f}")
    print(f"speedup: {t_pure / t_comp:.2f}x")
    agree = np.allclose(
        res_pure["beta1"], res_comp["beta1"], rtol=1e-9, atol=1e-12, equal_nan=True
    )
    print(f"estimates agree: {agree}")
    return 0 if agree else 1


if __name__ == "__main__":
    raise SystemExit(main())
