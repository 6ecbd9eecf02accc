#!/usr/bin/env python3
"""Time the numba and numpy flavours of each hot kernel on one input.

Numba is warmed up first so compilation is not counted. Both flavours get
identical inputs and their outputs are compared before timing.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""
import argparse
import json
import time

import numpy as np

from mtlunmix import kernels
from mtlunmix._accel import HAVE_NUMBA
from mtlunmix.initstage import vca_init
from mtlunmix.optimizer import ETA_MINUS, ETA_PLUS, STEP_INIT, STEP_MAX, STEP_MIN
from mtlunmix.synthgen import gen_endmembers, sample_abundances


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def case_irprop(n, seed=0):
    rng = np.random.default_rng(seed)
    grads = [rng.standard_normal(n) for _ in range(10)]

    def run(fn):
        theta = np.zeros(n)
        pg, upd = np.zeros(n), np.zeros(n)
        step = np.full(n, STEP_INIT)
        for i, g in enumerate(grads):
            fn(theta, g, pg, step, upd, i % 3 == 0, ETA_PLUS, ETA_MINUS, STEP_MIN, STEP_MAX)
        return theta
    return (lambda: run(kernels.irprop_update_numba),
            lambda: run(kernels.irprop_update_numpy), f"irprop_update n={n} x10 steps")


def case_fcls(P, K, N, seed=0):
    E = gen_endmembers(P, K, seed)
    A = sample_abundances(K, N, 1.0, seed)
    X = E @ A + np.random.default_rng(seed).normal(0, 0.01, (P, N))
    E0, _ = vca_init(X, K, seed)
    Et = np.vstack([E0, np.full((1, K), 5.0)])
    gram = Et.T @ Et
    rhs = E0.T @ X + 25.0
    const = 0.5 * (np.einsum("pn,pn->n", X, X) + 25.0)
    a0 = np.maximum(np.linalg.solve(gram, rhs), 0.0)
    lr = 1.0 / np.linalg.eigvalsh(gram)[-1]

    def run(fn):
        out = np.empty_like(rhs)
        it = np.zeros(N, dtype=np.int64)
        fn(gram, rhs, const, a0, lr, 1e-9, 10_000, out, it)
        return out
    return (lambda: run(kernels.fcls_solve_numba),
            lambda: run(kernels.fcls_solve_numpy), f"fcls_solve P={P} K={K} N={N}")


def case_bilinear(P, K, N, seed=0):
    E = gen_endmembers(P, K, seed)
    A = sample_abundances(K, N, 1.0, seed)

    def run(fn):
        out = np.zeros((P, N))
        fn(E, A, out)
        return out
    return (lambda: run(kernels.bilinear_terms_numba),
            lambda: run(kernels.bilinear_terms_numpy), f"bilinear_terms P={P} K={K} N={N}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", default=None)
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba is not installed; nothing to compare")
        return 1

    cases = [case_irprop(200_000), case_fcls(50, 3, 4096), case_bilinear(224, 4, 16384)]
    rows = []
    print(f"{'kernel':42s} {'numba s':>10s} {'numpy s':>10s} {'speedup':>8s} {'max|diff|':>10s}")
    for numba_fn, numpy_fn, label in cases:
        a, b = numba_fn(), numpy_fn()  # warm-up + parity check
        diff = float(np.max(np.abs(a - b)))
        t_nb = best_of(numba_fn, args.repeat)
        t_np = best_of(numpy_fn, args.repeat)
        rows.append({"kernel": label, "numba_s": t_nb, "numpy_s": t_np,
                     "speedup": t_np / t_nb, "max_abs_diff": diff})
        print(f"{label:42s} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:8.2f} {diff:10.2e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
