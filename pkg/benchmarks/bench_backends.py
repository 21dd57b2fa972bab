"""Compare the numba and pure-numpy kernel backends.

Times one Metropolis chain and one pointwise log-likelihood matrix per
family on synthetic data, after a warm-up call that triggers compilation,
and checks that both backends return identical numbers.

    python3 benchmarks/bench_backends.py [--n 866] [--draws 2000] [--repeat 3]
"""

import argparse
import time

import numpy as np

from binequiv._backend import HAVE_NUMBA
from binequiv.bayes import get_family, kernels

CASES = {
    "normal": (lambda rng, n: rng.normal(1.0, 2.0, n), [1.0, 2.0], [0.0, 0.0]),
    "lognormal": (lambda rng, n: rng.lognormal(0.3, 0.5, n), [0.3, 0.5], [0.0, 0.0]),
    "gamma": (lambda rng, n: rng.gamma(3.0, 1.5, n), [4.5, 2.6], [1.0, 0.0]),
    "normal_mixture2": (
        lambda rng, n: np.where(rng.random(n) < 0.4, rng.normal(-2, 1, n), rng.normal(2, 1, n)),
        [0.4, 2.2],
        [-1.0, 0.0, 0.5, 0.0, 0.0],
    ),
}


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_family(kind, n, draws, repeat):
    gen, ref, u0 = CASES[kind]
    fam = get_family(kind)
    rng = np.random.default_rng(0)
    x = gen(rng, n)
    w = np.ones(n)
    ref = np.asarray(ref, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    d = fam.n_params
    chol = 0.05 * np.eye(d)
    z = rng.standard_normal((draws, d))
    log_u = np.log(rng.random(draws))
    params = kernels.constrain_many(fam.code, u0 + 0.01 * z[:500], ref, d, backend="numpy")

    rows = []
    results = {}
    for backend in ("numba", "numpy"):
        if backend == "numba" and not HAVE_NUMBA:
            continue
        # warm-up (compilation for numba)
        kernels.run_chain(fam.code, u0, chol, z[:10], log_u[:10], x, w, ref, backend=backend)
        kernels.pointwise_loglik(fam.code, params[:2], x, w, backend=backend)
        t_chain, chain = best_of(
            lambda: kernels.run_chain(fam.code, u0, chol, z, log_u, x, w, ref, backend=backend), repeat
        )
        t_ll, ll = best_of(lambda: kernels.pointwise_loglik(fam.code, params, x, w, backend=backend), repeat)
        results[backend] = (chain[0], ll)
        rows.append((kind, backend, t_chain, t_ll))
    if len(results) == 2:
        same = np.array_equal(results["numba"][0], results["numpy"][0])
        close = np.allclose(results["numba"][1], results["numpy"][1], rtol=1e-12, atol=1e-12)
        rows.append((kind, "match", same, close))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=866)
    ap.add_argument("--draws", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--families", default=",".join(CASES))
    args = ap.parse_args()

    print(f"n={args.n} draws={args.draws} best of {args.repeat}")
    print(f"{'family':>16} {'backend':>8} {'chain [s]':>10} {'loglik [s]':>11}")
    for kind in args.families.split(","):
        timings = {}
        for row in bench_family(kind, args.n, args.draws, args.repeat):
            if row[1] == "match":
                print(f"{kind:>16} {'same':>8} {str(row[2]):>10} {str(row[3]):>11}")
                continue
            timings[row[1]] = row[2:]
            print(f"{kind:>16} {row[1]:>8} {row[2]:>10.4f} {row[3]:>11.4f}")
        if len(timings) == 2:
            sc = timings["numpy"][0] / timings["numba"][0]
            sl = timings["numpy"][1] / timings["numba"][1]
            print(f"{kind:>16} {'speedup':>8} {sc:>9.1f}x {sl:>10.1f}x")


if __name__ == "__main__":
    main()
