"""Time the compiled kernels against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py``.
"""

import timeit

import numpy as np

from casida1d import _fallback

try:
    from casida1d import _kernels as compiled
except ImportError:
    compiled = None


def cases(n=400, N=2, seed=0):
    rng = np.random.default_rng(seed)
    x = np.linspace(-25, 25, n)
    h = x[1] - x[0]
    psi = rng.standard_normal((n, N)) + 1j * rng.standard_normal((n, N))
    diag = rng.standard_normal(n) + 1 / h**2
    rho = rng.random(n)
    e = np.sort(rng.random(n) * 20)
    w = rng.random(n)
    E = np.linspace(0, 20, 200)
    return {
        "cn_step": lambda m: m.cn_step(diag, -0.5 / h**2, psi, 0.01),
        "soft_coulomb_sum": lambda m: m.soft_coulomb_sum(x, rho, 1.0, h),
        "gaussian_smooth": lambda m: m.gaussian_smooth(e, w, E, 0.1),
    }


def main():
    print(f"{'kernel':<18}{'fallback [us]':>15}{'cython [us]':>14}{'speedup':>10}")
    for name, fn in cases().items():
        t_py = min(timeit.repeat(lambda: fn(_fallback), number=200, repeat=5)) / 200 * 1e6
        if compiled is None:
            print(f"{name:<18}{t_py:>15.1f}{'n/a':>14}{'':>10}")
            continue
        t_c = min(timeit.repeat(lambda: fn(compiled), number=200, repeat=5)) / 200 * 1e6
        print(f"{name:<18}{t_py:>15.1f}{t_c:>14.1f}{t_py / t_c:>9.1f}x")


if __name__ == "__main__":
    main()
