"""Independent numpy oracle for the 1D double-well hitting problem.

Vectorized Euler-Maruyama over K trajectories:
  V(x) = alpha (x^2 - 1)^2, beta = 1, x0 = -1, target [1, 3], dt = 1e-3.
Prints mean/SE of tau and of exp(-tau). Used to freeze golden values in the
C++ tests; it shares no code with the library.
"""
import sys
import numpy as np


def run(alpha=1.0, beta=1.0, dt=1e-3, K=100_000, seed=20231017, lo=1.0, hi=3.0):
    rng = np.random.default_rng(seed)
    x = np.full(K, -1.0)
    steps = np.zeros(K, dtype=np.int64)
    active = np.ones(K, dtype=bool)
    sig = np.sqrt(2.0 / beta)
    sq = np.sqrt(dt)
    n = 0
    while active.any():
        idx = np.nonzero(active)[0]
        xa = x[idx]
        xi = rng.standard_normal(idx.size)
        xa = xa - 4 * alpha * xa * (xa * xa - 1) * dt + sig * xi * sq
        x[idx] = xa
        steps[idx] += 1
        hit = (xa >= lo) & (xa <= hi)
        active[idx[hit]] = False
        n += 1
    tau = steps * dt
    I = np.exp(-tau)
    return tau, I


if __name__ == "__main__":
    alpha = float(sys.argv[1]) if len(sys.argv) > 1 else 1.0
    K = int(sys.argv[2]) if len(sys.argv) > 2 else 100_000
    tau, I = run(alpha=alpha, K=K)
    print(f"alpha={alpha} K={K}")
    print(f"mean_tau={tau.mean():.10g} se_tau={tau.std(ddof=1)/np.sqrt(K):.10g}")
    print(f"psi={I.mean():.10g} se_psi={I.std(ddof=1)/np.sqrt(K):.10g}")
