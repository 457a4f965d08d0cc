"""Gauss-Hermite oracle for the fixed-horizon cost and its parameter gradient.

1D double well V = alpha (x^2-1)^2, beta = 1, f = 1, g = 0, x0 = -1. The control
is a weighted sum of derivatives of normalized Gaussian densities (3 centers).
With N Euler-Maruyama steps the cost is
  J(theta) = N dt + dt/2 sum_{n<N} E[u(X_n)^2],
which only involves X_0 and X_1 for N <= 2, so one-dimensional quadrature in
xi_1 is exact up to the quadrature error. The gradient is a central difference
of J in theta. Prints J and grad for N = 1 and N = 2.
"""
import numpy as np
from numpy.polynomial.hermite_e import hermegauss

alpha, beta, dt, x0 = 1.0, 1.0, 0.1, -1.0
centers = np.array([-1.5, -0.5, 0.5])
var = 0.5
theta0 = np.array([0.4, -0.3, 0.8])
sigma = np.sqrt(2.0 / beta)


def u(x, th):
    x = np.asarray(x, dtype=float)[..., None]
    dens = np.exp(-0.5 * (x - centers) ** 2 / var) / np.sqrt(2 * np.pi * var)
    return (th * (-(x - centers) / var) * dens).sum(axis=-1)


def J(th, N, nodes=96):
    u0 = u(x0, th)
    total = N * dt + 0.5 * dt * u0**2
    if N >= 2:
        z, w = hermegauss(nodes)
        w = w / w.sum()
        x1 = x0 + (-4 * alpha * x0 * (x0 * x0 - 1) + sigma * u0) * dt + sigma * np.sqrt(dt) * z
        total += 0.5 * dt * (w * u(x1, th) ** 2).sum()
    return float(total)


def grad(N, h=1e-6):
    g = np.zeros(3)
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        g[i] = (J(theta0 + e, N) - J(theta0 - e, N)) / (2 * h)
    return g


if __name__ == "__main__":
    for N in (1, 2):
        g = grad(N)
        print(f"N={N} J={J(theta0, N)!r} grad={{{g[0]!r}, {g[1]!r}, {g[2]!r}}}")
    # quadrature convergence check
    print("nodes 64 vs 128:", J(theta0, 2, 64) - J(theta0, 2, 128))
