#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "sdeis/types.hpp"

namespace sdeis::test {

inline Vec random_vec(std::mt19937_64& g, Eigen::Index n, double lo, double hi)
{
    std::uniform_real_distribution<double> u(lo, hi);
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v[i] = u(g);
    return v;
}

/// Central-difference gradient of a scalar function.
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h)
{
    Vec g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Vec a = x, b = x;
        a[i] += h;
        b[i] -= h;
        g[i] = (f(a) - f(b)) / (2.0 * h);
    }
    return g;
}

/// max_i |a_i - b_i| / max(|b|_inf, floor)
inline double rel_err(const Vec& a, const Vec& b, double floor = 1e-12)
{
    return (a - b).lpNorm<Eigen::Infinity>() / std::max(b.lpNorm<Eigen::Infinity>(), floor);
}

}  // namespace sdeis::test
