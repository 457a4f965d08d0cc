#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sdeis/error.hpp"

namespace sdeis {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

using ConstSpan = std::span<const double>;
using Span = std::span<double>;

inline ConstSpan as_span(const Vec& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
inline Span as_span(Vec& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

inline Vec to_vec(ConstSpan s)
{
    Vec v(static_cast<Eigen::Index>(s.size()));
    for (std::size_t i = 0; i < s.size(); ++i)
        v[static_cast<Eigen::Index>(i)] = s[i];
    return v;
}

inline void require_dim(std::size_t got, std::size_t expected, const char* what)
{
    if (got != expected)
        throw InputError(std::string(what) + ": expected dimension " + std::to_string(expected) +
                         ", got " + std::to_string(got));
}

/// Axis-aligned closed box [lo_i, hi_i]^d.
struct Box
{
    Vec lo;
    Vec hi;

    Box() = default;
    Box(Vec lo_, Vec hi_);

    static Box cube(std::size_t d, double lo, double hi);

    std::size_t dim() const { return static_cast<std::size_t>(lo.size()); }

    bool contains(ConstSpan x) const
    {
        for (std::size_t i = 0; i < x.size(); ++i) {
            auto k = static_cast<Eigen::Index>(i);
            if (!(x[i] >= lo[k] && x[i] <= hi[k]))
                return false;
        }
        return true;
    }
};

}  // namespace sdeis
