#pragma once

#include <cstdint>
#include <random>

#include "sdeis/types.hpp"

namespace sdeis {

/// Independent random stream keyed by (global seed, trajectory index).
///
/// The pair is expanded through std::seed_seq into the full engine state, so
/// the same pair always reproduces the same sequence no matter which worker
/// thread draws it.
class RngStream
{
  public:
    RngStream(std::uint64_t global_seed, std::uint64_t index);

    std::uint64_t global_seed() const { return seed_; }
    std::uint64_t index() const { return index_; }

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }

    void fill_normal(Span out)
    {
        for (double& v : out)
            v = normal_(engine_);
    }

    std::mt19937_64& engine() { return engine_; }

  private:
    std::uint64_t seed_;
    std::uint64_t index_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// Derives a child seed from (seed, salt); used for per-step and per-purpose seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace sdeis
