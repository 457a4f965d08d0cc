#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdeis/control.hpp"
#include "sdeis/dynamics.hpp"
#include "sdeis/hjb.hpp"

namespace sdeis {

struct Estimate
{
    double mean = 0.0;
    double variance = 0.0;
    double rel_error = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    std::size_t K = 0;      // samples entering the mean
    std::size_t K_var = 0;  // samples entering the variance
    std::size_t truncated_count = 0;
    double mean_hitting_time = 0.0;
    double max_hitting_time = 0.0;
    double dt = 0.0;
    bool reliable = true;  // at most 1% of the simulated trajectories truncated

    /// Standard error of the mean, sqrt(variance / K).
    double std_error() const;

    nlohmann::json to_json() const;
    static std::string csv_header();
    std::string csv_row() const;
};

/// exp(-W - int u.dW - 1/2 int |u|^2); throws RejectedSample for truncated records.
double reweighted_sample(const TrajectoryRecord& rec);

/// Mean over the first K records, variance over the first K_var; truncated records are skipped.
Estimate estimate_from_records(const std::vector<TrajectoryRecord>& records, std::size_t K, std::size_t K_var,
                               double dt);

/// Simulates max(K, K_var) trajectories; K_var == 0 means K_var = K.
Estimate estimate_psi(const DynamicsConfig& cfg, const Control& ctrl, std::size_t K, std::size_t K_var,
                      std::uint64_t seed, unsigned threads = 0);

/// Monte Carlo estimate of E[int_0^tau |u - u_ref|^2 ds] along controlled trajectories.
double l2_error(const DynamicsConfig& cfg, const Control& ctrl, const HjbSolution& ref, std::size_t K,
                std::uint64_t seed, unsigned threads = 0);

/// Mean of ref_sq_error over non-truncated records.
double l2_from_records(const std::vector<TrajectoryRecord>& records);

}  // namespace sdeis
