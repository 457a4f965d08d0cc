#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "sdeis/control.hpp"
#include "sdeis/dynamics.hpp"
#include "sdeis/potential.hpp"

namespace sdeis {

struct MetaConfig
{
    double delta = 0.2;  // deposition interval in simulated time
    double eta = 1.0;
    Mat cov;             // bump covariance in the deposition space
    std::size_t k_meta = 1;
    double scale_r = 0.95;
    std::optional<std::vector<std::size_t>> cv_projection;
    DynamicsConfig dynamics;
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t space_dim() const;
    std::uint64_t steps_per_interval() const;
};

struct MetaTrajectoryLog
{
    std::size_t index = 0;
    std::size_t bumps = 0;
    bool hit = false;
    std::uint64_t steps = 0;
};

struct MetaResult
{
    BiasPotential bias;
    std::vector<MetaTrajectoryLog> log;
    /// False when some trajectory reached max_steps without entering the target.
    bool complete = true;

    /// Control induced by the bias, lifted when the bias lives on collective variables.
    ControlPtr control(const MetaConfig& cfg) const;
};

/// One biased trajectory depositing bumps of weight eta every delta until it enters the target.
MetaResult metadynamics_single(const MetaConfig& cfg);

/// k_meta sequential trajectories; trajectory k (from 0) deposits bumps of weight r^k eta.
MetaResult metadynamics_cumulative(const MetaConfig& cfg);

void write_meta_log_csv(const MetaResult& res, const std::filesystem::path& path);

}  // namespace sdeis
