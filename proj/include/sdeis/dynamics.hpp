#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sdeis/control.hpp"
#include "sdeis/potential.hpp"
#include "sdeis/rng.hpp"
#include "sdeis/types.hpp"

namespace sdeis {

enum class RunningCost { One, Zero };
enum class TerminalCost { Zero };

RunningCost parse_running_cost(const std::string& s);
TerminalCost parse_terminal_cost(const std::string& s);
std::string to_string(RunningCost f);
std::string to_string(TerminalCost g);

struct DynamicsConfig
{
    PotentialSpec potential;
    double beta = 1.0;
    double dt = 1e-3;
    Vec x0;
    Box target;
    std::uint64_t max_steps = 1'000'000;
    RunningCost running_cost = RunningCost::One;
    TerminalCost terminal_cost = TerminalCost::Zero;

    /// Throws InputError on inconsistent shapes or non-positive parameters.
    void validate() const;

    std::size_t dim() const { return potential.dim(); }
    double sigma() const;
    double f_value() const { return running_cost == RunningCost::One ? 1.0 : 0.0; }
    double g_value(ConstSpan) const { return 0.0; }
};

struct TrajectoryRecord
{
    std::uint64_t index = 0;
    std::uint64_t steps = 0;
    double hitting_time = 0.0;
    double work = 0.0;
    double stoch_integral = 0.0;
    double quad_cost = 0.0;
    Vec grad_accum_a;
    Vec grad_accum_b;
    bool truncated = false;
    /// Sum of |u - u_ref|^2 dt along the path when a reference control was given.
    double ref_sq_error = 0.0;
    Vec final_state;

    /// Scalar multiplying grad_accum_b in the gradient estimator.
    double cost() const { return work + quad_cost; }
};

struct SimOptions
{
    /// Accumulate |u - ref|^2 dt into ref_sq_error.
    const Control* reference = nullptr;
    /// Run exactly this many steps and ignore the target set.
    std::optional<std::uint64_t> fixed_horizon;
    /// Fill the gradient accumulators when the control has parameters.
    bool gradients = true;
    /// If non-empty, each trajectory writes <dir>/path_<index>.csv.
    std::filesystem::path path_dump_dir;
};

/// One Euler-Maruyama step: x_next = x + (-grad V(x) + sigma u) dt + sigma sqrt(dt) xi.
/// `grad` is caller-provided workspace of size d.
void em_step(const DynamicsConfig& cfg, ConstSpan x, ConstSpan u, ConstSpan xi, Span grad, Span x_next);

TrajectoryRecord simulate_trajectory(const DynamicsConfig& cfg, const Control& ctrl, RngStream& rng,
                                     const SimOptions& opts = {});

/// K trajectories, trajectory k driven by RngStream(seed, k). threads == 0 uses the default.
std::vector<TrajectoryRecord> simulate_batch(const DynamicsConfig& cfg, const Control& ctrl, std::size_t K,
                                             std::uint64_t seed, const SimOptions& opts = {}, unsigned threads = 0);

}  // namespace sdeis
