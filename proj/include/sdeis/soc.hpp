#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sdeis/control.hpp"
#include "sdeis/dynamics.hpp"
#include "sdeis/estimator.hpp"
#include "sdeis/hjb.hpp"

namespace sdeis {

struct AdamState
{
    Vec m;
    Vec v;
    std::uint64_t t = 0;
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    AdamState() = default;
    explicit AdamState(std::size_t p, double lr_ = 0.01);
};

/// Bias-corrected Adam update of `params` in place. Returns false and leaves
/// everything untouched when the gradient has a non-finite component.
bool adam_step(AdamState& state, ConstSpan grad, Span params);

struct GradientEstimate
{
    Vec grad;
    Vec std_error;  // per component, over the trajectories used
    double J = 0.0;
    double J_std_error = 0.0;
    std::size_t used = 0;
    std::size_t truncated = 0;
    double mean_hitting_time = 0.0;
    double max_hitting_time = 0.0;
};

/// Reduces per-trajectory accumulators to mean(A + (W + quad) B) over non-truncated records.
/// Throws GradientUnavailable when every record is truncated.
GradientEstimate gradient_from_records(const std::vector<TrajectoryRecord>& records, std::size_t p);

GradientEstimate grad_cost(const DynamicsConfig& cfg, const Control& ctrl, std::size_t K, std::uint64_t seed,
                           unsigned threads = 0);

/// Same estimator on exactly N steps with no stopping.
GradientEstimate grad_cost_fixed_horizon(const DynamicsConfig& cfg, const Control& ctrl, std::uint64_t N,
                                         std::size_t K, std::uint64_t seed, unsigned threads = 0);

struct GaussianFit
{
    Vec theta;
    bool rank_deficient = false;
    double residual_rms = 0.0;
};

/// Least-squares weights so that the ansatz matches `target` at `points`;
/// also installs them into `ansatz`.
GaussianFit fit_init_gaussian(GaussianAnsatz& ansatz, const Control& target, const std::vector<Vec>& points);

enum class FitSampler { UniformOnce, BumpGaussian };

struct NetFitOptions
{
    FitSampler sampler = FitSampler::UniformOnce;
    std::size_t points = 1000;
    std::size_t steps = 1000;
    double lr = 0.01;
    std::uint64_t seed = 0;
    Box domain;                  // for UniformOnce
    std::vector<Vec> centers;    // for BumpGaussian
    std::vector<Mat> covariances;
    std::filesystem::path checkpoint_on_failure;
    unsigned threads = 0;
};

struct NetFitResult
{
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::vector<double> losses;  // loss before each step
};

/// Adam on the mean-squared mismatch |u_theta - u_target|^2 over sampled points.
NetFitResult fit_init_net(FeedForwardNet& net, const Control& target, const NetFitOptions& opt);

/// Sampling points from the fit measure.
std::vector<Vec> uniform_points(const Box& domain, std::size_t n, std::uint64_t seed);
std::vector<Vec> bump_points(const std::vector<Vec>& centers, const std::vector<Mat>& covs, std::size_t n,
                             std::uint64_t seed);

enum class StopRule { MaxSteps, RelativeChange };

struct RunRow
{
    std::size_t step = 0;
    double J = 0.0;
    double psi = 0.0;
    double rel_error = 0.0;
    double l2 = 0.0;  // NaN without a reference
    double mean_hitting_time = 0.0;
    double max_hitting_time = 0.0;
    std::size_t truncated = 0;
    double wall_seconds = 0.0;
    double grad_norm = 0.0;
    bool skipped = false;
};

struct RunRecord
{
    std::vector<RunRow> rows;
    std::size_t skipped_steps = 0;
    std::string stop_reason;

    static std::string csv_header();
    static std::string csv_row(const RunRow& r);
};

struct TrainConfig
{
    DynamicsConfig dynamics;
    std::size_t batch = 1000;
    std::size_t max_steps = 1000;
    double lr = 0.01;
    StopRule stop = StopRule::MaxSteps;
    double tol = 1e-3;
    std::size_t window = 100;
    std::size_t checkpoint_every = 0;
    std::filesystem::path checkpoint_dir;
    std::filesystem::path record_csv;
    std::size_t progress_every = 0;
    std::uint64_t seed = 0;
    unsigned threads = 0;
    /// Called after each row; returning false ends training.
    std::function<bool(const RunRow&, const Control&)> observer;

    void validate() const;
};

struct TrainResult
{
    ControlPtr control;
    RunRecord record;
};

TrainResult train(const TrainConfig& tc, const Control& initial, const HjbSolution* ref = nullptr);

/// Mean of `values` over consecutive windows of length w (the tail shorter than w is dropped).
std::vector<double> window_means(const std::vector<double>& values, std::size_t w);

}  // namespace sdeis
