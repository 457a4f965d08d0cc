#include "sdeis/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace sdeis {

double Estimate::std_error() const { return std::sqrt(variance / static_cast<double>(K)); }

nlohmann::json Estimate::to_json() const
{
    return {{"schema_version", 1},
            {"psi_hat", mean},
            {"variance", variance},
            {"rel_error", rel_error},
            {"ci_lo", ci_lo},
            {"ci_hi", ci_hi},
            {"K", K},
            {"K_var", K_var},
            {"truncated_count", truncated_count},
            {"mean_hitting_time", mean_hitting_time},
            {"max_hitting_time", max_hitting_time},
            {"dt", dt},
            {"reliable", reliable}};
}

std::string Estimate::csv_header()
{
    return "psi_hat,variance,rel_error,ci_lo,ci_hi,K,K_var,truncated_count,mean_hitting_time,max_hitting_time,dt,"
           "reliable";
}

std::string Estimate::csv_row() const
{
    char buf[512];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%zu,%zu,%zu,%.17g,%.17g,%.17g,%d", mean, variance,
                  rel_error, ci_lo, ci_hi, K, K_var, truncated_count, mean_hitting_time, max_hitting_time, dt,
                  reliable ? 1 : 0);
    return buf;
}

double reweighted_sample(const TrajectoryRecord& rec)
{
    if (rec.truncated)
        throw RejectedSample("trajectory " + std::to_string(rec.index) + " was truncated");
    return std::exp(-(rec.work + rec.stoch_integral + rec.quad_cost));
}

Estimate estimate_from_records(const std::vector<TrajectoryRecord>& records, std::size_t K, std::size_t K_var,
                               double dt)
{
    if (K_var == 0)
        K_var = K;
    const std::size_t total = std::max(K, K_var);
    if (records.size() < total)
        throw InputError("estimate: fewer records than requested samples");

    Estimate e;
    e.dt = dt;
    std::size_t n_mean = 0, n_var = 0;
    double sum = 0.0, sum_var = 0.0, tau_sum = 0.0;
    std::size_t n_tau = 0;
    std::vector<double> samples(total, 0.0);
    std::vector<std::uint8_t> ok(total, 0);
    for (std::size_t k = 0; k < total; ++k) {
        const auto& r = records[k];
        if (r.truncated) {
            ++e.truncated_count;
            continue;
        }
        ok[k] = 1;
        samples[k] = reweighted_sample(r);
        tau_sum += r.hitting_time;
        ++n_tau;
        e.max_hitting_time = std::max(e.max_hitting_time, r.hitting_time);
        if (k < K) {
            sum += samples[k];
            ++n_mean;
        }
        if (k < K_var) {
            sum_var += samples[k];
            ++n_var;
        }
    }
    if (n_mean == 0)
        throw EstimationFailed("estimate: every trajectory was truncated; raise max_steps or improve the control");

    e.K = n_mean;
    e.K_var = n_var;
    e.mean = sum / static_cast<double>(n_mean);
    e.mean_hitting_time = tau_sum / static_cast<double>(n_tau);
    if (n_var >= 2) {
        const double m = sum_var / static_cast<double>(n_var);
        double ss = 0.0;
        for (std::size_t k = 0; k < K_var; ++k)
            if (ok[k])
                ss += (samples[k] - m) * (samples[k] - m);
        e.variance = ss / static_cast<double>(n_var - 1);
    }
    e.rel_error = e.mean > 0.0 ? std::sqrt(e.variance / static_cast<double>(e.K)) / e.mean
                               : std::numeric_limits<double>::infinity();
    const double half = 1.96 * std::sqrt(e.variance) / std::sqrt(static_cast<double>(e.K));
    e.ci_lo = e.mean - half;
    e.ci_hi = e.mean + half;
    e.reliable = static_cast<double>(e.truncated_count) <= 0.01 * static_cast<double>(total);
    return e;
}

Estimate estimate_psi(const DynamicsConfig& cfg, const Control& ctrl, std::size_t K, std::size_t K_var,
                      std::uint64_t seed, unsigned threads)
{
    if (K < 2)
        throw InputError("estimate_psi: K must be >= 2");
    if (K_var == 0)
        K_var = K;
    SimOptions opts;
    opts.gradients = false;
    auto recs = simulate_batch(cfg, ctrl, std::max(K, K_var), seed, opts, threads);
    return estimate_from_records(recs, K, K_var, cfg.dt);
}

double l2_from_records(const std::vector<TrajectoryRecord>& records)
{
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& r : records)
        if (!r.truncated) {
            s += r.ref_sq_error;
            ++n;
        }
    if (n == 0)
        throw EstimationFailed("l2 error: every trajectory was truncated");
    return s / static_cast<double>(n);
}

double l2_error(const DynamicsConfig& cfg, const Control& ctrl, const HjbSolution& ref, std::size_t K,
                std::uint64_t seed, unsigned threads)
{
    require_dim(ref.dim(), cfg.dim(), "l2_error reference");
    ReferenceControl rc(std::shared_ptr<const HjbSolution>(&ref, [](const HjbSolution*) {}));
    SimOptions opts;
    opts.gradients = false;
    opts.reference = &rc;
    return l2_from_records(simulate_batch(cfg, ctrl, K, seed, opts, threads));
}

}  // namespace sdeis
