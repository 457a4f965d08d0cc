#include "sdeis/dynamics.hpp"

#include <cmath>
#include <cstdio>
#include <memory>

#include "sdeis/parallel.hpp"

namespace sdeis {

RunningCost parse_running_cost(const std::string& s)
{
    if (s == "one")
        return RunningCost::One;
    if (s == "zero")
        return RunningCost::Zero;
    throw InputError("running cost must be 'one' or 'zero', got '" + s + "'");
}

TerminalCost parse_terminal_cost(const std::string& s)
{
    if (s == "zero")
        return TerminalCost::Zero;
    throw InputError("terminal cost must be 'zero', got '" + s + "'");
}

std::string to_string(RunningCost f) { return f == RunningCost::One ? "one" : "zero"; }
std::string to_string(TerminalCost) { return "zero"; }

void DynamicsConfig::validate() const
{
    if (potential.dim() < 1)
        throw InputError("dynamics: potential not set");
    if (!(beta > 0.0))
        throw InputError("dynamics: beta must be > 0");
    if (!(dt > 0.0))
        throw InputError("dynamics: dt must be > 0");
    if (max_steps < 1)
        throw InputError("dynamics: max_steps must be >= 1");
    require_dim(static_cast<std::size_t>(x0.size()), dim(), "dynamics x0");
    require_dim(target.dim(), dim(), "dynamics target");
}

double DynamicsConfig::sigma() const { return std::sqrt(2.0 / beta); }

void em_step(const DynamicsConfig& cfg, ConstSpan x, ConstSpan u, ConstSpan xi, Span grad, Span x_next)
{
    const double sigma = cfg.sigma();
    const double sq = std::sqrt(cfg.dt);
    cfg.potential.gradient(x, grad);
    for (std::size_t i = 0; i < x.size(); ++i)
        x_next[i] = x[i] + (-grad[i] + sigma * u[i]) * cfg.dt + sigma * sq * xi[i];
}

namespace {

class PathDump
{
  public:
    PathDump(const std::filesystem::path& dir, std::uint64_t index)
    {
        if (dir.empty())
            return;
        std::filesystem::create_directories(dir);
        auto file = dir / ("path_" + std::to_string(index) + ".csv");
        f_.reset(std::fopen(file.c_str(), "w"));
        if (!f_)
            throw InputError("cannot open path dump " + file.string());
    }

    void header(std::size_t d)
    {
        if (!f_)
            return;
        std::fputs("# schema_version=1\nstep", f_.get());
        for (std::size_t i = 1; i <= d; ++i)
            std::fprintf(f_.get(), ",x_%zu", i);
        std::fputc('\n', f_.get());
    }

    void row(std::uint64_t step, ConstSpan x)
    {
        if (!f_)
            return;
        std::fprintf(f_.get(), "%llu", static_cast<unsigned long long>(step));
        for (double v : x)
            std::fprintf(f_.get(), ",%.17g", v);
        std::fputc('\n', f_.get());
    }

  private:
    struct Closer
    {
        void operator()(std::FILE* f) const { std::fclose(f); }
    };
    std::unique_ptr<std::FILE, Closer> f_;
};

}  // namespace

TrajectoryRecord simulate_trajectory(const DynamicsConfig& cfg, const Control& ctrl, RngStream& rng,
                                     const SimOptions& opts)
{
    const std::size_t d = cfg.dim();
    require_dim(ctrl.dim(), d, "simulate_trajectory control");
    require_dim(static_cast<std::size_t>(cfg.x0.size()), d, "simulate_trajectory x0");

    TrajectoryRecord rec;
    rec.index = rng.index();
    const bool zero = ctrl.is_zero();
    const bool grads = opts.gradients && ctrl.parametric();
    const std::size_t p = ctrl.param_count();
    if (grads) {
        rec.grad_accum_a = Vec::Zero(static_cast<Eigen::Index>(p));
        rec.grad_accum_b = Vec::Zero(static_cast<Eigen::Index>(p));
    }

    Vec x = cfg.x0;
    Vec next(x.size()), u = Vec::Zero(x.size()), xi(x.size()), grad(x.size()), uref(x.size());
    Vec cot(x.size()), cot_b(x.size());
    Scratch scratch, ref_scratch;
    PathDump dump(opts.path_dump_dir, rec.index);
    dump.header(d);
    dump.row(0, as_span(x));

    const double dt = cfg.dt;
    const double sq = std::sqrt(dt);
    const bool fixed = opts.fixed_horizon.has_value();
    const std::uint64_t limit = fixed ? *opts.fixed_horizon : cfg.max_steps;
    bool hit = !fixed && cfg.target.contains(as_span(x));

    std::uint64_t n = 0;
    while (!hit && n < limit) {
        if (!zero)
            ctrl.eval(as_span(x), as_span(u), scratch);
        rng.fill_normal(as_span(xi));

        if (!zero) {
            rec.stoch_integral += u.dot(xi) * sq;
            rec.quad_cost += 0.5 * u.squaredNorm() * dt;
            if (grads) {
                cot = u * dt;
                cot_b = xi * sq;
                ctrl.accumulate_vjp_pair(scratch, as_span(cot), as_span(cot_b), as_span(rec.grad_accum_a),
                                         as_span(rec.grad_accum_b));
            }
        }
        if (opts.reference) {
            opts.reference->eval(as_span(x), as_span(uref), ref_scratch);
            rec.ref_sq_error += (u - uref).squaredNorm() * dt;
        }

        em_step(cfg, as_span(x), as_span(u), as_span(xi), as_span(grad), as_span(next));
        ++n;
        if (!next.allFinite())
            throw NumericalBlowup(n, rec.index);
        x.swap(next);
        dump.row(n, as_span(x));
        if (!fixed)
            hit = cfg.target.contains(as_span(x));
    }

    if (grads)
        ctrl.flush_vjp(scratch, as_span(rec.grad_accum_a), as_span(rec.grad_accum_b));
    rec.steps = n;
    rec.hitting_time = static_cast<double>(n) * dt;
    rec.work = cfg.f_value() * static_cast<double>(n) * dt + cfg.g_value(as_span(x));
    rec.truncated = !fixed && !hit;
    rec.final_state = std::move(x);
    return rec;
}

std::vector<TrajectoryRecord> simulate_batch(const DynamicsConfig& cfg, const Control& ctrl, std::size_t K,
                                             std::uint64_t seed, const SimOptions& opts, unsigned threads)
{
    if (K < 1)
        throw InputError("simulate_batch: K must be >= 1");
    cfg.validate();
    std::vector<TrajectoryRecord> out(K);
    parallel_for(K, threads, [&](std::size_t k) {
        RngStream rng(seed, k);
        out[k] = simulate_trajectory(cfg, ctrl, rng, opts);
    });
    return out;
}

}  // namespace sdeis
