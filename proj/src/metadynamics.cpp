#include "sdeis/metadynamics.hpp"

#include <cmath>
#include <cstdio>

#include "sdeis/rng.hpp"

namespace sdeis {

void MetaConfig::validate() const
{
    dynamics.validate();
    if (!(delta > 0.0))
        throw InputError("metadynamics: delta must be > 0");
    if (!(eta > 0.0))
        throw InputError("metadynamics: eta must be > 0");
    if (k_meta < 1)
        throw InputError("metadynamics: k_meta must be >= 1");
    if (k_meta > 1 && !(scale_r > 0.0 && scale_r < 1.0))
        throw InputError("metadynamics: scale_r must lie in (0,1)");
    const double ratio = delta / dynamics.dt;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio || std::round(ratio) < 1.0)
        throw InputError("metadynamics: delta must be an integer multiple of dt");
    const std::size_t s = space_dim();
    if (cv_projection) {
        std::vector<bool> seen(dynamics.dim(), false);
        for (auto k : *cv_projection) {
            if (k >= dynamics.dim() || seen[k])
                throw InputError("metadynamics: projection indices must be distinct and < d");
            seen[k] = true;
        }
    }
    if (static_cast<std::size_t>(cov.rows()) != s || static_cast<std::size_t>(cov.cols()) != s)
        throw InputError("metadynamics: covariance must be " + std::to_string(s) + "x" + std::to_string(s));
}

std::size_t MetaConfig::space_dim() const { return cv_projection ? cv_projection->size() : dynamics.dim(); }

std::uint64_t MetaConfig::steps_per_interval() const
{
    return static_cast<std::uint64_t>(std::llround(delta / dynamics.dt));
}

ControlPtr MetaResult::control(const MetaConfig& cfg) const
{
    if (cfg.cv_projection)
        return lift_cv_control(bias, *cfg.cv_projection, cfg.dynamics.dim(), cfg.dynamics.beta);
    return control_from_bias(bias, cfg.dynamics.beta);
}

namespace {

MetaTrajectoryLog run_one(const MetaConfig& cfg, BiasPotential& bias, std::size_t index, double weight)
{
    const auto& dyn = cfg.dynamics;
    const std::size_t s = cfg.space_dim();
    const auto& proj = cfg.cv_projection;
    const double inv_sigma = 1.0 / dyn.sigma();
    const std::uint64_t per = cfg.steps_per_interval();

    RngStream rng(cfg.seed, index);
    MetaTrajectoryLog log;
    log.index = index;

    Vec x = dyn.x0, next(x.size()), u(x.size()), xi(x.size()), grad(x.size());
    Vec y(static_cast<Eigen::Index>(s)), gy(static_cast<Eigen::Index>(s)), acc = Vec::Zero(static_cast<Eigen::Index>(s));
    std::uint64_t in_interval = 0;

    auto project = [&](const Vec& from, Vec& to) {
        if (proj)
            for (std::size_t i = 0; i < s; ++i)
                to[static_cast<Eigen::Index>(i)] = from[static_cast<Eigen::Index>((*proj)[i])];
        else
            to = from;
    };

    log.hit = dyn.target.contains(as_span(x));
    std::uint64_t n = 0;
    while (!log.hit && n < dyn.max_steps) {
        project(x, y);
        bias.gradient(as_span(y), as_span(gy));
        u.setZero();
        for (std::size_t i = 0; i < s; ++i) {
            const auto k = proj ? static_cast<Eigen::Index>((*proj)[i]) : static_cast<Eigen::Index>(i);
            u[k] = -inv_sigma * gy[static_cast<Eigen::Index>(i)];
        }
        rng.fill_normal(as_span(xi));
        em_step(dyn, as_span(x), as_span(u), as_span(xi), as_span(grad), as_span(next));
        ++n;
        if (!next.allFinite())
            throw NumericalBlowup(n, index);
        x.swap(next);
        if (dyn.target.contains(as_span(x))) {
            log.hit = true;
            break;
        }
        project(x, y);
        acc += y;
        if (++in_interval == per) {
            bias.add(GaussianBump(weight, acc / static_cast<double>(per), cfg.cov));
            ++log.bumps;
            acc.setZero();
            in_interval = 0;
        }
    }
    log.steps = n;
    return log;
}

}  // namespace

MetaResult metadynamics_cumulative(const MetaConfig& cfg)
{
    cfg.validate();
    MetaResult res{BiasPotential(cfg.space_dim()), {}, true};
    for (std::size_t k = 0; k < cfg.k_meta; ++k) {
        const double weight = k == 0 ? cfg.eta : cfg.eta * std::pow(cfg.scale_r, static_cast<double>(k));
        auto log = run_one(cfg, res.bias, k, weight);
        res.complete = res.complete && log.hit;
        res.log.push_back(log);
    }
    return res;
}

MetaResult metadynamics_single(const MetaConfig& cfg)
{
    MetaConfig one = cfg;
    one.k_meta = 1;
    return metadynamics_cumulative(one);
}

void write_meta_log_csv(const MetaResult& res, const std::filesystem::path& path)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f)
        throw InputError("cannot open " + path.string() + " for writing");
    std::fputs("# schema_version=1\ntrajectory,bumps,status,steps\n", f);
    for (const auto& l : res.log)
        std::fprintf(f, "%zu,%zu,%s,%llu\n", l.index, l.bumps, l.hit ? "hit" : "incomplete",
                     static_cast<unsigned long long>(l.steps));
    if (std::fclose(f) != 0)
        throw InputError("error writing " + path.string());
}

}  // namespace sdeis
