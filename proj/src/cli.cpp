#include "sdeis/cli.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

#include "json_util.hpp"
#include "sdeis/parallel.hpp"
#include "sdeis/rng.hpp"

#ifndef SDEIS_VERSION
#define SDEIS_VERSION "0.0.0"
#endif

namespace sdeis::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Sub-seed salts per pipeline stage.
constexpr std::uint64_t kSeedMeta = 1;
constexpr std::uint64_t kSeedFit = 2;
constexpr std::uint64_t kSeedTrain = 3;
constexpr std::uint64_t kSeedEstimate = 4;
constexpr std::uint64_t kSeedNetInit = 5;

// ---------------------------------------------------------------------------
// strict YAML access

/// One mapping of the config; every key read is remembered so finish() can reject the rest.
class Section
{
  public:
    Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path))
    {
        if (node_ && !node_.IsNull() && !node_.IsMap())
            throw ConfigError(path_, "expected a mapping");
    }

    const std::string& path() const { return path_; }

    bool has(const std::string& key)
    {
        used_.insert(key);
        const YAML::Node& n = node_;
        return n && n.IsMap() && n[key] && !n[key].IsNull();
    }

    std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

    template <class T>
    T get(const std::string& k, T fallback)
    {
        return has(k) ? convert<T>(at(k), key(k)) : fallback;
    }

    template <class T>
    T require(const std::string& k)
    {
        if (!has(k))
            throw ConfigError(key(k), "required key is missing");
        return convert<T>(at(k), key(k));
    }

    /// Scalar (broadcast to d) or list; list items may be "v*n" for n copies of v.
    Vec vec(const std::string& k, std::size_t d)
    {
        if (!has(k))
            throw ConfigError(key(k), "required key is missing");
        auto v = expand(at(k), key(k));
        if (v.size() == 1 && d > 1)
            v.assign(d, v[0]);
        if (d != 0 && v.size() != d)
            throw ConfigError(key(k), "expected " + std::to_string(d) + " values, got " + std::to_string(v.size()));
        return to_vec(v);
    }

    std::vector<double> list(const std::string& k)
    {
        return has(k) ? expand(at(k), key(k)) : std::vector<double>{};
    }

    template <class T>
    std::vector<T> items(const std::string& k)
    {
        std::vector<T> out;
        if (!has(k))
            return out;
        const auto n = at(k);
        if (!n.IsSequence())
            throw ConfigError(key(k), "expected a list");
        for (std::size_t i = 0; i < n.size(); ++i)
            out.push_back(convert<T>(n[i], key(k) + "[" + std::to_string(i) + "]"));
        return out;
    }

    Section child(const std::string& k)
    {
        used_.insert(k);
        return Section(node_ && node_.IsMap() ? at(k) : YAML::Node(), key(k));
    }

    YAML::Node raw(const std::string& k)
    {
        used_.insert(k);
        return at(k);
    }

    void finish() const
    {
        if (!node_ || !node_.IsMap())
            return;
        for (const auto& kv : node_) {
            const auto k = kv.first.as<std::string>();
            if (!used_.count(k))
                throw ConfigError(key(k), "unknown key");
        }
    }

  private:
    YAML::Node at(const std::string& k) const
    {
        const YAML::Node& n = node_;
        return n[k];
    }

    template <class T>
    static T convert(const YAML::Node& n, const std::string& where)
    {
        if (!n.IsScalar())
            throw ConfigError(where, "expected a scalar");
        try {
            if constexpr (std::is_same_v<T, bool>) {
                return n.as<bool>();
            } else if constexpr (std::is_integral_v<T>) {
                const auto s = n.as<std::string>();
                if (!s.empty() && s[0] == '-')
                    throw ConfigError(where, "expected a non-negative integer");
                return n.as<T>();
            } else {
                return n.as<T>();
            }
        } catch (const YAML::BadConversion&) {
            throw ConfigError(where, "cannot read '" + n.as<std::string>() + "'");
        }
    }

    static std::vector<double> expand(const YAML::Node& n, const std::string& where)
    {
        std::vector<double> out;
        auto one = [&](const YAML::Node& item, const std::string& at) {
            const auto s = item.as<std::string>();
            const auto star = s.find('*');
            if (star == std::string::npos) {
                out.push_back(convert<double>(item, at));
                return;
            }
            try {
                std::size_t used = 0;
                const double v = std::stod(s.substr(0, star), &used);
                const auto count = std::stoul(s.substr(star + 1));
                if (used != star)
                    throw std::invalid_argument(s);
                out.insert(out.end(), count, v);
            } catch (const std::exception&) {
                throw ConfigError(at, "cannot read '" + s + "' as value*count");
            }
        };
        if (n.IsScalar()) {
            one(n, where);
        } else if (n.IsSequence()) {
            for (std::size_t i = 0; i < n.size(); ++i) {
                if (!n[i].IsScalar())
                    throw ConfigError(where + "[" + std::to_string(i) + "]", "expected a number");
                one(n[i], where + "[" + std::to_string(i) + "]");
            }
        } else {
            throw ConfigError(where, "expected a number or a list of numbers");
        }
        return out;
    }

    YAML::Node node_;
    std::string path_;
    std::set<std::string> used_;
};

template <class E>
E pick(Section& s, const std::string& k, const std::vector<std::pair<std::string, E>>& options, E fallback)
{
    if (!s.has(k))
        return fallback;
    const auto v = s.get<std::string>(k, "");
    std::string allowed;
    for (const auto& [name, e] : options) {
        if (name == v)
            return e;
        allowed += (allowed.empty() ? "" : ", ") + name;
    }
    throw ConfigError(s.key(k), "'" + v + "' is not one of " + allowed);
}

Box read_box(Section s, std::size_t d)
{
    auto lo = s.vec("lo", d);
    Box b(std::move(lo), s.vec("hi", d));
    s.finish();
    return b;
}

fs::path resolve(const fs::path& base, const fs::path& p)
{
    return p.empty() || p.is_absolute() || base.empty() ? p : base / p;
}

}  // namespace

// ---------------------------------------------------------------------------

ExperimentConfig parse_config(const std::string& text, const fs::path& base_dir)
{
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ConfigError("", std::string("malformed config: ") + e.what());
    }
    Section top(root, "");
    ExperimentConfig c;
    c.base_dir = base_dir;
    c.seed = top.get<std::uint64_t>("seed", 0);

    {
        auto s = top.child("potential");
        const auto alpha = s.list("alpha");
        if (alpha.empty())
            throw ConfigError("potential.alpha", "required key is missing");
        c.dynamics.potential = PotentialSpec(alpha);
        s.finish();
    }
    const std::size_t d = c.dynamics.dim();

    {
        auto s = top.child("dynamics");
        auto& dy = c.dynamics;
        dy.beta = s.get("beta", 1.0);
        dy.dt = s.get("dt", 1e-3);
        dy.x0 = s.vec("x0", d);
        dy.target = read_box(s.child("target"), d);
        dy.max_steps = s.get<std::uint64_t>("max_steps", 1'000'000);
        dy.running_cost = pick<RunningCost>(s, "running_cost", {{"one", RunningCost::One}, {"zero", RunningCost::Zero}},
                                            RunningCost::One);
        dy.terminal_cost = pick<TerminalCost>(s, "terminal_cost", {{"zero", TerminalCost::Zero}}, TerminalCost::Zero);
        s.finish();
        try {
            dy.validate();
        } catch (const InputError& e) {
            throw ConfigError("dynamics", e.what());
        }
    }

    if (top.has("hjb")) {
        auto s = top.child("hjb");
        HjbSection h;
        h.domain = read_box(s.child("domain"), d);
        if (s.has("h"))
            h.h = s.list("h");
        h.scheme = pick<DriftScheme>(s, "scheme", {{"central", DriftScheme::Central}, {"upwind", DriftScheme::Upwind}},
                                     DriftScheme::Central);
        h.upwind_fallback = s.get("upwind_fallback", true);
        h.alpha_sweep = s.list("alpha_sweep");
        s.finish();
        c.hjb = h;
    }

    if (top.has("metadynamics")) {
        auto s = top.child("metadynamics");
        MetaSection m;
        m.mode = pick<MetaSection::Mode>(
            s, "mode", {{"single", MetaSection::Mode::Single}, {"cumulative", MetaSection::Mode::Cumulative}},
            MetaSection::Mode::Single);
        auto& mc = m.config;
        mc.delta = s.get("delta", 0.2);
        mc.eta = s.get("eta", 1.0);
        mc.k_meta = s.get<std::size_t>("k_meta", 1);
        mc.scale_r = s.get("scale_r", 0.95);
        if (s.has("cv_projection"))
            mc.cv_projection = s.items<std::size_t>("cv_projection");
        const std::size_t sd = mc.cv_projection ? mc.cv_projection->size() : d;
        const auto sdi = static_cast<Eigen::Index>(sd);
        if (s.has("cov")) {
            if (s.has("variance"))
                throw ConfigError(s.key("cov"), "give either cov or variance, not both");
            auto rows = s.raw("cov");
            if (!rows.IsSequence() || rows.size() != sd)
                throw ConfigError(s.key("cov"), "expected " + std::to_string(sd) + " rows");
            mc.cov = Mat(sdi, sdi);
            for (std::size_t i = 0; i < sd; ++i) {
                YAML::Node holder;
                holder["row"] = rows[i];
                Section r(holder, s.key("cov") + "[" + std::to_string(i) + "]");
                mc.cov.row(static_cast<Eigen::Index>(i)) = r.vec("row", sd).transpose();
            }
        } else {
            mc.cov = s.get("variance", 0.5) * Mat::Identity(sdi, sdi);
        }
        s.finish();
        c.meta = m;
    }

    {
        auto s = top.child("control");
        auto& k = c.control;
        k.kind = pick<ControlSection::Kind>(s, "kind",
                                            {{"zero", ControlSection::Kind::Zero},
                                             {"network", ControlSection::Kind::Network},
                                             {"gaussian", ControlSection::Kind::Gaussian},
                                             {"bias", ControlSection::Kind::Bias},
                                             {"reference", ControlSection::Kind::Reference},
                                             {"file", ControlSection::Kind::File}},
                                            ControlSection::Kind::Zero);
        k.init = pick<ControlSection::Init>(s, "init",
                                            {{"zero", ControlSection::Init::Zero},
                                             {"random", ControlSection::Init::Random},
                                             {"metadynamics", ControlSection::Init::Metadynamics},
                                             {"file", ControlSection::Init::File}},
                                            ControlSection::Init::Zero);
        if (s.has("hidden"))
            k.hidden = s.items<std::size_t>("hidden");
        k.centers_per_axis = s.get<std::size_t>("centers_per_axis", 50);
        k.centers_lo = s.get("centers_lo", -3.0);
        k.centers_hi = s.get("centers_hi", 3.0);
        k.variance = s.get("variance", 0.5);
        k.file = resolve(base_dir, s.get<std::string>("file", ""));
        s.finish();
        using K = ControlSection::Kind;
        const bool needs_file = k.kind == K::Bias || k.kind == K::Reference || k.kind == K::File ||
                                ((k.kind == K::Network || k.kind == K::Gaussian) && k.init == ControlSection::Init::File);
        if (needs_file && k.file.empty())
            throw ConfigError("control.file", "required for this control kind or init");
        if (k.kind == K::Gaussian && k.init == ControlSection::Init::Random)
            throw ConfigError("control.init", "random initialization applies to networks only");
        if (k.init == ControlSection::Init::Metadynamics && !c.meta)
            throw ConfigError("control.init", "metadynamics initialization needs a metadynamics section");
    }

    {
        auto s = top.child("fit");
        auto& f = c.fit;
        f.sampler = pick<FitSampler>(s, "sampler", {{"uniform", FitSampler::UniformOnce}, {"bump", FitSampler::BumpGaussian}},
                                     FitSampler::UniformOnce);
        f.points = s.get<std::size_t>("points", 1000);
        f.steps = s.get<std::size_t>("steps", 1000);
        f.lr = s.get("lr", 0.01);
        if (s.has("domain"))
            f.domain = read_box(s.child("domain"), d);
        s.finish();
    }

    {
        auto s = top.child("training");
        auto& t = c.training;
        t.batch = s.get<std::size_t>("batch", 1000);
        t.steps = s.get<std::size_t>("steps", 1000);
        t.lr = s.get("lr", 0.01);
        t.stop = pick<StopRule>(s, "stop", {{"max_steps", StopRule::MaxSteps}, {"relative_change", StopRule::RelativeChange}},
                                StopRule::MaxSteps);
        t.tol = s.get("tol", 1e-3);
        t.window = s.get<std::size_t>("window", 100);
        t.checkpoint_every = s.get<std::size_t>("checkpoint_every", 0);
        t.progress_every = s.get<std::size_t>("progress_every", 0);
        t.reference = resolve(base_dir, s.get<std::string>("reference", ""));
        s.finish();
    }

    {
        auto s = top.child("estimation");
        c.estimation.K = s.get<std::size_t>("K", 1000);
        c.estimation.K_var = s.get<std::size_t>("K_var", 0);
        s.finish();
        if (c.estimation.K < 2)
            throw ConfigError("estimation.K", "must be >= 2");
    }

    {
        auto s = top.child("compare");
        c.compare.methods = s.items<std::string>("methods");
        c.compare.alpha_sweep = s.list("alpha_sweep");
        c.compare.reference = s.get<std::string>("reference", c.compare.reference);
        for (std::size_t i = 0; i < c.compare.methods.size(); ++i) {
            static const std::set<std::string> known{"mc", "metadynamics", "nn_init", "optimal", "control"};
            if (!known.count(c.compare.methods[i]))
                throw ConfigError("compare.methods[" + std::to_string(i) + "]",
                                  "unknown method '" + c.compare.methods[i] +
                                      "' (mc, metadynamics, nn_init, optimal, control)");
        }
        s.finish();
    }

    top.finish();
    return c;
}

ExperimentConfig load_config(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("", "cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.parent_path());
}

std::string sha256_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw InputError("cannot open " + path.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0)
        EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), md, &len);
    std::string hex;
    char two[3];
    for (unsigned i = 0; i < len; ++i) {
        std::snprintf(two, sizeof two, "%02x", md[i]);
        hex += two;
    }
    return hex;
}

std::string format_alpha(double a)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", a);
    return buf;
}

// ---------------------------------------------------------------------------

namespace {

struct Context
{
    ExperimentConfig cfg;
    RunOptions opts;
    std::uint64_t seed = 0;
    std::vector<fs::path> artifacts;  // relative to out_dir
    std::vector<fs::path> inputs;

    fs::path out(const std::string& name) const { return opts.out_dir / name; }

    void produced(const std::string& name) { artifacts.emplace_back(name); }

    void write_json(const std::string& name, const json& j)
    {
        const auto p = out(name);
        if (p.has_parent_path())
            fs::create_directories(p.parent_path());
        std::ofstream f(p);
        if (!f)
            throw InputError("cannot open " + p.string() + " for writing");
        f << j.dump(1) << '\n';
        produced(name);
    }

    void write_text(const std::string& name, const std::string& text)
    {
        std::ofstream f(out(name));
        if (!f)
            throw InputError("cannot open " + out(name).string() + " for writing");
        f << text;
        produced(name);
    }

    void used(const fs::path& p)
    {
        if (std::find(inputs.begin(), inputs.end(), p) == inputs.end())
            inputs.push_back(p);
    }
};

DynamicsConfig with_alpha(const DynamicsConfig& c, double a)
{
    DynamicsConfig out = c;
    out.potential = PotentialSpec(std::vector<double>(c.dim(), a));
    return out;
}

json read_json_file(const fs::path& p)
{
    std::ifstream in(p);
    if (!in)
        throw InputError("cannot open " + p.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw InputError(p.string() + ": " + e.what());
    }
}

MetaResult run_metadynamics(Context& ctx, const DynamicsConfig& dyn, MetaConfig* used_cfg = nullptr)
{
    if (!ctx.cfg.meta)
        throw ConfigError("metadynamics", "section is required for this command");
    MetaConfig m = ctx.cfg.meta->config;
    m.dynamics = dyn;
    m.seed = derive_seed(ctx.seed, kSeedMeta);
    try {
        m.validate();
    } catch (const InputError& e) {
        throw ConfigError("metadynamics", e.what());
    }
    auto res = ctx.cfg.meta->mode == MetaSection::Mode::Single ? metadynamics_single(m) : metadynamics_cumulative(m);
    if (!res.complete)
        std::cerr << "warning: a metadynamics trajectory reached max_steps before the target\n";
    if (used_cfg)
        *used_cfg = m;
    return res;
}

/// Fit sample centers in the full state space. Bumps living on collective variables are
/// placed at x0 in the remaining coordinates, with unit variance there.
void bump_measure(const MetaResult& meta, const MetaConfig& m, std::vector<Vec>& centers, std::vector<Mat>& covs)
{
    const auto d = static_cast<Eigen::Index>(m.dynamics.dim());
    for (const auto& b : meta.bias.bumps()) {
        if (!m.cv_projection) {
            centers.push_back(b.mean());
            covs.push_back(b.covariance());
            continue;
        }
        Vec c = m.dynamics.x0;
        Mat s = Mat::Identity(d, d);
        const auto& proj = *m.cv_projection;
        for (std::size_t i = 0; i < proj.size(); ++i) {
            const auto pi = static_cast<Eigen::Index>(proj[i]);
            c[pi] = b.mean()[static_cast<Eigen::Index>(i)];
            for (std::size_t j = 0; j < proj.size(); ++j)
                s(pi, static_cast<Eigen::Index>(proj[j])) = b.covariance()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
        centers.push_back(c);
        covs.push_back(s);
    }
}

struct Built
{
    ControlPtr control;
    json fit_info;  // empty unless an initialization fit ran
};

ControlPtr parametric_shell(const Context& ctx, std::size_t d)
{
    const auto& k = ctx.cfg.control;
    if (k.kind == ControlSection::Kind::Network)
        return std::make_shared<FeedForwardNet>(
            FeedForwardNet::random_init(FeedForwardNet::widths_for(d, k.hidden), derive_seed(ctx.seed, kSeedNetInit)));
    return std::make_shared<GaussianAnsatz>(
        GaussianAnsatz::on_grid(d, k.centers_lo, k.centers_hi, k.centers_per_axis, k.variance));
}

/// Fits a parametric control to the metadynamics control; writes bias.json and meta_log.csv.
json fit_to_metadynamics(Context& ctx, const DynamicsConfig& dyn, Control& ctrl, const std::string& prefix)
{
    MetaConfig m;
    auto meta = run_metadynamics(ctx, dyn, &m);
    ctx.write_json(prefix + "bias.json", meta.bias.to_json());
    write_meta_log_csv(meta, ctx.out(prefix + "meta_log.csv"));
    ctx.produced(prefix + "meta_log.csv");
    auto target = meta.control(m);
    const auto& f = ctx.cfg.fit;
    json info{{"bumps", meta.bias.size()}, {"metadynamics_complete", meta.complete}};

    auto uniform_domain = [&]() -> Box {
        if (f.domain)
            return *f.domain;
        if (ctx.cfg.hjb)
            return ctx.cfg.hjb->domain;
        throw ConfigError("fit.domain", "uniform sampling needs fit.domain (or an hjb section)");
    };
    if (auto* g = dynamic_cast<GaussianAnsatz*>(&ctrl)) {
        std::vector<Vec> pts;
        if (f.sampler == FitSampler::UniformOnce) {
            pts = uniform_points(uniform_domain(), f.points, derive_seed(ctx.seed, kSeedFit));
        } else {
            std::vector<Vec> centers;
            std::vector<Mat> covs;
            bump_measure(meta, m, centers, covs);
            pts = bump_points(centers, covs, f.points, derive_seed(ctx.seed, kSeedFit));
        }
        auto fit = fit_init_gaussian(*g, *target, pts);
        info["residual_rms"] = fit.residual_rms;
        info["rank_deficient"] = fit.rank_deficient;
    } else if (auto* net = dynamic_cast<FeedForwardNet*>(&ctrl)) {
        NetFitOptions o;
        o.sampler = f.sampler;
        o.points = f.points;
        o.steps = f.steps;
        o.lr = f.lr;
        o.seed = derive_seed(ctx.seed, kSeedFit);
        o.threads = ctx.opts.threads;
        if (f.sampler == FitSampler::UniformOnce)
            o.domain = uniform_domain();
        else
            bump_measure(meta, m, o.centers, o.covariances);
        o.checkpoint_on_failure = ctx.out(prefix + "fit_failure.json");
        auto r = fit_init_net(*net, *target, o);
        info["initial_loss"] = r.initial_loss;
        info["final_loss"] = r.final_loss;
        std::string csv = "# schema_version=1\nstep,loss\n";
        char line[64];
        for (std::size_t i = 0; i < r.losses.size(); ++i) {
            std::snprintf(line, sizeof line, "%zu,%.17g\n", i, r.losses[i]);
            csv += line;
        }
        ctx.write_text(prefix + "fit_loss.csv", csv);
    }
    return info;
}

/// The configured control, initialized as configured (no training).
Built build_control(Context& ctx, const DynamicsConfig& dyn, const std::string& prefix = "")
{
    const auto& k = ctx.cfg.control;
    const std::size_t d = dyn.dim();
    using K = ControlSection::Kind;
    using I = ControlSection::Init;
    Built b;
    switch (k.kind) {
    case K::Zero:
        b.control = std::make_shared<ZeroControl>(d);
        break;
    case K::Bias: {
        ctx.used(k.file);
        auto bias = BiasPotential::from_json(read_json_file(k.file));
        const auto& proj = ctx.cfg.meta ? ctx.cfg.meta->config.cv_projection : std::nullopt;
        b.control = proj ? lift_cv_control(bias, *proj, d, dyn.beta) : control_from_bias(bias, dyn.beta);
        break;
    }
    case K::Reference:
        ctx.used(k.file);
        b.control = std::make_shared<ReferenceControl>(
            std::make_shared<const HjbSolution>(read_solution_csv(k.file, dyn.beta)));
        break;
    case K::File:
        ctx.used(k.file);
        b.control = control_from_json(read_json_file(k.file));
        break;
    case K::Network:
    case K::Gaussian:
        if (k.init == I::File) {
            ctx.used(k.file);
            b.control = control_from_json(read_json_file(k.file));
            if (!b.control->parametric())
                throw ConfigError("control.file", "expected a parametric control");
            break;
        }
        b.control = parametric_shell(ctx, d);
        if (k.init == I::Zero) {
            if (auto* net = dynamic_cast<FeedForwardNet*>(b.control.get()))
                net->zero_output_layer();
        } else if (k.init == I::Metadynamics) {
            b.fit_info = fit_to_metadynamics(ctx, dyn, *b.control, prefix);
        }
        break;
    }
    if (b.control->dim() != d)
        throw ConfigError("control", "control dimension " + std::to_string(b.control->dim()) +
                                         " does not match the potential dimension " + std::to_string(d));
    return b;
}

void print_estimate_header()
{
    std::printf("%-14s %8s %14s %11s %14s %14s %8s %6s %10s\n", "method", "alpha", "psi_hat", "rel_error", "ci_lo",
                "ci_hi", "K", "trunc", "mean_tau");
}

void print_estimate(const std::string& method, double alpha, const Estimate& e)
{
    std::printf("%-14s %8g %14.8g %11.4g %14.8g %14.8g %8zu %6zu %10.5g%s\n", method.c_str(), alpha, e.mean,
                e.rel_error, e.ci_lo, e.ci_hi, e.K, e.truncated_count, e.mean_hitting_time,
                e.reliable ? "" : "  (unreliable)");
}

// ---------------------------------------------------------------------------

int cmd_hjb(Context& ctx)
{
    if (!ctx.cfg.hjb)
        throw ConfigError("hjb", "section is required for the hjb command");
    const auto& hs = *ctx.cfg.hjb;
    const auto& dyn = ctx.cfg.dynamics;
    std::vector<std::optional<double>> runs;
    if (hs.alpha_sweep.empty())
        runs.emplace_back();
    for (double a : hs.alpha_sweep)
        runs.emplace_back(a);

    for (const auto& a : runs) {
        HjbProblem p;
        p.potential = a ? with_alpha(dyn, *a).potential : dyn.potential;
        p.beta = dyn.beta;
        p.domain = hs.domain;
        p.target = dyn.target;
        p.running_cost = dyn.running_cost;
        p.terminal_cost = dyn.terminal_cost;
        p.h = hs.h;
        p.scheme = hs.scheme;
        p.upwind_fallback = hs.upwind_fallback;
        try {
            p.validate();
        } catch (const InputError& e) {
            throw ConfigError("hjb", e.what());
        }
        auto sol = solve_hjb(p);
        const std::string stem = a ? "hjb_alpha" + format_alpha(*a) : "hjb";
        write_solution_csv(sol, ctx.out(stem + ".csv"));
        ctx.produced(stem + ".csv");
        json j{{"schema_version", 1},
               {"alpha", p.potential.alpha()},
               {"beta", p.beta},
               {"h", p.h},
               {"nodes", sol.grid.n},
               {"scheme", sol.scheme == DriftScheme::Central ? "central" : "upwind"},
               {"upwind_fallback_used", sol.upwind_fallback_used},
               {"residual_norm", sol.residual_norm},
               {"csv", stem + ".csv"}};
        if (hs.domain.contains(as_span(dyn.x0)))
            j["psi_x0"] = sol.psi_at(as_span(dyn.x0));
        ctx.write_json(stem + ".json", j);
        std::printf("%s: psi(x0) = %.10g  residual %.3g  scheme %s%s\n", stem.c_str(),
                    j.contains("psi_x0") ? j["psi_x0"].get<double>() : std::nan(""), sol.residual_norm,
                    j["scheme"].get<std::string>().c_str(), sol.upwind_fallback_used ? " (fallback)" : "");
    }
    return kOk;
}

int cmd_meta(Context& ctx)
{
    MetaConfig m;
    auto res = run_metadynamics(ctx, ctx.cfg.dynamics, &m);
    json j = res.bias.to_json();
    ctx.write_json("bias.json", j);
    write_meta_log_csv(res, ctx.out("meta_log.csv"));
    ctx.produced("meta_log.csv");
    std::printf("metadynamics: %zu bumps from %zu trajectories%s\n", res.bias.size(), res.log.size(),
                res.complete ? "" : " (incomplete)");
    return kOk;
}

int cmd_fit(Context& ctx)
{
    const auto& k = ctx.cfg.control;
    if (k.kind != ControlSection::Kind::Network && k.kind != ControlSection::Kind::Gaussian)
        throw ConfigError("control.kind", "fit needs a network or gaussian control");
    auto ctrl = parametric_shell(ctx, ctx.cfg.dynamics.dim());
    auto info = fit_to_metadynamics(ctx, ctx.cfg.dynamics, *ctrl, "");
    ctx.write_json("control_init.json", ctrl->to_json());
    info["schema_version"] = 1;
    ctx.write_json("fit.json", info);
    std::printf("fit: %s\n", info.dump().c_str());
    return kOk;
}

TrainResult run_training(Context& ctx, const DynamicsConfig& dyn, const Control& init, const std::string& prefix,
                         bool record)
{
    const auto& t = ctx.cfg.training;
    TrainConfig tc;
    tc.dynamics = dyn;
    tc.batch = t.batch;
    tc.max_steps = t.steps;
    tc.lr = t.lr;
    tc.stop = t.stop;
    tc.tol = t.tol;
    tc.window = t.window;
    tc.checkpoint_every = t.checkpoint_every;
    tc.progress_every = t.progress_every;
    tc.seed = derive_seed(ctx.seed, kSeedTrain);
    tc.threads = ctx.opts.threads;
    if (record) {
        tc.record_csv = ctx.out(prefix + "run_record.csv");
        if (t.checkpoint_every)
            tc.checkpoint_dir = ctx.out(prefix + "checkpoints");
    }
    std::shared_ptr<const HjbSolution> ref;
    if (!t.reference.empty()) {
        ctx.used(t.reference);
        ref = std::make_shared<const HjbSolution>(read_solution_csv(t.reference, dyn.beta));
    }
    try {
        tc.validate();
    } catch (const InputError& e) {
        throw ConfigError("training", e.what());
    }
    auto r = train(tc, init, ref.get());
    if (record) {
        ctx.produced(prefix + "run_record.csv");
        if (!tc.checkpoint_dir.empty())
            for (const auto& e : fs::directory_iterator(tc.checkpoint_dir))
                ctx.produced(fs::relative(e.path(), ctx.opts.out_dir));
    }
    return r;
}

int cmd_train(Context& ctx)
{
    auto built = build_control(ctx, ctx.cfg.dynamics);
    if (!built.control->parametric())
        throw ConfigError("control.kind", "training needs a network or gaussian control");
    auto r = run_training(ctx, ctx.cfg.dynamics, *built.control, "", true);
    ctx.write_json("control_final.json", r.control->to_json());
    std::printf("train: %zu steps (%s), %zu skipped\n", r.record.rows.size(), r.record.stop_reason.c_str(),
                r.record.skipped_steps);
    if (!r.record.rows.empty()) {
        const auto& last = r.record.rows.back();
        std::printf("last step: J %.6g  psi %.6g  RE %.4g  L2 %.4g\n", last.J, last.psi, last.rel_error, last.l2);
    }
    return kOk;
}

Estimate estimate(Context& ctx, const DynamicsConfig& dyn, const Control& ctrl)
{
    return estimate_psi(dyn, ctrl, ctx.cfg.estimation.K, ctx.cfg.estimation.K_var,
                        derive_seed(ctx.seed, kSeedEstimate), ctx.opts.threads);
}

int cmd_sample(Context& ctx)
{
    auto built = build_control(ctx, ctx.cfg.dynamics);
    auto e = estimate(ctx, ctx.cfg.dynamics, *built.control);
    auto j = e.to_json();
    j["control"] = built.control->kind();
    ctx.write_json("estimate.json", j);
    ctx.write_text("estimate.csv", "# schema_version=1\n" + Estimate::csv_header() + "\n" + e.csv_row() + "\n");
    print_estimate_header();
    print_estimate(std::string(built.control->kind()), ctx.cfg.dynamics.potential.alpha().front(), e);
    return e.reliable ? kOk : kUnreliable;
}

int exit_code_for(const std::exception& e);

int cmd_compare(Context& ctx)
{
    const auto& cmp = ctx.cfg.compare;
    if (cmp.methods.empty())
        throw ConfigError("compare.methods", "list at least one method");
    std::vector<std::optional<double>> alphas;
    if (cmp.alpha_sweep.empty())
        alphas.emplace_back();
    for (double a : cmp.alpha_sweep)
        alphas.emplace_back(a);

    std::string csv = "# schema_version=1\nalpha,method,status," + Estimate::csv_header() + "\n";
    int worst = kOk;
    print_estimate_header();
    for (const auto& a : alphas) {
        const DynamicsConfig dyn = a ? with_alpha(ctx.cfg.dynamics, *a) : ctx.cfg.dynamics;
        const double shown = dyn.potential.alpha().front();
        const std::string prefix = a ? "alpha" + format_alpha(*a) + "/" : "";
        if (!prefix.empty())
            fs::create_directories(ctx.out(prefix));
        for (const auto& method : cmp.methods) {
            try {
                ControlPtr ctrl;
                if (method == "mc") {
                    ctrl = std::make_shared<ZeroControl>(dyn.dim());
                } else if (method == "metadynamics") {
                    MetaConfig m;
                    auto meta = run_metadynamics(ctx, dyn, &m);
                    ctrl = meta.control(m);
                } else if (method == "optimal") {
                    std::string name = cmp.reference;
                    const auto at = name.find("{alpha}");
                    if (at != std::string::npos)
                        name.replace(at, 7, format_alpha(shown));
                    // the hjb command writes into --out, so look there before the config directory
                    auto path = resolve(ctx.opts.out_dir, name);
                    if (!fs::exists(path))
                        path = resolve(ctx.cfg.base_dir, name);
                    if (!fs::exists(path))
                        throw ConfigError("compare.reference", "reference solution " + path.string() + " not found");
                    ctx.used(path);
                    ctrl = std::make_shared<ReferenceControl>(
                        std::make_shared<const HjbSolution>(read_solution_csv(path, dyn.beta)));
                } else if (method == "nn_init") {
                    auto net = std::make_shared<FeedForwardNet>(FeedForwardNet::random_init(
                        FeedForwardNet::widths_for(dyn.dim(), ctx.cfg.control.hidden), derive_seed(ctx.seed, kSeedNetInit)));
                    fit_to_metadynamics(ctx, dyn, *net, prefix + "nn_init_");
                    ctrl = run_training(ctx, dyn, *net, prefix + "nn_init_", true).control;
                } else {
                    ctrl = build_control(ctx, dyn, prefix).control;
                }
                auto e = estimate(ctx, dyn, *ctrl);
                print_estimate(method, shown, e);
                csv += format_alpha(shown) + "," + method + "," + (e.reliable ? "ok" : "unreliable") + "," +
                       e.csv_row() + "\n";
                if (!e.reliable)
                    worst = std::max(worst, static_cast<int>(kUnreliable));
            } catch (const std::exception& ex) {
                std::fprintf(stderr, "error: %s at alpha %g: %s\n", method.c_str(), shown, ex.what());
                std::string empty;
                for (char ch : Estimate::csv_header())
                    if (ch == ',')
                        empty += ',';
                csv += format_alpha(shown) + "," + method + ",error," + empty + "\n";
                const int code = exit_code_for(ex);
                worst = worst == kOk ? code : std::min(worst, code);
            }
        }
    }
    ctx.write_text("compare.csv", csv);
    return worst;
}

int exit_code_for(const std::exception& e)
{
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InputError*>(&e) ||
        dynamic_cast<const YAML::Exception*>(&e))
        return kConfigError;
    if (dynamic_cast<const NumericalBlowup*>(&e) || dynamic_cast<const SolverError*>(&e) ||
        dynamic_cast<const GradientUnavailable*>(&e))
        return kNumericalFailure;
    if (dynamic_cast<const EstimationFailed*>(&e))
        return kUnreliable;
    return kFailure;
}

void write_manifest(const Context& ctx, const std::string& command, int code, double seconds)
{
    json arts = json::array();
    for (const auto& a : ctx.artifacts) {
        const auto p = ctx.opts.out_dir / a;
        if (fs::exists(p))
            arts.push_back({{"path", a.generic_string()}, {"bytes", fs::file_size(p)}, {"sha256", sha256_file(p)}});
    }
    json ins = json::array();
    for (const auto& p : ctx.inputs)
        if (fs::exists(p))
            ins.push_back({{"path", p.generic_string()}, {"sha256", sha256_file(p)}});
    json cfg{{"path", ctx.opts.config_path.generic_string()}};
    if (fs::exists(ctx.opts.config_path))
        cfg["sha256"] = sha256_file(ctx.opts.config_path);
    json m{{"schema_version", 1},
           {"tool", "sdeis"},
           {"version", SDEIS_VERSION},
           {"command", command},
           {"seed", ctx.seed},
           {"config", cfg},
           {"inputs", ins},
           {"artifacts", arts},
           {"exit_code", code},
           {"wall_seconds", seconds}};
    std::ofstream f(ctx.opts.out_dir / ("manifest_" + command + ".json"));
    f << m.dump(1) << '\n';
}

}  // namespace

int run(const std::string& command, const RunOptions& opts)
{
    static const std::set<std::string> commands{"hjb", "meta", "fit", "train", "sample", "compare"};
    if (!commands.count(command)) {
        std::fprintf(stderr, "error: unknown command '%s'\n", command.c_str());
        return kConfigError;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Context ctx;
    ctx.opts = opts;
    int code = kOk;
    bool started = false;
    try {
        ctx.cfg = load_config(opts.config_path);
        ctx.seed = opts.seed.value_or(ctx.cfg.seed);
        fs::create_directories(opts.out_dir);
        started = true;
        if (opts.threads)
            set_default_threads(opts.threads);
        if (command == "hjb")
            code = cmd_hjb(ctx);
        else if (command == "meta")
            code = cmd_meta(ctx);
        else if (command == "fit")
            code = cmd_fit(ctx);
        else if (command == "train")
            code = cmd_train(ctx);
        else if (command == "sample")
            code = cmd_sample(ctx);
        else
            code = cmd_compare(ctx);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        code = exit_code_for(e);
    }
    if (started) {
        try {
            write_manifest(ctx, command, code,
                           std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        } catch (const std::exception& e) {
            std::fprintf(stderr, "error: writing manifest: %s\n", e.what());
            code = code == kOk ? kFailure : code;
        }
    }
    return code;
}

}  // namespace sdeis::cli
