#include "sdeis/soc.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>

#include "sdeis/parallel.hpp"
#include "sdeis/rng.hpp"

namespace sdeis {

AdamState::AdamState(std::size_t p, double lr_)
    : m(Vec::Zero(static_cast<Eigen::Index>(p))), v(Vec::Zero(static_cast<Eigen::Index>(p))), lr(lr_)
{
    if (!(lr > 0.0))
        throw InputError("adam: learning rate must be > 0");
}

bool adam_step(AdamState& s, ConstSpan grad, Span params)
{
    require_dim(grad.size(), params.size(), "adam_step");
    require_dim(static_cast<std::size_t>(s.m.size()), params.size(), "adam_step state");
    for (double g : grad)
        if (!std::isfinite(g))
            return false;
    ++s.t;
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        s.m[k] = s.beta1 * s.m[k] + (1.0 - s.beta1) * grad[i];
        s.v[k] = s.beta2 * s.v[k] + (1.0 - s.beta2) * grad[i] * grad[i];
        const double mh = s.m[k] / c1;
        const double vh = s.v[k] / c2;
        params[i] -= s.lr * mh / (std::sqrt(vh) + s.eps);
    }
    return true;
}

// ---------------------------------------------------------------------------

GradientEstimate gradient_from_records(const std::vector<TrajectoryRecord>& records, std::size_t p)
{
    GradientEstimate g;
    const auto P = static_cast<Eigen::Index>(p);
    g.grad = Vec::Zero(P);
    Vec sq = Vec::Zero(P);
    double J = 0.0, J2 = 0.0, tau = 0.0;
    Vec term(P);
    for (const auto& r : records) {
        if (r.truncated) {
            ++g.truncated;
            continue;
        }
        ++g.used;
        const double w = r.cost();
        if (r.grad_accum_a.size() == P)
            term = r.grad_accum_a + w * r.grad_accum_b;
        else
            term.setZero();
        g.grad += term;
        sq += term.cwiseProduct(term);
        J += w;
        J2 += w * w;
        tau += r.hitting_time;
        g.max_hitting_time = std::max(g.max_hitting_time, r.hitting_time);
    }
    if (g.used == 0)
        throw GradientUnavailable("every trajectory of the batch was truncated");
    const double n = static_cast<double>(g.used);
    g.grad /= n;
    g.J = J / n;
    g.mean_hitting_time = tau / n;
    if (g.used >= 2) {
        Vec var = ((sq - n * g.grad.cwiseProduct(g.grad)) / (n - 1.0)).cwiseMax(0.0);
        g.std_error = (var / n).cwiseSqrt();
        g.J_std_error = std::sqrt(std::max(0.0, (J2 - n * g.J * g.J) / (n - 1.0)) / n);
    } else {
        g.std_error = Vec::Zero(P);
    }
    return g;
}

GradientEstimate grad_cost(const DynamicsConfig& cfg, const Control& ctrl, std::size_t K, std::uint64_t seed,
                           unsigned threads)
{
    auto recs = simulate_batch(cfg, ctrl, K, seed, {}, threads);
    return gradient_from_records(recs, ctrl.param_count());
}

GradientEstimate grad_cost_fixed_horizon(const DynamicsConfig& cfg, const Control& ctrl, std::uint64_t N,
                                         std::size_t K, std::uint64_t seed, unsigned threads)
{
    SimOptions opts;
    opts.fixed_horizon = N;
    auto recs = simulate_batch(cfg, ctrl, K, seed, opts, threads);
    return gradient_from_records(recs, ctrl.param_count());
}

// ---------------------------------------------------------------------------

GaussianFit fit_init_gaussian(GaussianAnsatz& ansatz, const Control& target, const std::vector<Vec>& points)
{
    const std::size_t d = ansatz.dim();
    const std::size_t p = ansatz.size();
    require_dim(target.dim(), d, "fit_init_gaussian target");
    if (points.empty())
        throw InputError("fit_init_gaussian: no sample points");
    const auto rows = static_cast<Eigen::Index>(points.size() * d);
    Mat Phi(rows, static_cast<Eigen::Index>(p));
    Vec y(rows);
    std::vector<double> basis(p * d);
    Vec t(static_cast<Eigen::Index>(d));
    Scratch scratch;
    for (std::size_t j = 0; j < points.size(); ++j) {
        require_dim(static_cast<std::size_t>(points[j].size()), d, "fit_init_gaussian point");
        ansatz.basis_gradients(as_span(points[j]), basis);
        target.eval(as_span(points[j]), as_span(t), scratch);
        for (std::size_t k = 0; k < d; ++k) {
            const auto r = static_cast<Eigen::Index>(j * d + k);
            y[r] = t[static_cast<Eigen::Index>(k)];
            for (std::size_t i = 0; i < p; ++i)
                Phi(r, static_cast<Eigen::Index>(i)) = basis[i * d + k];
        }
    }

    GaussianFit fit;
    Eigen::ColPivHouseholderQR<Mat> qr(Phi);
    if (static_cast<std::size_t>(qr.rank()) < p) {
        fit.rank_deficient = true;
        fit.theta = Eigen::CompleteOrthogonalDecomposition<Mat>(Phi).solve(y);
    } else {
        Mat G = Phi.transpose() * Phi;
        G.diagonal().array() += 1e-10;
        fit.theta = G.ldlt().solve(Phi.transpose() * y);
    }
    fit.residual_rms = std::sqrt((Phi * fit.theta - y).squaredNorm() / static_cast<double>(rows));
    ansatz.set_params(as_span(fit.theta));
    return fit;
}

std::vector<Vec> uniform_points(const Box& domain, std::size_t n, std::uint64_t seed)
{
    RngStream rng(seed, 0);
    std::vector<Vec> pts(n, Vec(static_cast<Eigen::Index>(domain.dim())));
    for (auto& x : pts)
        for (Eigen::Index i = 0; i < x.size(); ++i)
            x[i] = domain.lo[i] + (domain.hi[i] - domain.lo[i]) * rng.uniform();
    return pts;
}

std::vector<Vec> bump_points(const std::vector<Vec>& centers, const std::vector<Mat>& covs, std::size_t n,
                             std::uint64_t seed)
{
    if (centers.empty() || centers.size() != covs.size())
        throw InputError("bump sampler: needs matching, non-empty centers and covariances");
    std::vector<Mat> chol;
    chol.reserve(covs.size());
    for (const auto& c : covs) {
        Eigen::LLT<Mat> llt(c);
        if (llt.info() != Eigen::Success)
            throw InputError("bump sampler: covariance is not positive definite");
        chol.push_back(llt.matrixL());
    }
    RngStream rng(seed, 0);
    std::uniform_int_distribution<std::size_t> pick(0, centers.size() - 1);
    std::vector<Vec> pts(n);
    for (auto& x : pts) {
        const std::size_t m = pick(rng.engine());
        Vec z(centers[m].size());
        rng.fill_normal(as_span(z));
        x = centers[m] + chol[m] * z;
    }
    return pts;
}

namespace {

struct LossGrad
{
    double loss;
    Vec grad;
};

constexpr std::size_t kFitChunks = 16;

LossGrad fit_loss(const FeedForwardNet& net, const std::vector<Vec>& pts, const std::vector<Vec>& targets,
                  bool want_grad, unsigned threads)
{
    const std::size_t m = pts.size();
    const std::size_t p = net.param_count();
    const std::size_t d = net.dim();
    const std::size_t chunks = std::min(kFitChunks, m);
    std::vector<double> losses(chunks, 0.0);
    std::vector<Vec> grads(chunks);
    parallel_for(chunks, threads, [&](std::size_t c) {
        Scratch s;
        Vec u(static_cast<Eigen::Index>(d)), cot(static_cast<Eigen::Index>(d));
        Vec g = want_grad ? Vec::Zero(static_cast<Eigen::Index>(p)) : Vec();
        double l = 0.0;
        for (std::size_t j = c * m / chunks; j < (c + 1) * m / chunks; ++j) {
            net.eval(as_span(pts[j]), as_span(u), s);
            cot = u - targets[j];
            l += cot.squaredNorm();
            if (want_grad) {
                cot *= 2.0;
                net.accumulate_vjp(s, as_span(cot), as_span(g));
            }
        }
        losses[c] = l;
        grads[c] = std::move(g);
    });
    LossGrad out{0.0, want_grad ? Vec::Zero(static_cast<Eigen::Index>(p)) : Vec()};
    for (std::size_t c = 0; c < chunks; ++c) {
        out.loss += losses[c];
        if (want_grad)
            out.grad += grads[c];
    }
    out.loss /= static_cast<double>(m);
    if (want_grad)
        out.grad /= static_cast<double>(m);
    return out;
}

std::vector<Vec> eval_targets(const Control& target, const std::vector<Vec>& pts)
{
    std::vector<Vec> t(pts.size());
    Scratch s;
    for (std::size_t j = 0; j < pts.size(); ++j) {
        t[j].resize(pts[j].size());
        target.eval(as_span(pts[j]), as_span(t[j]), s);
    }
    return t;
}

void write_json(const nlohmann::json& j, const std::filesystem::path& path)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out)
        throw InputError("cannot open " + path.string() + " for writing");
    out << j.dump(1) << '\n';
}

}  // namespace

NetFitResult fit_init_net(FeedForwardNet& net, const Control& target, const NetFitOptions& opt)
{
    require_dim(target.dim(), net.dim(), "fit_init_net target");
    if (opt.points < 1)
        throw InputError("fit_init_net: needs at least one sample point");
    std::vector<Vec> pts, tv;
    auto draw = [&](std::uint64_t salt) {
        if (opt.sampler == FitSampler::UniformOnce)
            pts = uniform_points(opt.domain, opt.points, derive_seed(opt.seed, salt));
        else
            pts = bump_points(opt.centers, opt.covariances, opt.points, derive_seed(opt.seed, salt));
        tv = eval_targets(target, pts);
    };
    draw(0);

    NetFitResult res;
    AdamState adam(net.param_count(), opt.lr);
    Vec theta = to_vec(net.params());
    for (std::size_t step = 0; step < opt.steps; ++step) {
        if (opt.sampler == FitSampler::BumpGaussian && step > 0)
            draw(step);
        auto lg = fit_loss(net, pts, tv, true, opt.threads);
        if (!std::isfinite(lg.loss) || !adam_step(adam, as_span(lg.grad), as_span(theta))) {
            if (!opt.checkpoint_on_failure.empty())
                write_json(net.to_json(), opt.checkpoint_on_failure);
            throw NumericalBlowup(step);
        }
        res.losses.push_back(lg.loss);
        net.set_params(as_span(theta));
    }
    res.final_loss = fit_loss(net, pts, tv, false, opt.threads).loss;
    res.initial_loss = res.losses.empty() ? res.final_loss : res.losses.front();
    return res;
}

// ---------------------------------------------------------------------------

std::string RunRecord::csv_header()
{
    return "step,J,psi_hat,rel_error,l2,mean_hitting_time,max_hitting_time,truncated,wall_seconds,grad_norm,skipped";
}

std::string RunRecord::csv_row(const RunRow& r)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%zu,%.6f,%.17g,%d", r.step, r.J, r.psi,
                  r.rel_error, r.l2, r.mean_hitting_time, r.max_hitting_time, r.truncated, r.wall_seconds,
                  r.grad_norm, r.skipped ? 1 : 0);
    return buf;
}

void TrainConfig::validate() const
{
    dynamics.validate();
    if (batch < 1)
        throw InputError("train: batch size must be >= 1");
    if (!(lr > 0.0))
        throw InputError("train: learning rate must be > 0");
    if (stop == StopRule::RelativeChange && (!(tol > 0.0) || window < 1))
        throw InputError("train: relative-change stopping needs tol > 0 and window >= 1");
}

std::vector<double> window_means(const std::vector<double>& values, std::size_t w)
{
    std::vector<double> out;
    if (w == 0)
        return out;
    for (std::size_t s = 0; s + w <= values.size(); s += w) {
        double a = 0.0;
        for (std::size_t i = s; i < s + w; ++i)
            a += values[i];
        out.push_back(a / static_cast<double>(w));
    }
    return out;
}

TrainResult train(const TrainConfig& tc, const Control& initial, const HjbSolution* ref)
{
    tc.validate();
    if (!initial.parametric())
        throw InputError("train: control has no parameters");
    require_dim(initial.dim(), tc.dynamics.dim(), "train control");

    TrainResult out;
    out.control = ControlPtr(initial.clone());
    Control& ctrl = *out.control;
    const std::size_t p = ctrl.param_count();
    AdamState adam(p, tc.lr);
    Vec theta = to_vec(ctrl.params());

    std::optional<ReferenceControl> refctl;
    SimOptions opts;
    if (ref) {
        refctl.emplace(std::shared_ptr<const HjbSolution>(ref, [](const HjbSolution*) {}));
        opts.reference = &*refctl;
    }

    std::ofstream csv;
    if (!tc.record_csv.empty()) {
        if (tc.record_csv.has_parent_path())
            std::filesystem::create_directories(tc.record_csv.parent_path());
        csv.open(tc.record_csv);
        if (!csv)
            throw InputError("cannot open " + tc.record_csv.string() + " for writing");
        csv << "# schema_version=1\n" << RunRecord::csv_header() << '\n' << std::flush;
    }

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> Js;
    for (std::size_t step = 0; step < tc.max_steps; ++step) {
        std::vector<TrajectoryRecord> recs;
        GradientEstimate g;
        auto run = [&](std::uint64_t seed) {
            recs = simulate_batch(tc.dynamics, ctrl, tc.batch, seed, opts, tc.threads);
            g = gradient_from_records(recs, p);
        };
        try {
            run(derive_seed(tc.seed, step));
        } catch (const GradientUnavailable&) {
            if (step == 0)
                throw GradientUnavailable(
                    "train: every trajectory of the first batch was truncated; initialize the control "
                    "(for example from metadynamics) or raise max_steps");
            run(derive_seed(tc.seed, step | (std::uint64_t{1} << 63)));
        }

        RunRow row;
        row.step = step;
        row.J = g.J;
        row.truncated = g.truncated;
        row.mean_hitting_time = g.mean_hitting_time;
        row.max_hitting_time = g.max_hitting_time;
        auto est = estimate_from_records(recs, recs.size(), recs.size(), tc.dynamics.dt);
        row.psi = est.mean;
        row.rel_error = est.rel_error;
        row.l2 = ref ? l2_from_records(recs) : std::numeric_limits<double>::quiet_NaN();
        row.grad_norm = g.grad.norm();

        if (2 * g.truncated > tc.batch) {
            row.skipped = true;
        } else if (!adam_step(adam, as_span(g.grad), as_span(theta))) {
            row.skipped = true;
        } else {
            ctrl.set_params(as_span(theta));
        }
        if (row.skipped)
            ++out.record.skipped_steps;
        row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.record.rows.push_back(row);
        Js.push_back(row.J);

        if (csv.is_open())
            csv << RunRecord::csv_row(row) << '\n' << std::flush;
        if (tc.progress_every && (step % tc.progress_every == 0))
            std::printf("step %zu  J %.6g  psi %.6g  RE %.4g  L2 %.4g  tau %.4g  trunc %zu%s\n", step, row.J,
                        row.psi, row.rel_error, row.l2, row.mean_hitting_time, row.truncated,
                        row.skipped ? "  (skipped)" : "");
        if (tc.checkpoint_every && !tc.checkpoint_dir.empty() && (step + 1) % tc.checkpoint_every == 0)
            write_json(ctrl.to_json(), tc.checkpoint_dir / ("control_step_" + std::to_string(step + 1) + ".json"));

        if (tc.observer && !tc.observer(row, ctrl)) {
            out.record.stop_reason = "observer";
            break;
        }
        if (tc.stop == StopRule::RelativeChange && Js.size() >= 2 * tc.window) {
            double a = 0.0, b = 0.0;
            for (std::size_t i = Js.size() - 2 * tc.window; i < Js.size() - tc.window; ++i)
                a += Js[i];
            for (std::size_t i = Js.size() - tc.window; i < Js.size(); ++i)
                b += Js[i];
            if (std::abs(b - a) < tc.tol * std::abs(a)) {
                out.record.stop_reason = "relative_change";
                break;
            }
        }
    }
    if (out.record.stop_reason.empty())
        out.record.stop_reason = "max_steps";
    if (!tc.checkpoint_dir.empty())
        write_json(ctrl.to_json(), tc.checkpoint_dir / "control_final.json");
    return out;
}

}  // namespace sdeis
