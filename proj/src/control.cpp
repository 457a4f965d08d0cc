#include "sdeis/control.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "json_util.hpp"
#include "sdeis/hjb.hpp"

namespace sdeis {

using nlohmann::json;
using RowMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using RowMapMut = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

namespace {

void ensure(AlignedBuffer& buf, std::size_t n)
{
    if (buf.size() < n)
        buf.resize(n);
}

// Steps buffered before a deferred network backward pass runs as one matrix product.
constexpr std::size_t kVjpBlock = 32;

}  // namespace

void Control::accumulate_vjp(Scratch&, ConstSpan, Span) const
{
    throw UnsupportedOperation(std::string("control '") + std::string(kind()) + "' has no parameters");
}

void Control::accumulate_vjp_pair(Scratch& scratch, ConstSpan cot_a, ConstSpan cot_b, Span accum_a,
                                  Span accum_b) const
{
    accumulate_vjp(scratch, cot_a, accum_a);
    accumulate_vjp(scratch, cot_b, accum_b);
}

void Control::set_params(ConstSpan theta)
{
    if (!theta.empty())
        throw UnsupportedOperation(std::string("control '") + std::string(kind()) + "' has no parameters");
}

Vec Control::operator()(const Vec& x) const { return control_eval(*this, x); }

Vec control_eval(const Control& c, const Vec& x)
{
    require_dim(static_cast<std::size_t>(x.size()), c.dim(), "control_eval");
    Scratch s;
    Vec out(x.size());
    c.eval(as_span(x), as_span(out), s);
    return out;
}

Vec control_param_vjp(const Control& c, const Vec& x, const Vec& cotangent)
{
    if (!c.parametric())
        throw UnsupportedOperation(std::string("control_param_vjp: control '") + std::string(c.kind()) +
                                   "' has no parameters");
    require_dim(static_cast<std::size_t>(x.size()), c.dim(), "control_param_vjp");
    require_dim(static_cast<std::size_t>(cotangent.size()), c.dim(), "control_param_vjp cotangent");
    Scratch s;
    Vec u(x.size());
    c.eval(as_span(x), as_span(u), s);
    Vec g = Vec::Zero(static_cast<Eigen::Index>(c.param_count()));
    c.accumulate_vjp(s, as_span(cotangent), as_span(g));
    return g;
}

// ---------------------------------------------------------------------------

ZeroControl::ZeroControl(std::size_t d) : d_(d)
{
    if (d_ < 1)
        throw InputError("zero control: dimension must be >= 1");
}

void ZeroControl::eval(ConstSpan x, Span out, Scratch&) const
{
    require_dim(x.size(), d_, "control_eval");
    std::fill(out.begin(), out.end(), 0.0);
}

json ZeroControl::to_json() const { return {{"kind", "zero"}, {"dim", d_}}; }

// ---------------------------------------------------------------------------

BiasControl::BiasControl(std::shared_ptr<const BiasPotential> bias, double beta)
    : bias_(std::move(bias)), beta_(beta)
{
    if (!bias_)
        throw InputError("bias control: null bias");
    if (!(beta > 0.0))
        throw InputError("bias control: beta must be > 0");
    inv_sigma_ = 1.0 / std::sqrt(2.0 / beta);
}

void BiasControl::eval(ConstSpan x, Span out, Scratch&) const
{
    bias_->gradient(x, out);
    for (double& v : out)
        v *= -inv_sigma_;
}

json BiasControl::to_json() const { return {{"kind", "bias"}, {"beta", beta_}, {"bias", bias_->to_json()}}; }

ControlPtr control_from_bias(const BiasPotential& b, double beta)
{
    return std::make_shared<BiasControl>(std::make_shared<BiasPotential>(b), beta);
}

// ---------------------------------------------------------------------------

GaussianAnsatz::GaussianAnsatz(std::vector<Vec> centers, std::vector<Mat> covariances, Vec weights)
    : weights_(std::move(weights))
{
    if (centers.empty())
        throw InputError("gaussian ansatz: needs at least one center");
    if (centers.size() != covariances.size() || static_cast<std::size_t>(weights_.size()) != centers.size())
        throw InputError("gaussian ansatz: centers, covariances and weights differ in length");
    d_ = static_cast<std::size_t>(centers.front().size());
    densities_.reserve(centers.size());
    for (std::size_t i = 0; i < centers.size(); ++i) {
        require_dim(static_cast<std::size_t>(centers[i].size()), d_, "gaussian ansatz center");
        Eigen::LLT<Mat> llt(covariances[i]);
        if (llt.info() != Eigen::Success)
            throw InputError("gaussian ansatz: covariance is not positive definite");
        double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        double norm = std::exp(-0.5 * (static_cast<double>(d_) * std::log(2.0 * std::numbers::pi) + logdet));
        densities_.emplace_back(norm, std::move(centers[i]), std::move(covariances[i]));
    }
}

GaussianAnsatz GaussianAnsatz::on_grid(std::size_t d, double lo, double hi, std::size_t per_axis, double variance)
{
    if (d < 1 || per_axis < 1)
        throw InputError("gaussian ansatz grid: dimension and points per axis must be >= 1");
    if (!(lo < hi))
        throw InputError("gaussian ansatz grid: lo must be < hi");
    if (!(variance > 0.0))
        throw InputError("gaussian ansatz grid: variance must be > 0");
    std::vector<double> axis(per_axis);
    for (std::size_t k = 0; k < per_axis; ++k)
        axis[k] = per_axis == 1 ? 0.5 * (lo + hi)
                                : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(per_axis - 1);
    std::size_t total = 1;
    for (std::size_t i = 0; i < d; ++i)
        total *= per_axis;

    std::vector<Vec> centers;
    std::vector<Mat> covs;
    centers.reserve(total);
    covs.reserve(total);
    const auto n = static_cast<Eigen::Index>(d);
    for (std::size_t flat = 0; flat < total; ++flat) {
        Vec c(n);
        std::size_t rem = flat;
        // first coordinate varies slowest
        for (Eigen::Index i = n - 1; i >= 0; --i) {
            c[i] = axis[rem % per_axis];
            rem /= per_axis;
        }
        centers.push_back(std::move(c));
        covs.push_back(variance * Mat::Identity(n, n));
    }
    return GaussianAnsatz(std::move(centers), std::move(covs), Vec::Zero(static_cast<Eigen::Index>(total)));
}

void GaussianAnsatz::basis_gradients(ConstSpan x, Span basis) const
{
    require_dim(x.size(), d_, "control_eval");
    std::fill(basis.begin(), basis.end(), 0.0);
    for (std::size_t i = 0; i < densities_.size(); ++i) {
        const auto& g = densities_[i];
        g.add_shape_gradient(x, g.weight(), basis.subspan(i * d_, d_));
    }
}

void GaussianAnsatz::eval(ConstSpan x, Span out, Scratch& scratch) const
{
    const std::size_t p = densities_.size();
    ensure(scratch.cache, p * d_);
    Span basis(scratch.cache.data(), p * d_);
    basis_gradients(x, basis);
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < p; ++i) {
        const double w = weights_[static_cast<Eigen::Index>(i)];
        for (std::size_t k = 0; k < d_; ++k)
            out[k] += w * basis[i * d_ + k];
    }
}

void GaussianAnsatz::accumulate_vjp(Scratch& scratch, ConstSpan cotangent, Span accum) const
{
    const std::size_t p = densities_.size();
    const double* basis = scratch.cache.data();
    for (std::size_t i = 0; i < p; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < d_; ++k)
            s += cotangent[k] * basis[i * d_ + k];
        accum[i] += s;
    }
}

void GaussianAnsatz::set_params(ConstSpan theta)
{
    require_dim(theta.size(), densities_.size(), "gaussian ansatz parameters");
    weights_ = to_vec(theta);
}

json GaussianAnsatz::to_json() const
{
    json centers = json::array();
    json covs = json::array();
    for (const auto& g : densities_) {
        centers.push_back(detail::vec_to_json(g.mean()));
        covs.push_back(detail::mat_to_json(g.covariance()));
    }
    return {{"kind", "gaussian_ansatz"},
            {"dim", d_},
            {"centers", std::move(centers)},
            {"covariances", std::move(covs)},
            {"weights", detail::vec_to_json(weights_)}};
}

// ---------------------------------------------------------------------------

std::size_t FeedForwardNet::count_params(const std::vector<std::size_t>& widths)
{
    std::size_t n = 0;
    for (std::size_t l = 1; l < widths.size(); ++l)
        n += widths[l] * widths[l - 1] + widths[l];
    return n;
}

std::vector<std::size_t> FeedForwardNet::widths_for(std::size_t d, const std::vector<std::size_t>& hidden)
{
    std::vector<std::size_t> w;
    w.reserve(hidden.size() + 2);
    w.push_back(d);
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(d);
    return w;
}

FeedForwardNet::FeedForwardNet(std::vector<std::size_t> widths, Vec params)
    : widths_(std::move(widths)), params_(std::move(params))
{
    if (widths_.size() < 2)
        throw InputError("feedforward net: needs at least input and output widths");
    for (auto w : widths_)
        if (w < 1)
            throw InputError("feedforward net: layer widths must be >= 1");
    if (widths_.front() != widths_.back())
        throw InputError("feedforward net: output width must equal input width");
    require_dim(static_cast<std::size_t>(params_.size()), count_params(widths_), "feedforward net parameters");

    std::size_t off = 0;
    std::size_t act = widths_.front();
    act_offsets_.push_back(0);
    for (std::size_t l = 1; l < widths_.size(); ++l) {
        offsets_.push_back(off);
        off += widths_[l] * widths_[l - 1] + widths_[l];
        if (l + 1 < widths_.size()) {
            act_offsets_.push_back(act);
            act += widths_[l];
        }
    }
    act_size_ = act;
    max_width_ = *std::max_element(widths_.begin(), widths_.end());
    refresh_columns();
}

void FeedForwardNet::refresh_columns()
{
    columns_.resize(params_.size());
    for (std::size_t l = 1; l < widths_.size(); ++l) {
        const auto rows = static_cast<Eigen::Index>(widths_[l]);
        const auto cols = static_cast<Eigen::Index>(widths_[l - 1]);
        Eigen::Map<Mat>(columns_.data() + offsets_[l - 1], rows, cols) = RowMap(params_.data() + offsets_[l - 1], rows, cols);
    }
}

FeedForwardNet FeedForwardNet::random_init(std::vector<std::size_t> widths, std::uint64_t seed)
{
    Vec params(static_cast<Eigen::Index>(count_params(widths)));
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x17e7u};
    std::mt19937_64 eng(seq);
    Eigen::Index k = 0;
    for (std::size_t l = 1; l < widths.size(); ++l) {
        double bound = 1.0 / std::sqrt(static_cast<double>(widths[l - 1]));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (std::size_t i = 0; i < widths[l] * widths[l - 1] + widths[l]; ++i)
            params[k++] = dist(eng);
    }
    return FeedForwardNet(std::move(widths), std::move(params));
}

void FeedForwardNet::zero_output_layer()
{
    const std::size_t off = offsets_.back();
    for (auto i = static_cast<Eigen::Index>(off); i < params_.size(); ++i)
        params_[i] = 0.0;
    refresh_columns();
}

void FeedForwardNet::eval(ConstSpan x, Span out, Scratch& scratch) const
{
    const std::size_t d = widths_.front();
    require_dim(x.size(), d, "control_eval");
    ensure(scratch.cache, act_size_);
    double* acts = scratch.cache.data();
    std::copy(x.begin(), x.end(), acts);

    // Column-wise axpy keeps a fixed summation order for every output element.
    const std::size_t L = layers();
    for (std::size_t l = 1; l <= L; ++l) {
        const std::size_t rows = widths_[l];
        const std::size_t cols = widths_[l - 1];
        const double* a = columns_.data() + offsets_[l - 1];
        const double* b = params_.data() + offsets_[l - 1] + rows * cols;
        const double* h = acts + act_offsets_[l - 1];
        double* z = l < L ? acts + act_offsets_[l] : out.data();
        std::copy_n(b, rows, z);
        for (std::size_t j = 0; j < cols; ++j) {
            const double hj = h[j];
            const double* col = a + j * rows;
            for (std::size_t i = 0; i < rows; ++i)
                z[i] += col[i] * hj;
        }
        if (l < L) {
            // tanh through the vectorized exp; saturates cleanly to +-1
            VecMap zm(z, static_cast<Eigen::Index>(rows));
            zm = 1.0 - 2.0 / ((2.0 * zm.array()).exp() + 1.0);
        }
    }
}

void FeedForwardNet::accumulate_vjp(Scratch& scratch, ConstSpan cotangent, Span accum) const
{
    const double* acts = scratch.cache.data();
    ensure(scratch.work, 2 * max_width_);
    double* cur = scratch.work.data();
    double* nxt = scratch.work.data() + max_width_;
    std::copy(cotangent.begin(), cotangent.end(), cur);

    for (std::size_t l = layers(); l >= 1; --l) {
        const auto rows = static_cast<Eigen::Index>(widths_[l]);
        const auto cols = static_cast<Eigen::Index>(widths_[l - 1]);
        const std::size_t off = offsets_[l - 1];
        ConstVecMap delta(cur, rows);
        ConstVecMap h(acts + act_offsets_[l - 1], cols);
        RowMapMut gA(accum.data() + off, rows, cols);
        VecMap gb(accum.data() + off + static_cast<std::size_t>(rows * cols), rows);
        gA.noalias() += delta * h.transpose();
        gb += delta;
        if (l > 1) {
            RowMap A(params_.data() + off, rows, cols);
            VecMap prev(nxt, cols);
            prev.noalias() = A.transpose() * delta;
            prev.array() *= 1.0 - h.array().square();
            std::swap(cur, nxt);
        }
    }
}

// Each buffered column holds the activations of one step followed by both cotangents.
void FeedForwardNet::accumulate_vjp_pair(Scratch& scratch, ConstSpan cot_a, ConstSpan cot_b, Span accum_a,
                                         Span accum_b) const
{
    const std::size_t out = widths_.back();
    const std::size_t col = act_size_ + 2 * out;
    ensure(scratch.block, col * kVjpBlock);
    double* c = scratch.block.data() + scratch.pending * col;
    std::copy_n(scratch.cache.data(), act_size_, c);
    std::copy(cot_a.begin(), cot_a.end(), c + act_size_);
    std::copy(cot_b.begin(), cot_b.end(), c + act_size_ + out);
    if (++scratch.pending == kVjpBlock)
        flush_vjp(scratch, accum_a, accum_b);
}

void FeedForwardNet::flush_vjp(Scratch& scratch, Span accum_a, Span accum_b) const
{
    using Columns = Eigen::Map<const Mat, 0, Eigen::OuterStride<>>;
    using Work = Eigen::Map<Mat>;
    const auto T = static_cast<Eigen::Index>(scratch.pending);
    if (T == 0)
        return;
    scratch.pending = 0;
    const auto out = static_cast<Eigen::Index>(widths_.back());
    const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(act_size_) + 2 * out);
    const double* blk = scratch.block.data();
    ensure(scratch.work, 4 * max_width_ * kVjpBlock);
    double* cur = scratch.work.data();
    double* nxt = cur + 2 * max_width_ * kVjpBlock;
    {
        Work D(cur, out, 2 * T);
        D.leftCols(T) = Columns(blk + act_size_, out, T, stride);
        D.rightCols(T) = Columns(blk + act_size_ + out, out, T, stride);
    }

    for (std::size_t l = layers(); l >= 1; --l) {
        const auto rows = static_cast<Eigen::Index>(widths_[l]);
        const auto cols = static_cast<Eigen::Index>(widths_[l - 1]);
        const std::size_t off = offsets_[l - 1];
        const auto bias = off + static_cast<std::size_t>(rows * cols);
        Work D(cur, rows, 2 * T);
        Columns H(blk + act_offsets_[l - 1], cols, T, stride);
        RowMapMut(accum_a.data() + off, rows, cols).noalias() += D.leftCols(T) * H.transpose();
        RowMapMut(accum_b.data() + off, rows, cols).noalias() += D.rightCols(T) * H.transpose();
        VecMap(accum_a.data() + bias, rows) += D.leftCols(T).rowwise().sum();
        VecMap(accum_b.data() + bias, rows) += D.rightCols(T).rowwise().sum();
        if (l > 1) {
            RowMap A(params_.data() + off, rows, cols);
            Work P(nxt, cols, 2 * T);
            P.noalias() = A.transpose() * D;
            P.leftCols(T).array() *= 1.0 - H.array().square();
            P.rightCols(T).array() *= 1.0 - H.array().square();
            std::swap(cur, nxt);
        }
    }
}

void FeedForwardNet::set_params(ConstSpan theta)
{
    require_dim(theta.size(), static_cast<std::size_t>(params_.size()), "feedforward net parameters");
    std::copy(theta.begin(), theta.end(), params_.data());
    refresh_columns();
}

json FeedForwardNet::to_json() const
{
    return {{"kind", "feedforward"}, {"activation", "tanh"}, {"widths", widths_}, {"params", detail::vec_to_json(params_)}};
}

// ---------------------------------------------------------------------------

CvLiftedControl::CvLiftedControl(std::shared_ptr<Control> inner, std::vector<std::size_t> projection,
                                 std::size_t full_dim)
    : inner_(std::move(inner)), projection_(std::move(projection)), full_dim_(full_dim)
{
    if (!inner_)
        throw InputError("cv lift: null inner control");
    require_dim(projection_.size(), inner_->dim(), "cv lift projection");
    std::vector<bool> seen(full_dim_, false);
    for (auto k : projection_) {
        if (k >= full_dim_)
            throw InputError("cv lift: projection index " + std::to_string(k) + " out of range");
        if (seen[k])
            throw InputError("cv lift: duplicate projection index " + std::to_string(k));
        seen[k] = true;
    }
}

void CvLiftedControl::eval(ConstSpan x, Span out, Scratch& scratch) const
{
    require_dim(x.size(), full_dim_, "control_eval");
    const std::size_t s = projection_.size();
    ensure(scratch.work, 2 * s);
    Span y(scratch.work.data(), s);
    Span v(scratch.work.data() + s, s);
    for (std::size_t i = 0; i < s; ++i)
        y[i] = x[projection_[i]];
    inner_->eval(y, v, scratch.child());
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < s; ++i)
        out[projection_[i]] = v[i];
}

void CvLiftedControl::accumulate_vjp(Scratch& scratch, ConstSpan cotangent, Span accum) const
{
    const std::size_t s = projection_.size();
    ensure(scratch.cache, s);
    Span c(scratch.cache.data(), s);
    for (std::size_t i = 0; i < s; ++i)
        c[i] = cotangent[projection_[i]];
    inner_->accumulate_vjp(scratch.child(), c, accum);
}

void CvLiftedControl::accumulate_vjp_pair(Scratch& scratch, ConstSpan cot_a, ConstSpan cot_b, Span accum_a,
                                          Span accum_b) const
{
    const std::size_t s = projection_.size();
    ensure(scratch.cache, 2 * s);
    Span a(scratch.cache.data(), s);
    Span b(scratch.cache.data() + s, s);
    for (std::size_t i = 0; i < s; ++i) {
        a[i] = cot_a[projection_[i]];
        b[i] = cot_b[projection_[i]];
    }
    inner_->accumulate_vjp_pair(scratch.child(), a, b, accum_a, accum_b);
}

void CvLiftedControl::flush_vjp(Scratch& scratch, Span accum_a, Span accum_b) const
{
    inner_->flush_vjp(scratch.child(), accum_a, accum_b);
}

std::unique_ptr<Control> CvLiftedControl::clone() const
{
    return std::make_unique<CvLiftedControl>(std::shared_ptr<Control>(inner_->clone()), projection_, full_dim_);
}

json CvLiftedControl::to_json() const
{
    return {{"kind", "cv_lift"}, {"full_dim", full_dim_}, {"projection", projection_}, {"inner", inner_->to_json()}};
}

ControlPtr lift_cv_control(const BiasPotential& b, const std::vector<std::size_t>& projection, std::size_t full_dim,
                           double beta)
{
    require_dim(projection.size(), b.space_dim(), "lift_cv_control");
    return std::make_shared<CvLiftedControl>(control_from_bias(b, beta), projection, full_dim);
}

// ---------------------------------------------------------------------------

ControlPtr control_from_json(const json& j)
{
    try {
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "zero")
            return std::make_shared<ZeroControl>(j.at("dim").get<std::size_t>());
        if (kind == "bias")
            return control_from_bias(BiasPotential::from_json(j.at("bias")), j.at("beta").get<double>());
        if (kind == "gaussian_ansatz") {
            std::vector<Vec> centers;
            std::vector<Mat> covs;
            for (const auto& c : j.at("centers"))
                centers.push_back(detail::json_to_vec(c));
            for (const auto& c : j.at("covariances"))
                covs.push_back(detail::json_to_mat(c));
            return std::make_shared<GaussianAnsatz>(std::move(centers), std::move(covs),
                                                    detail::json_to_vec(j.at("weights")));
        }
        if (kind == "feedforward") {
            if (j.contains("activation") && j.at("activation") != "tanh")
                throw InputError("feedforward net: only tanh activation is supported");
            return std::make_shared<FeedForwardNet>(j.at("widths").get<std::vector<std::size_t>>(),
                                                    detail::json_to_vec(j.at("params")));
        }
        if (kind == "cv_lift")
            return std::make_shared<CvLiftedControl>(control_from_json(j.at("inner")),
                                                     j.at("projection").get<std::vector<std::size_t>>(),
                                                     j.at("full_dim").get<std::size_t>());
        if (kind == "hjb_reference")
            return ReferenceControl::from_json(j);
        throw InputError("control json: unknown kind '" + kind + "'");
    } catch (const json::exception& e) {
        throw InputError(std::string("control json: ") + e.what());
    }
}

}  // namespace sdeis
