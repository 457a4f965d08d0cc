#include "sdeis/potential.hpp"

#include <cmath>

namespace sdeis {

Box::Box(Vec lo_, Vec hi_) : lo(std::move(lo_)), hi(std::move(hi_))
{
    require_dim(static_cast<std::size_t>(hi.size()), static_cast<std::size_t>(lo.size()), "box");
    for (Eigen::Index i = 0; i < lo.size(); ++i)
        if (!(lo[i] < hi[i]))
            throw InputError("box: lo must be < hi in every coordinate");
}

Box Box::cube(std::size_t d, double lo, double hi)
{
    auto n = static_cast<Eigen::Index>(d);
    return Box(Vec::Constant(n, lo), Vec::Constant(n, hi));
}

PotentialSpec::PotentialSpec(std::vector<double> alpha) : alpha_(std::move(alpha))
{
    if (alpha_.empty())
        throw InputError("potential: dimension must be >= 1");
    for (double a : alpha_)
        if (!(a > 0.0))
            throw InputError("potential: every alpha_i must be > 0");
}

double PotentialSpec::value(ConstSpan x) const
{
    require_dim(x.size(), dim(), "potential_eval");
    double v = 0.0;
    for (std::size_t i = 0; i < alpha_.size(); ++i) {
        double s = x[i] * x[i] - 1.0;
        v += alpha_[i] * s * s;
    }
    return v;
}

void PotentialSpec::gradient(ConstSpan x, Span out) const
{
    require_dim(x.size(), dim(), "potential_grad");
    for (std::size_t i = 0; i < alpha_.size(); ++i)
        out[i] = 4.0 * alpha_[i] * x[i] * (x[i] * x[i] - 1.0);
}

double potential_eval(const PotentialSpec& spec, const Vec& x) { return spec.value(as_span(x)); }

Vec potential_grad(const PotentialSpec& spec, const Vec& x)
{
    require_dim(static_cast<std::size_t>(x.size()), spec.dim(), "potential_grad");
    Vec g(x.size());
    spec.gradient(as_span(x), as_span(g));
    return g;
}

// ---------------------------------------------------------------------------

GaussianBump::GaussianBump(double weight, Vec mean, Mat covariance)
    : weight_(weight), mean_(std::move(mean)), covariance_(std::move(covariance))
{
    const auto d = mean_.size();
    if (d < 1)
        throw InputError("gaussian bump: empty mean");
    if (covariance_.rows() != d || covariance_.cols() != d)
        throw InputError("gaussian bump: covariance shape does not match mean");
    if (covariance_ != covariance_.transpose())
        throw InputError("gaussian bump: covariance must be symmetric");
    Eigen::LLT<Mat> llt(covariance_);
    if (llt.info() != Eigen::Success)
        throw InputError("gaussian bump: covariance is not positive definite");
    precision_ = llt.solve(Mat::Identity(d, d));
    // symmetrize so that (i,j) and (j,i) are the same bits
    precision_ = (0.5 * (precision_ + precision_.transpose())).eval();
    diagonal_ = true;
    for (Eigen::Index i = 0; i < d && diagonal_; ++i)
        for (Eigen::Index j = 0; j < d; ++j)
            if (i != j && precision_(i, j) != 0.0) {
                diagonal_ = false;
                break;
            }
}

GaussianBump GaussianBump::isotropic(double weight, Vec mean, double variance)
{
    if (!(variance > 0.0))
        throw InputError("gaussian bump: variance must be > 0");
    const auto d = mean.size();
    Mat cov = variance * Mat::Identity(d, d);
    return GaussianBump(weight, std::move(mean), std::move(cov));
}

double GaussianBump::quadratic_diagonal(ConstSpan y) const
{
    double q = 0.0;
    for (Eigen::Index i = 0; i < mean_.size(); ++i) {
        double r = y[static_cast<std::size_t>(i)] - mean_[i];
        q = std::fma(r, precision_(i, i) * r, q);
    }
    return q;
}

double GaussianBump::quadratic_general(ConstSpan y) const
{
    double q = 0.0;
    const auto d = mean_.size();
    for (Eigen::Index i = 0; i < d; ++i) {
        double ri = y[static_cast<std::size_t>(i)] - mean_[i];
        // same rounding sequence as the diagonal path when P is diagonal
        double pr = precision_(i, i) * ri;
        for (Eigen::Index j = 0; j < d; ++j)
            if (j != i)
                pr = std::fma(precision_(i, j), y[static_cast<std::size_t>(j)] - mean_[j], pr);
        q = std::fma(ri, pr, q);
    }
    return q;
}

double GaussianBump::shape(ConstSpan y) const
{
    require_dim(y.size(), dim(), "gaussian bump");
    return std::exp(-0.5 * (diagonal_ ? quadratic_diagonal(y) : quadratic_general(y)));
}

double GaussianBump::shape_general(ConstSpan y) const
{
    require_dim(y.size(), dim(), "gaussian bump");
    return std::exp(-0.5 * quadratic_general(y));
}

void GaussianBump::add_shape_gradient(ConstSpan y, double scale, Span out) const
{
    if (!diagonal_) {
        add_shape_gradient_general(y, scale, out);
        return;
    }
    const double s = -scale * shape(y);
    for (Eigen::Index i = 0; i < mean_.size(); ++i) {
        double r = y[static_cast<std::size_t>(i)] - mean_[i];
        out[static_cast<std::size_t>(i)] = std::fma(s, precision_(i, i) * r, out[static_cast<std::size_t>(i)]);
    }
}

void GaussianBump::add_shape_gradient_general(ConstSpan y, double scale, Span out) const
{
    const double s = -scale * shape_general(y);
    const auto d = mean_.size();
    for (Eigen::Index i = 0; i < d; ++i) {
        double pr = precision_(i, i) * (y[static_cast<std::size_t>(i)] - mean_[i]);
        for (Eigen::Index j = 0; j < d; ++j)
            if (j != i)
                pr = std::fma(precision_(i, j), y[static_cast<std::size_t>(j)] - mean_[j], pr);
        out[static_cast<std::size_t>(i)] = std::fma(s, pr, out[static_cast<std::size_t>(i)]);
    }
}

// ---------------------------------------------------------------------------

BiasPotential::BiasPotential(std::size_t space_dim) : space_dim_(space_dim)
{
    if (space_dim_ < 1)
        throw InputError("bias potential: space dimension must be >= 1");
}

BiasPotential::BiasPotential(std::size_t space_dim, std::vector<GaussianBump> bumps)
    : BiasPotential(space_dim)
{
    bumps_.reserve(bumps.size());
    for (auto& b : bumps)
        add(std::move(b));
}

void BiasPotential::add(GaussianBump bump)
{
    require_dim(bump.dim(), space_dim_, "bias potential bump");
    bumps_.push_back(std::move(bump));
}

double BiasPotential::value(ConstSpan y) const
{
    require_dim(y.size(), space_dim_, "bias_eval");
    double v = 0.0;
    for (const auto& b : bumps_)
        v += b.weight() * b.shape(y);
    return v;
}

void BiasPotential::gradient(ConstSpan y, Span out) const
{
    require_dim(y.size(), space_dim_, "bias_grad");
    for (std::size_t i = 0; i < space_dim_; ++i)
        out[i] = 0.0;
    for (const auto& b : bumps_)
        b.add_shape_gradient(y, b.weight(), out);
}

nlohmann::json BiasPotential::to_json() const
{
    nlohmann::json bumps = nlohmann::json::array();
    for (const auto& b : bumps_) {
        nlohmann::json mean = nlohmann::json::array();
        for (Eigen::Index i = 0; i < b.mean().size(); ++i)
            mean.push_back(b.mean()[i]);
        nlohmann::json cov = nlohmann::json::array();
        for (Eigen::Index i = 0; i < b.covariance().rows(); ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (Eigen::Index j = 0; j < b.covariance().cols(); ++j)
                row.push_back(b.covariance()(i, j));
            cov.push_back(std::move(row));
        }
        bumps.push_back({{"weight", b.weight()}, {"mean", std::move(mean)}, {"covariance", std::move(cov)}});
    }
    return {{"space_dim", space_dim_}, {"bumps", std::move(bumps)}};
}

BiasPotential BiasPotential::from_json(const nlohmann::json& j)
{
    try {
        auto d = j.at("space_dim").get<std::size_t>();
        BiasPotential bias(d);
        for (const auto& jb : j.at("bumps")) {
            auto mean = jb.at("mean").get<std::vector<double>>();
            require_dim(mean.size(), d, "bias bump mean");
            Mat cov(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
            const auto& rows = jb.at("covariance");
            require_dim(rows.size(), d, "bias bump covariance");
            for (std::size_t r = 0; r < d; ++r) {
                auto row = rows.at(r).get<std::vector<double>>();
                require_dim(row.size(), d, "bias bump covariance row");
                for (std::size_t c = 0; c < d; ++c)
                    cov(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
            }
            bias.add(GaussianBump(jb.at("weight").get<double>(), to_vec(mean), std::move(cov)));
        }
        return bias;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("bias potential json: ") + e.what());
    }
}

double bias_eval(const BiasPotential& b, const Vec& y) { return b.value(as_span(y)); }

Vec bias_grad(const BiasPotential& b, const Vec& y)
{
    require_dim(static_cast<std::size_t>(y.size()), b.space_dim(), "bias_grad");
    Vec g(y.size());
    b.gradient(as_span(y), as_span(g));
    return g;
}

}  // namespace sdeis
