#pragma once

#include <vector>

#include <json.hpp>

#include "sdeis/types.hpp"

namespace sdeis {

/// Separable multi-well potential V(x) = sum_i alpha_i (x_i^2 - 1)^2.
class PotentialSpec
{
  public:
    PotentialSpec() = default;
    explicit PotentialSpec(std::vector<double> alpha);

    std::size_t dim() const { return alpha_.size(); }
    const std::vector<double>& alpha() const { return alpha_; }

    double value(ConstSpan x) const;
    void gradient(ConstSpan x, Span out) const;

  private:
    std::vector<double> alpha_;
};

double potential_eval(const PotentialSpec& spec, const Vec& x);
Vec potential_grad(const PotentialSpec& spec, const Vec& x);

/// Unnormalized Gaussian eta * exp(-1/2 (y-mu)' Sigma^-1 (y-mu)).
///
/// The precision matrix is factored once at construction. When it is
/// diagonal the evaluation skips the off-diagonal products; that path reads
/// the same precision entries in the same order as the general one, so both
/// give identical bits.
class GaussianBump
{
  public:
    GaussianBump(double weight, Vec mean, Mat covariance);

    static GaussianBump isotropic(double weight, Vec mean, double variance);

    double weight() const { return weight_; }
    const Vec& mean() const { return mean_; }
    const Mat& covariance() const { return covariance_; }
    const Mat& precision() const { return precision_; }
    std::size_t dim() const { return static_cast<std::size_t>(mean_.size()); }
    bool diagonal() const { return diagonal_; }

    /// exp(-q/2), without the weight.
    double shape(ConstSpan y) const;
    double shape_general(ConstSpan y) const;

    /// out += scale * grad shape(y)
    void add_shape_gradient(ConstSpan y, double scale, Span out) const;
    void add_shape_gradient_general(ConstSpan y, double scale, Span out) const;

  private:
    double quadratic_diagonal(ConstSpan y) const;
    double quadratic_general(ConstSpan y) const;

    double weight_;
    Vec mean_;
    Mat covariance_;
    Mat precision_;
    bool diagonal_ = false;
};

/// Weighted sum of unnormalized Gaussian bumps, possibly in a collective
/// variable space of lower dimension.
class BiasPotential
{
  public:
    explicit BiasPotential(std::size_t space_dim = 1);
    BiasPotential(std::size_t space_dim, std::vector<GaussianBump> bumps);

    std::size_t space_dim() const { return space_dim_; }
    std::size_t size() const { return bumps_.size(); }
    bool empty() const { return bumps_.empty(); }
    const std::vector<GaussianBump>& bumps() const { return bumps_; }

    void add(GaussianBump bump);

    double value(ConstSpan y) const;
    void gradient(ConstSpan y, Span out) const;

    nlohmann::json to_json() const;
    static BiasPotential from_json(const nlohmann::json& j);

  private:
    std::size_t space_dim_;
    std::vector<GaussianBump> bumps_;
};

double bias_eval(const BiasPotential& b, const Vec& y);
Vec bias_grad(const BiasPotential& b, const Vec& y);

}  // namespace sdeis
