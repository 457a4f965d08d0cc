#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sdeis/potential.hpp"
#include "sdeis/types.hpp"

namespace sdeis {

/// Per-thread workspace for control evaluation.
///
/// eval() may leave intermediates in `cache` that a following
/// accumulate_vjp() on the same scratch reuses, so one forward pass serves
/// any number of cotangents at the same state.
/// Buffers are over-aligned so Eigen kernels peel identically on every call;
/// otherwise the summation order would depend on heap layout.
using AlignedBuffer = std::vector<double, Eigen::aligned_allocator<double>>;

struct Scratch
{
    AlignedBuffer cache;
    AlignedBuffer work;
    AlignedBuffer block;       // deferred VJP columns
    std::size_t pending = 0;  // columns in `block`
    std::unique_ptr<Scratch> inner;

    Scratch& child()
    {
        if (!inner)
            inner = std::make_unique<Scratch>();
        return *inner;
    }
};

class Control
{
  public:
    virtual ~Control() = default;

    virtual std::string_view kind() const = 0;
    virtual std::size_t dim() const = 0;
    virtual std::size_t param_count() const { return 0; }
    virtual bool is_zero() const { return false; }

    /// out = u(x)
    virtual void eval(ConstSpan x, Span out, Scratch& scratch) const = 0;

    /// accum += cotangent . du/dtheta, at the state of the last eval() on `scratch`.
    virtual void accumulate_vjp(Scratch& scratch, ConstSpan cotangent, Span accum) const;

    /// Two cotangents at the same state. Implementations may defer the work until
    /// flush_vjp(), so the accumulators must not change between the calls.
    virtual void accumulate_vjp_pair(Scratch& scratch, ConstSpan cot_a, ConstSpan cot_b, Span accum_a,
                                     Span accum_b) const;
    virtual void flush_vjp(Scratch&, Span, Span) const {}

    virtual ConstSpan params() const { return {}; }
    virtual void set_params(ConstSpan theta);

    virtual std::unique_ptr<Control> clone() const = 0;
    virtual nlohmann::json to_json() const = 0;

    bool parametric() const { return param_count() > 0; }

    Vec operator()(const Vec& x) const;
};

using ControlPtr = std::shared_ptr<Control>;

Vec control_eval(const Control& c, const Vec& x);

/// cotangent . du/dtheta at x; throws UnsupportedOperation for non-parametric controls.
Vec control_param_vjp(const Control& c, const Vec& x, const Vec& cotangent);

class ZeroControl final : public Control
{
  public:
    explicit ZeroControl(std::size_t d);

    std::string_view kind() const override { return "zero"; }
    std::size_t dim() const override { return d_; }
    bool is_zero() const override { return true; }
    void eval(ConstSpan x, Span out, Scratch& scratch) const override;
    std::unique_ptr<Control> clone() const override { return std::make_unique<ZeroControl>(*this); }
    nlohmann::json to_json() const override;

  private:
    std::size_t d_;
};

/// u(x) = -sigma^-1 grad V_bias(x) with sigma = sqrt(2/beta).
class BiasControl final : public Control
{
  public:
    BiasControl(std::shared_ptr<const BiasPotential> bias, double beta);

    std::string_view kind() const override { return "bias"; }
    std::size_t dim() const override { return bias_->space_dim(); }
    bool is_zero() const override { return bias_->empty(); }
    void eval(ConstSpan x, Span out, Scratch& scratch) const override;
    std::unique_ptr<Control> clone() const override { return std::make_unique<BiasControl>(*this); }
    nlohmann::json to_json() const override;

    const BiasPotential& bias() const { return *bias_; }
    double beta() const { return beta_; }

  private:
    std::shared_ptr<const BiasPotential> bias_;
    double beta_;
    double inv_sigma_;
};

/// u_theta(x) = sum_i theta_i grad N(x; mu_i, Sigma_i), N the normalized Gaussian density.
class GaussianAnsatz final : public Control
{
  public:
    GaussianAnsatz(std::vector<Vec> centers, std::vector<Mat> covariances, Vec weights);

    /// Tensor-product grid of `per_axis` centers per coordinate over [lo, hi]^d,
    /// endpoints included, covariance variance * Id, zero weights.
    static GaussianAnsatz on_grid(std::size_t d, double lo, double hi, std::size_t per_axis, double variance);

    std::string_view kind() const override { return "gaussian_ansatz"; }
    std::size_t dim() const override { return d_; }
    std::size_t param_count() const override { return densities_.size(); }
    void eval(ConstSpan x, Span out, Scratch& scratch) const override;
    void accumulate_vjp(Scratch& scratch, ConstSpan cotangent, Span accum) const override;
    ConstSpan params() const override { return as_span(weights_); }
    void set_params(ConstSpan theta) override;
    std::unique_ptr<Control> clone() const override { return std::make_unique<GaussianAnsatz>(*this); }
    nlohmann::json to_json() const override;

    std::size_t size() const { return densities_.size(); }
    const Vec& center(std::size_t i) const { return densities_[i].mean(); }
    const Mat& covariance(std::size_t i) const { return densities_[i].covariance(); }
    /// Normalization constant (2 pi)^{-d/2} |Sigma_i|^{-1/2}.
    double normalization(std::size_t i) const { return densities_[i].weight(); }

    /// grad N(x; mu_i, Sigma_i) for every i, written row-wise into basis (p x d).
    void basis_gradients(ConstSpan x, Span basis) const;

  private:
    std::size_t d_;
    std::vector<GaussianBump> densities_;  // weight holds the normalization constant
    Vec weights_;
};

/// Feed-forward network A_L rho(... rho(A_1 x + b_1) ...) + b_L with rho = tanh.
///
/// Parameters are stored flat, layer by layer: A_l row-major, then b_l.
class FeedForwardNet final : public Control
{
  public:
    FeedForwardNet(std::vector<std::size_t> widths, Vec params);

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
    static FeedForwardNet random_init(std::vector<std::size_t> widths, std::uint64_t seed);

    /// d -> hidden... -> d, the default architecture uses two hidden layers of 30.
    static std::vector<std::size_t> widths_for(std::size_t d, const std::vector<std::size_t>& hidden);

    std::string_view kind() const override { return "feedforward"; }
    std::size_t dim() const override { return widths_.front(); }
    std::size_t param_count() const override { return static_cast<std::size_t>(params_.size()); }
    void eval(ConstSpan x, Span out, Scratch& scratch) const override;
    void accumulate_vjp(Scratch& scratch, ConstSpan cotangent, Span accum) const override;
    void accumulate_vjp_pair(Scratch& scratch, ConstSpan cot_a, ConstSpan cot_b, Span accum_a,
                             Span accum_b) const override;
    void flush_vjp(Scratch& scratch, Span accum_a, Span accum_b) const override;
    ConstSpan params() const override { return as_span(params_); }
    void set_params(ConstSpan theta) override;
    std::unique_ptr<Control> clone() const override { return std::make_unique<FeedForwardNet>(*this); }
    nlohmann::json to_json() const override;

    const std::vector<std::size_t>& widths() const { return widths_; }
    std::size_t layers() const { return widths_.size() - 1; }

    /// Sets A_L and b_L to zero, making the output identically zero.
    void zero_output_layer();

    static std::size_t count_params(const std::vector<std::size_t>& widths);

  private:
    void refresh_columns();

    std::vector<std::size_t> widths_;
    std::vector<std::size_t> offsets_;  // start of A_l for each layer
    std::vector<std::size_t> act_offsets_;
    std::size_t act_size_ = 0;
    std::size_t max_width_ = 0;
    Vec params_;
    Vec columns_;  // each A_l column-major at offsets_[l-1], for the forward pass
};

/// Lifts a control on collective-variable space through the coordinate
/// selection xi(x) = (x_{k_1}, ..., x_{k_s}): u(x) = J_xi^T u_inner(xi(x)).
class CvLiftedControl final : public Control
{
  public:
    CvLiftedControl(std::shared_ptr<Control> inner, std::vector<std::size_t> projection, std::size_t full_dim);

    std::string_view kind() const override { return "cv_lift"; }
    std::size_t dim() const override { return full_dim_; }
    std::size_t param_count() const override { return inner_->param_count(); }
    bool is_zero() const override { return inner_->is_zero(); }
    void eval(ConstSpan x, Span out, Scratch& scratch) const override;
    void accumulate_vjp(Scratch& scratch, ConstSpan cotangent, Span accum) const override;
    void accumulate_vjp_pair(Scratch& scratch, ConstSpan cot_a, ConstSpan cot_b, Span accum_a,
                             Span accum_b) const override;
    void flush_vjp(Scratch& scratch, Span accum_a, Span accum_b) const override;
    ConstSpan params() const override { return inner_->params(); }
    void set_params(ConstSpan theta) override { inner_->set_params(theta); }
    std::unique_ptr<Control> clone() const override;
    nlohmann::json to_json() const override;

    const Control& inner() const { return *inner_; }
    const std::vector<std::size_t>& projection() const { return projection_; }

  private:
    std::shared_ptr<Control> inner_;
    std::vector<std::size_t> projection_;
    std::size_t full_dim_;
};

ControlPtr control_from_bias(const BiasPotential& b, double beta);

/// Bias potential living on the coordinates `projection` of a full_dim space.
ControlPtr lift_cv_control(const BiasPotential& b, const std::vector<std::size_t>& projection,
                           std::size_t full_dim, double beta);

/// Reconstructs any control written by Control::to_json().
ControlPtr control_from_json(const nlohmann::json& j);

}  // namespace sdeis
