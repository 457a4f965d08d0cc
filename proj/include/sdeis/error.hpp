#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sdeis {

class Error : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/// Bad shapes, invalid parameters, malformed documents.
class InputError : public Error
{
  public:
    using Error::Error;
};

/// A simulated state became non-finite.
class NumericalBlowup : public Error
{
  public:
    NumericalBlowup(std::size_t step, std::size_t trajectory = 0)
        : Error("non-finite state at step " + std::to_string(step) + " of trajectory " +
                std::to_string(trajectory)),
          step_(step),
          trajectory_(trajectory)
    {}

    std::size_t step() const noexcept { return step_; }
    std::size_t trajectory() const noexcept { return trajectory_; }

  private:
    std::size_t step_;
    std::size_t trajectory_;
};

class UnsupportedOperation : public Error
{
  public:
    using Error::Error;
};

class SolverError : public Error
{
  public:
    using Error::Error;
};

class MaximumPrincipleViolation : public SolverError
{
  public:
    using SolverError::SolverError;
};

/// A truncated trajectory was offered as an estimator sample.
class RejectedSample : public Error
{
  public:
    using Error::Error;
};

class EstimationFailed : public Error
{
  public:
    using Error::Error;
};

class GradientUnavailable : public Error
{
  public:
    using Error::Error;
};

class ConfigError : public Error
{
  public:
    ConfigError(std::string key, const std::string& what)
        : Error(key.empty() ? what : key + ": " + what), key_(std::move(key))
    {}

    const std::string& key() const noexcept { return key_; }

  private:
    std::string key_;
};

}  // namespace sdeis
