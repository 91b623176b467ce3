#pragma once

// Levenberg-Marquardt least squares with box bounds and frozen parameters,
// plus the four spectral and relaxation model families.

#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rfmag/core.hpp"
#include "rfmag/quadrature.hpp"

namespace rfmag::fitting {

enum class ModelKind { gaussian_peak, decaying_sinusoid, exponential_saturation, inhomogeneous_oscillation };

std::string to_string(ModelKind kind);
/// Throws std::invalid_argument for an unknown name.
ModelKind model_kind_from_string(const std::string& name);

struct ParameterSpec {
  std::string name;
  std::string unit;
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  bool fixed = false;
};

class FitModel {
 public:
  virtual ~FitModel() = default;

  ModelKind kind() const { return kind_; }
  std::size_t size() const { return params_.size(); }
  const std::vector<ParameterSpec>& parameters() const { return params_; }
  ParameterSpec& parameter(std::size_t i) { return params_.at(i); }
  std::size_t index_of(const std::string& name) const;

  /// Throws std::invalid_argument when a bound pair is inverted.
  void validate() const;

  /// y[i] = f(x[i]; p). `jac` is either empty or row-major size()*x.size(), filled with df/dp.
  virtual void evaluate(std::span<const double> x, std::span<const double> p, std::span<double> y,
                        std::span<double> jac) const = 0;

  std::vector<double> operator()(std::span<const double> x, std::span<const double> p) const;

 protected:
  FitModel(ModelKind kind, std::vector<ParameterSpec> params) : kind_(kind), params_(std::move(params)) {}

 private:
  ModelKind kind_;
  std::vector<ParameterSpec> params_;
};

/// a exp(-(x - mu)^2 / (2 sigma^2)) + c. Parameters (a, mu, sigma, c).
class GaussianPeak final : public FitModel {
 public:
  GaussianPeak();
  void evaluate(std::span<const double> x, std::span<const double> p, std::span<double> y,
                std::span<double> jac) const override;
};

/// (p0/2)(1 - exp(-t^2/(2 T^2)) cos(W t)). Parameters (p0, omega [rad/s], T [s]).
class DecayingSinusoid final : public FitModel {
 public:
  DecayingSinusoid();
  void evaluate(std::span<const double> x, std::span<const double> p, std::span<double> y,
                std::span<double> jac) const override;
};

/// p0 (1 - exp(-t/T)). Parameters (p0, T [s]).
class ExponentialSaturation final : public FitModel {
 public:
  ExponentialSaturation();
  void evaluate(std::span<const double> x, std::span<const double> p, std::span<double> y,
                std::span<double> jac) const override;
};

/// Coherent response averaged over a normal distribution of the mismatch:
///   p(tau) = p0 E_d[ W1^2/(W1^2 + d^2) sin^2(sqrt(W1^2 + d^2) tau/2) ],  d ~ N(mu, sigma^2).
/// Parameters (p0, omega1 [rad/s], sigma [rad/s], mismatch [rad/s]).
class InhomogeneousOscillation final : public FitModel {
 public:
  explicit InhomogeneousOscillation(int panels = 8);
  void evaluate(std::span<const double> x, std::span<const double> p, std::span<double> y,
                std::span<double> jac) const override;

  void set_panels(int panels);
  int panels() const { return panels_; }

  /// Panel count that resolves the integrand for these parameters up to t_max.
  static int required_panels(std::span<const double> p, double t_max);

 private:
  int panels_;
  NormalRule rule_;
};

std::unique_ptr<FitModel> make_model(ModelKind kind);

struct FitData {
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> sigma;  // empty means unit weights

  void validate(std::size_t n_params) const;
};

struct FitOptions {
  int max_iterations = 200;
  double relative_tolerance = 1e-10;
  double initial_lambda = 1e-3;
};

struct FitResult {
  std::vector<std::string> names;
  std::vector<double> parameters;
  std::vector<double> standard_errors;
  Eigen::MatrixXd covariance;  // zero rows/columns for frozen parameters
  double residual_norm = 0.0;  // sqrt of the weighted sum of squares
  double reduced_chi2 = 0.0;
  double r_squared = 0.0;
  bool converged = false;
  int iterations = 0;
  std::string message;
};

/// Throws std::invalid_argument for bad data/guess, NumericalError if the model
/// yields a non-finite value. Non-convergence is reported through the flag.
FitResult fit(const FitModel& model, const FitData& data, std::vector<double> initial,
              const FitOptions& options = {});

/// Fits InhomogeneousOscillation with a quadrature rule sized for the data. The rule
/// is re-checked at the solution against one with twice the panels; if they disagree
/// after one refinement, NumericalError is thrown.
FitResult fit_inhomogeneous_oscillation(const FitData& data, std::vector<double> initial,
                                        const FitOptions& options = {});

/// sqrt(8 ln 2) * sigma. Throws std::domain_error for sigma < 0.
double fwhm_from_sigma(double sigma);
AngularFrequency fwhm_from_sigma(AngularFrequency sigma);

}  // namespace rfmag::fitting
