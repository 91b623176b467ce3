#include "rfmag/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace rfmag::fitting {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

double sinc(double u) {
  if (std::abs(u) < 1e-4) {
    const double u2 = u * u;
    return 1.0 - u2 / 6.0 + u2 * u2 / 120.0;
  }
  return std::sin(u) / u;
}

// sinc'(u)/u, finite at u = 0.
double sinc_slope_over_u(double u) {
  if (std::abs(u) < 1e-2) {
    const double u2 = u * u;
    return -1.0 / 3.0 + u2 / 30.0 - u2 * u2 / 840.0;
  }
  return (u * std::cos(u) - std::sin(u)) / (u * u * u);
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericalError(std::string("fit: model produced a non-finite ") + what);
}

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::gaussian_peak: return "gaussian_peak";
    case ModelKind::decaying_sinusoid: return "decaying_sinusoid";
    case ModelKind::exponential_saturation: return "exponential_saturation";
    case ModelKind::inhomogeneous_oscillation: return "inhomogeneous_oscillation";
  }
  return "unknown";
}

ModelKind model_kind_from_string(const std::string& name) {
  for (auto k : {ModelKind::gaussian_peak, ModelKind::decaying_sinusoid, ModelKind::exponential_saturation,
                 ModelKind::inhomogeneous_oscillation}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown fit model '" + name + "'");
}

std::size_t FitModel::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  throw std::invalid_argument("unknown parameter '" + name + "'");
}

void FitModel::validate() const {
  for (const auto& p : params_) {
    if (std::isnan(p.lower) || std::isnan(p.upper) || p.lower > p.upper) {
      throw std::invalid_argument("parameter '" + p.name + "' has inconsistent bounds");
    }
  }
}

std::vector<double> FitModel::operator()(std::span<const double> x, std::span<const double> p) const {
  std::vector<double> y(x.size());
  evaluate(x, p, y, {});
  return y;
}

GaussianPeak::GaussianPeak()
    : FitModel(ModelKind::gaussian_peak,
               {{"a", "y"}, {"mu", "x"}, {"sigma", "x", 0.0, inf}, {"c", "y"}}) {}

void GaussianPeak::evaluate(std::span<const double> x, std::span<const double> p, std::span<double> y,
                            std::span<double> jac) const {
  const double a = p[0], mu = p[1], s = p[2], c = p[3];
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - mu;
    const double e = std::exp(-0.5 * d * d / (s * s));
    y[i] = a * e + c;
    if (!jac.empty()) {
      double* row = &jac[i * 4];
      row[0] = e;
      row[1] = a * e * d / (s * s);
      row[2] = a * e * d * d / (s * s * s);
      row[3] = 1.0;
    }
  }
}

DecayingSinusoid::DecayingSinusoid()
    : FitModel(ModelKind::decaying_sinusoid,
               {{"p0", "1"}, {"omega", "rad/s"}, {"T", "s", 0.0, inf}}) {}

void DecayingSinusoid::evaluate(std::span<const double> x, std::span<const double> p, std::span<double> y,
                                std::span<double> jac) const {
  const double p0 = p[0], w = p[1], T = p[2];
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = x[i];
    const double e = std::exp(-0.5 * t * t / (T * T));
    const double c = std::cos(w * t);
    y[i] = 0.5 * p0 * (1.0 - e * c);
    if (!jac.empty()) {
      double* row = &jac[i * 3];
      row[0] = 0.5 * (1.0 - e * c);
      row[1] = 0.5 * p0 * e * t * std::sin(w * t);
      row[2] = -0.5 * p0 * c * e * t * t / (T * T * T);
    }
  }
}

ExponentialSaturation::ExponentialSaturation()
    : FitModel(ModelKind::exponential_saturation, {{"p0", "1"}, {"T", "s", 0.0, inf}}) {}

void ExponentialSaturation::evaluate(std::span<const double> x, std::span<const double> p,
                                     std::span<double> y, std::span<double> jac) const {
  const double p0 = p[0], T = p[1];
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = x[i];
    const double rise = -std::expm1(-t / T);
    y[i] = p0 * rise;
    if (!jac.empty()) {
      jac[i * 2] = rise;
      jac[i * 2 + 1] = -p0 * std::exp(-t / T) * t / (T * T);
    }
  }
}

InhomogeneousOscillation::InhomogeneousOscillation(int panels)
    : FitModel(ModelKind::inhomogeneous_oscillation,
               {{"p0", "1"}, {"omega1", "rad/s", 0.0, inf}, {"sigma", "rad/s", 0.0, inf}, {"mismatch", "rad/s"}}),
      panels_(panels),
      rule_(normal_rule(panels)) {}

void InhomogeneousOscillation::set_panels(int panels) {
  panels_ = panels;
  rule_ = normal_rule(panels);
}

int InhomogeneousOscillation::required_panels(std::span<const double> p, double t_max) {
  const double w1 = std::abs(p[1]);
  const double sigma = std::abs(p[2]);
  // Span of the rule is 16 sigma; aim for at most one sin^2 period per panel and
  // several panels across the Lorentzian factor.
  const double periods = 16.0 * sigma * t_max / two_pi;
  const double lorentz = w1 > 0.0 ? 4.0 * sigma / w1 : 0.0;
  const double want = std::max({4.0, std::ceil(periods), std::ceil(lorentz)});
  return static_cast<int>(std::min(want, 2000.0));
}

void InhomogeneousOscillation::evaluate(std::span<const double> x, std::span<const double> p,
                                        std::span<double> y, std::span<double> jac) const {
  const double p0 = p[0], w1 = p[1], sigma = p[2], mu = p[3];
  const auto& z = rule_.nodes;
  const auto& wq = rule_.weights;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double half = 0.5 * x[i];
    double f = 0.0, d_w1 = 0.0, d_mu = 0.0, d_sigma = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
      const double d = mu + sigma * z[k];
      const double u = half * std::hypot(w1, d);
      const double s = sinc(u);
      const double a = w1 * half;
      const double val = a * a * s * s;
      f += wq[k] * val;
      if (!jac.empty()) {
        // du/dw1 = half^2 w1 / u and du/dd = half^2 d / u; sinc'(u)/u absorbs the 1/u.
        const double g = 2.0 * a * a * s * sinc_slope_over_u(u) * half * half;
        const double dval_dd = g * d;
        d_w1 += wq[k] * (2.0 * w1 * half * half * s * s + g * w1);
        d_mu += wq[k] * dval_dd;
        d_sigma += wq[k] * dval_dd * z[k];
      }
    }
    y[i] = p0 * f;
    if (!jac.empty()) {
      double* row = &jac[i * 4];
      row[0] = f;
      row[1] = p0 * d_w1;
      row[2] = p0 * d_sigma;
      row[3] = p0 * d_mu;
    }
  }
}

std::unique_ptr<FitModel> make_model(ModelKind kind) {
  switch (kind) {
    case ModelKind::gaussian_peak: return std::make_unique<GaussianPeak>();
    case ModelKind::decaying_sinusoid: return std::make_unique<DecayingSinusoid>();
    case ModelKind::exponential_saturation: return std::make_unique<ExponentialSaturation>();
    case ModelKind::inhomogeneous_oscillation: return std::make_unique<InhomogeneousOscillation>();
  }
  throw std::invalid_argument("unknown model kind");
}

void FitData::validate(std::size_t n_params) const {
  if (x.size() != y.size()) throw std::invalid_argument("fit data: x and y differ in length");
  if (!sigma.empty() && sigma.size() != y.size()) {
    throw std::invalid_argument("fit data: sigma length differs from y");
  }
  if (x.size() < n_params + 1) {
    throw std::invalid_argument("fit data: need at least parameter count + 1 points");
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw std::invalid_argument("fit data: non-finite value");
    if (!sigma.empty() && !(sigma[i] > 0.0 && std::isfinite(sigma[i]))) {
      throw std::invalid_argument("fit data: sigma must be positive and finite");
    }
  }
}

FitResult fit(const FitModel& model, const FitData& data, std::vector<double> p, const FitOptions& options) {
  model.validate();
  const std::size_t m = model.size();
  const std::size_t n = data.x.size();
  if (p.size() != m) throw std::invalid_argument("fit: initial guess has the wrong length");
  data.validate(m);
  const auto& spec = model.parameters();
  for (std::size_t j = 0; j < m; ++j) {
    if (!std::isfinite(p[j])) throw std::invalid_argument("fit: initial guess must be finite");
    p[j] = std::clamp(p[j], spec[j].lower, spec[j].upper);
  }
  std::vector<std::size_t> free;
  for (std::size_t j = 0; j < m; ++j) {
    if (!spec[j].fixed) free.push_back(j);
  }
  const auto k = static_cast<Eigen::Index>(free.size());
  const bool weighted = !data.sigma.empty();
  auto inv_sigma = [&](std::size_t i) { return weighted ? 1.0 / data.sigma[i] : 1.0; };

  std::vector<double> y(n), jac(n * m);
  Eigen::VectorXd r(n);
  Eigen::MatrixXd J(static_cast<Eigen::Index>(n), k);

  auto residuals = [&](const std::vector<double>& q, bool with_jac) {
    model.evaluate(data.x, q, y, with_jac ? std::span<double>(jac) : std::span<double>());
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      require_finite(y[i], "value");
      const double w = inv_sigma(i);
      r[static_cast<Eigen::Index>(i)] = (data.y[i] - y[i]) * w;
      cost += r[static_cast<Eigen::Index>(i)] * r[static_cast<Eigen::Index>(i)];
      if (with_jac) {
        for (Eigen::Index c = 0; c < k; ++c) {
          const double v = jac[i * m + free[static_cast<std::size_t>(c)]];
          require_finite(v, "derivative");
          J(static_cast<Eigen::Index>(i), c) = v * w;
        }
      }
    }
    return cost;
  };

  double scale2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) scale2 += std::pow(data.y[i] * inv_sigma(i), 2);
  const double cost_floor = 1e-26 * std::max(scale2, 1e-300);

  FitResult out;
  out.names.reserve(m);
  for (const auto& s : spec) out.names.push_back(s.name);

  double cost = residuals(p, true);
  double lambda = options.initial_lambda;
  int it = 0;
  bool converged = k == 0;
  while (!converged && it < options.max_iterations) {
    ++it;
    const Eigen::MatrixXd A = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    Eigen::VectorXd D = A.diagonal();
    const double dmax = D.size() > 0 ? D.maxCoeff() : 0.0;
    for (Eigen::Index c = 0; c < k; ++c) D[c] = std::max(D[c], 1e-12 * std::max(dmax, 1e-300));

    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd H = A;
      H.diagonal() += lambda * D;
      Eigen::VectorXd step = H.ldlt().solve(g);
      if (!step.allFinite()) {
        H = A + lambda * Eigen::MatrixXd::Identity(k, k);
        step = H.completeOrthogonalDecomposition().solve(g);
      }
      std::vector<double> trial = p;
      if (step.allFinite()) {
        for (Eigen::Index c = 0; c < k; ++c) {
          const std::size_t j = free[static_cast<std::size_t>(c)];
          trial[j] = std::clamp(p[j] + step[c], spec[j].lower, spec[j].upper);
        }
      }
      const double trial_cost = step.allFinite() ? residuals(trial, false) : inf;
      if (trial_cost <= cost) {
        double step_norm = 0.0, p_norm = 0.0;
        for (std::size_t j : free) {
          step_norm += std::pow(trial[j] - p[j], 2);
          p_norm += p[j] * p[j];
        }
        const double rel_step = std::sqrt(step_norm) / (std::sqrt(p_norm) + 1e-300);
        const double rel_cost = (cost - trial_cost) / std::max(cost, 1e-300);
        p = trial;
        cost = residuals(p, true);
        lambda = std::max(lambda / 10.0, 1e-15);
        accepted = true;
        if (rel_step < options.relative_tolerance &&
            (rel_cost < options.relative_tolerance || cost <= cost_floor)) {
          converged = true;
          out.message = "converged";
        } else if (cost <= cost_floor && rel_step < 1e-8) {
          converged = true;
          out.message = "converged (residual at floating-point floor)";
        }
      } else {
        lambda *= 10.0;
        if (lambda > 1e16) {
          // No descent direction left at any damping: a stationary point.
          converged = std::isfinite(cost);
          out.message = "converged (no further decrease possible)";
          break;
        }
      }
    }
    if (lambda > 1e16) break;
  }
  if (!converged) out.message = "iteration limit reached";

  out.parameters = p;
  out.iterations = it;
  out.converged = converged;
  out.residual_norm = std::sqrt(cost);
  const double dof = static_cast<double>(n) - static_cast<double>(k);
  out.reduced_chi2 = dof > 0.0 ? cost / dof : 0.0;

  double wsum = 0.0, ymean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = std::pow(inv_sigma(i), 2);
    wsum += w;
    ymean += w * data.y[i];
  }
  ymean /= wsum;
  double sst = 0.0;
  for (std::size_t i = 0; i < n; ++i) sst += std::pow((data.y[i] - ymean) * inv_sigma(i), 2);
  out.r_squared = sst > 0.0 ? 1.0 - cost / sst : (cost == 0.0 ? 1.0 : 0.0);

  out.covariance = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  if (k > 0) {
    // Diagonally equilibrated pseudo-inverse of J^T J.
    const Eigen::MatrixXd a = J.transpose() * J;
    Eigen::VectorXd d = a.diagonal().cwiseSqrt();
    for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = d(i) > 0.0 ? 1.0 / d(i) : 1.0;
    const Eigen::MatrixXd scaled = d.asDiagonal() * a * d.asDiagonal();
    Eigen::MatrixXd cov = d.asDiagonal() * scaled.completeOrthogonalDecomposition().pseudoInverse() * d.asDiagonal();
    if (!weighted) cov *= out.reduced_chi2;
    cov = 0.5 * (cov + cov.transpose());
    for (Eigen::Index a = 0; a < k; ++a) {
      for (Eigen::Index b = 0; b < k; ++b) {
        out.covariance(static_cast<Eigen::Index>(free[static_cast<std::size_t>(a)]),
                       static_cast<Eigen::Index>(free[static_cast<std::size_t>(b)])) = cov(a, b);
      }
    }
  }
  out.standard_errors.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    out.standard_errors[j] = std::sqrt(std::max(0.0, out.covariance(static_cast<Eigen::Index>(j),
                                                                    static_cast<Eigen::Index>(j))));
  }
  return out;
}

FitResult fit_inhomogeneous_oscillation(const FitData& data, std::vector<double> initial,
                                        const FitOptions& options) {
  if (data.x.empty()) throw std::invalid_argument("fit data: empty");
  if (initial.size() != 4) throw std::invalid_argument("fit: initial guess has the wrong length");
  const double t_max = *std::max_element(data.x.begin(), data.x.end(),
                                         [](double a, double b) { return std::abs(a) < std::abs(b); });
  InhomogeneousOscillation model(InhomogeneousOscillation::required_panels(initial, std::abs(t_max)));
  FitResult result;
  for (int attempt = 0; attempt < 2; ++attempt) {
    result = fit(model, data, initial, options);
    const int need = InhomogeneousOscillation::required_panels(result.parameters, std::abs(t_max));
    InhomogeneousOscillation fine(2 * std::max(need, model.panels()));
    const auto coarse_y = model(data.x, result.parameters);
    const auto fine_y = fine(data.x, result.parameters);
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < coarse_y.size(); ++i) {
      diff = std::max(diff, std::abs(coarse_y[i] - fine_y[i]));
      scale = std::max(scale, std::abs(fine_y[i]));
    }
    if (diff <= 1e-9 * std::max(scale, 1e-300) + 1e-15) return result;
    initial = result.parameters;
    model.set_panels(fine.panels());
  }
  std::ostringstream os;
  os << "fit_inhomogeneous_oscillation: quadrature did not converge with " << model.panels() << " panels";
  throw NumericalError(os.str());
}

double fwhm_from_sigma(double sigma) {
  if (sigma < 0.0) throw std::domain_error("fwhm_from_sigma: sigma must be >= 0");
  static const double k = std::sqrt(8.0 * std::log(2.0));
  return k * sigma;
}

AngularFrequency fwhm_from_sigma(AngularFrequency sigma) {
  return AngularFrequency::from_rad_per_s(fwhm_from_sigma(sigma.value()));
}

}  // namespace rfmag::fitting
