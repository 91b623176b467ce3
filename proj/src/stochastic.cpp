#include "rfmag/stochastic.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "rfmag/parallel.hpp"
#include "rfmag/propagator.hpp"

namespace rfmag::stochastic {

namespace {

double lorentzian(double nu, double tau_c) { return 2.0 * tau_c / (1.0 + nu * nu * tau_c * tau_c); }

void validate_grid(const std::vector<double>& grid) {
  if (grid.empty()) throw std::invalid_argument("tau grid is empty");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!(grid[k] >= 0.0) || !std::isfinite(grid[k]) || (k > 0 && grid[k] <= grid[k - 1])) {
      throw std::invalid_argument("tau grid must be strictly ascending, finite and >= 0");
    }
  }
}

std::vector<double> ou_samples(const OuNoiseModel& model, double dt, std::size_t n, std::mt19937_64& eng,
                               const double* initial) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sigma = model.omega_rms.value();
  std::vector<double> x(n);
  x[0] = initial != nullptr ? *initial : sigma * normal(eng);
  if (model.is_static()) {
    std::fill(x.begin(), x.end(), x[0]);
    return x;
  }
  const double decay = std::exp(-dt / model.tau_c);
  const double kick = sigma * std::sqrt(-std::expm1(-2.0 * dt / model.tau_c));
  for (std::size_t k = 1; k < n; ++k) x[k] = x[k - 1] * decay + kick * normal(eng);
  return x;
}

}  // namespace

void OuNoiseModel::validate() const {
  if (!(omega_rms.value() > 0.0)) throw std::invalid_argument("noise omega_rms must be > 0");
  if (!(tau_c > 0.0)) throw std::invalid_argument("noise tau_c must be > 0");
  if (carrier.value() < 0.0) throw std::invalid_argument("noise carrier must be >= 0");
}

NoiseTrace ou_generate(const OuNoiseModel& model, double dt, std::size_t n, std::uint64_t seed) {
  model.validate();
  if (!(dt > 0.0)) throw std::invalid_argument("ou_generate: dt must be > 0");
  if (n < 1) throw std::invalid_argument("ou_generate: n must be >= 1");
  std::mt19937_64 eng(seed);
  return {dt, ou_samples(model, dt, n, eng, nullptr), seed};
}

NoiseTrace field_trace(const OuNoiseModel& model, double dt, std::size_t n, std::uint64_t seed,
                       const double* initial) {
  model.validate();
  if (!(dt > 0.0) || n < 1) throw std::invalid_argument("field_trace: need dt > 0 and n >= 1");
  std::mt19937_64 eng(seed);
  const double phase = std::uniform_real_distribution<double>(0.0, two_pi)(eng);
  std::vector<double> x = ou_samples(model, dt, n, eng, initial);
  const double wc = model.carrier.value();
  if (wc != 0.0) {
    // Rotating phasor recurrence, renormalized every step.
    double c = std::cos(phase), s = std::sin(phase);
    const double cd = std::cos(wc * dt), sd = std::sin(wc * dt);
    for (std::size_t k = 0; k < n; ++k) {
      x[k] *= 2.0 * c;
      const double cn = c * cd - s * sd;
      const double sn = s * cd + c * sd;
      const double r = 1.0 / std::hypot(cn, sn);
      c = cn * r;
      s = sn * r;
    }
  }
  return {dt, std::move(x), seed};
}

double ou_psd(const OuNoiseModel& model, double omega) {
  model.validate();
  if (omega < 0.0) throw std::domain_error("ou_psd: omega must be >= 0");
  if (model.is_static()) return omega == 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  const double w = model.omega_rms.value();
  return w * w * lorentzian(omega, model.tau_c);
}

double field_psd(const OuNoiseModel& model, double omega) {
  const double wc = model.carrier.value();
  if (wc == 0.0) return ou_psd(model, omega);
  model.validate();
  if (omega < 0.0) throw std::domain_error("field_psd: omega must be >= 0");
  if (model.is_static()) return omega == wc ? std::numeric_limits<double>::infinity() : 0.0;
  const double w = model.omega_rms.value();
  return w * w * (lorentzian(omega - wc, model.tau_c) + lorentzian(omega + wc, model.tau_c));
}

double one_sided_field_density(const OuNoiseModel& model, double omega, const GyromagneticRatio& gamma) {
  const double g = gamma.value();
  return 2.0 * field_psd(model, omega) / (g * g);
}

analytic::RelaxationRate predicted_rate(const OuNoiseModel& model, AngularFrequency omega1) {
  if (model.is_static()) {
    throw std::domain_error("predicted_rate: static noise has no relaxation rate; use correlated_probability");
  }
  const GyromagneticRatio gamma;
  return analytic::t1rho_rate({one_sided_field_density(model, omega1.value(), gamma), 0.0}, gamma);
}

AngularFrequency omega_rms_for_t1rho(double t1rho, double tau_c, AngularFrequency omega1, AngularFrequency carrier) {
  if (!(t1rho > 0.0)) throw std::invalid_argument("omega_rms_for_t1rho: T1rho must be > 0");
  const OuNoiseModel unit{AngularFrequency::from_rad_per_s(1.0), tau_c, carrier};
  const double rate_per_unit = predicted_rate(unit, omega1).per_second;
  return AngularFrequency::from_rad_per_s(std::sqrt(1.0 / (t1rho * rate_per_unit)));
}

void MonteCarloConfig::validate() const {
  model.validate();
  if (!(omega1.value() > 0.0)) throw std::invalid_argument("Monte Carlo: omega1 must be > 0");
  validate_grid(tau_grid);
  if (realizations < 1) throw std::invalid_argument("Monte Carlo: need at least one realization");
  if (!(p0 > 0.0 && p0 <= 1.0)) throw std::invalid_argument("Monte Carlo: p0 must lie in (0, 1]");
  if (!(steps_per_period >= 40.0)) throw std::invalid_argument("Monte Carlo: steps_per_period must be >= 40");
}

DecaySimulation simulate_decay(const MonteCarloConfig& config) {
  config.validate();
  const std::size_t n_real = config.realizations;
  const std::size_t n_tau = config.tau_grid.size();
  const double dt = two_pi / config.omega1.value() / config.steps_per_period;
  const double tau_max = config.tau_grid.back();
  const std::size_t n_noise = static_cast<std::size_t>(std::ceil(tau_max / dt)) + 2;
  const bool stratify = config.model.is_static() && config.stratify_static;
  const boost::math::normal_distribution<double> standard;

  DecaySimulation out;
  out.tau_grid = config.tau_grid;
  out.per_realization.assign(n_real * n_tau, 0.0);

  parallel_for(n_real, config.threads, [&](std::size_t i) {
    const std::uint64_t seed = derive_seed(config.seed, i);
    double x0 = 0.0;
    const double* initial = nullptr;
    if (stratify) {
      std::mt19937_64 eng(derive_seed(seed, 1));
      const double u = std::uniform_real_distribution<double>(0.0, 1.0)(eng);
      const double q = (static_cast<double>(i) + u) / static_cast<double>(n_real);
      x0 = config.model.omega_rms.value() * quantile(standard, std::clamp(q, 1e-300, 1.0 - 1e-16));
      initial = &x0;
    }
    const NoiseTrace trace = field_trace(config.model, dt, n_noise, seed, initial);
    propagator::NumericConfig nc;
    nc.omega1 = config.omega1;
    nc.ramps.ideal = true;
    nc.params.noise = trace.samples;
    nc.params.noise_dt = trace.dt;
    nc.options.dt = dt;
    const auto p = propagator::probability_trace(nc, config.tau_grid);
    for (std::size_t k = 0; k < n_tau; ++k) out.per_realization[i * n_tau + k] = config.p0 * p[k];
  });

  out.p_mean.assign(n_tau, 0.0);
  out.p_stderr.assign(n_tau, 0.0);
  for (std::size_t k = 0; k < n_tau; ++k) {
    double mean = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < n_real; ++i) {
      // Welford in fixed index order keeps the result independent of scheduling.
      const double v = out.per_realization[i * n_tau + k];
      const double d = v - mean;
      mean += d / static_cast<double>(i + 1);
      m2 += d * (v - mean);
    }
    out.p_mean[k] = mean;
    out.p_stderr[k] = n_real > 1 ? std::sqrt(m2 / static_cast<double>(n_real - 1) / static_cast<double>(n_real)) : 0.0;
  }
  return out;
}

fitting::FitResult fit_decay(const std::vector<double>& tau, const std::vector<double>& p) {
  if (tau.size() != p.size() || tau.size() < 3) throw std::invalid_argument("fit_decay: need >= 3 matching points");
  const double p_max = *std::max_element(p.begin(), p.end());
  if (!(p_max > 0.0)) throw NumericalError("fit_decay: curve is identically zero; no decay to fit");
  // Initial T from the first point that reaches half of the largest value.
  double t_guess = tau.back();
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] >= 0.5 * p_max && tau[k] > 0.0) {
      t_guess = tau[k] / std::log(2.0);
      break;
    }
  }
  fitting::ExponentialSaturation model;
  const auto result = fitting::fit(model, {tau, p, {}}, {p_max, t_guess});
  if (!result.converged || !(result.parameters[1] > 0.0)) {
    std::ostringstream os;
    os << "fit_decay: fit failed (" << result.message << ", iterations " << result.iterations
       << ", T = " << result.parameters[1] << " s, residual " << result.residual_norm << ")";
    throw NumericalError(os.str());
  }
  return result;
}

T1rhoEstimate monte_carlo_t1rho(const MonteCarloConfig& config, int bootstrap) {
  if (bootstrap < 0) throw std::invalid_argument("monte_carlo_t1rho: bootstrap count must be >= 0");
  T1rhoEstimate out;
  out.simulation = simulate_decay(config);
  const auto& sim = out.simulation;
  out.fit = fit_decay(sim.tau_grid, sim.p_mean);
  out.t1rho = out.fit.parameters[1];
  out.p0 = 2.0 * out.fit.parameters[0];
  out.predicted_t1rho = config.model.is_static() ? analytic::correlated_t1rho(config.model.omega_rms)
                                                 : predicted_rate(config.model, config.omega1).time();

  const std::size_t n_real = config.realizations;
  const std::size_t n_tau = sim.tau_grid.size();
  std::vector<double> samples(static_cast<std::size_t>(bootstrap));
  const std::uint64_t boot_seed = derive_seed(config.seed, std::numeric_limits<std::uint64_t>::max());
  parallel_for(samples.size(), config.threads, [&](std::size_t b) {
    std::mt19937_64 eng(derive_seed(boot_seed, b));
    std::uniform_int_distribution<std::size_t> pick(0, n_real - 1);
    std::vector<double> mean(n_tau, 0.0);
    for (std::size_t i = 0; i < n_real; ++i) {
      const std::size_t r = pick(eng);
      for (std::size_t k = 0; k < n_tau; ++k) mean[k] += sim.per_realization[r * n_tau + k];
    }
    for (double& m : mean) m /= static_cast<double>(n_real);
    samples[b] = fit_decay(sim.tau_grid, mean).parameters[1];
  });
  if (!samples.empty()) {
    std::sort(samples.begin(), samples.end());
    auto pct = [&](double q) {
      const double pos = q * static_cast<double>(samples.size() - 1);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const auto hi = std::min(lo + 1, samples.size() - 1);
      return samples[lo] + (pos - static_cast<double>(lo)) * (samples[hi] - samples[lo]);
    };
    out.ci_low = pct(0.025);
    out.ci_high = pct(0.975);
  } else {
    out.ci_low = out.ci_high = out.t1rho;
  }
  return out;
}

std::vector<double> relaxation_curve(RelaxationKind, double t, double p0, const std::vector<double>& tau_grid) {
  if (!(t > 0.0)) throw std::domain_error("relaxation_curve: T must be > 0");
  std::vector<double> out(tau_grid.size());
  for (std::size_t k = 0; k < tau_grid.size(); ++k) out[k] = p0 * -std::expm1(-tau_grid[k] / t);
  return out;
}

DecayShape classify_decay(const std::vector<double>& tau, const std::vector<double>& p) {
  DecayShape shape;
  shape.r2_exponential = fit_decay(tau, p).r_squared;

  fitting::DecayingSinusoid gaussian;
  gaussian.parameter(1).fixed = true;  // omega = 0: (p0/2)(1 - exp(-t^2/(2T^2)))
  const double p_max = *std::max_element(p.begin(), p.end());
  double t_guess = tau.back();
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] >= 0.5 * p_max && tau[k] > 0.0) {
      t_guess = tau[k];
      break;
    }
  }
  const auto g = fitting::fit(gaussian, {tau, p, {}}, {2.0 * p_max, 0.0, t_guess});
  shape.r2_gaussian = g.r_squared;
  return shape;
}

}  // namespace rfmag::stochastic
