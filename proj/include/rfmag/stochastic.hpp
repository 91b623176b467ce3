#pragma once

// Ornstein-Uhlenbeck longitudinal noise and Monte Carlo spin-lock relaxation.

#include <cstdint>
#include <limits>
#include <vector>

#include "rfmag/analytic.hpp"
#include "rfmag/core.hpp"
#include "rfmag/fitting.hpp"

namespace rfmag::stochastic {

/// OU process x(t) with <x(t)x(0)> = omega_rms^2 exp(-|t|/tau_c).
/// tau_c = inf gives a value frozen for the whole realization.
/// With a nonzero carrier the injected field is 2 x(t) cos(carrier t + phi), phi uniform
/// per realization, so x is the nutation amplitude of a field resonant with the carrier.
struct OuNoiseModel {
  AngularFrequency omega_rms;
  double tau_c = 0.0;
  AngularFrequency carrier;

  /// Throws std::invalid_argument unless omega_rms > 0 and tau_c > 0.
  void validate() const;
  bool is_static() const { return std::isinf(tau_c); }
};

struct NoiseTrace {
  double dt = 0.0;
  std::vector<double> samples;  // rad/s
  std::uint64_t seed = 0;
};

/// Exact discretization x_{k+1} = x_k e^{-dt/tau_c} + omega_rms sqrt(1 - e^{-2 dt/tau_c}) xi_k,
/// x_0 drawn from the stationary law. Engine: mt19937_64 seeded with `seed`.
NoiseTrace ou_generate(const OuNoiseModel& model, double dt, std::size_t n, std::uint64_t seed);

/// Longitudinal field W_z(t) injected into the propagator: the OU samples themselves
/// (no carrier) or the carrier-modulated form. `initial` overrides the x_0 draw.
NoiseTrace field_trace(const OuNoiseModel& model, double dt, std::size_t n, std::uint64_t seed,
                       const double* initial = nullptr);

/// 2 omega_rms^2 tau_c / (1 + omega^2 tau_c^2), the Fourier transform of the OU
/// autocovariance over the whole time axis. Integrating over [0, inf) with dw/(2 pi)
/// and doubling returns omega_rms^2.
double ou_psd(const OuNoiseModel& model, double omega);

/// Transform of the autocovariance of the injected field W_z (carrier included).
double field_psd(const OuNoiseModel& model, double omega);

/// One-sided magnetic density of the injected field, T^2/Hz: 2 field_psd / gamma^2.
double one_sided_field_density(const OuNoiseModel& model, double omega, const GyromagneticRatio& gamma);

/// Rotating-frame relaxation rate of the injected noise from t1rho_rate.
analytic::RelaxationRate predicted_rate(const OuNoiseModel& model, AngularFrequency omega1);

/// omega_rms that gives the requested T1rho at omega1 for fixed tau_c and carrier.
AngularFrequency omega_rms_for_t1rho(double t1rho, double tau_c, AngularFrequency omega1,
                                     AngularFrequency carrier = {});

struct MonteCarloConfig {
  OuNoiseModel model;
  AngularFrequency omega1;
  std::vector<double> tau_grid;  // ascending, seconds
  std::size_t realizations = 1000;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  double p0 = 1.0;
  double steps_per_period = 64.0;
  /// For static noise, draw x_0 at stratified normal quantiles (i + u)/N.
  bool stratify_static = true;

  void validate() const;
};

struct DecaySimulation {
  std::vector<double> tau_grid;
  std::vector<double> p_mean;
  std::vector<double> p_stderr;
  std::vector<double> per_realization;  // row-major realizations x grid, includes p0
};

/// Averages the locked-state escape probability over independent noise realizations.
/// Realization i uses derive_seed(seed, i); results do not depend on `threads`.
DecaySimulation simulate_decay(const MonteCarloConfig& config);

struct T1rhoEstimate {
  double t1rho = 0.0;
  double ci_low = 0.0;   // 2.5% bootstrap percentile
  double ci_high = 0.0;  // 97.5% bootstrap percentile
  double p0 = 0.0;       // fitted (twice the saturation level)
  double predicted_t1rho = 0.0;
  fitting::FitResult fit;
  DecaySimulation simulation;
};

/// Fits (p0/2)(1 - exp(-tau/T1rho)) to the simulated decay, with a percentile
/// bootstrap over realizations. Throws NumericalError if the fit fails.
T1rhoEstimate monte_carlo_t1rho(const MonteCarloConfig& config, int bootstrap = 200);

/// Fits (p0/2)(1 - exp(-tau/T1rho)) to a decay curve. Throws NumericalError on failure.
fitting::FitResult fit_decay(const std::vector<double>& tau, const std::vector<double>& p);

enum class RelaxationKind { t1, t1rho };

/// p0 (1 - exp(-t/T)). Throws std::domain_error for T <= 0.
std::vector<double> relaxation_curve(RelaxationKind kind, double t, double p0, const std::vector<double>& tau_grid);

struct DecayShape {
  double r2_exponential = 0.0;
  double r2_gaussian = 0.0;
  bool exponential() const { return r2_exponential > r2_gaussian; }
};

/// Compares exponential and Gaussian-in-tau saturation fits to the same curve.
DecayShape classify_decay(const std::vector<double>& tau, const std::vector<double>& p);

}  // namespace rfmag::stochastic
