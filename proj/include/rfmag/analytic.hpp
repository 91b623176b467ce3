#pragma once

// Closed-form response of a spin-locked two-level system: coherent and
// stochastic transition probabilities, detection bandwidth, inhomogeneous
// broadening of the rotating-frame line, and the sensitivity budget.

#include <limits>
#include <vector>

#include "rfmag/core.hpp"

namespace rfmag::analytic {

struct TransitionResponse {
  double probability = 0.0;
};

/// p = p0 * W1^2/(W1^2 + d^2) * sin^2(sqrt(W1^2 + d^2) * tau / 2), d = rf - omega_eff.
TransitionResponse coherent_probability(double p0, const RfProbe& rf, AngularFrequency omega_eff,
                                        double tau);

/// Same as above on raw rad/s values. Continuous at W1 = d = 0 (returns 0).
double coherent_probability(double p0, double rf_amplitude, double mismatch, double tau);

/// Lorentzian envelope p0 * W1^2/(W1^2 + d^2) that bounds coherent_probability.
double coherent_envelope(double p0, double rf_amplitude, double mismatch);

/// p0 * W1^2 tau^2 / 4. Emits a domain warning when W1*tau > 0.1 * pi/2.
TransitionResponse weak_field_probability(double p0, AngularFrequency rf_amplitude, double tau);

/// (p0/2)(1 - exp(-tau/T1rho)), uncorrelated stochastic excitation.
TransitionResponse stochastic_probability(double p0, double tau, double t1rho);

/// One-sided magnetic noise densities in T^2/Hz.
struct NoiseDensity {
  double s_bz_at_omega1 = 0.0;
  double s_by_at_omega0 = 0.0;
};

/// A relaxation rate; zero rate is explicit and maps to an infinite time.
struct RelaxationRate {
  double per_second = 0.0;

  bool is_zero() const { return per_second == 0.0; }
  double time() const {
    return is_zero() ? std::numeric_limits<double>::infinity() : 1.0 / per_second;
  }
};

/// 1/T1rho = (gamma^2/4) [S_Bz(omega1) + S_By(omega0)].
RelaxationRate t1rho_rate(const NoiseDensity& density, const GyromagneticRatio& gamma);

/// Slowly varying Gaussian amplitude: (p0/2)(1 - exp(-W_rms^2 tau^2 / 2)).
TransitionResponse correlated_probability(double p0, AngularFrequency omega_rms, double tau);

/// Nominal T1rho = sqrt(2)/W_rms of the correlated regime.
double correlated_t1rho(AngularFrequency omega_rms);

enum class BandwidthRegime { time_limited, power_broadened };

struct DetectionBandwidth {
  AngularFrequency width;
  BandwidthRegime regime = BandwidthRegime::time_limited;
};

/// Ratio p(d)/p(0) of the coherent response, with a = W1*tau and d in units of 1/tau.
/// Finite at a = 0 (weak-field limit sinc^2(d/2)).
double half_max_ratio(double a, double d);

/// Full width b (in units of 1/tau) where p(b/2)/p(0) = 1/2, found by bracketing
/// the first crossing and bisecting to |residual| < 1e-12. Requires a <= pi.
double half_max_width(double a);

/// b*tau in the weak-field limit, computed once by bisection on the coherent response.
double time_limited_bandwidth_constant();

/// max(k/tau, 2*W1) with k = time_limited_bandwidth_constant().
DetectionBandwidth detection_bandwidth(AngularFrequency rf_amplitude, double tau);

/// Gaussian propagation of an ESR line into the rotating frame.
struct InhomogeneousBroadening {
  AngularFrequency shift;  // Delta Omega_1 ~ -Delta^2 / (2 omega1)
  AngularFrequency sigma;  // sigma_Omega_1
};

/// Throws std::domain_error for omega1 <= 0. Warns if sigma or |detuning| exceed omega1/4.
InhomogeneousBroadening inhomogeneous_shift_sigma(AngularFrequency omega1, AngularFrequency detuning,
                                                  AngularFrequency sigma);

struct AveragedResponse {
  double probability = 0.0;          // sum of contributions
  std::vector<double> per_line;      // line-conditional probability (includes p0)
  std::vector<double> contributions; // weight * per_line
};

struct QuadratureOptions {
  double half_range_sigmas = 6.0;
  int panels_per_sigma = 1;  // 15-point Gauss-Kronrod per panel, adaptive below that
  double tolerance = 1e-10;
  unsigned max_depth = 18;
};

/// Response averaged over the ESR spectrum: each Gaussian line integrated
/// independently over +-6 sigma, weights summed.
AveragedResponse averaged_probability(const SpinSystem& system, AngularFrequency omega1,
                                      const RfProbe& rf, double tau, double p0,
                                      const QuadratureOptions& options = {});

/// Shot-noise SNR = p * epsilon * sqrt(C).
double snr_shot(double p, double epsilon, double counts);

struct SensitivityBudget {
  double tau = 0.0;
  double t_meas = 0.0;
  double total_time = 0.0;
  double counts = 0.0;
  double shots = 0.0;
  double photons_per_shot = 0.0;
  double contrast = 0.0;
  double p0 = 0.0;
  double baseline_sigma = 0.0;
  double overlap_factor = 1.0;
  double t1rho = std::numeric_limits<double>::infinity();

  /// Throws std::invalid_argument on a non-positive field; warns if C and N*r disagree by > 5%.
  void validate() const;
};

/// B_min = [x p0 exp(-tau/T1rho) eps gamma^2 tau^1.5 (T r)^0.5 / 4]^(-1/2).
MagneticField bmin_shot(const SensitivityBudget& budget, const GyromagneticRatio& gamma);

/// B_min = (2/(gamma tau)) sqrt(sigma_p/p0).
MagneticField bmin_baseline(double sigma_p, double p0, const GyromagneticRatio& gamma, double tau);

/// Per-orientation amplitude density sqrt(2/(gamma^2 T1)) in T/sqrt(Hz).
double sb_from_t1(double t1, const GyromagneticRatio& gamma);
double t1_from_sb(double amplitude_density, const GyromagneticRatio& gamma);

}  // namespace rfmag::analytic
