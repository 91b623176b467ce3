#include "rfmag/analytic.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <sstream>

#include "rfmag/diagnostics.hpp"

namespace rfmag::analytic {

namespace {

double sinc(double x) {
  if (std::abs(x) < 1e-4) {
    const double x2 = x * x;
    return 1.0 - x2 / 6.0 + x2 * x2 / 120.0;
  }
  return std::sin(x) / x;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

double coherent_probability(double p0, double rf_amplitude, double mismatch, double tau) {
  // sinc form stays finite at W = 0.
  const double w = std::hypot(rf_amplitude, mismatch);
  const double half = 0.5 * rf_amplitude * tau;
  const double s = sinc(0.5 * w * tau);
  return p0 * half * half * s * s;
}

double coherent_envelope(double p0, double rf_amplitude, double mismatch) {
  const double a2 = rf_amplitude * rf_amplitude;
  const double w2 = a2 + mismatch * mismatch;
  return w2 == 0.0 ? 0.0 : p0 * a2 / w2;
}

TransitionResponse coherent_probability(double p0, const RfProbe& rf, AngularFrequency omega_eff,
                                        double tau) {
  if (tau < 0.0) throw std::domain_error("coherent_probability: tau must be >= 0");
  if (!(p0 > 0.0 && p0 <= 1.0)) throw std::domain_error("coherent_probability: p0 must lie in (0, 1]");
  const double mismatch = rf.frequency().value() - omega_eff.value();
  return {coherent_probability(p0, rf.amplitude().value(), mismatch, tau)};
}

TransitionResponse weak_field_probability(double p0, AngularFrequency rf_amplitude, double tau) {
  const double a = rf_amplitude.value() * tau;
  if (a > 0.1 * std::numbers::pi / 2.0) {
    emit_warning("weak_field_probability",
                 "W1*tau = " + fmt_double(a) + " exceeds 0.1*pi/2; weak-field limit is inaccurate");
  }
  return {p0 * a * a / 4.0};
}

TransitionResponse stochastic_probability(double p0, double tau, double t1rho) {
  if (!(tau > 0.0) || !(t1rho > 0.0)) {
    throw std::domain_error("stochastic_probability: tau and T1rho must be > 0");
  }
  return {0.5 * p0 * -std::expm1(-tau / t1rho)};
}

RelaxationRate t1rho_rate(const NoiseDensity& density, const GyromagneticRatio& gamma) {
  if (density.s_bz_at_omega1 < 0.0 || density.s_by_at_omega0 < 0.0) {
    throw std::domain_error("t1rho_rate: noise densities must be >= 0");
  }
  const double g2 = gamma.value() * gamma.value();
  return {0.25 * g2 * (density.s_bz_at_omega1 + density.s_by_at_omega0)};
}

TransitionResponse correlated_probability(double p0, AngularFrequency omega_rms, double tau) {
  if (tau < 0.0) throw std::domain_error("correlated_probability: tau must be >= 0");
  const double x = omega_rms.value() * tau;
  return {0.5 * p0 * -std::expm1(-0.5 * x * x)};
}

double correlated_t1rho(AngularFrequency omega_rms) {
  return std::numbers::sqrt2 / omega_rms.value();
}

double half_max_ratio(double a, double d) {
  const double s0 = sinc(0.5 * a);
  const double s = sinc(0.5 * std::hypot(a, d));
  return (s * s) / (s0 * s0);
}

double half_max_width(double a) {
  if (!(a >= 0.0 && a <= std::numbers::pi)) {
    throw std::domain_error("half_max_width: W1*tau must lie in [0, pi]");
  }
  auto residual = [a](double d) { return half_max_ratio(a, d) - 0.5; };
  double lo = 0.0;
  double hi = 0.01;
  while (residual(hi) > 0.0) {
    lo = hi;
    hi += 0.01;
  }
  // Plain bisection; the width tolerance is far below 1e-12 relative.
  for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
    const double mid = 0.5 * (lo + hi);
    (residual(mid) > 0.0 ? lo : hi) = mid;
  }
  return lo + hi;  // 2 * midpoint
}

double time_limited_bandwidth_constant() {
  static const double k = half_max_width(0.0);
  return k;
}

DetectionBandwidth detection_bandwidth(AngularFrequency rf_amplitude, double tau) {
  if (!(tau > 0.0)) throw std::domain_error("detection_bandwidth: tau must be > 0");
  const double time_limited = time_limited_bandwidth_constant() / tau;
  const double power = 2.0 * rf_amplitude.value();
  if (power > time_limited) {
    return {AngularFrequency::from_rad_per_s(power), BandwidthRegime::power_broadened};
  }
  return {AngularFrequency::from_rad_per_s(time_limited), BandwidthRegime::time_limited};
}

InhomogeneousBroadening inhomogeneous_shift_sigma(AngularFrequency omega1, AngularFrequency detuning,
                                                  AngularFrequency sigma) {
  const double w1 = omega1.value();
  if (!(w1 > 0.0)) throw std::domain_error("inhomogeneous_shift_sigma: omega1 must be > 0");
  const double d = detuning.value();
  const double s = sigma.value();
  if (s > w1 / 4.0 || std::abs(d) > w1 / 4.0) {
    emit_warning("inhomogeneous_shift_sigma",
                 "sigma or |detuning| exceeds omega1/4; Gaussian propagation is inaccurate");
  }
  const double shift = -d * d / (2.0 * w1);
  const double var = (d * d / (w1 * w1) + s * s / (4.0 * w1 * w1)) * s * s;
  return {AngularFrequency::from_rad_per_s(shift), AngularFrequency::from_rad_per_s(std::sqrt(var))};
}

AveragedResponse averaged_probability(const SpinSystem& system, AngularFrequency omega1,
                                      const RfProbe& rf, double tau, double p0,
                                      const QuadratureOptions& options) {
  validate_weights(system.lines());
  if (tau < 0.0) throw std::domain_error("averaged_probability: tau must be >= 0");
  using boost::math::quadrature::gauss_kronrod;

  const double w1 = omega1.value();
  const double amp = rf.amplitude().value();
  const double rf_freq = rf.frequency().value();
  const double h = options.half_range_sigmas;
  // Mass of the standard normal inside +-h sigma; renormalizes the truncation.
  const double mass = std::erf(h / std::numbers::sqrt2);
  const int panels = std::max(1, static_cast<int>(std::ceil(2.0 * h * options.panels_per_sigma)));

  AveragedResponse out;
  out.per_line.reserve(system.size());
  out.contributions.reserve(system.size());
  for (const auto& line : system.lines()) {
    const double mu = line.detuning.value();
    const double sg = line.sigma.value();
    // Integrate in the standardized variable z = (detuning - mu)/sigma.
    auto integrand = [&](double z) {
      const double detuning = mu + sg * z;
      const double mismatch = rf_freq - std::hypot(w1, detuning);
      const double weight = std::exp(-0.5 * z * z) / std::sqrt(two_pi);
      return weight * coherent_probability(1.0, amp, mismatch, tau);
    };
    double sum = 0.0;
    const double width = 2.0 * h / panels;
    for (int k = 0; k < panels; ++k) {
      const double a = -h + k * width;
      double err = 0.0;
      sum += gauss_kronrod<double, 15>::integrate(integrand, a, a + width, options.max_depth,
                                                  options.tolerance, &err);
      if (!std::isfinite(sum)) throw NumericalError("averaged_probability: non-finite quadrature");
    }
    const double p_line = p0 * sum / mass;
    out.per_line.push_back(p_line);
    out.contributions.push_back(line.weight * p_line);
    out.probability += line.weight * p_line;
  }
  return out;
}

double snr_shot(double p, double epsilon, double counts) {
  if (!(counts > 0.0)) throw std::domain_error("snr_shot: counts must be > 0");
  return p * epsilon * std::sqrt(counts);
}

void SensitivityBudget::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw std::invalid_argument(std::string("sensitivity budget: ") + name + " must be > 0");
  };
  positive(tau, "tau");
  positive(t_meas, "t_meas");
  positive(total_time, "total_time");
  positive(counts, "counts");
  positive(shots, "shots");
  positive(photons_per_shot, "photons_per_shot");
  positive(contrast, "contrast");
  positive(p0, "p0");
  positive(baseline_sigma, "baseline_sigma");
  positive(overlap_factor, "overlap_factor");
  positive(t1rho, "t1rho");
  if (contrast > 1.0 || p0 > 1.0 || overlap_factor > 1.0) {
    throw std::invalid_argument("sensitivity budget: contrast, p0 and overlap factor must be <= 1");
  }
  if (t_meas < tau) emit_warning("SensitivityBudget", "t_meas is shorter than tau");
  const double nr = shots * photons_per_shot;
  if (std::abs(nr - counts) > 0.05 * counts) {
    emit_warning("SensitivityBudget", "counts C differs from N*r by more than 5%");
  }
}

MagneticField bmin_shot(const SensitivityBudget& b, const GyromagneticRatio& gamma) {
  b.validate();
  const double g2 = gamma.value() * gamma.value();
  const double relax = std::exp(-b.tau / b.t1rho);
  const double k = 0.25 * b.overlap_factor * b.p0 * relax * b.contrast * g2 * std::pow(b.tau, 1.5) *
                   std::sqrt(b.total_time * b.photons_per_shot);
  return MagneticField::from_tesla(1.0 / std::sqrt(k));
}

MagneticField bmin_baseline(double sigma_p, double p0, const GyromagneticRatio& gamma, double tau) {
  if (sigma_p < 0.0 || !(p0 > 0.0) || !(tau > 0.0)) {
    throw std::domain_error("bmin_baseline: need sigma_p >= 0, p0 > 0, tau > 0");
  }
  return MagneticField::from_tesla(2.0 / (gamma.value() * tau) * std::sqrt(sigma_p / p0));
}

double sb_from_t1(double t1, const GyromagneticRatio& gamma) {
  if (!(t1 > 0.0)) throw std::domain_error("sb_from_t1: T1 must be > 0");
  if (std::isinf(t1)) return 0.0;
  return std::sqrt(2.0 / (gamma.value() * gamma.value() * t1));
}

double t1_from_sb(double amplitude_density, const GyromagneticRatio& gamma) {
  if (!(amplitude_density > 0.0)) throw std::domain_error("t1_from_sb: density must be > 0");
  const double g = gamma.value();
  return 2.0 / (g * g * amplitude_density * amplitude_density);
}

}  // namespace rfmag::analytic
