#pragma once

// Units, physical constants and the small value types shared by every module.
//
// Convention: every frequency inside the library is an angular frequency in
// rad/s. Hz only appears at the I/O boundary (configs, CSV, JSON), through
// AngularFrequency::from_hz() and AngularFrequency::hz().

#include <cmath>
#include <compare>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace rfmag {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Raised when a numerical procedure fails (NaN, non-convergence, bad fit).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AngularFrequency {
 public:
  constexpr AngularFrequency() = default;

  static AngularFrequency from_rad_per_s(double w) { return AngularFrequency(w); }
  static AngularFrequency from_hz(double f) { return AngularFrequency(two_pi * f); }

  constexpr double value() const { return w_; }
  double hz() const { return w_ / two_pi; }

  AngularFrequency operator-() const { return AngularFrequency(-w_); }
  AngularFrequency& operator+=(AngularFrequency o) { w_ += o.w_; return *this; }
  AngularFrequency& operator-=(AngularFrequency o) { w_ -= o.w_; return *this; }
  friend AngularFrequency operator+(AngularFrequency a, AngularFrequency b) { return a += b; }
  friend AngularFrequency operator-(AngularFrequency a, AngularFrequency b) { return a -= b; }
  friend AngularFrequency operator*(double s, AngularFrequency a) { return AngularFrequency(s * a.w_); }
  friend AngularFrequency operator*(AngularFrequency a, double s) { return AngularFrequency(s * a.w_); }
  friend AngularFrequency operator/(AngularFrequency a, double s) { return AngularFrequency(a.w_ / s); }
  friend double operator/(AngularFrequency a, AngularFrequency b) { return a.w_ / b.w_; }
  friend auto operator<=>(AngularFrequency, AngularFrequency) = default;

 private:
  explicit AngularFrequency(double w) : w_(w) {
    if (!std::isfinite(w)) throw std::domain_error("angular frequency must be finite");
  }
  double w_ = 0.0;
};

AngularFrequency abs(AngularFrequency w);

class MagneticField {
 public:
  constexpr MagneticField() = default;
  static MagneticField from_tesla(double b);
  constexpr double tesla() const { return b_; }
  friend auto operator<=>(MagneticField, MagneticField) = default;

 private:
  explicit constexpr MagneticField(double b) : b_(b) {}
  double b_ = 0.0;
};

/// Gyromagnetic ratio in rad/(s*T).
class GyromagneticRatio {
 public:
  // Free-electron value, 28.02495 GHz/T.
  static constexpr double default_hz_per_tesla = 28.02495e9;

  GyromagneticRatio() : gamma_(two_pi * default_hz_per_tesla) {}
  static GyromagneticRatio from_rad_per_s_per_tesla(double gamma);
  static GyromagneticRatio from_hz_per_tesla(double gamma_hz);

  double value() const { return gamma_; }
  double hz_per_tesla() const { return gamma_ / two_pi; }

 private:
  explicit GyromagneticRatio(double gamma) : gamma_(gamma) {}
  double gamma_;
};

/// One Gaussian ESR line. `detuning` is omega_mw minus the line centre.
struct EsrLine {
  AngularFrequency detuning;
  AngularFrequency sigma;
  double weight = 1.0;

  void validate() const;
};

class SpinSystem {
 public:
  SpinSystem(GyromagneticRatio gamma, std::vector<EsrLine> lines);

  /// The 14N hyperfine triplet with the microwave on the m_I = -1 line:
  /// detunings -0.5, +1.7, +3.9 MHz, sigma 350 kHz, thermal weights 1/3.
  static SpinSystem nv14_triplet(GyromagneticRatio gamma = {});
  static SpinSystem single_line(AngularFrequency detuning, AngularFrequency sigma,
                                GyromagneticRatio gamma = {});

  const GyromagneticRatio& gamma() const { return gamma_; }
  const std::vector<EsrLine>& lines() const { return lines_; }
  std::size_t size() const { return lines_.size(); }

 private:
  GyromagneticRatio gamma_;
  std::vector<EsrLine> lines_;
};

/// Weights must sum to one within this tolerance.
inline constexpr double weight_sum_tolerance = 1e-12;
void validate_weights(const std::vector<EsrLine>& lines);

/// RF probe. amplitude == gamma * amplitude_field holds exactly by construction.
class RfProbe {
 public:
  RfProbe() = default;
  static RfProbe from_field(MagneticField amplitude_field, AngularFrequency frequency,
                            const GyromagneticRatio& gamma, double phase = 0.0);
  /// Builds a probe from a calibrated rotating-frame amplitude (Omega_1).
  static RfProbe from_amplitude(AngularFrequency amplitude, AngularFrequency frequency,
                                const GyromagneticRatio& gamma, double phase = 0.0);

  MagneticField amplitude_field() const { return field_; }
  AngularFrequency amplitude() const { return amplitude_; }
  AngularFrequency frequency() const { return frequency_; }
  double phase() const { return phase_; }

  RfProbe with_frequency(AngularFrequency f) const;
  RfProbe with_amplitude(AngularFrequency a, const GyromagneticRatio& gamma) const;

 private:
  MagneticField field_;
  AngularFrequency amplitude_;
  AngularFrequency frequency_;
  double phase_ = 0.0;
};

/// Omega = gamma * B. Throws std::domain_error for B < 0.
AngularFrequency field_to_rabi(MagneticField b, const GyromagneticRatio& gamma);
MagneticField rabi_to_field(AngularFrequency w, const GyromagneticRatio& gamma);

/// sqrt(omega1^2 + detuning^2). Throws std::domain_error for omega1 < 0.
AngularFrequency effective_rabi(AngularFrequency omega1, AngularFrequency detuning);

}  // namespace rfmag
