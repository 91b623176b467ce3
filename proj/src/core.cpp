#include "rfmag/core.hpp"

#include <numeric>
#include <sstream>

namespace rfmag {

AngularFrequency abs(AngularFrequency w) {
  return AngularFrequency::from_rad_per_s(std::abs(w.value()));
}

MagneticField MagneticField::from_tesla(double b) {
  if (!std::isfinite(b)) throw std::domain_error("magnetic field must be finite");
  return MagneticField(b);
}

GyromagneticRatio GyromagneticRatio::from_rad_per_s_per_tesla(double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw std::domain_error("gyromagnetic ratio must be positive and finite");
  }
  return GyromagneticRatio(gamma);
}

GyromagneticRatio GyromagneticRatio::from_hz_per_tesla(double gamma_hz) {
  return from_rad_per_s_per_tesla(two_pi * gamma_hz);
}

void EsrLine::validate() const {
  if (!(sigma.value() > 0.0)) throw std::domain_error("ESR line sigma must be > 0");
  if (!(weight >= 0.0 && weight <= 1.0)) throw std::domain_error("ESR line weight must lie in [0, 1]");
}

void validate_weights(const std::vector<EsrLine>& lines) {
  if (lines.empty()) throw std::invalid_argument("spin system needs at least one ESR line");
  const double total = std::accumulate(lines.begin(), lines.end(), 0.0,
                                       [](double acc, const EsrLine& l) { return acc + l.weight; });
  if (std::abs(total - 1.0) > weight_sum_tolerance) {
    std::ostringstream os;
    os.precision(17);
    os << "ESR line weights must sum to 1 (got " << total << ")";
    throw std::invalid_argument(os.str());
  }
}

SpinSystem::SpinSystem(GyromagneticRatio gamma, std::vector<EsrLine> lines)
    : gamma_(gamma), lines_(std::move(lines)) {
  for (const auto& l : lines_) l.validate();
  validate_weights(lines_);
}

SpinSystem SpinSystem::nv14_triplet(GyromagneticRatio gamma) {
  const auto sigma = AngularFrequency::from_hz(350e3);
  constexpr double third = 1.0 / 3.0;
  // 1/3 + 1/3 + 1/3 is 1 - 1ulp in binary; the last weight absorbs it.
  return SpinSystem(gamma, {
                               {AngularFrequency::from_hz(-0.5e6), sigma, third},
                               {AngularFrequency::from_hz(1.7e6), sigma, third},
                               {AngularFrequency::from_hz(3.9e6), sigma, 1.0 - 2.0 * third},
                           });
}

SpinSystem SpinSystem::single_line(AngularFrequency detuning, AngularFrequency sigma,
                                   GyromagneticRatio gamma) {
  return SpinSystem(gamma, {{detuning, sigma, 1.0}});
}

RfProbe RfProbe::from_field(MagneticField amplitude_field, AngularFrequency frequency,
                            const GyromagneticRatio& gamma, double phase) {
  RfProbe p;
  p.field_ = amplitude_field;
  p.amplitude_ = field_to_rabi(amplitude_field, gamma);
  p.frequency_ = frequency;
  p.phase_ = phase;
  return p;
}

RfProbe RfProbe::from_amplitude(AngularFrequency amplitude, AngularFrequency frequency,
                                const GyromagneticRatio& gamma, double phase) {
  return from_field(rabi_to_field(amplitude, gamma), frequency, gamma, phase);
}

RfProbe RfProbe::with_frequency(AngularFrequency f) const {
  RfProbe p = *this;
  p.frequency_ = f;
  return p;
}

RfProbe RfProbe::with_amplitude(AngularFrequency a, const GyromagneticRatio& gamma) const {
  return from_amplitude(a, frequency_, gamma, phase_);
}

AngularFrequency field_to_rabi(MagneticField b, const GyromagneticRatio& gamma) {
  if (b.tesla() < 0.0) throw std::domain_error("field_to_rabi: field amplitude must be >= 0");
  return AngularFrequency::from_rad_per_s(gamma.value() * b.tesla());
}

MagneticField rabi_to_field(AngularFrequency w, const GyromagneticRatio& gamma) {
  if (w.value() < 0.0) throw std::domain_error("rabi_to_field: amplitude must be >= 0");
  return MagneticField::from_tesla(w.value() / gamma.value());
}

AngularFrequency effective_rabi(AngularFrequency omega1, AngularFrequency detuning) {
  if (omega1.value() < 0.0) throw std::domain_error("effective_rabi: omega1 must be >= 0");
  return AngularFrequency::from_rad_per_s(std::hypot(omega1.value(), detuning.value()));
}

}  // namespace rfmag
