#include "rfmag/propagator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace rfmag::propagator {

namespace {

constexpr double default_steps_per_period = 512.0;
constexpr double min_steps_per_period = 40.0;

// Rotation vector of one segment as a function of time since the segment start.
class SegmentField {
 public:
  SegmentField(const PulseSegment& seg, const HamiltonianParams& params, double segment_start)
      : seg_(seg), params_(params), start_(segment_start),
        cos_phase_(std::cos(seg.phase)), sin_phase_(std::sin(seg.phase)) {
    if (seg.kind == SegmentKind::spin_lock_hold) {
      rf_amp_ = params.probe.amplitude().value();
      rf_freq_ = params.probe.frequency().value();
      rf_phase_ = params.probe.phase();
    }
  }

  BlochState operator()(double t) const {
    const double s = t / seg_.duration;
    const double a = (seg_.amplitude_start + (seg_.amplitude_end - seg_.amplitude_start) * s) *
                     params_.power_scale;
    double wz = params_.detuning.value() + seg_.detuning_start +
                (seg_.detuning_end - seg_.detuning_start) * s;
    if (rf_amp_ != 0.0) wz += 2.0 * rf_amp_ * std::cos(rf_freq_ * t + rf_phase_);
    if (!params_.noise.empty()) wz += noise(start_ + t);
    return {a * cos_phase_, a * sin_phase_, wz};
  }

 private:
  double noise(double t) const {
    const auto& n = params_.noise;
    const double u = t / params_.noise_dt;
    if (u <= 0.0) return n.front();
    const auto i = static_cast<std::size_t>(u);
    if (i + 1 >= n.size()) return n.back();
    const double f = u - static_cast<double>(i);
    return n[i] + f * (n[i + 1] - n[i]);
  }

  const PulseSegment& seg_;
  const HamiltonianParams& params_;
  double start_;
  double cos_phase_;
  double sin_phase_;
  double rf_amp_ = 0.0;
  double rf_freq_ = 0.0;
  double rf_phase_ = 0.0;
};

BlochState cross(const BlochState& w, const BlochState& v) {
  return {w.y * v.z - w.z * v.y, w.z * v.x - w.x * v.z, w.x * v.y - w.y * v.x};
}

BlochState axpy(double a, const BlochState& x, const BlochState& y) {
  return {y.x + a * x.x, y.y + a * x.y, y.z + a * x.z};
}

BlochState rk4_step(const SegmentField& field, const BlochState& v, double t, double h) {
  const BlochState w0 = field(t);
  const BlochState wm = field(t + 0.5 * h);
  const BlochState w1 = field(t + h);
  const BlochState k1 = cross(w0, v);
  const BlochState k2 = cross(wm, axpy(0.5 * h, k1, v));
  const BlochState k3 = cross(wm, axpy(0.5 * h, k2, v));
  const BlochState k4 = cross(w1, axpy(h, k3, v));
  const double c = h / 6.0;
  return {v.x + c * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
          v.y + c * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y),
          v.z + c * (k1.z + 2.0 * k2.z + 2.0 * k3.z + k4.z)};
}

void check_finite(const BlochState& v, double t) {
  if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z)) {
    std::ostringstream os;
    os << "propagate: non-finite Bloch vector at t = " << t << " s";
    throw NumericalError(os.str());
  }
}

std::size_t step_count(double duration, double dt) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(duration / dt * (1.0 - 1e-12))));
}

double resolve_dt(const PulseSequence& seq, const HamiltonianParams& params, double requested) {
  if (requested == 0.0) return default_time_step(seq, params);
  if (!(requested > 0.0)) throw std::invalid_argument("propagate: dt must be > 0");
  const double limit = max_time_step(seq, params);
  if (requested > limit * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "propagate: dt = " << requested << " s exceeds the limit " << limit
       << " s (1/40 of the fastest rotation period)";
    throw std::invalid_argument(os.str());
  }
  return requested;
}

void validate_params(const HamiltonianParams& params) {
  if (!(params.power_scale > 0.0)) throw std::invalid_argument("power_scale must be > 0");
  if (!params.noise.empty() && !(params.noise_dt > 0.0)) {
    throw std::invalid_argument("noise trace needs noise_dt > 0");
  }
}

// Runs every segment of `segments` starting at global time t0.
BlochState run_segments(BlochState v, std::span<const PulseSegment> segments,
                        const HamiltonianParams& params, double t0, double dt) {
  for (const auto& seg : segments) {
    const SegmentField field(seg, params, t0);
    const std::size_t n = step_count(seg.duration, dt);
    const double h = seg.duration / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      v = rk4_step(field, v, static_cast<double>(i) * h, h);
      check_finite(v, t0 + static_cast<double>(i + 1) * h);
    }
    t0 += seg.duration;
  }
  return v;
}

}  // namespace

double BlochState::norm() const { return std::sqrt(x * x + y * y + z * z); }

void PulseSegment::validate() const {
  if (!(duration > 0.0) || !std::isfinite(duration)) {
    throw std::invalid_argument("pulse segment duration must be positive and finite");
  }
  for (double v : {amplitude_start, amplitude_end, detuning_start, detuning_end, phase}) {
    if (!std::isfinite(v)) throw std::invalid_argument("pulse segment endpoints must be finite");
  }
  if (amplitude_start < 0.0 || amplitude_end < 0.0) {
    throw std::invalid_argument("pulse segment amplitudes must be >= 0");
  }
}

void PulseSequence::append(const PulseSegment& segment) {
  segment.validate();
  segments_.push_back(segment);
}

double PulseSequence::total_duration() const {
  double t = 0.0;
  for (const auto& s : segments_) t += s.duration;
  return t;
}

double PulseSequence::hold_duration() const {
  double t = 0.0;
  for (const auto& s : segments_) {
    if (s.kind == SegmentKind::spin_lock_hold) t += s.duration;
  }
  return t;
}

void RampConfig::validate() const {
  if (!ideal && !(segment_duration > 0.0)) throw std::invalid_argument("ramp duration must be > 0");
  for (double f : {detuning_fraction, amplitude_fraction}) {
    if (!(f > 0.0 && f < 1.0)) throw std::invalid_argument("ramp fractions must lie in (0, 1)");
  }
}

std::vector<PulseSegment> half_passage(AngularFrequency omega1, const RampConfig& ramp, bool reverse) {
  ramp.validate();
  const double w1 = omega1.value();
  const double ds = ramp.start_detuning.value();
  const double d = ramp.segment_duration;
  const auto kind = SegmentKind::adiabatic_ramp;
  std::vector<PulseSegment> out;
  if (ramp.variant == RampVariant::frequency_sweep) {
    const double f = ramp.detuning_fraction;
    out = {{kind, d, 0.0, w1, ds, ds, 0.0},
           {kind, d, w1, w1, ds, f * ds, 0.0},
           {kind, d, w1, w1, f * ds, 0.0, 0.0}};
  } else {
    const double f = ramp.amplitude_fraction;
    out = {{kind, d, 0.0, f * w1, ds, ds, 0.0},
           {kind, d, f * w1, f * w1, ds, 0.0, 0.0},
           {kind, d, f * w1, w1, 0.0, 0.0, 0.0}};
  }
  if (reverse) {
    std::reverse(out.begin(), out.end());
    for (auto& s : out) {
      std::swap(s.amplitude_start, s.amplitude_end);
      std::swap(s.detuning_start, s.detuning_end);
    }
  }
  return out;
}

PulseSequence build_spinlock_sequence(double tau, AngularFrequency omega1, const RampConfig& ramp) {
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw std::invalid_argument("tau must be >= 0");
  if (omega1.value() < 0.0) throw std::invalid_argument("omega1 must be >= 0");
  ramp.validate();
  PulseSequence seq;
  seq.ideal_ramps = ramp.ideal;
  const double w1 = omega1.value();
  if (!ramp.ideal) {
    for (const auto& s : half_passage(omega1, ramp, false)) seq.append(s);
  }
  if (tau > 0.0) seq.append({SegmentKind::spin_lock_hold, tau, w1, w1, 0.0, 0.0, 0.0});
  if (!ramp.ideal) {
    for (const auto& s : half_passage(omega1, ramp, true)) seq.append(s);
  }
  return seq;
}

double max_rotation_rate(const PulseSequence& seq, const HamiltonianParams& params) {
  double rate = 0.0;
  const double dw0 = params.detuning.value();
  for (const auto& s : seq.segments()) {
    const double a = std::max(s.amplitude_start, s.amplitude_end) * params.power_scale;
    const double d = std::max(std::abs(dw0 + s.detuning_start), std::abs(dw0 + s.detuning_end));
    rate = std::max(rate, std::hypot(a, d));
    if (s.kind == SegmentKind::spin_lock_hold && params.probe.amplitude().value() > 0.0) {
      rate = std::max(rate, std::abs(params.probe.frequency().value()));
    }
  }
  return rate;
}

double default_time_step(const PulseSequence& seq, const HamiltonianParams& params) {
  const double rate = max_rotation_rate(seq, params);
  if (rate == 0.0) return std::max(seq.total_duration(), 1e-9) / default_steps_per_period;
  return two_pi / rate / default_steps_per_period;
}

double max_time_step(const PulseSequence& seq, const HamiltonianParams& params) {
  const double rate = max_rotation_rate(seq, params);
  if (rate == 0.0) return std::max(seq.total_duration(), 1e-9) / min_steps_per_period;
  return two_pi / rate / min_steps_per_period;
}

Trajectory propagate(const BlochState& initial, const PulseSequence& seq, const HamiltonianParams& params,
                     const PropagateOptions& options) {
  validate_params(params);
  const double dt = resolve_dt(seq, params, options.dt);
  Trajectory out;
  BlochState v = initial;
  const double n0 = initial.norm();
  double t0 = 0.0;
  out.t.push_back(0.0);
  out.states.push_back(v);
  std::size_t counter = 0;
  for (const auto& seg : seq.segments()) {
    const SegmentField field(seg, params, t0);
    const std::size_t n = step_count(seg.duration, dt);
    const double h = seg.duration / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      v = rk4_step(field, v, static_cast<double>(i) * h, h);
      const double t = t0 + static_cast<double>(i + 1) * h;
      check_finite(v, t);
      out.max_norm_deviation = std::max(out.max_norm_deviation, std::abs(v.norm() - n0));
      ++counter;
      if (options.stride > 0 && counter % options.stride == 0) {
        out.t.push_back(t);
        out.states.push_back(v);
      }
    }
    t0 += seg.duration;
  }
  if (out.t.back() != t0 || out.t.size() == 1) {
    out.t.push_back(t0);
    out.states.push_back(v);
  }
  return out;
}

BlochState lock_axis(AngularFrequency omega1, AngularFrequency detuning, double phase) {
  const double w1 = omega1.value();
  const double d = detuning.value();
  const double w = std::hypot(w1, d);
  if (w == 0.0) return {0.0, 0.0, 1.0};
  return {w1 * std::cos(phase) / w, w1 * std::sin(phase) / w, d / w};
}

double transition_probability_numeric(const NumericConfig& config) {
  const auto seq = build_spinlock_sequence(config.tau, config.omega1, config.ramps);
  const auto& p = config.params;
  if (seq.ideal_ramps) {
    const BlochState axis = lock_axis(config.omega1 * p.power_scale, p.detuning);
    if (seq.segments().empty()) return 0.0;
    const auto traj = propagate(axis, seq, p, config.options);
    return 0.5 * (1.0 - traj.states.back().dot(axis));
  }
  const auto traj = propagate(BlochState{}, seq, p, config.options);
  return 0.5 * (1.0 - traj.states.back().z);
}

std::vector<double> probability_trace(const NumericConfig& config, std::span<const double> tau_grid) {
  if (tau_grid.empty()) return {};
  for (std::size_t k = 0; k < tau_grid.size(); ++k) {
    if (!(tau_grid[k] >= 0.0) || (k > 0 && tau_grid[k] < tau_grid[k - 1])) {
      throw std::invalid_argument("probability_trace: tau grid must be ascending and >= 0");
    }
  }
  const auto& p = config.params;
  validate_params(p);
  const double tau_max = tau_grid.back();
  const auto seq = build_spinlock_sequence(tau_max, config.omega1, config.ramps);
  const double dt = resolve_dt(seq, p, config.options.dt);

  const auto forward = config.ramps.ideal ? std::vector<PulseSegment>{}
                                          : half_passage(config.omega1, config.ramps, false);
  const auto backward = config.ramps.ideal ? std::vector<PulseSegment>{}
                                           : half_passage(config.omega1, config.ramps, true);
  double passage_time = 0.0;
  for (const auto& s : forward) passage_time += s.duration;

  const BlochState axis = lock_axis(config.omega1 * p.power_scale, p.detuning);
  BlochState v = config.ramps.ideal ? axis : run_segments(BlochState{}, forward, p, 0.0, dt);

  auto readout = [&](const BlochState& s, double tau) {
    if (config.ramps.ideal) return 0.5 * (1.0 - s.dot(axis));
    const BlochState out = run_segments(s, backward, p, passage_time + tau, dt);
    return 0.5 * (1.0 - out.z);
  };

  std::vector<double> result(tau_grid.size());
  if (tau_max == 0.0) {
    std::fill(result.begin(), result.end(), readout(v, 0.0));
    return result;
  }
  const double w1 = config.omega1.value();
  const PulseSegment hold{SegmentKind::spin_lock_hold, tau_max, w1, w1, 0.0, 0.0, 0.0};
  const SegmentField field(hold, p, passage_time);
  const std::size_t n = step_count(tau_max, dt);
  const double h = tau_max / static_cast<double>(n);
  std::size_t i = 0;
  for (std::size_t k = 0; k < tau_grid.size(); ++k) {
    const double tau = tau_grid[k];
    while (static_cast<double>(i + 1) * h <= tau * (1.0 + 1e-12) && i < n) {
      v = rk4_step(field, v, static_cast<double>(i) * h, h);
      check_finite(v, passage_time + static_cast<double>(i + 1) * h);
      ++i;
    }
    const double rest = tau - static_cast<double>(i) * h;
    const BlochState s = rest > 1e-15 * h ? rk4_step(field, v, static_cast<double>(i) * h, rest) : v;
    result[k] = readout(s, tau);
  }
  return result;
}

double passage_fidelity(const RampConfig& ramp, AngularFrequency omega1, AngularFrequency detuning,
                        const PropagateOptions& options) {
  if (ramp.ideal) return 1.0;
  PulseSequence seq;
  for (const auto& s : half_passage(omega1, ramp, false)) seq.append(s);
  HamiltonianParams params;
  params.detuning = detuning;
  const auto traj = propagate(BlochState{}, seq, params, options);
  return traj.states.back().dot(lock_axis(omega1, detuning));
}

}  // namespace rfmag::propagator
