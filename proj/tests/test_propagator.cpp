#include <doctest.h>

#include <cmath>

#include "rfmag/analytic.hpp"
#include "rfmag/fitting.hpp"
#include "rfmag/propagator.hpp"

using namespace rfmag;
using namespace rfmag::propagator;

namespace {

const double pi = M_PI;
AngularFrequency khz(double f) { return AngularFrequency::from_hz(f * 1e3); }
AngularFrequency mhz(double f) { return AngularFrequency::from_hz(f * 1e6); }

NumericConfig locked(AngularFrequency omega1, AngularFrequency rf_amp, AngularFrequency rf_freq) {
  NumericConfig c;
  c.omega1 = omega1;
  c.params.probe = RfProbe::from_amplitude(rf_amp, rf_freq, GyromagneticRatio{});
  c.ramps.ideal = true;
  return c;
}

// Rodrigues rotation of v about the unit axis n by angle a (right-handed, dv/dt = W x v).
BlochState rotate(const BlochState& v, double nx, double ny, double nz, double a) {
  const double c = std::cos(a), s = std::sin(a);
  const double d = nx * v.x + ny * v.y + nz * v.z;
  const double cx = ny * v.z - nz * v.y, cy = nz * v.x - nx * v.z, cz = nx * v.y - ny * v.x;
  return {v.x * c + cx * s + nx * d * (1 - c), v.y * c + cy * s + ny * d * (1 - c),
          v.z * c + cz * s + nz * d * (1 - c)};
}

double max_stroboscopic_error(AngularFrequency rf_amp) {
  const auto w1 = mhz(7.5);
  const auto c = locked(w1, rf_amp, w1);
  std::vector<double> taus;
  const double half_period = 0.5 / 7.5e6;
  const double window = 2.3 * 2 * pi / rf_amp.value();
  for (int k = 0; k * half_period <= window; k += 3) taus.push_back(k * half_period);
  const auto p = probability_trace(c, taus);
  double worst = 0.0;
  for (std::size_t i = 0; i < taus.size(); ++i) {
    const double oracle = analytic::coherent_probability(1.0, rf_amp.value(), 0.0, taus[i]);
    worst = std::max(worst, std::abs(p[i] - oracle));
  }
  return worst;
}

}  // namespace

TEST_CASE("constant field precession matches the Rodrigues rotation and keeps the norm") {
  PulseSequence seq;
  PulseSegment hold;
  hold.kind = SegmentKind::spin_lock_hold;
  hold.duration = 3e-6;
  hold.amplitude_start = hold.amplitude_end = mhz(2).value();
  seq.append(hold);
  HamiltonianParams params;
  params.detuning = mhz(1.3);
  const BlochState v0{0.0, 0.0, 1.0};
  PropagateOptions opt;
  opt.stride = 100;
  const auto tr = propagate(v0, seq, params, opt);
  const double wx = mhz(2).value(), wz = mhz(1.3).value();
  const double w = std::hypot(wx, wz);
  for (std::size_t i = 0; i < tr.t.size(); ++i) {
    const auto ref = rotate(v0, wx / w, 0.0, wz / w, w * tr.t[i]);
    CHECK(std::abs(tr.states[i].x - ref.x) < 1e-8);
    CHECK(std::abs(tr.states[i].y - ref.y) < 1e-8);
    CHECK(std::abs(tr.states[i].z - ref.z) < 1e-8);
  }
  CHECK(tr.max_norm_deviation < 1e-9 * 3.0);
}

TEST_CASE("norm drift stays below 1e-9 per microsecond with the probe on") {
  auto c = locked(mhz(7.5), khz(46.1), mhz(7.5));
  auto seq = build_spinlock_sequence(50e-6, c.omega1, c.ramps);
  const auto tr = propagate(lock_axis(c.omega1, {}), seq, c.params);
  CHECK(tr.max_norm_deviation < 1e-9 * 50.0);
}

TEST_CASE("ideal-ramp sequence and trivial limits") {
  RampConfig ideal;
  ideal.ideal = true;
  const auto seq = build_spinlock_sequence(15e-6, mhz(7.5), ideal);
  CHECK(seq.hold_duration() == doctest::Approx(15e-6).epsilon(1e-15));
  CHECK(seq.ideal_ramps);

  auto c = locked(mhz(7.5), AngularFrequency{}, mhz(7.5));
  for (double tau : {0.0, 3e-6, 17e-6}) {
    c.tau = tau;
    CHECK(std::abs(transition_probability_numeric(c)) < 1e-12);
  }
  c = locked(mhz(7.5), khz(46.1), mhz(7.5));
  c.tau = 0.0;
  CHECK(transition_probability_numeric(c) == doctest::Approx(0.0));
}

TEST_CASE("ramped sequence hold equals tau") {
  RampConfig r;
  const auto seq = build_spinlock_sequence(15e-6, mhz(7.5), r);
  CHECK(seq.hold_duration() == doctest::Approx(15e-6).epsilon(1e-15));
  CHECK(seq.total_duration() == doctest::Approx(15e-6 + 6 * r.segment_duration).epsilon(1e-14));
  CHECK_THROWS_AS(build_spinlock_sequence(-1e-6, mhz(7.5), r), std::invalid_argument);
  RampConfig bad;
  bad.segment_duration = 0.0;
  CHECK_THROWS_AS(build_spinlock_sequence(1e-6, mhz(7.5), bad), std::invalid_argument);
}

TEST_CASE("static longitudinal offset without a probe leaves the spin locked") {
  auto c = locked(mhz(7.5), AngularFrequency{}, mhz(7.5));
  const std::vector<double> offset(2, 1e-3 * mhz(7.5).value());
  c.params.noise = offset;
  c.params.noise_dt = 1.0;
  c.tau = 20e-6;
  CHECK(transition_probability_numeric(c) < 1e-5);
}

TEST_CASE("on-resonance oscillation matches the closed form at stroboscopic times") {
  CHECK(max_stroboscopic_error(khz(46.1)) < 1e-4);
}

TEST_CASE("stroboscopic error shrinks quadratically with the probe ratio") {
  const double e1 = max_stroboscopic_error(khz(46.1));
  const double e2 = max_stroboscopic_error(khz(92.2));
  CHECK(e2 / e1 > 2.5);
  CHECK(e2 / e1 < 6.0);
}

TEST_CASE("first maximum reaches p0") {
  auto c = locked(mhz(7.5), khz(46.1), mhz(7.5));
  const double half_period = 0.5 / 7.5e6;
  c.tau = std::round((pi / khz(46.1).value()) / half_period) * half_period;
  CHECK(transition_probability_numeric(c) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("detuned oscillation frequency is recovered by a fit") {
  const auto w1 = mhz(7.5);
  const auto delta = khz(20);
  const auto c = locked(w1, khz(46.1), w1 + delta);
  std::vector<double> taus;
  const double half_period = 0.5 / 7.5e6;
  for (int k = 0; k * half_period <= 60e-6; k += 6) taus.push_back(k * half_period);
  const auto p = probability_trace(c, taus);
  fitting::DecayingSinusoid model;
  fitting::FitData data{taus, p, {}};
  const double expected = std::hypot(khz(46.1).value(), delta.value());
  model.parameter(2).fixed = true;
  const auto r = fitting::fit(model, data, {0.8, 1.05 * expected, 1.0});
  REQUIRE(r.converged);
  CHECK(r.parameters[1] == doctest::Approx(expected).epsilon(5e-3));
}

TEST_CASE("halving the step changes p by less than 1e-6") {
  auto c = locked(mhz(7.5), khz(46.1), mhz(7.5));
  c.tau = 12e-6;
  const double p1 = transition_probability_numeric(c);
  auto seq = build_spinlock_sequence(c.tau, c.omega1, c.ramps);
  c.options.dt = default_time_step(seq, c.params) / 2;
  const double p2 = transition_probability_numeric(c);
  CHECK(std::abs(p1 - p2) < 1e-6);
}

TEST_CASE("fourth order convergence") {
  PulseSequence seq;
  PulseSegment hold;
  hold.kind = SegmentKind::spin_lock_hold;
  hold.duration = 2e-6;
  hold.amplitude_start = hold.amplitude_end = mhz(2).value();
  seq.append(hold);
  HamiltonianParams params;
  const double w = mhz(2).value();
  const auto ref = rotate({0, 0, 1}, 1, 0, 0, w * 2e-6);
  auto err = [&](double dt) {
    PropagateOptions o;
    o.dt = dt;
    const auto s = propagate({0, 0, 1}, seq, params, o).states.back();
    return std::hypot(s.x - ref.x, s.y - ref.y, s.z - ref.z);
  };
  const double base = (2 * pi / w) / 50;
  const double ratio = err(base) / err(base / 2);
  CHECK(ratio > 12.0);
  CHECK(ratio < 20.0);
}

TEST_CASE("forward then time-reversed propagation returns the initial state") {
  RampConfig r;
  const auto w1 = mhz(7.5);
  const auto fwd = half_passage(w1, r, false);
  PulseSequence seq;
  for (const auto& s : fwd) seq.append(s);
  for (auto it = fwd.rbegin(); it != fwd.rend(); ++it) {
    PulseSegment s = *it;
    s.amplitude_start = it->amplitude_end;
    s.amplitude_end = it->amplitude_start;
    s.phase = it->phase + pi;
    s.detuning_start = -it->detuning_end;
    s.detuning_end = -it->detuning_start;
    seq.append(s);
  }
  HamiltonianParams params;
  PropagateOptions o;
  o.dt = default_time_step(seq, params) / 4;
  const BlochState v0{0.3, -0.4, std::sqrt(1 - 0.25)};
  const auto v = propagate(v0, seq, params, o).states.back();
  CHECK(std::abs(v.x - v0.x) < 1e-8);
  CHECK(std::abs(v.y - v0.y) < 1e-8);
  CHECK(std::abs(v.z - v0.z) < 1e-8);
}

TEST_CASE("too coarse a step is rejected") {
  auto c = locked(mhz(7.5), khz(46.1), mhz(7.5));
  c.tau = 1e-6;
  auto seq = build_spinlock_sequence(c.tau, c.omega1, c.ramps);
  c.options.dt = max_time_step(seq, c.params) * 1.5;
  CHECK_THROWS_AS(transition_probability_numeric(c), std::invalid_argument);
}

TEST_CASE("probability trace agrees with single runs") {
  auto c = locked(mhz(7.5), khz(46.1), mhz(7.52));
  const std::vector<double> taus{0.0, 2e-6, 7.3e-6, 11e-6};
  const auto trace = probability_trace(c, taus);
  for (std::size_t i = 0; i < taus.size(); ++i) {
    c.tau = taus[i];
    CHECK(trace[i] == doctest::Approx(transition_probability_numeric(c)).epsilon(1e-9));
  }
  CHECK_THROWS_AS(probability_trace(c, std::vector<double>{2e-6, 1e-6}), std::invalid_argument);
}

TEST_CASE("adiabatic passage fidelity") {
  const auto w1 = mhz(7.5);
  RampConfig r;
  CHECK(passage_fidelity(r, w1) > 0.95);
  RampConfig amp = r;
  amp.variant = RampVariant::amplitude_sweep;
  CHECK(passage_fidelity(amp, w1) > 0.95);
  RampConfig slow = r;
  slow.segment_duration = 100e-6 / 3;
  CHECK(passage_fidelity(slow, w1) > 0.999);
  RampConfig sudden = r;
  sudden.segment_duration = 1e-9 / 3;
  CHECK(std::abs(passage_fidelity(sudden, w1)) < 0.1);
  RampConfig ideal = r;
  ideal.ideal = true;
  CHECK(passage_fidelity(ideal, w1) == 1.0);
}
