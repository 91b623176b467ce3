#include "rfmag/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

#include "rfmag/analytic.hpp"
#include "rfmag/cli.hpp"
#include "rfmag/diagnostics.hpp"
#include "rfmag/fitting.hpp"
#include "rfmag/io.hpp"
#include "rfmag/parallel.hpp"
#include "rfmag/propagator.hpp"
#include "rfmag/spectrometer.hpp"
#include "rfmag/stochastic.hpp"

namespace rfmag::acceptance {

namespace {

namespace sp = rfmag::spectrometer;
namespace fs = std::filesystem;

// Tolerances, one block per criterion.
namespace tol {
constexpr double oracle_dp = 1e-3;
constexpr double oracle_seconds = 30.0;

constexpr double bandwidth_target = 5.5680;
constexpr double bandwidth_abs = 1e-3;

constexpr double budget_rel = 0.05;

constexpr double shift_rel = 0.10;
constexpr double shift_abs_hz = 1e3;
constexpr double fwhm_rel = 1e-6;
constexpr double fwhm_literal = 2.3548;
constexpr double fwhm_literal_abs = 5e-5;

constexpr double calibration_rel = 0.01;
constexpr double calibration_fit_rel = 0.03;
constexpr double weak_field_abs_khz = 0.005;

constexpr double mc_white_rel = 0.10;
constexpr double mc_seconds = 300.0;
constexpr double mc_correlated_rel = 0.02;

constexpr double recombination_abs = 1e-12;
constexpr double recombination_sigmas = 3.0;

constexpr double passage_short = 0.95;
constexpr double passage_long = 0.999;

constexpr double norm_drift_per_us = 1e-9;
constexpr double step_halving_dp = 1e-6;
constexpr double jacobian_rel = 1e-5;
}  // namespace tol

std::string fmt(double v, int digits = 6) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

struct Check {
  bool passed = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    passed = passed && ok;
    if (detail.tellp() > 0) detail << "; ";
    detail << what << (ok ? "" : " [FAIL]");
  }
};

template <class F>
CriterionResult timed(int id, std::string title, F&& body) {
  CriterionResult r;
  r.id = id;
  r.title = std::move(title);
  const auto start = std::chrono::steady_clock::now();
  Check c;
  try {
    body(c);
    r.passed = c.passed;
    r.detail = c.detail.str();
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = c.detail.str() + (c.detail.tellp() > 0 ? "; " : "") + "exception: " + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

bool within_rel(double value, double target, double rel) { return std::abs(value - target) <= rel * std::abs(target); }

const GyromagneticRatio gamma_e;

// 1. Numeric propagation against the closed-form coherent response.
CriterionResult oracle_equivalence() {
  return timed(1, "oracle equivalence, numeric vs closed form", [](Check& c) {
    const auto w1 = AngularFrequency::from_hz(7.5e6);
    propagator::NumericConfig nc;
    nc.omega1 = w1;
    nc.ramps.ideal = true;
    nc.params.probe = RfProbe::from_amplitude(AngularFrequency::from_hz(46.1e3), w1, gamma_e);
    // Sampled at multiples of half the RF period: the closed form drops the counter-rotating
    // part of the linearly polarized probe, whose ripple at twice the RF frequency vanishes there.
    const double half_period = 0.5 / 7.5e6;
    std::vector<double> grid;
    for (int k = 0; k * half_period <= 50e-6 * (1.0 + 1e-12); ++k) grid.push_back(k * half_period);
    const auto t0 = std::chrono::steady_clock::now();
    const auto p = propagator::probability_trace(nc, grid);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto worst_on = [&](const std::vector<double>& taus, const std::vector<double>& numeric) {
      double worst = 0.0;
      for (std::size_t k = 0; k < taus.size(); ++k) {
        const double a = analytic::coherent_probability(1.0, nc.params.probe.amplitude().value(), 0.0, taus[k]);
        worst = std::max(worst, std::abs(numeric[k] - a));
      }
      return worst;
    };
    const double worst = worst_on(grid, p);
    std::vector<double> dense;
    for (int k = 0; k <= 5000; ++k) dense.push_back(k * 10e-9);
    const double ripple = worst_on(dense, propagator::probability_trace(nc, dense));
    c.require(worst < tol::oracle_dp, "max |dp| = " + fmt(worst, 3) + " over " + std::to_string(grid.size()) +
                                          " taus in [0, 50 us] at half-RF-period spacing (< " + fmt(tol::oracle_dp) +
                                          "); counter-rotating ripple on a 10 ns grid " + fmt(ripple, 3));
    c.require(seconds < tol::oracle_seconds, "runtime " + fmt(seconds, 3) + " s (< 30 s, 1 thread)");
  });
}

// 2. Half-maximum width of the coherent response.
CriterionResult bandwidth_constant() {
  return timed(2, "detection bandwidth constant", [](Check& c) {
    const double k0 = analytic::time_limited_bandwidth_constant();
    const double kq = analytic::half_max_width(std::numbers::pi / 4.0);
    c.require(std::abs(k0 - tol::bandwidth_target) <= tol::bandwidth_abs,
              "b tau (W1 tau -> 0) = " + fmt(k0, 8) + " vs 5.5680 +- 0.001");
    c.require(std::abs(kq - tol::bandwidth_target) <= tol::bandwidth_abs,
              "b tau (W1 tau = pi/4) = " + fmt(kq, 8) + " vs 5.5680 +- 0.001");
    const double tau = 15e-6;
    const auto w1 = AngularFrequency::from_rad_per_s(5.0 * std::numbers::pi / tau);
    const auto b = analytic::detection_bandwidth(w1, tau);
    c.require(b.regime == analytic::BandwidthRegime::power_broadened && b.width.value() == 2.0 * w1.value(),
              "W1 tau = 5 pi gives b = 2 W1 exactly: " + std::string(b.width.value() == 2.0 * w1.value() ? "yes" : "no"));
  });
}

// 3. Both sensitivity columns.
CriterionResult sensitivity_budget() {
  return timed(3, "sensitivity budget", [](Check& c) {
    struct Column {
      double tau, t_meas, total, counts, shots, r, sigma_p, shot_nt, baseline_nt;
    };
    const Column cols[] = {{15e-6, 31.4e-6, 145.0, 9700.0, 4.6e6, 0.0021, 0.029, 170.0, 200.0},
                           {300e-6, 316.4e-6, 840.0, 10200.0, 2.7e6, 0.0039, 0.020, 10.0, 8.0}};
    ScopedWarningCapture quiet;
    for (const auto& col : cols) {
      analytic::SensitivityBudget b;
      b.tau = col.tau;
      b.t_meas = col.t_meas;
      b.total_time = col.total;
      b.counts = col.counts;
      b.shots = col.shots;
      b.photons_per_shot = col.r;
      b.contrast = 0.31;
      b.p0 = 0.45;
      b.baseline_sigma = col.sigma_p;
      const double shot = analytic::bmin_shot(b, gamma_e).tesla() * 1e9;
      const double base = analytic::bmin_baseline(col.sigma_p, b.p0, gamma_e, b.tau).tesla() * 1e9;
      const std::string tag = "tau " + fmt(col.tau * 1e6) + " us: ";
      c.require(within_rel(shot, col.shot_nt, tol::budget_rel),
                tag + "shot " + fmt(shot, 4) + " nT vs " + fmt(col.shot_nt) + " +- 5%");
      c.require(within_rel(base, col.baseline_nt, tol::budget_rel),
                tag + "baseline " + fmt(base, 4) + " nT vs " + fmt(col.baseline_nt) + " +- 5%");
    }
  });
}

// 4. Rotating-frame shift and width of each hyperfine line.
CriterionResult line_shifts() {
  return timed(4, "inhomogeneous line shifts and widths", [](Check& c) {
    struct Row {
      double detuning_hz, shift_hz, sigma_hz;
    };
    const Row rows[] = {{-0.5e6, -16e3, 22e3}, {1.7e6, -180e3, 74e3}, {3.9e6, -950e3, 170e3}, {0.0, 0.0, 7.7e3}};
    const auto w1 = AngularFrequency::from_hz(8e6);
    const auto close = [](double v, double target) {
      return std::abs(v - target) <= std::max(tol::shift_rel * std::abs(target), tol::shift_abs_hz);
    };
    ScopedWarningCapture quiet;
    for (const auto& row : rows) {
      const auto r = analytic::inhomogeneous_shift_sigma(w1, AngularFrequency::from_hz(row.detuning_hz),
                                                         AngularFrequency::from_hz(350e3));
      c.require(close(r.shift.hz(), row.shift_hz) && close(r.sigma.hz(), row.sigma_hz),
                "D=" + fmt(row.detuning_hz / 1e6) + " MHz: (" + fmt(r.shift.hz() / 1e3, 4) + ", " +
                    fmt(r.sigma.hz() / 1e3, 4) + ") kHz");
    }
    const double k = fitting::fwhm_from_sigma(1.0);
    const double oracle = std::sqrt(-8.0 * std::log(0.5));
    c.require(std::abs(k / oracle - 1.0) <= tol::fwhm_rel, "FWHM/sigma = " + fmt(k, 10) + " vs sqrt(8 ln 2)");
    c.require(std::abs(k - tol::fwhm_literal) <= tol::fwhm_literal_abs, "matches 2.3548 to its printed digits");
  });
}

// 5. Field to Rabi frequency calibration.
CriterionResult calibration() {
  return timed(5, "calibration chain", [](Check& c) {
    const double f = field_to_rabi(MagneticField::from_tesla(1.65e-6), gamma_e).hz();
    c.require(within_rel(f, 46.24e3, tol::calibration_rel), "1.65 uT -> " + fmt(f / 1e3, 6) + " kHz vs 46.24 (1%)");
    c.require(within_rel(f, 46.1e3, tol::calibration_fit_rel), "vs fitted 46.1 kHz (3%)");
    const double g = field_to_rabi(MagneticField::from_tesla(40e-9), gamma_e).hz() / 1e3;
    c.require(std::abs(g - 1.12) <= tol::weak_field_abs_khz && std::round(g * 10.0) / 10.0 == 1.1,
              "40 nT -> " + fmt(g, 5) + " kHz, rounds to 1.1");
  });
}

// 6. Monte Carlo T1rho in the white and correlated limits.
CriterionResult monte_carlo(unsigned threads) {
  return timed(6, "Monte Carlo relaxation", [threads](Check& c) {
    const auto w1 = AngularFrequency::from_hz(7e6);
    stochastic::MonteCarloConfig white;
    white.omega1 = w1;
    white.model.tau_c = 30e-9;
    white.model.omega_rms = stochastic::omega_rms_for_t1rho(200e-6, white.model.tau_c, w1);
    for (int k = 1; k <= 12; ++k) white.tau_grid.push_back(k * 25e-6);
    white.realizations = 10000;
    white.seed = 20240601;
    white.threads = threads;
    const auto t0 = std::chrono::steady_clock::now();
    const auto est = stochastic::monte_carlo_t1rho(white, 200);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    c.require(within_rel(est.t1rho, est.predicted_t1rho, tol::mc_white_rel),
              "white: T1rho " + fmt(est.t1rho * 1e6, 5) + " us vs predicted " + fmt(est.predicted_t1rho * 1e6, 5) +
                  " us (10%), 95% CI [" + fmt(est.ci_low * 1e6, 4) + ", " + fmt(est.ci_high * 1e6, 4) + "]");
    c.require(seconds < tol::mc_seconds, "white runtime " + fmt(seconds, 3) + " s at N = 1e4 on " +
                                             std::to_string(resolve_threads(threads)) + " thread(s)");

    stochastic::MonteCarloConfig slow = white;
    slow.model.tau_c = std::numeric_limits<double>::infinity();
    slow.model.carrier = w1;
    slow.model.omega_rms = AngularFrequency::from_rad_per_s(std::sqrt(2.0) / 50e-6);
    slow.tau_grid.clear();
    for (int k = 1; k <= 15; ++k) slow.tau_grid.push_back(k * 10e-6);
    const auto d = stochastic::simulate_decay(slow);
    double worst = 0.0;
    for (std::size_t k = 0; k < d.tau_grid.size(); ++k) {
      const double a = analytic::correlated_probability(slow.p0, slow.model.omega_rms, d.tau_grid[k]).probability;
      worst = std::max(worst, std::abs(a - d.p_mean[k]) / (slow.p0 / 2.0));
    }
    c.require(worst <= tol::mc_correlated_rel,
              "correlated: max |p_MC - closed form| / (p0/2) = " + fmt(worst, 3) + " (2%)");
  });
}

struct GaussianCentre {
  double mu = 0.0;
  double se = 0.0;
};

// Gaussian fit over the contiguous region where the reference curve exceeds 30% of its peak.
GaussianCentre fit_centre(const std::vector<double>& x, const std::vector<double>& reference,
                          const std::vector<double>& y, const std::vector<double>& sigma) {
  const std::size_t i_max =
      static_cast<std::size_t>(std::max_element(reference.begin(), reference.end()) - reference.begin());
  const double cut = 0.3 * reference[i_max];
  std::size_t lo = i_max, hi = i_max;
  while (lo > 0 && reference[lo - 1] > cut) --lo;
  while (hi + 1 < reference.size() && reference[hi + 1] > cut) ++hi;
  fitting::FitData data;
  for (std::size_t i = lo; i <= hi; ++i) {
    data.x.push_back(x[i]);
    data.y.push_back(y[i]);
    if (!sigma.empty()) data.sigma.push_back(sigma[i]);
  }
  fitting::GaussianPeak model;
  const auto r = fitting::fit(model, data, cli::initial_guess(fitting::ModelKind::gaussian_peak, data.x, data.y));
  if (!r.converged) throw NumericalError("Gaussian fit did not converge: " + r.message);
  return {r.parameters[1], r.standard_errors[1]};
}

// 7. Peak structure, replica ordering, selection and recombination.
CriterionResult spectrum_structure(unsigned threads) {
  return timed(7, "spectrum structure and recombination", [threads](Check& c) {
    ScopedWarningCapture quiet;
    const double tau = 15e-6;
    const auto amp = AngularFrequency::from_rad_per_s(std::numbers::pi / 4.0 / tau);

    sp::SpectrumConfig b;
    b.tau = tau;
    b.threads = threads;
    b.rf = RfProbe::from_amplitude(amp, AngularFrequency::from_hz(7.5e6), gamma_e);
    b.omega1_grid = sp::linear_grid(two_pi * 6e6, two_pi * 8e6, 2001);
    const auto sb = sp::synthesize_spectrum(b);
    const auto xb = sp::omega1_values(sb), yb = sp::p_values(sb);
    const auto main = sp::find_peak(xb, yb, xb.front(), xb.back());
    const auto replica = sp::find_peak(xb, yb, two_pi * 7.2e6, two_pi * 7.4e6);
    c.require(std::abs(main.position / two_pi - 7.5e6) < 0.05e6 && replica.position < main.position &&
                  replica.height < main.height && std::abs(replica.position / two_pi - 7.3e6) < 0.05e6,
              "rf 7.5 MHz: main " + fmt(main.position / two_pi / 1e6, 5) + " MHz, m_I=0 replica " +
                  fmt(replica.position / two_pi / 1e6, 5) + " MHz, lower and weaker");

    sp::SpectrumConfig a = b;
    a.rf = RfProbe::from_amplitude(amp, AngularFrequency::from_hz(8e6), gamma_e);
    a.omega1_grid = sp::linear_grid(two_pi * 6.8e6, two_pi * 8.2e6, 1401);
    const auto sa = sp::synthesize_spectrum(a);
    const auto xa = sp::omega1_values(sa);
    const double expected_shift[] = {-16e3, -180e3, -950e3};
    double previous = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < 3; ++l) {
      const double d = a.system.lines()[l].detuning.value();
      const double w = std::sqrt(a.rf.frequency().value() * a.rf.frequency().value() - d * d);
      const auto pk = sp::find_peak(xa, sp::line_values(sa, l), w - two_pi * 1.5e6, w + two_pi * 0.5e6);
      const double shift = (pk.position - a.rf.frequency().value()) / two_pi;
      const bool ok = std::abs(shift - expected_shift[l]) <=
                          std::max(tol::shift_rel * std::abs(expected_shift[l]), tol::shift_abs_hz) &&
                      pk.position < previous;
      previous = pk.position;
      c.require(ok, "rf 8 MHz line " + std::to_string(l) + " shift " + fmt(shift / 1e3, 4) + " kHz vs " +
                        fmt(expected_shift[l] / 1e3) + " kHz");
    }

    std::vector<sp::SelectiveSpectrum> sel;
    for (std::size_t k = 0; k < 3; ++k) sel.push_back({k, sp::spin_state_selection(sa, {k}, a.system, a.p0)});
    const auto pure = sp::recombine_pure_states(sa, sel, a.system, a.p0);
    double worst = 0.0;
    for (std::size_t l = 0; l < 3; ++l) {
      for (std::size_t i = 0; i < sa.size(); ++i) worst = std::max(worst, std::abs(pure[l][i].p_mean - sa[i].p_lines[l]));
    }
    c.require(worst < tol::recombination_abs, "noiseless recombination max error " + fmt(worst, 3));

    sp::ReadoutModel readout;
    readout.photons_per_shot = 0.0021;
    readout.t_meas = 31.4e-6;
    readout.total_time = 2e5;
    const std::uint64_t seed = 4242;
    const auto noisy = sp::apply_readout_noise(sa, readout, derive_seed(seed, 0));
    std::vector<sp::SelectiveSpectrum> noisy_sel;
    for (std::size_t k = 0; k < 3; ++k) {
      noisy_sel.push_back({k, sp::apply_readout_noise(sel[k].spectrum, readout, derive_seed(seed, 1 + k))});
    }
    const auto noisy_pure = sp::recombine_pure_states(noisy, noisy_sel, a.system, a.p0);
    for (std::size_t l = 0; l < 3; ++l) {
      const auto clean_line = sp::line_values(sa, l);
      const auto clean = fit_centre(xa, clean_line, clean_line, {});
      std::vector<double> y, s;
      for (const auto& pt : noisy_pure[l]) {
        y.push_back(pt.p_mean);
        s.push_back(pt.p_sigma);
      }
      const auto fitted = fit_centre(xa, clean_line, y, s);
      const double z = std::abs(fitted.mu - clean.mu) / fitted.se;
      c.require(z <= tol::recombination_sigmas, "noisy line " + std::to_string(l) + " centre off by " + fmt(z, 3) +
                                                    " sigma (" + fmt((fitted.mu - clean.mu) / two_pi, 3) + " Hz)");
    }
  });
}

// 8. Adiabatic half-passage fidelity.
CriterionResult passage() {
  return timed(8, "adiabatic passage fidelity", [](Check& c) {
    const auto w1 = AngularFrequency::from_hz(7.5e6);
    propagator::RampConfig r;
    r.segment_duration = 1e-6;
    const double f_short = propagator::passage_fidelity(r, w1);
    r.variant = propagator::RampVariant::amplitude_sweep;
    const double a_short = propagator::passage_fidelity(r, w1);
    r.variant = propagator::RampVariant::frequency_sweep;
    r.segment_duration = 100e-6;
    const double f_long = propagator::passage_fidelity(r, w1);
    c.require(f_short > tol::passage_short, "frequency sweep 1 us: " + fmt(f_short, 6) + " (> 0.95)");
    c.require(a_short > tol::passage_short, "amplitude sweep 1 us: " + fmt(a_short, 6) + " (> 0.95)");
    c.require(f_long > tol::passage_long, "frequency sweep 100 us: " + fmt(f_long, 8) + " (> 0.999)");
  });
}

double jacobian_error(const fitting::FitModel& m, const std::vector<double>& x, const std::vector<double>& p) {
  const std::size_t n = x.size(), k = m.size();
  std::vector<double> y(n), jac(n * k);
  m.evaluate(x, p, y, jac);
  double worst = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    const double h = 1e-6 * std::max(std::abs(p[j]), 1e-3);
    auto pp = p, pm = p;
    pp[j] += h;
    pm[j] -= h;
    const auto yp = m(x, pp), ym = m(x, pm);
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double fd = (yp[i] - ym[i]) / (2.0 * h);
      diff = std::max(diff, std::abs(jac[i * k + j] - fd));
      scale = std::max(scale, std::abs(fd));
    }
    worst = std::max(worst, diff / scale);
  }
  return worst;
}

// 9. Norm conservation, step-size convergence and model Jacobians.
CriterionResult hygiene() {
  return timed(9, "numerical hygiene", [](Check& c) {
    const auto w1 = AngularFrequency::from_hz(7.5e6);
    propagator::NumericConfig nc;
    nc.omega1 = w1;
    nc.tau = 20e-6;
    nc.params.probe = RfProbe::from_amplitude(AngularFrequency::from_hz(46.1e3), w1, gamma_e);
    nc.params.detuning = AngularFrequency::from_hz(200e3);
    const auto seq = propagator::build_spinlock_sequence(nc.tau, w1, nc.ramps);
    const auto traj = propagator::propagate({}, seq, nc.params);
    const double drift = traj.max_norm_deviation / (seq.total_duration() * 1e6);
    c.require(drift < tol::norm_drift_per_us, "norm drift " + fmt(drift, 3) + " per us");

    const double p1 = propagator::transition_probability_numeric(nc);
    nc.options.dt = propagator::default_time_step(seq, nc.params) / 2.0;
    const double p2 = propagator::transition_probability_numeric(nc);
    c.require(std::abs(p1 - p2) < tol::step_halving_dp, "step halving |dp| = " + fmt(std::abs(p1 - p2), 3));

    std::vector<double> f, t;
    for (int i = 0; i < 41; ++i) f.push_back(7.5e6 - 20e3 + i * 1e3);
    for (int i = 0; i <= 30; ++i) t.push_back(i * 2e-6);
    const double e_g = jacobian_error(fitting::GaussianPeak{}, f, {0.3, 7.5e6, 3e3, 0.01});
    const double e_d = jacobian_error(fitting::DecayingSinusoid{}, t, {0.56, two_pi * 46.1e3, 28e-6});
    const double e_e = jacobian_error(fitting::ExponentialSaturation{}, t, {0.3, 20e-6});
    const double e_i = jacobian_error(fitting::InhomogeneousOscillation{16}, t,
                                      {0.8, two_pi * 46.1e3, two_pi * 15e3, two_pi * 30e3});
    const double worst = std::max({e_g, e_d, e_e, e_i});
    c.require(worst < tol::jacobian_rel, "Jacobian vs finite differences: gaussian " + fmt(e_g, 2) + ", sinusoid " +
                                             fmt(e_d, 2) + ", saturation " + fmt(e_e, 2) + ", inhomogeneous " +
                                             fmt(e_i, 2));
  });
}

// Configurations exercised by the determinism check: noise, selection and
// recombination in one spectrum, a numeric oscillation and a Monte Carlo decay.
const char* const determinism_spectrum = R"({
  "seed": 11,
  "probe": {"amplitude_hz": 8333.333, "frequency_hz": 8.0e6},
  "sequence": {"tau_s": 15e-6},
  "p0": 0.45,
  "omega1_grid": {"start_hz": 6.9e6, "stop_hz": 8.1e6, "points": 241},
  "readout": {"photons_per_shot": 0.0021, "t_meas_s": 31.4e-6, "total_time_s": 145},
  "selection": {"lines": [0, 1, 2], "recombine": true}
})";

const char* const determinism_oscillate = R"({
  "seed": 5,
  "engine": "numeric",
  "spin_system": {"lines": [{"detuning_hz": 670.8e3, "sigma_hz": 167.7e3, "weight": 1}]},
  "drive": {"omega1_hz": 7.5e6},
  "probe": {"amplitude_hz": 46.1e3, "frequency_hz": 7.5e6},
  "tau_grid": {"start_s": 0, "stop_s": 20e-6, "points": 21}
})";

const char* const determinism_relax = R"({
  "seed": 9,
  "drive": {"omega1_hz": 7e6},
  "noise": {"t1rho_target_s": 200e-6, "tau_c_s": 30e-9, "realizations": 48},
  "tau_grid": {"values_s": [25e-6, 50e-6, 100e-6, 200e-6]},
  "relax": {"bootstrap": 20, "noise_trace": true}
})";

std::map<std::string, std::string> read_tree(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) files[e.path().filename().string()] = io::read_text_file(e.path().string());
  return files;
}

CriterionResult determinism_run(const std::vector<CriterionResult>& earlier) {
  return timed(10, "determinism and selftest", [&](Check& c) {
    std::random_device rd;
    const fs::path root = fs::temp_directory_path() / ("rfmag_determinism_" + std::to_string(rd()));
    fs::create_directories(root);
    struct Case {
      std::string command, config;
    };
    const Case cases[] = {{"spectrum", determinism_spectrum},
                          {"oscillate", determinism_oscillate},
                          {"relax", determinism_relax}};
    try {
      for (const auto& cs : cases) {
        const auto config_path = root / (cs.command + ".json");
        std::ofstream(config_path) << cs.config;
        std::map<std::string, std::string> reference;
        bool identical = true;
        int runs = 0;
        std::string failure;
        for (const char* threads : {"1", "8"}) {
          for (int rep = 0; rep < 2; ++rep) {
            const auto out_dir = root / (cs.command + "_t" + threads + "_r" + std::to_string(rep));
            std::ostringstream sink, err;
            const int code = cli::run_cli({cs.command, "--config", config_path.string(), "--out", out_dir.string(),
                                           "--threads", threads},
                                          sink, err);
            if (code != 0) {
              identical = false;
              failure = " (exit " + std::to_string(code) + ": " + err.str() + ")";
              continue;
            }
            const auto files = read_tree(out_dir);
            if (runs++ == 0) {
              reference = files;
            } else if (files != reference) {
              identical = false;
            }
          }
        }
        c.require(identical, cs.command + ": " + std::to_string(reference.size()) +
                                 " files byte-identical over threads {1, 8} x 2 runs" + failure);
      }
    } catch (...) {
      fs::remove_all(root);
      throw;
    }
    fs::remove_all(root);

    std::string failed;
    for (const auto& r : earlier) {
      if (!r.passed) failed += (failed.empty() ? "" : ",") + std::to_string(r.id);
    }
    c.require(failed.empty(), failed.empty() ? "criteria 1-9 pass" : "selftest fails on criteria " + failed);
  });
}

}  // namespace

CriterionResult run_criterion(int id, const Options& options) {
  switch (id) {
    case 1: return oracle_equivalence();
    case 2: return bandwidth_constant();
    case 3: return sensitivity_budget();
    case 4: return line_shifts();
    case 5: return calibration();
    case 6: return monte_carlo(options.threads);
    case 7: return spectrum_structure(options.threads);
    case 8: return passage();
    case 9: return hygiene();
    default: throw std::out_of_range("no acceptance criterion " + std::to_string(id));
  }
}

CriterionResult determinism_criterion(const std::vector<CriterionResult>& earlier) { return determinism_run(earlier); }

std::vector<CriterionResult> run_all(const Options& options, const Reporter& report) {
  std::vector<CriterionResult> results;
  for (int id = 1; id < criterion_count; ++id) {
    results.push_back(run_criterion(id, options));
    if (report) report(results.back());
  }
  results.push_back(determinism_criterion(results));
  if (report) report(results.back());
  return results;
}

std::string format_line(const CriterionResult& r) {
  std::ostringstream os;
  os << (r.passed ? "[PASS] " : "[FAIL] ") << std::setw(2) << r.id << ' ' << r.title << " (" << std::fixed
     << std::setprecision(2) << r.seconds << " s): " << r.detail;
  return os.str();
}

}  // namespace rfmag::acceptance
