#include <doctest.h>

#include <cmath>
#include <numeric>

#include "rfmag/analytic.hpp"
#include "rfmag/stochastic.hpp"

using namespace rfmag;
using namespace rfmag::stochastic;

namespace {

const double pi = M_PI;
AngularFrequency mhz(double f) { return AngularFrequency::from_hz(f * 1e6); }

OuNoiseModel ou(double rms, double tau_c, AngularFrequency carrier = {}) {
  OuNoiseModel m;
  m.omega_rms = AngularFrequency::from_rad_per_s(rms);
  m.tau_c = tau_c;
  m.carrier = carrier;
  return m;
}

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = a + (b - a) * i / (n - 1);
  return v;
}

}  // namespace

TEST_CASE("OU trace has the stationary variance and lag-one correlation") {
  const double rms = 3.0e4, tc = 1e-6, dt = 1e-7;
  const std::size_t n = 1'000'000;
  const auto tr = ou_generate(ou(rms, tc), dt, n, 1234);
  REQUIRE(tr.samples.size() == n);
  const auto& x = tr.samples;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double var = 0.0, lag = 0.0;
  for (std::size_t i = 0; i < n; ++i) var += (x[i] - mean) * (x[i] - mean);
  for (std::size_t i = 0; i + 1 < n; ++i) lag += (x[i] - mean) * (x[i + 1] - mean);
  var /= n;
  lag /= (n - 1);
  const double rho = std::exp(-dt / tc);
  // Sample variance of an AR(1) sequence: sd = s^2 sqrt(2 (1 + rho^2) / ((1 - rho^2) n)).
  const double var_sd = rms * rms * std::sqrt(2 * (1 + rho * rho) / ((1 - rho * rho) * n));
  CHECK(std::abs(var - rms * rms) < 3 * var_sd);
  const double rho_hat = lag / var;
  CHECK(std::abs(rho_hat - rho) < 3 * std::sqrt((1 - rho * rho) / n) * 3);
}

TEST_CASE("OU trace is reproducible from its seed") {
  const auto a = ou_generate(ou(1e4, 1e-6), 1e-8, 5000, 99);
  const auto b = ou_generate(ou(1e4, 1e-6), 1e-8, 5000, 99);
  const auto c = ou_generate(ou(1e4, 1e-6), 1e-8, 5000, 100);
  CHECK(a.samples == b.samples);
  CHECK(a.samples != c.samples);
}

TEST_CASE("static OU trace is frozen") {
  const auto tr = ou_generate(ou(1e4, std::numeric_limits<double>::infinity()), 1e-8, 1000, 5);
  for (double v : tr.samples) CHECK(v == tr.samples.front());
}

TEST_CASE("OU model validation") {
  CHECK_THROWS_AS(ou(0.0, 1e-6).validate(), std::invalid_argument);
  CHECK_THROWS_AS(ou(1.0, 0.0).validate(), std::invalid_argument);
  CHECK_THROWS_AS(ou_generate(ou(1.0, 1e-6), 0.0, 10, 1), std::invalid_argument);
}

TEST_CASE("OU spectral density normalization") {
  const double rms = 2e4, tc = 3e-8;
  const auto m = ou(rms, tc);
  CHECK(ou_psd(m, 0.0) == doctest::Approx(2 * rms * rms * tc));
  CHECK(ou_psd(m, 1.0 / tc) == doctest::Approx(rms * rms * tc));

  // Trapezoid on a logarithmic grid, plus the analytic 1/w^2 tail.
  const int n = 400000;
  const double lo = 1e-6 / tc, hi = 1e6 / tc;
  double acc = ou_psd(m, 0.0) * lo;
  double prev_w = lo, prev_s = ou_psd(m, lo);
  for (int i = 1; i <= n; ++i) {
    const double w = lo * std::pow(hi / lo, double(i) / n);
    const double s = ou_psd(m, w);
    acc += 0.5 * (s + prev_s) * (w - prev_w);
    prev_w = w;
    prev_s = s;
  }
  acc += 2 * rms * rms / (tc * hi);
  CHECK(2 * acc / (2 * pi) == doctest::Approx(rms * rms).epsilon(1e-6));
}

TEST_CASE("predicted rate inverts through omega_rms_for_t1rho") {
  const auto w1 = mhz(7);
  for (double tc : {30e-9, 1e-6}) {
    const auto rms = omega_rms_for_t1rho(200e-6, tc, w1);
    CHECK(predicted_rate(ou(rms.value(), tc), w1).time() == doctest::Approx(200e-6).epsilon(1e-12));
    const auto rms_c = omega_rms_for_t1rho(50e-6, tc, w1, w1);
    CHECK(predicted_rate(ou(rms_c.value(), tc, w1), w1).time() == doctest::Approx(50e-6).epsilon(1e-12));
  }
}

TEST_CASE("relaxation curve") {
  const auto c = relaxation_curve(RelaxationKind::t1, 2e-3, 1.0 / 3.0, {0.0, 2e-3});
  CHECK(c[0] == 0.0);
  CHECK(c[1] == doctest::Approx((1.0 / 3.0) * (1 - std::exp(-1.0))));
  CHECK_THROWS_AS(relaxation_curve(RelaxationKind::t1rho, 0.0, 1.0, {1.0}), std::domain_error);

  const GyromagneticRatio g;
  const double t1 = analytic::t1_from_sb(0.14e-9, g);
  const auto tau = linspace(0.0, 5 * t1, 40);
  const auto p = relaxation_curve(RelaxationKind::t1, t1, 1.0 / 3.0, tau);
  const auto r = fit_decay(tau, p);
  CHECK(r.parameters[1] == doctest::Approx(t1).epsilon(1e-8));
  CHECK(analytic::sb_from_t1(r.parameters[1], g) == doctest::Approx(0.14e-9).epsilon(1e-8));
}

TEST_CASE("fit_decay recovers the saturation level and time of a synthetic decay") {
  const auto tau = linspace(20e-6, 600e-6, 30);
  std::vector<double> p;
  for (double t : tau) p.push_back(analytic::stochastic_probability(0.9, t, 150e-6).probability);
  const auto r = fit_decay(tau, p);
  REQUIRE(r.converged);
  CHECK(r.parameters[0] == doctest::Approx(0.45).epsilon(1e-8));
  CHECK(r.parameters[1] == doctest::Approx(150e-6).epsilon(1e-8));
}

TEST_CASE("Monte Carlo decay does not depend on the thread count") {
  MonteCarloConfig c;
  c.model = ou(omega_rms_for_t1rho(20e-6, 50e-9, mhz(2)).value(), 50e-9);
  c.omega1 = mhz(2);
  c.tau_grid = linspace(2e-6, 40e-6, 5);
  c.realizations = 24;
  c.seed = 77;
  c.threads = 1;
  const auto a = simulate_decay(c);
  c.threads = 4;
  const auto b = simulate_decay(c);
  CHECK(a.p_mean == b.p_mean);
  CHECK(a.per_realization == b.per_realization);
  c.seed = 78;
  CHECK(simulate_decay(c).p_mean != a.p_mean);
}

TEST_CASE("white-limit Monte Carlo approaches the predicted T1rho") {
  MonteCarloConfig c;
  c.omega1 = mhz(7);
  c.model = ou(omega_rms_for_t1rho(200e-6, 30e-9, c.omega1).value(), 30e-9);
  c.tau_grid = linspace(25e-6, 300e-6, 12);
  c.realizations = 1000;
  c.seed = 2024;
  c.threads = 0;
  const auto est = monte_carlo_t1rho(c, 50);
  CHECK(est.predicted_t1rho == doctest::Approx(200e-6).epsilon(1e-12));
  CHECK(est.t1rho == doctest::Approx(200e-6).epsilon(0.15));
  CHECK(est.ci_low <= est.t1rho);
  CHECK(est.ci_high >= est.t1rho);
}

TEST_CASE("static carrier noise follows the correlated closed form") {
  MonteCarloConfig c;
  c.omega1 = mhz(2);
  const double rms = std::sqrt(2.0) / 20e-6;
  c.model = ou(rms, std::numeric_limits<double>::infinity(), c.omega1);
  c.tau_grid = linspace(5e-6, 60e-6, 6);
  c.realizations = 2000;
  c.seed = 3;
  c.threads = 0;
  const auto sim = simulate_decay(c);
  for (std::size_t i = 0; i < c.tau_grid.size(); ++i) {
    const double expected =
        analytic::correlated_probability(1.0, AngularFrequency::from_rad_per_s(rms), c.tau_grid[i]).probability;
    CHECK(sim.p_mean[i] == doctest::Approx(expected).epsilon(0.02));
  }
}

TEST_CASE("decay shape crosses from exponential to Gaussian as the correlation time grows") {
  const auto w1 = mhz(2);
  const double rms = 5e4;
  auto shape = [&](double tc, double t_max) {
    MonteCarloConfig c;
    c.omega1 = w1;
    c.model = ou(rms, tc, w1);
    c.tau_grid = linspace(t_max / 12, t_max, 12);
    c.realizations = 300;
    c.seed = 11;
    c.threads = 0;
    c.steps_per_period = 40;
    const auto sim = simulate_decay(c);
    return classify_decay(c.tau_grid, sim.p_mean);
  };
  const double t_white = predicted_rate(ou(rms, 0.2e-6, w1), w1).time();
  const auto fast = shape(0.2e-6, 3 * t_white);
  const auto slow = shape(std::numeric_limits<double>::infinity(), 3 * std::sqrt(2.0) / rms);
  CHECK(fast.exponential());
  CHECK_FALSE(slow.exponential());
}
