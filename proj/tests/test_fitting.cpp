#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "rfmag/analytic.hpp"
#include "rfmag/fitting.hpp"

using namespace rfmag;
using namespace rfmag::fitting;

namespace {


std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = a + (b - a) * i / (n - 1);
  return v;
}

FitData synthetic(const FitModel& m, const std::vector<double>& x, const std::vector<double>& p) {
  return {x, m(x, p), {}};
}

void check_jacobian(const FitModel& m, const std::vector<double>& x, const std::vector<double>& p) {
  const std::size_t n = x.size(), k = p.size();
  std::vector<double> y(n), jac(n * k);
  m.evaluate(x, p, y, jac);
  for (std::size_t j = 0; j < k; ++j) {
    const double h = 1e-6 * std::max(std::abs(p[j]), 1e-12);
    auto up = p, dn = p;
    up[j] += h;
    dn[j] -= h;
    const auto yu = m(x, up), yd = m(x, dn);
    double scale = 0.0, worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double fd = (yu[i] - yd[i]) / (2 * h);
      const double an = jac[i * k + j];
      scale = std::max(scale, std::abs(fd));
      worst = std::max(worst, std::abs(fd - an));
    }
    INFO(m.parameters()[j].name);
    CHECK(worst <= 1e-5 * scale + 1e-14);
  }
}

}  // namespace

TEST_CASE("model names round trip") {
  for (auto k : {ModelKind::gaussian_peak, ModelKind::decaying_sinusoid, ModelKind::exponential_saturation,
                 ModelKind::inhomogeneous_oscillation}) {
    CHECK(model_kind_from_string(to_string(k)) == k);
    CHECK(make_model(k)->kind() == k);
  }
  CHECK_THROWS_AS(model_kind_from_string("lorentzian"), std::invalid_argument);
  CHECK(make_model(ModelKind::gaussian_peak)->size() == 4);
  CHECK(make_model(ModelKind::decaying_sinusoid)->size() == 3);
  CHECK(make_model(ModelKind::exponential_saturation)->size() == 2);
  CHECK(make_model(ModelKind::inhomogeneous_oscillation)->size() == 4);
}

TEST_CASE("noiseless Gaussian is recovered exactly") {
  GaussianPeak m;
  const double mu = two_pi * 7.5e6, s = two_pi * 3e3;
  const auto x = linspace(mu - 6 * s, mu + 6 * s, 81);
  const std::vector<double> truth{0.3, mu, s, 0.0};
  const auto r = fit(m, synthetic(m, x, truth), {0.25, mu + 0.4 * s, 1.3 * s, 0.01});
  REQUIRE(r.converged);
  CHECK(r.parameters[0] == doctest::Approx(0.3).epsilon(1e-8));
  CHECK(r.parameters[1] == doctest::Approx(mu).epsilon(1e-8));
  CHECK(r.parameters[2] == doctest::Approx(s).epsilon(1e-8));
  CHECK(std::abs(r.parameters[3]) < 1e-9);
  CHECK(r.r_squared == doctest::Approx(1.0));
}

TEST_CASE("analytic Jacobians agree with central differences") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  const auto t = linspace(0.0, 60e-6, 25);
  for (int trial = 0; trial < 5; ++trial) {
    GaussianPeak g;
    check_jacobian(g, linspace(-3, 3, 31), {0.3 * u(rng), 0.2 * u(rng), 0.8 * u(rng), 0.01 * u(rng)});
    DecayingSinusoid d;
    check_jacobian(d, t, {0.56 * u(rng), two_pi * 46e3 * u(rng), 28e-6 * u(rng)});
    ExponentialSaturation e;
    check_jacobian(e, t, {0.3 * u(rng), 20e-6 * u(rng)});
    InhomogeneousOscillation h(16);
    check_jacobian(h, t, {0.56 * u(rng), two_pi * 46e3 * u(rng), two_pi * 15e3 * u(rng), two_pi * 30e3 * u(rng)});
  }
}

TEST_CASE("bounds and fixed parameters are respected") {
  ExponentialSaturation m;
  const auto x = linspace(0.0, 5.0, 30);
  const auto data = synthetic(m, x, {0.5, 1.0});

  auto bounded = ExponentialSaturation();
  bounded.parameter(1).upper = 0.8;
  const auto rb = fit(bounded, data, {0.4, 0.5});
  CHECK(rb.parameters[1] <= 0.8);
  CHECK(rb.parameters[1] == doctest::Approx(0.8).epsilon(1e-9));

  auto frozen = ExponentialSaturation();
  frozen.parameter(1).fixed = true;
  const auto rf = fit(frozen, data, {0.4, 1.2});
  CHECK(rf.parameters[1] == 1.2);
  CHECK(rf.standard_errors[1] == 0.0);
  CHECK(rf.covariance(1, 1) == 0.0);
  CHECK(rf.covariance(0, 1) == 0.0);

  auto inverted = ExponentialSaturation();
  inverted.parameter(0).lower = 1.0;
  inverted.parameter(0).upper = 0.0;
  CHECK_THROWS_AS(inverted.validate(), std::invalid_argument);
  CHECK_THROWS_AS(fit(inverted, data, {0.5, 1.0}), std::invalid_argument);
}

TEST_CASE("covariance of a model linear in its free parameter") {
  // With T frozen, y = a g(x) and the least-squares variance of a is s^2 / sum g^2 (unweighted)
  // or 1 / sum (g/sigma)^2 (weighted).
  ExponentialSaturation m;
  m.parameter(1).fixed = true;
  const double tsat = 0.7;
  const auto x = linspace(0.1, 3.0, 40);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> noise(0.0, 0.01);
  std::vector<double> y, g, sig;
  for (double xi : x) {
    const double gi = 1 - std::exp(-xi / tsat);
    g.push_back(gi);
    y.push_back(0.4 * gi + noise(rng));
    sig.push_back(0.01 + 0.005 * xi);
  }
  double sgg = 0, sgy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sgg += g[i] * g[i];
    sgy += g[i] * y[i];
  }
  const double a = sgy / sgg;
  double rss = 0;
  for (std::size_t i = 0; i < x.size(); ++i) rss += std::pow(y[i] - a * g[i], 2);
  const double var_unweighted = rss / (x.size() - 1) / sgg;

  const auto r = fit(m, {x, y, {}}, {0.3, tsat});
  CHECK(r.parameters[0] == doctest::Approx(a).epsilon(1e-9));
  CHECK(r.covariance(0, 0) == doctest::Approx(var_unweighted).epsilon(1e-6));
  CHECK(r.standard_errors[0] == doctest::Approx(std::sqrt(var_unweighted)).epsilon(1e-6));

  double w = 0;
  for (std::size_t i = 0; i < x.size(); ++i) w += std::pow(g[i] / sig[i], 2);
  const auto rw = fit(m, {x, y, sig}, {0.3, tsat});
  CHECK(rw.covariance(0, 0) == doctest::Approx(1.0 / w).epsilon(1e-6));
}

TEST_CASE("covariance is symmetric positive semidefinite") {
  GaussianPeak m;
  const auto x = linspace(-4, 4, 60);
  std::mt19937_64 rng(13);
  std::normal_distribution<double> noise(0.0, 0.02);
  auto y = m(x, std::vector<double>{1.0, 0.3, 0.9, 0.05});
  for (double& v : y) v += noise(rng);
  const auto r = fit(m, {x, y, {}}, {0.8, 0.0, 1.2, 0.0});
  REQUIRE(r.converged);
  CHECK((r.covariance - r.covariance.transpose()).norm() <= 1e-12 * r.covariance.norm());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r.covariance);
  CHECK(es.eigenvalues().minCoeff() >= -1e-15 * es.eigenvalues().maxCoeff());
}

TEST_CASE("reported errors match the spread of refits for a badly scaled peak") {
  GaussianPeak m;
  const double mu = two_pi * 7.5e6, s = two_pi * 8e3;
  const auto x = linspace(mu - 5 * s, mu + 5 * s, 61);
  const std::vector<double> truth{0.2, mu, s, 0.01};
  const auto clean = m(x, truth);
  std::mt19937_64 rng(21);
  std::normal_distribution<double> noise(0.0, 0.01);
  std::vector<double> mus;
  double reported = 0.0;
  const int trials = 300;
  for (int t = 0; t < trials; ++t) {
    auto y = clean;
    for (double& v : y) v += noise(rng);
    const auto r = fit(m, {x, y, {}}, {0.18, mu + 0.2 * s, 1.1 * s, 0.0});
    REQUIRE(r.converged);
    mus.push_back(r.parameters[1]);
    reported += r.standard_errors[1] / trials;
  }
  double mean = 0, var = 0;
  for (double v : mus) mean += v / trials;
  for (double v : mus) var += (v - mean) * (v - mean) / (trials - 1);
  CHECK(reported / std::sqrt(var) == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("fit result does not depend on data order") {
  DecayingSinusoid m;
  const auto x = linspace(0.0, 60e-6, 40);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0.0, 0.01);
  auto y = m(x, std::vector<double>{0.56, two_pi * 46.1e3, 28e-6});
  for (double& v : y) v += noise(rng);
  const std::vector<double> guess{0.5, two_pi * 44e3, 25e-6};
  const auto a = fit(m, {x, y, {}}, guess);
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  FitData shuffled;
  for (auto i : order) {
    shuffled.x.push_back(x[i]);
    shuffled.y.push_back(y[i]);
  }
  const auto b = fit(m, shuffled, guess);
  for (std::size_t j = 0; j < 3; ++j) CHECK(b.parameters[j] == doctest::Approx(a.parameters[j]).epsilon(1e-7));
}

TEST_CASE("parameter error grows linearly with the noise scale") {
  ExponentialSaturation m;
  const auto x = linspace(0.05, 4.0, 50);
  const auto clean = m(x, std::vector<double>{0.5, 1.0});
  std::mt19937_64 rng(17);
  std::normal_distribution<double> xi(0.0, 1.0);
  std::vector<double> unit(x.size());
  for (double& v : unit) v = xi(rng);
  std::vector<double> dev;
  for (double s : {1e-5, 1e-4, 1e-3}) {
    auto y = clean;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += s * unit[i];
    const auto r = fit(m, {x, y, {}}, {0.45, 1.1});
    dev.push_back(std::abs(r.parameters[1] - 1.0));
  }
  CHECK(dev[1] / dev[0] == doctest::Approx(10.0).epsilon(0.05));
  CHECK(dev[2] / dev[1] == doctest::Approx(10.0).epsilon(0.05));
}

TEST_CASE("decaying sinusoid on an inhomogeneously averaged trace") {
  // Averaging over a Gaussian mismatch (sigma 15 kHz, offset 30 kHz) yields a Gaussian-like
  // decay near 28 us, oscillating at sqrt(W1^2 + offset^2) with amplitude reduced by W1^2/(W1^2 + offset^2).
  InhomogeneousOscillation forward(32);
  const auto t = linspace(0.0, 60e-6, 121);
  const std::vector<double> truth{0.56, two_pi * 46.1e3, two_pi * 15e3, two_pi * 30e3};
  const auto y = forward(t, truth);
  DecayingSinusoid m;
  const auto r = fit(m, {t, y, {}}, {0.5, two_pi * 50e3, 30e-6});
  REQUIRE(r.converged);
  CHECK(r.parameters[2] == doctest::Approx(28e-6).epsilon(0.10));
  CHECK(r.parameters[1] == doctest::Approx(two_pi * std::hypot(46.1e3, 30e3)).epsilon(0.10));
  const double lorentz = 46.1e3 * 46.1e3 / (46.1e3 * 46.1e3 + 30e3 * 30e3);
  CHECK(r.parameters[0] == doctest::Approx(0.56 * lorentz).epsilon(0.10));
}

TEST_CASE("inhomogeneous oscillation limits and self-consistent recovery") {
  InhomogeneousOscillation m(16);
  const auto t = linspace(0.0, 50e-6, 60);
  const double w1 = two_pi * 46.1e3;
  const auto narrow = m(t, std::vector<double>{0.7, w1, 1e-6, 0.0});
  for (std::size_t i = 0; i < t.size(); ++i)
    CHECK(narrow[i] == doctest::Approx(analytic::coherent_probability(0.7, w1, 0.0, t[i])).epsilon(1e-9));

  const std::vector<double> truth{0.56, w1, two_pi * 15e3, two_pi * 30e3};
  const auto r = fit_inhomogeneous_oscillation({t, m(t, truth), {}},
                                               {0.5, two_pi * 44e3, two_pi * 12e3, two_pi * 25e3});
  REQUIRE(r.converged);
  for (std::size_t j = 0; j < 4; ++j) CHECK(r.parameters[j] == doctest::Approx(truth[j]).epsilon(1e-6));
}

TEST_CASE("FWHM from sigma") {
  CHECK(fwhm_from_sigma(1.0) == doctest::Approx(2.35482).epsilon(1e-6));
  CHECK(fwhm_from_sigma(1.0) == doctest::Approx(std::sqrt(8 * std::log(2.0))).epsilon(1e-15));
  CHECK(fwhm_from_sigma(0.0) == 0.0);
  CHECK(fwhm_from_sigma(AngularFrequency::from_hz(7.7e3)).hz() == doctest::Approx(18e3).epsilon(0.01));
  CHECK_THROWS_AS(fwhm_from_sigma(-1.0), std::domain_error);
}

TEST_CASE("fit input validation") {
  ExponentialSaturation m;
  CHECK_THROWS_AS(fit(m, {{1, 2}, {1, 2}, {}}, {1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(fit(m, {{1, 2, 3}, {1, 2}, {}}, {1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(fit(m, {{1, 2, 3}, {1, NAN, 3}, {}}, {1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(fit(m, {{1, 2, 3}, {1, 2, 3}, {1, 0, 1}}, {1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(fit(m, {{1, 2, 3}, {1, 2, 3}, {}}, {1}), std::invalid_argument);
}
