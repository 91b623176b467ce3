#include <doctest.h>

#include <cmath>
#include <numeric>

#include "rfmag/core.hpp"
#include "rfmag/parallel.hpp"
#include "rfmag/quadrature.hpp"

using namespace rfmag;

TEST_CASE("angular frequency round trips through Hz") {
  for (double f : {0.0, 1.0, 46.1e3, 7.5e6, -3.9e6}) {
    CHECK(AngularFrequency::from_hz(f).hz() == doctest::Approx(f).epsilon(1e-15));
  }
  CHECK(AngularFrequency::from_hz(1.0).value() == doctest::Approx(2.0 * M_PI));
  CHECK_THROWS_AS(AngularFrequency::from_rad_per_s(NAN), std::domain_error);
  CHECK_THROWS_AS(AngularFrequency::from_hz(INFINITY), std::domain_error);
}

TEST_CASE("field to Rabi conversion") {
  const GyromagneticRatio gamma;
  CHECK(gamma.hz_per_tesla() == doctest::Approx(28.02495e9));
  const auto w = field_to_rabi(MagneticField::from_tesla(1.65e-6), gamma);
  CHECK(w.hz() == doctest::Approx(46.241e3).epsilon(1e-4));
  CHECK(rabi_to_field(w, gamma).tesla() == doctest::Approx(1.65e-6).epsilon(1e-14));
  CHECK_THROWS_AS(field_to_rabi(MagneticField::from_tesla(-1e-9), gamma), std::domain_error);
  CHECK_THROWS(GyromagneticRatio::from_hz_per_tesla(0.0));
}

TEST_CASE("field to Rabi is linear") {
  const GyromagneticRatio g;
  const double b = 3.7e-7;
  for (double a : {0.0, 0.5, 2.0, 1e3}) {
    CHECK(field_to_rabi(MagneticField::from_tesla(a * b), g).value() ==
          doctest::Approx(a * field_to_rabi(MagneticField::from_tesla(b), g).value()).epsilon(1e-15));
  }
}

TEST_CASE("effective Rabi frequency") {
  for (double w : {0.0, 1e5, 3e7}) {
    for (double d : {-2e6, 0.0, 4e5}) {
      const auto e = effective_rabi(AngularFrequency::from_rad_per_s(w), AngularFrequency::from_rad_per_s(d));
      CHECK(e.value() >= std::max(w, std::abs(d)));
      if (w == 0.0 || d == 0.0) CHECK(e.value() == std::max(w, std::abs(d)));
      else CHECK(e.value() > std::max(w, std::abs(d)));
    }
  }
  const auto w = effective_rabi(AngularFrequency::from_hz(3e6), AngularFrequency::from_hz(4e6));
  CHECK(w.hz() == doctest::Approx(5e6));
  CHECK(effective_rabi(AngularFrequency::from_hz(1e6), {}).hz() == doctest::Approx(1e6));
  CHECK_THROWS_AS(effective_rabi(AngularFrequency::from_hz(-1.0), {}), std::domain_error);
}

TEST_CASE("nv14 triplet preset") {
  const auto s = SpinSystem::nv14_triplet();
  REQUIRE(s.size() == 3);
  double sum = 0.0;
  for (const auto& l : s.lines()) {
    sum += l.weight;
    CHECK(l.sigma.hz() == doctest::Approx(350e3));
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(s.lines()[0].detuning.hz() == doctest::Approx(-0.5e6));
  CHECK(s.lines()[1].detuning.hz() == doctest::Approx(1.7e6));
  CHECK(s.lines()[2].detuning.hz() == doctest::Approx(3.9e6));
}

TEST_CASE("spin system validation") {
  const GyromagneticRatio g;
  const auto sig = AngularFrequency::from_hz(1e5);
  CHECK_THROWS_AS(SpinSystem(g, {}), std::invalid_argument);
  CHECK_THROWS_AS(SpinSystem(g, {{AngularFrequency{}, sig, 0.7}}), std::invalid_argument);
  CHECK_THROWS_AS(SpinSystem(g, {{AngularFrequency{}, sig, 1.5}, {AngularFrequency{}, sig, -0.5}}),
                  std::domain_error);
  CHECK_THROWS_AS(SpinSystem(g, {{AngularFrequency{}, AngularFrequency::from_hz(-1.0), 1.0}}),
                  std::domain_error);
  CHECK_THROWS_AS(SpinSystem(g, {{AngularFrequency{}, AngularFrequency{}, 1.0}}), std::domain_error);
  CHECK_NOTHROW(SpinSystem(g, {{AngularFrequency{}, sig, 0.25}, {AngularFrequency{}, sig, 0.75}}));
}

TEST_CASE("probe amplitude equals gamma times field") {
  const auto g = GyromagneticRatio::from_hz_per_tesla(28e9);
  for (double b : {0.0, 41e-9, 1.65e-6, 1e-3}) {
    const auto rf = RfProbe::from_field(MagneticField::from_tesla(b), AngularFrequency::from_hz(7.5e6), g);
    CHECK(rf.amplitude().value() == g.value() * b);
    const auto back = RfProbe::from_amplitude(rf.amplitude(), rf.frequency(), g);
    CHECK(back.amplitude_field().tesla() == doctest::Approx(b).epsilon(1e-14));
    const auto moved = rf.with_frequency(AngularFrequency::from_hz(8e6));
    CHECK(moved.amplitude() == rf.amplitude());
    CHECK(moved.frequency().hz() == doctest::Approx(8e6));
  }
}

TEST_CASE("derive_seed is deterministic and spreads indices") {
  CHECK(derive_seed(1, 0) == derive_seed(1, 0));
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 5) != derive_seed(2, 5));
}

TEST_CASE("parallel_for visits each index once and propagates exceptions") {
  for (unsigned t : {1u, 3u, 8u}) {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), t, [&](std::size_t i) { hits[i] += 1; });
    CHECK(std::accumulate(hits.begin(), hits.end(), 0) == 1000);
    CHECK(*std::min_element(hits.begin(), hits.end()) == 1);
  }
  CHECK_THROWS_AS(parallel_for(50, 4,
                               [](std::size_t i) {
                                 if (i == 17) throw std::runtime_error("boom");
                               }),
                  std::runtime_error);
  CHECK(resolve_threads(0) >= 1);
}

TEST_CASE("normal rule integrates low moments") {
  const auto rule = normal_rule(8);
  double m0 = 0, m1 = 0, m2 = 0, m4 = 0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double z = rule.nodes[i], w = rule.weights[i];
    m0 += w;
    m1 += w * z;
    m2 += w * z * z;
    m4 += w * z * z * z * z;
  }
  CHECK(m0 == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(m1) < 1e-14);
  CHECK(m2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m4 == doctest::Approx(3.0).epsilon(1e-10));
}
