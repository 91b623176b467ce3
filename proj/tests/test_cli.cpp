#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include <json.hpp>

#include "rfmag/cli.hpp"
#include "rfmag/config.hpp"
#include "rfmag/io.hpp"

using namespace rfmag;
using namespace rfmag::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string configs = std::string(RFMAG_SOURCE_DIR) + "/configs/";

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("rfmag_test_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

void write_file(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

json read_json(const std::string& path) { return json::parse(io::read_text_file(path)); }

}  // namespace

TEST_CASE("unknown fields are rejected with their path") {
  try {
    parse_config(R"({"drive": {"omega1_hz": 1e6, "bogus": 1}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("/drive/bogus: unknown field") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config(R"({"typo": 3})"), ConfigError);
}

TEST_CASE("parse errors report the line") {
  try {
    parse_config("{\n  \"seed\": 1,\n  \"p0\": ,\n}");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("defaults are materialized in the resolved config") {
  const auto c = parse_config("{}");
  CHECK(c.resolved.at("seed") == 1);
  CHECK(c.resolved.at("engine") == "analytic");
  CHECK(c.resolved.at("p0") == 1.0);
  CHECK(c.resolved.at("spin_system").at("preset") == "nv14_triplet");
  CHECK(c.resolved.at("gamma_hz_per_t") == 28.02495e9);
  CHECK_FALSE(c.resolved.contains("threads"));
  CHECK(c.system.size() == 3);
}

TEST_CASE("noise correlation time accepts inf") {
  const auto c = parse_config(
      R"({"drive": {"omega1_hz": 7e6}, "noise": {"tau_c_s": "inf", "carrier_hz": 7e6, "omega_rms_hz": 4000}})");
  REQUIRE(c.noise);
  CHECK(std::isinf(c.noise->model.tau_c));
  CHECK(c.resolved.at("noise").at("tau_c_s") == "inf");
  CHECK_THROWS_AS(parse_config(R"({"noise": {"tau_c_s": "forever", "omega_rms_hz": 1}})"), ConfigError);
}

TEST_CASE("overrides replace config values") {
  Overrides o;
  o.seed = 99;
  o.engine = "numeric";
  o.threads = 3;
  const auto c = parse_config(R"({"seed": 5})", o);
  CHECK(c.seed == 99);
  CHECK(c.engine == spectrometer::Engine::numeric);
  CHECK(c.threads == 3);
}

TEST_CASE("fit parameter keys carry their unit") {
  CHECK(parameter_key("omega1", "rad/s") == "omega1_rad_s");
  CHECK(parameter_key("T", "s") == "T_s");
  CHECK(parameter_key("p0", "1") == "p0");
}

TEST_CASE("command line parsing and exit codes") {
  CHECK(run({"--help"}).code == exit_ok);
  CHECK(run({}).code == exit_config);
  CHECK(run({"spectrum"}).code == exit_config);
  CHECK(run({"spectrum", "--config", configs + "fig3b.json", "--engine", "fast"}).code == exit_config);
  CHECK(run({"spectrum", "--config", "/nonexistent.json"}).code == exit_config);
}

TEST_CASE("an empty grid exits with a config error and writes nothing") {
  TempDir tmp;
  write_file(tmp / "empty.json",
             R"({"probe": {"amplitude_t": 1e-6, "frequency_hz": 7.5e6}, "sequence": {"tau_s": 15e-6},
                 "omega1_grid": {"values_hz": []}})");
  const auto r = run({"spectrum", "--config", tmp / "empty.json", "--out", tmp / "out"});
  CHECK(r.code == exit_config);
  CHECK_FALSE(r.err.empty());
  CHECK_FALSE(fs::exists(tmp.path / "out"));
}

TEST_CASE("a zero probe gives a flat zero oscillation") {
  TempDir tmp;
  write_file(tmp / "zero.json",
             R"({"drive": {"omega1_hz": 7.5e6}, "probe": {"amplitude_hz": 0, "frequency_hz": 7.5e6},
                 "tau_grid": {"start_s": 0, "stop_s": 20e-6, "points": 11}})");
  const auto r = run({"oscillate", "--config", tmp / "zero.json", "--out", tmp.path.string()});
  REQUIRE(r.code == exit_ok);
  const auto t = io::read_csv_file(tmp / "oscillation.csv");
  REQUIRE(t.rows.size() == 11);
  for (double p : t.values(t.column("p"))) CHECK(p == 0.0);
}

TEST_CASE("sensitivity reproduces both budget columns") {
  TempDir tmp;
  REQUIRE(run({"sensitivity", "--config", configs + "tableS1_col1.json", "--out", tmp.path.string()}).code == exit_ok);
  auto t = read_json(tmp / "sensitivity.json").at("table");
  CHECK(t.at("bmin_shot_nt").get<double>() == doctest::Approx(170).epsilon(0.05));
  CHECK(t.at("bmin_baseline_nt").get<double>() == doctest::Approx(200).epsilon(0.05));
  REQUIRE(run({"sensitivity", "--config", configs + "tableS1_col2.json", "--out", tmp.path.string()}).code == exit_ok);
  t = read_json(tmp / "sensitivity.json").at("table");
  CHECK(t.at("bmin_shot_nt").get<double>() == doctest::Approx(10).epsilon(0.05));
  CHECK(t.at("bmin_baseline_nt").get<double>() == doctest::Approx(8).epsilon(0.05));
}

TEST_CASE("fit command on a synthetic Gaussian") {
  TempDir tmp;
  std::string csv = "x,y\n";
  for (int i = 0; i <= 60; ++i) {
    const double x = 7.40 + 0.2 * i / 60.0;
    csv += io::format_double(x) + "," + io::format_double(0.3 * std::exp(-0.5 * std::pow((x - 7.5) / 0.02, 2))) + "\n";
  }
  write_file(tmp / "peak.csv", csv);
  const auto r = run({"fit", "--model", "gaussian_peak", "--input", tmp / "peak.csv", "--out", tmp.path.string()});
  REQUIRE(r.code == exit_ok);
  const auto j = read_json(tmp / "fit.json");
  CHECK(j.at("fit").at("converged") == true);
  CHECK(j.at("fit").at("parameters").at("mu_x").get<double>() == doctest::Approx(7.5).epsilon(1e-8));
  CHECK(fs::exists(tmp.path / "fit_curve.csv"));
  CHECK(run({"fit", "--model", "nonsense", "--input", tmp / "peak.csv", "--out", tmp.path.string()}).code ==
        exit_config);
}

TEST_CASE("outputs are byte-identical across thread counts") {
  TempDir a, b;
  REQUIRE(run({"spectrum", "--config", configs + "fig3b.json", "--threads", "1", "--out", a.path.string()}).code ==
          exit_ok);
  REQUIRE(run({"spectrum", "--config", configs + "fig3b.json", "--threads", "4", "--out", b.path.string()}).code ==
          exit_ok);
  for (const auto& name : {"spectrum.csv", "spectrum.json"}) {
    CHECK(io::read_text_file(a / name) == io::read_text_file(b / name));
  }
}

TEST_CASE("selection and recombination file set") {
  TempDir tmp;
  const auto r = run({"spectrum", "--config", configs + "fig4.json", "--out", tmp.path.string()});
  REQUIRE(r.code == exit_ok);
  for (const auto& name : {"spectrum.csv", "spectrum_clean.csv", "spectrum.json", "selected_line0.csv",
                           "selected_line1.csv", "selected_line2.csv", "recombined_line0.csv",
                           "recombined_line1.csv", "recombined_line2.csv"}) {
    CHECK(fs::exists(tmp.path / name));
  }
  const auto j = read_json(tmp / "spectrum.json");
  CHECK(j.at("config").at("seed") == 4);
  CHECK(j.contains("readout"));
}

TEST_CASE("coherent oscillation fit") {
  TempDir tmp;
  REQUIRE(run({"oscillate", "--config", configs + "fig2.json", "--out", tmp.path.string()}).code == exit_ok);
  const auto fit = read_json(tmp / "oscillation.json").at("fit");
  REQUIRE(fit.at("converged") == true);
  const double f_khz = fit.at("parameters").at("omega_rad_s").get<double>() / two_pi / 1e3;
  CHECK(f_khz == doctest::Approx(std::hypot(46.24, 30.0)).epsilon(0.10));
  CHECK(fit.at("parameters").at("T_s").get<double>() == doctest::Approx(28e-6).epsilon(0.10));
  CHECK(fs::exists(tmp.path / "oscillation_fit.csv"));
}

TEST_CASE("relax command, analytic and Monte Carlo") {
  TempDir tmp;
  write_file(tmp / "analytic.json",
             R"({"relax": {"mode": "analytic", "kind": "t1", "t_s": 3.3e-3},
                 "p0": 0.3333333333333333, "tau_grid": {"start_s": 0, "stop_s": 10e-3, "points": 6}})");
  REQUIRE(run({"relax", "--config", tmp / "analytic.json", "--out", tmp.path.string()}).code == exit_ok);
  auto t = io::read_csv_file(tmp / "relax.csv");
  const auto p = t.values(1);
  CHECK(p.front() == 0.0);
  CHECK(p.back() == doctest::Approx((1.0 / 3.0) * (1 - std::exp(-10.0 / 3.3))));

  write_file(tmp / "mc.json",
             R"({"seed": 7, "drive": {"omega1_hz": 7.0e6},
                 "noise": {"t1rho_target_s": 200e-6, "tau_c_s": 30e-9, "realizations": 400},
                 "tau_grid": {"start_s": 25e-6, "stop_s": 300e-6, "points": 12},
                 "relax": {"bootstrap": 20, "noise_trace": true}})");
  REQUIRE(run({"relax", "--config", tmp / "mc.json", "--out", tmp.path.string()}).code == exit_ok);
  const auto j = read_json(tmp / "relax.json");
  CHECK(j.at("predicted_t1rho_s").get<double>() == doctest::Approx(200e-6).epsilon(1e-9));
  CHECK(j.at("t1rho_s").get<double>() == doctest::Approx(200e-6).epsilon(0.25));
  CHECK(fs::exists(tmp.path / "noise_trace.csv"));
}
