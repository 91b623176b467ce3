#pragma once

// Run configuration: a JSON document whose physical quantities all carry a unit
// suffix in the key (_hz, _s, _t). Unknown keys are rejected. The resolved tree,
// with every default written out, is embedded in each JSON output.

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rfmag/analytic.hpp"
#include "rfmag/core.hpp"
#include "rfmag/propagator.hpp"
#include "rfmag/spectrometer.hpp"
#include "rfmag/stochastic.hpp"

namespace rfmag::cli {

/// Schema violation. The message names the JSON path, or the line for parse errors.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Typed reader over one JSON object. Each key read is copied, or its default
/// written, into the resolved tree; finish() rejects keys that were never read.
class ConfigReader {
 public:
  ConfigReader(const nlohmann::json& source, nlohmann::json& resolved, std::string path);

  bool has(const std::string& key) const;
  std::string field(const std::string& key) const;

  double number(const std::string& key);
  double number(const std::string& key, double fallback);
  /// Also accepts the string "inf".
  double number_or_inf(const std::string& key, double fallback);
  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback);
  bool boolean(const std::string& key, bool fallback);
  std::string string(const std::string& key);
  std::string choice(const std::string& key, const std::string& fallback,
                     std::initializer_list<std::string_view> allowed);
  std::vector<double> numbers(const std::string& key);
  std::vector<std::string> strings(const std::string& key);

  ConfigReader object(const std::string& key);
  /// Like object(), but an absent key reads as {} so its defaults still get resolved.
  ConfigReader section(const std::string& key);
  std::vector<ConfigReader> objects(const std::string& key);
  /// Every member of an object of numbers, in key order.
  std::vector<std::pair<std::string, double>> number_map(const std::string& key);

  void finish() const;

 private:
  const nlohmann::json& get(const std::string& key);
  [[noreturn]] void fail(const std::string& key, const std::string& what) const;

  const nlohmann::json* source_;
  nlohmann::json* resolved_;
  std::string path_;
  std::set<std::string> seen_;
};

struct NoiseSettings {
  stochastic::OuNoiseModel model;
  std::size_t realizations = 1000;
  double steps_per_period = 64.0;
  bool stratify_static = true;
};

struct RelaxSettings {
  std::string mode = "monte_carlo";
  stochastic::RelaxationKind kind = stochastic::RelaxationKind::t1rho;
  std::optional<double> t;
  int bootstrap = 200;
  bool noise_trace = false;
};

struct FitSettings {
  std::string model;
  std::string input_csv;
  std::vector<std::pair<std::string, double>> initial;
  std::vector<std::string> fixed;
};

struct SelectionSettings {
  std::vector<std::size_t> lines;
  bool recombine = false;
};

struct BudgetSettings {
  analytic::SensitivityBudget budget;
  double sigma_p = 0.0;
};

struct RunConfig {
  std::uint64_t seed = 1;
  unsigned threads = 1;
  spectrometer::Engine engine = spectrometer::Engine::analytic;
  GyromagneticRatio gamma;
  SpinSystem system = SpinSystem::nv14_triplet();
  std::optional<AngularFrequency> omega1;
  std::optional<RfProbe> probe;
  std::optional<double> tau;
  propagator::RampConfig ramps = spectrometer::SpectrumConfig::ideal_ramps();
  double p0 = 1.0;
  std::vector<double> omega1_grid;  // rad/s
  std::vector<double> tau_grid;     // s
  std::optional<spectrometer::ReadoutModel> readout;
  std::optional<NoiseSettings> noise;
  SelectionSettings selection;
  std::optional<BudgetSettings> budget;
  std::vector<AngularFrequency> rf_frequencies;
  std::optional<FitSettings> fit;
  RelaxSettings relax;
  bool trajectory = false;

  /// Resolved configuration with defaults materialized. `threads` is left out
  /// so outputs do not depend on it.
  nlohmann::json resolved;
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> engine;
  std::optional<unsigned> threads;
  std::optional<std::string> fit_model;
  std::optional<std::string> fit_input;
};

/// Throws ConfigError on malformed JSON or a schema violation.
RunConfig parse_config(const std::string& text, const Overrides& overrides = {});
RunConfig load_config(const std::string& path, const Overrides& overrides = {});

/// Config key of a fit parameter: its name plus a unit suffix (omega1 -> omega1_rad_s).
std::string parameter_key(const std::string& name, const std::string& unit);

}  // namespace rfmag::cli
