#pragma once

// Command-line front end. Each command computes all of its outputs in memory
// and writes them only on success, so a failed run leaves no partial files.

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rfmag/config.hpp"
#include "rfmag/fitting.hpp"

namespace rfmag::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_numerical = 1;
inline constexpr int exit_config = 2;

struct OutputSet {
  std::vector<std::pair<std::string, std::string>> files;  // name, contents

  void add(std::string name, std::string contents);
  void add_json(std::string name, const nlohmann::json& document);
  const std::string& get(const std::string& name) const;
  /// Creates `dir` if needed and writes every file.
  void write(const std::string& dir) const;
};

OutputSet cmd_spectrum(const RunConfig& config);
OutputSet cmd_oscillate(const RunConfig& config);
OutputSet cmd_sweep_rf(const RunConfig& config);
OutputSet cmd_sensitivity(const RunConfig& config);
OutputSet cmd_relax(const RunConfig& config);
OutputSet cmd_fit(const RunConfig& config);

/// Starting point for a fit of `kind` to (x, y), from the data alone.
std::vector<double> initial_guess(fitting::ModelKind kind, const std::vector<double>& x, const std::vector<double>& y);

nlohmann::json fit_to_json(const fitting::FitModel& model, const fitting::FitResult& result);

/// Runs one invocation; `args` excludes the program name. Returns exit_ok,
/// exit_numerical or exit_config.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rfmag::cli
