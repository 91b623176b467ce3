#include <algorithm>
#include <filesystem>
#include <functional>
#include <map>
#include <ostream>

#include <CLI11.hpp>

#include "rfmag/acceptance.hpp"
#include "rfmag/cli.hpp"

namespace rfmag::cli {

namespace {

struct CommonFlags {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> engine;
  std::optional<unsigned> threads;
  std::string model;
  std::string input;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool config_required) {
  auto* opt = cmd->add_option("--config", f.config, "JSON run configuration");
  if (config_required) opt->required();
  cmd->add_option("--out", f.out, "output directory")->capture_default_str();
  cmd->add_option("--seed", f.seed, "master seed (overrides the config)");
  cmd->add_option("--engine", f.engine, "analytic or numeric")->check(CLI::IsMember({"analytic", "numeric"}));
  cmd->add_option("--threads", f.threads, "worker threads, 0 = all cores");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spin-lock rotating-frame magnetometry simulator"};
  app.require_subcommand(1);
  CommonFlags flags;

  using Command = std::function<OutputSet(const RunConfig&)>;
  const std::map<std::string, std::pair<std::string, Command>> commands = {
      {"spectrum", {"synthesize a rotating-frame spectrum", cmd_spectrum}},
      {"oscillate", {"transition probability against evolution time", cmd_oscillate}},
      {"sweep-rf", {"spectra for a list of probe frequencies", cmd_sweep_rf}},
      {"sensitivity", {"minimum detectable field for a readout budget", cmd_sensitivity}},
      {"relax", {"spin-lock relaxation, Monte Carlo or analytic", cmd_relax}},
      {"fit", {"fit a model to CSV data", cmd_fit}},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, entry] : commands) {
    auto* cmd = app.add_subcommand(name, entry.first);
    add_common(cmd, flags, name != "fit");
    subs[name] = cmd;
  }
  subs["fit"]->add_option("--model", flags.model, "gaussian_peak, decaying_sinusoid, exponential_saturation, "
                                                  "inhomogeneous_oscillation");
  subs["fit"]->add_option("--input", flags.input, "CSV with columns x, y[, sigma]");
  auto* selftest = app.add_subcommand("selftest", "run the acceptance suite");
  selftest->add_option("--threads", flags.threads, "worker threads for the determinism check");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_ok : exit_config;
  }

  try {
    if (selftest->parsed()) {
      acceptance::Options options;
      if (flags.threads) options.threads = *flags.threads;
      const auto results = acceptance::run_all(options, [&](const acceptance::CriterionResult& r) {
        out << acceptance::format_line(r) << '\n' << std::flush;
      });
      const bool ok = std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
      out << (ok ? "selftest: all criteria passed" : "selftest: FAILED") << '\n';
      return ok ? exit_ok : exit_numerical;
    }
    for (const auto& [name, entry] : commands) {
      if (!subs.at(name)->parsed()) continue;
      Overrides o;
      o.seed = flags.seed;
      o.engine = flags.engine;
      o.threads = flags.threads;
      if (!flags.model.empty()) o.fit_model = flags.model;
      if (!flags.input.empty()) o.fit_input = flags.input;
      const RunConfig config = flags.config.empty() ? parse_config("{}", o) : load_config(flags.config, o);
      const OutputSet files = entry.second(config);
      files.write(flags.out);
      for (const auto& f : files.files) out << (std::filesystem::path(flags.out) / f.first).string() << '\n';
      return exit_ok;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_config;
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << '\n';
    return exit_config;
  } catch (const std::domain_error& e) {
    err << "invalid input: " << e.what() << '\n';
    return exit_config;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return exit_numerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_numerical;
  }
  return exit_config;
}

}  // namespace rfmag::cli
