#include "rfmag/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "rfmag/diagnostics.hpp"
#include "rfmag/io.hpp"
#include "rfmag/parallel.hpp"
#include "rfmag/propagator.hpp"
#include "rfmag/spectrometer.hpp"
#include "rfmag/stochastic.hpp"

namespace rfmag::cli {

using nlohmann::json;
namespace sp = rfmag::spectrometer;

void OutputSet::add(std::string name, std::string contents) {
  for (const auto& f : files) {
    if (f.first == name) throw std::logic_error("duplicate output file " + name);
  }
  files.emplace_back(std::move(name), std::move(contents));
}

void OutputSet::add_json(std::string name, const json& document) { add(std::move(name), document.dump(2) + "\n"); }

const std::string& OutputSet::get(const std::string& name) const {
  for (const auto& f : files) {
    if (f.first == name) return f.second;
  }
  throw std::out_of_range("no output file " + name);
}

void OutputSet::write(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  for (const auto& [name, contents] : files) {
    const auto path = std::filesystem::path(dir) / name;
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os << contents;
    if (!os) throw std::runtime_error("cannot write " + path.string());
  }
}

namespace {

void require(bool present, const std::string& field, const std::string& command) {
  if (!present) throw ConfigError(field + ": required by " + command);
}

double hz(double w) { return w / two_pi; }

json peak_json(const sp::Peak& p) { return {{"omega1_hz", hz(p.position)}, {"p", p.height}}; }

std::string spectrum_csv(const sp::Spectrum& s) {
  io::CsvTable t;
  t.header = {"omega1_hz", "p_mean", "p_sigma"};
  const bool lines = !s.empty() && std::all_of(s.begin(), s.end(), [&](const sp::SpectrumPoint& p) {
    return !p.p_lines.empty() && p.p_lines.size() == s.front().p_lines.size();
  });
  if (lines) {
    for (std::size_t l = 0; l < s.front().p_lines.size(); ++l) t.header.push_back("p_line" + std::to_string(l));
  }
  for (const auto& p : s) {
    std::vector<double> row{p.omega1.hz(), p.p_mean, p.p_sigma};
    if (lines) row.insert(row.end(), p.p_lines.begin(), p.p_lines.end());
    t.rows.push_back(std::move(row));
  }
  return io::to_csv(t);
}

sp::SpectrumConfig spectrum_config(const RunConfig& c, const std::string& command) {
  require(!c.omega1_grid.empty(), "/omega1_grid", command);
  require(c.probe.has_value(), "/probe", command);
  require(c.tau.has_value(), "/sequence/tau_s", command);
  sp::SpectrumConfig s;
  s.system = c.system;
  s.rf = *c.probe;
  s.tau = *c.tau;
  s.p0 = c.p0;
  s.omega1_grid = c.omega1_grid;
  s.engine = c.engine;
  s.threads = c.threads;
  s.ramps = c.ramps;
  return s;
}

json warnings_json(const ScopedWarningCapture& capture) {
  json w = json::array();
  for (const auto& x : capture.warnings()) w.push_back({{"operation", x.operation}, {"message", x.message}});
  return w;
}

std::size_t argmax(const std::vector<double>& y) {
  return static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
}

struct FitOutcome {
  std::unique_ptr<fitting::FitModel> model;
  fitting::FitResult result;
};

FitOutcome run_fit(const FitSettings& s, const std::vector<double>& x, const std::vector<double>& y,
                   const std::vector<double>& sigma) {
  const auto kind = fitting::model_kind_from_string(s.model);
  FitOutcome out{fitting::make_model(kind), {}};
  auto guess = initial_guess(kind, x, y);
  const auto find = [&](const std::string& key, const std::string& where) {
    const auto& ps = out.model->parameters();
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (parameter_key(ps[i].name, ps[i].unit) == key || ps[i].name == key) return i;
    }
    throw ConfigError(where + ": '" + key + "' is not a parameter of " + s.model);
  };
  for (const auto& [key, value] : s.initial) guess[find(key, "/fit/initial/" + key)] = value;
  for (const auto& name : s.fixed) out.model->parameter(find(name, "/fit/fixed")).fixed = true;

  const fitting::FitData data{x, y, sigma};
  if (kind == fitting::ModelKind::inhomogeneous_oscillation) {
    if (!s.fixed.empty()) throw ConfigError("/fit/fixed: not supported for inhomogeneous_oscillation");
    out.result = fitting::fit_inhomogeneous_oscillation(data, guess);
  } else {
    out.result = fitting::fit(*out.model, data, guess);
  }
  return out;
}

std::string fit_curve_csv(const FitOutcome& f, const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> y_fit;
  if (f.model->kind() == fitting::ModelKind::inhomogeneous_oscillation) {
    const double t_max = std::abs(*std::max_element(x.begin(), x.end(), [](double a, double b) {
      return std::abs(a) < std::abs(b);
    }));
    fitting::InhomogeneousOscillation m(
        fitting::InhomogeneousOscillation::required_panels(f.result.parameters, t_max));
    y_fit = m(x, f.result.parameters);
  } else {
    y_fit = (*f.model)(x, f.result.parameters);
  }
  io::CsvTable t;
  t.header = {"x", "y", "y_fit"};
  for (std::size_t i = 0; i < x.size(); ++i) t.rows.push_back({x[i], y[i], y_fit[i]});
  return io::to_csv(t);
}

json base_document(const std::string& command, const RunConfig& c) {
  return {{"command", command}, {"config", c.resolved}};
}

}  // namespace

std::vector<double> initial_guess(fitting::ModelKind kind, const std::vector<double>& x, const std::vector<double>& y) {
  if (x.empty() || x.size() != y.size()) throw std::invalid_argument("initial_guess: x and y must match and be non-empty");
  const double range = x.back() - x.front();
  const double y_min = *std::min_element(y.begin(), y.end());
  const std::size_t i_max = argmax(y);
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  // Time of the first local maximum; (1 - cos W t) peaks at W t = pi.
  const auto first_peak = [&] {
    for (std::size_t i = 1; i + 1 < y.size(); ++i) {
      if (y[i] >= y[i - 1] && y[i] > y[i + 1] && x[i] > 0.0) return x[i];
    }
    return range / 2.0;
  };
  switch (kind) {
    case fitting::ModelKind::gaussian_peak: {
      const double a = y[i_max] - y_min;
      std::size_t lo = i_max, hi = i_max;
      while (lo > 0 && y[lo] - y_min > a / 2.0) --lo;
      while (hi + 1 < y.size() && y[hi] - y_min > a / 2.0) ++hi;
      double sigma = (x[hi] - x[lo]) / fitting::fwhm_from_sigma(1.0);
      if (!(sigma > 0.0)) sigma = std::abs(range) / 10.0;
      return {a, x[i_max], sigma, y_min};
    }
    case fitting::ModelKind::decaying_sinusoid:
      return {std::max(2.0 * mean, 1e-12), std::numbers::pi / first_peak(), std::abs(range) / 2.0};
    case fitting::ModelKind::exponential_saturation: {
      const double p0 = y.back() != 0.0 ? y.back() : y[i_max];
      double t = std::abs(range) / 3.0;
      for (std::size_t i = 0; i < y.size(); ++i) {
        if (std::abs(y[i]) >= (1.0 - std::exp(-1.0)) * std::abs(p0) && x[i] > 0.0) {
          t = x[i];
          break;
        }
      }
      return {p0, t};
    }
    case fitting::ModelKind::inhomogeneous_oscillation: {
      const double w = std::numbers::pi / first_peak();
      return {std::max(2.0 * mean, 1e-12), w, 0.25 * w, 0.1 * w};
    }
  }
  throw std::invalid_argument("initial_guess: unknown model");
}

json fit_to_json(const fitting::FitModel& model, const fitting::FitResult& r) {
  json params = json::object(), errors = json::object(), order = json::array(), cov = json::array();
  const auto& specs = model.parameters();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto key = parameter_key(specs[i].name, specs[i].unit);
    order.push_back(key);
    params[key] = r.parameters[i];
    errors[key] = r.standard_errors[i];
    json row = json::array();
    for (std::size_t j = 0; j < specs.size(); ++j) {
      row.push_back(r.covariance.size() ? r.covariance(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) : 0.0);
    }
    cov.push_back(std::move(row));
  }
  return {{"model", fitting::to_string(model.kind())},
          {"parameter_order", order},
          {"parameters", params},
          {"standard_errors", errors},
          {"covariance", cov},
          {"residual_norm", r.residual_norm},
          {"reduced_chi2", r.reduced_chi2},
          {"r_squared", r.r_squared},
          {"converged", r.converged},
          {"iterations", r.iterations},
          {"message", r.message}};
}

OutputSet cmd_spectrum(const RunConfig& c) {
  ScopedWarningCapture capture;
  const auto sc = spectrum_config(c, "spectrum");
  const auto clean = sp::synthesize_spectrum(sc);

  std::vector<sp::SelectiveSpectrum> selective;
  for (const auto k : c.selection.lines) {
    selective.push_back({k, sp::spin_state_selection(clean, {k}, c.system, c.p0)});
  }

  sp::Spectrum recorded = clean;
  json doc = base_document("spectrum", c);
  if (c.readout) {
    recorded = sp::apply_readout_noise(clean, *c.readout, derive_seed(c.seed, 0));
    for (std::size_t i = 0; i < selective.size(); ++i) {
      selective[i].spectrum = sp::apply_readout_noise(selective[i].spectrum, *c.readout, derive_seed(c.seed, 1 + i));
    }
    doc["readout"] = {{"counts_per_point", c.readout->counts()},
                      {"sigma_p_analytic", sp::analytic_sigma_p(*c.readout)},
                      {"sigma_p_empirical", sp::empirical_sigma_p(recorded, clean)}};
  }

  OutputSet out;
  out.add("spectrum.csv", spectrum_csv(recorded));
  if (c.readout) out.add("spectrum_clean.csv", spectrum_csv(clean));
  for (const auto& s : selective) {
    out.add("selected_line" + std::to_string(s.inverted_line) + ".csv", spectrum_csv(s.spectrum));
  }
  if (c.selection.recombine) {
    const auto pure = sp::recombine_pure_states(recorded, selective, c.system, c.p0);
    for (std::size_t l = 0; l < pure.size(); ++l) {
      out.add("recombined_line" + std::to_string(l) + ".csv", spectrum_csv(pure[l]));
    }
  }

  const auto x = sp::omega1_values(clean);
  doc["main_peak"] = peak_json(sp::find_peak(x, sp::p_values(clean), x.front(), x.back()));
  json lines = json::array();
  for (std::size_t l = 0; l < c.system.size(); ++l) {
    lines.push_back(peak_json(sp::find_peak(x, sp::line_values(clean, l), x.front(), x.back())));
  }
  doc["line_peaks"] = lines;
  doc["warnings"] = warnings_json(capture);
  json names = json::array();
  for (const auto& f : out.files) names.push_back(f.first);
  doc["files"] = names;
  out.add_json("spectrum.json", doc);
  return out;
}

OutputSet cmd_oscillate(const RunConfig& c) {
  ScopedWarningCapture capture;
  require(c.omega1.has_value(), "/drive/omega1_hz", "oscillate");
  require(c.probe.has_value(), "/probe", "oscillate");
  require(!c.tau_grid.empty(), "/tau_grid", "oscillate");
  if (!(c.omega1->value() > 0.0)) throw ConfigError("/drive/omega1_hz: must be > 0 for oscillate");

  sp::SpectrumConfig sc;
  sc.system = c.system;
  sc.rf = *c.probe;
  sc.p0 = c.p0;
  sc.engine = c.engine;
  sc.threads = c.threads;
  sc.ramps = c.ramps;
  const auto trace = sp::oscillation(sc, *c.omega1, c.tau_grid);

  io::CsvTable t;
  t.header = {"tau_s", "p"};
  for (std::size_t l = 0; l < c.system.size(); ++l) t.header.push_back("p_line" + std::to_string(l));
  std::vector<double> p;
  for (const auto& pt : trace) {
    std::vector<double> row{pt.tau, pt.p_mean};
    row.insert(row.end(), pt.p_lines.begin(), pt.p_lines.end());
    t.rows.push_back(std::move(row));
    p.push_back(pt.p_mean);
  }

  OutputSet out;
  out.add("oscillation.csv", io::to_csv(t));
  json doc = base_document("oscillate", c);
  if (c.fit) {
    const auto f = run_fit(*c.fit, c.tau_grid, p, {});
    doc["fit"] = fit_to_json(*f.model, f.result);
    out.add("oscillation_fit.csv", fit_curve_csv(f, c.tau_grid, p));
  }
  if (c.trajectory) {
    const auto& line = c.system.lines().front();
    const auto seq = propagator::build_spinlock_sequence(c.tau_grid.back(), *c.omega1, c.ramps);
    io::CsvTable traj;
    traj.header = {"t_s", "x", "y", "z"};
    if (seq.total_duration() > 0.0) {
      propagator::HamiltonianParams params;
      params.detuning = line.detuning;
      params.probe = *c.probe;
      const auto initial = c.ramps.ideal ? propagator::lock_axis(*c.omega1, line.detuning) : propagator::BlochState{};
      const double dt = propagator::default_time_step(seq, params);
      const auto steps = static_cast<std::size_t>(std::ceil(seq.total_duration() / dt));
      const auto r = propagator::propagate(initial, seq, params, {0.0, std::max<std::size_t>(1, steps / 2000)});
      for (std::size_t k = 0; k < r.t.size(); ++k) traj.rows.push_back({r.t[k], r.states[k].x, r.states[k].y, r.states[k].z});
      doc["trajectory_max_norm_deviation"] = r.max_norm_deviation;
    }
    out.add("trajectory.csv", io::to_csv(traj));
  }
  doc["warnings"] = warnings_json(capture);
  out.add_json("oscillation.json", doc);
  return out;
}

OutputSet cmd_sweep_rf(const RunConfig& c) {
  ScopedWarningCapture capture;
  require(!c.rf_frequencies.empty(), "/rf_frequencies_hz", "sweep-rf");
  const auto sc = spectrum_config(c, "sweep-rf");
  const auto spectra = sp::sweep_rf(sc, c.rf_frequencies);

  io::CsvTable t;
  t.header = {"omega1_hz"};
  for (std::size_t k = 0; k < spectra.size(); ++k) t.header.push_back("p_rf" + std::to_string(k));
  for (std::size_t i = 0; i < sc.omega1_grid.size(); ++i) {
    std::vector<double> row{hz(sc.omega1_grid[i])};
    for (const auto& s : spectra) row.push_back(s[i].p_mean);
    t.rows.push_back(std::move(row));
  }
  json doc = base_document("sweep-rf", c);
  json peaks = json::array();
  const auto x = sc.omega1_grid;
  for (std::size_t k = 0; k < spectra.size(); ++k) {
    auto pk = peak_json(sp::find_peak(x, sp::p_values(spectra[k]), x.front(), x.back()));
    pk["rf_frequency_hz"] = c.rf_frequencies[k].hz();
    pk["column"] = "p_rf" + std::to_string(k);
    peaks.push_back(pk);
  }
  doc["peaks"] = peaks;
  doc["warnings"] = warnings_json(capture);
  OutputSet out;
  out.add("sweep_rf.csv", io::to_csv(t));
  out.add_json("sweep_rf.json", doc);
  return out;
}

OutputSet cmd_sensitivity(const RunConfig& c) {
  ScopedWarningCapture capture;
  require(c.budget.has_value(), "/budget", "sensitivity");
  const auto& b = c.budget->budget;
  std::optional<MagneticField> shot, baseline;
  try {
    b.validate();
    shot = analytic::bmin_shot(b, c.gamma);
    baseline = analytic::bmin_baseline(c.budget->sigma_p, b.p0, c.gamma, b.tau);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("/budget: ") + e.what());
  }
  json table = {{"tau_s", b.tau},
                {"t_meas_s", b.t_meas},
                {"total_time_s", b.total_time},
                {"counts", b.counts},
                {"shots", b.shots},
                {"photons_per_shot", b.photons_per_shot},
                {"contrast", b.contrast},
                {"p0", b.p0},
                {"sigma_p", c.budget->sigma_p},
                {"bmin_shot_t", shot->tesla()},
                {"bmin_shot_nt", shot->tesla() * 1e9},
                {"bmin_baseline_t", baseline->tesla()},
                {"bmin_baseline_nt", baseline->tesla() * 1e9}};
  json doc = base_document("sensitivity", c);
  doc["table"] = table;
  doc["warnings"] = warnings_json(capture);
  OutputSet out;
  out.add_json("sensitivity.json", doc);
  return out;
}

OutputSet cmd_relax(const RunConfig& c) {
  ScopedWarningCapture capture;
  require(!c.tau_grid.empty(), "/tau_grid", "relax");
  json doc = base_document("relax", c);
  OutputSet out;
  io::CsvTable t;

  if (c.relax.mode == "analytic") {
    double time = 0.0;
    if (c.relax.t) {
      time = *c.relax.t;
    } else {
      require(c.relax.kind == stochastic::RelaxationKind::t1rho, "/relax/t_s", "relax (analytic, t1)");
      require(c.noise.has_value(), "/noise", "relax (analytic without t_s)");
      require(c.omega1.has_value(), "/drive/omega1_hz", "relax (analytic without t_s)");
      time = c.noise->model.is_static() ? analytic::correlated_t1rho(c.noise->model.omega_rms)
                                        : stochastic::predicted_rate(c.noise->model, *c.omega1).time();
    }
    const auto p = stochastic::relaxation_curve(c.relax.kind, time, c.p0, c.tau_grid);
    t.header = {"tau_s", "p"};
    for (std::size_t k = 0; k < p.size(); ++k) t.rows.push_back({c.tau_grid[k], p[k]});
    doc["relaxation_time_s"] = time;
  } else {
    if (c.relax.kind != stochastic::RelaxationKind::t1rho) {
      throw ConfigError("/relax/kind: monte_carlo mode simulates t1rho only");
    }
    require(c.noise.has_value(), "/noise", "relax");
    require(c.omega1.has_value(), "/drive/omega1_hz", "relax");
    stochastic::MonteCarloConfig mc;
    mc.model = c.noise->model;
    mc.omega1 = *c.omega1;
    mc.tau_grid = c.tau_grid;
    mc.realizations = c.noise->realizations;
    mc.seed = c.seed;
    mc.threads = c.threads;
    mc.p0 = c.p0;
    mc.steps_per_period = c.noise->steps_per_period;
    mc.stratify_static = c.noise->stratify_static;
    const auto est = stochastic::monte_carlo_t1rho(mc, c.relax.bootstrap);
    const auto fitted = stochastic::relaxation_curve(stochastic::RelaxationKind::t1rho, est.t1rho, est.p0 / 2.0,
                                                     c.tau_grid);
    t.header = {"tau_s", "p_mean", "p_stderr", "p_fit"};
    for (std::size_t k = 0; k < c.tau_grid.size(); ++k) {
      t.rows.push_back({c.tau_grid[k], est.simulation.p_mean[k], est.simulation.p_stderr[k], fitted[k]});
    }
    doc["t1rho_s"] = est.t1rho;
    doc["t1rho_ci95_s"] = {est.ci_low, est.ci_high};
    doc["p0"] = est.p0;
    doc["predicted_t1rho_s"] = est.predicted_t1rho;
    doc["relative_deviation"] = est.t1rho / est.predicted_t1rho - 1.0;
    fitting::ExponentialSaturation model;
    doc["fit"] = fit_to_json(model, est.fit);
    const auto shape = stochastic::classify_decay(c.tau_grid, est.simulation.p_mean);
    doc["decay_shape"] = {{"r2_exponential", shape.r2_exponential},
                          {"r2_gaussian", shape.r2_gaussian},
                          {"exponential", shape.exponential()}};
    if (c.relax.noise_trace) {
      const double dt = two_pi / c.omega1->value() / mc.steps_per_period;
      const auto n = static_cast<std::size_t>(std::ceil(c.tau_grid.back() / dt)) + 2;
      const auto trace = stochastic::field_trace(mc.model, dt, n, derive_seed(c.seed, 0));
      io::CsvTable nt;
      nt.header = {"t_s", "omega_z_hz"};
      for (std::size_t k = 0; k < trace.samples.size(); ++k) {
        nt.rows.push_back({static_cast<double>(k) * dt, hz(trace.samples[k])});
      }
      out.add("noise_trace.csv", io::to_csv(nt));
    }
  }
  out.add("relax.csv", io::to_csv(t));
  doc["warnings"] = warnings_json(capture);
  out.add_json("relax.json", doc);
  return out;
}

OutputSet cmd_fit(const RunConfig& c) {
  require(c.fit.has_value(), "/fit", "fit");
  require(!c.fit->input_csv.empty(), "/fit/input_csv", "fit");
  io::CsvTable table;
  try {
    table = io::read_csv_file(c.fit->input_csv);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("/fit/input_csv: ") + e.what());
  } catch (const std::runtime_error& e) {
    throw ConfigError(std::string("/fit/input_csv: ") + e.what());
  }
  if (table.header.size() < 2 || table.header.size() > 3) {
    throw ConfigError("/fit/input_csv: expected columns x, y and optionally sigma");
  }
  const auto x = table.values(0), y = table.values(1);
  const auto sigma = table.header.size() == 3 ? table.values(2) : std::vector<double>{};
  const auto f = run_fit(*c.fit, x, y, sigma);
  json doc = base_document("fit", c);
  doc["fit"] = fit_to_json(*f.model, f.result);
  OutputSet out;
  out.add("fit_curve.csv", fit_curve_csv(f, x, y));
  out.add_json("fit.json", doc);
  return out;
}

}  // namespace rfmag::cli
