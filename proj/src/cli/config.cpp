#include "rfmag/config.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rfmag/io.hpp"

namespace rfmag::cli {

using nlohmann::json;

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

std::string join_path(const std::string& path, const std::string& key) { return path + "/" + key; }

double positive(ConfigReader& r, const std::string& key) {
  const double v = r.number(key);
  if (!(v > 0.0)) throw ConfigError(r.field(key) + ": must be > 0");
  return v;
}

double positive(ConfigReader& r, const std::string& key, double fallback) {
  const double v = r.number(key, fallback);
  if (!(v > 0.0)) throw ConfigError(r.field(key) + ": must be > 0");
  return v;
}

double non_negative(ConfigReader& r, const std::string& key, double fallback) {
  const double v = r.number(key, fallback);
  if (!(v >= 0.0)) throw ConfigError(r.field(key) + ": must be >= 0");
  return v;
}

double unit_interval(ConfigReader& r, const std::string& key, double fallback) {
  const double v = r.number(key, fallback);
  if (!(v > 0.0 && v <= 1.0)) throw ConfigError(r.field(key) + ": must lie in (0, 1]");
  return v;
}

// Runs a library validator and reports its complaint against a config path.
template <class F>
void checked(const std::string& where, F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  } catch (const std::domain_error& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

std::vector<double> ascending(const std::string& where, std::vector<double> v, bool allow_zero) {
  if (v.empty()) throw ConfigError(where + ": grid is empty");
  for (std::size_t k = 0; k < v.size(); ++k) {
    const bool sign_ok = allow_zero ? v[k] >= 0.0 : v[k] > 0.0;
    if (!sign_ok || (k > 0 && v[k] <= v[k - 1])) {
      throw ConfigError(where + ": values must be strictly ascending and " + (allow_zero ? ">= 0" : "> 0"));
    }
  }
  return v;
}

std::vector<double> read_grid(ConfigReader g, const std::string& unit, double scale, bool allow_zero) {
  std::vector<double> out;
  const std::string values_key = "values_" + unit;
  if (g.has(values_key)) {
    for (double v : g.numbers(values_key)) out.push_back(v * scale);
    out = ascending(g.field(values_key), std::move(out), allow_zero);
  } else {
    const double start = g.number("start_" + unit);
    const double stop = g.number("stop_" + unit);
    const auto points = g.unsigned_integer("points", 201);
    if (points < 2) throw ConfigError(g.field("points") + ": need at least 2 points");
    if (!(stop > start)) throw ConfigError(g.field("stop_" + unit) + ": must exceed start_" + unit);
    out = spectrometer::linear_grid(start * scale, stop * scale, points);
    if (g.has("zoom")) {
      auto z = g.object("zoom");
      const double center = z.number("center_" + unit);
      const double half = positive(z, "half_width_" + unit);
      const auto n_fine = z.unsigned_integer("points", 201);
      if (n_fine < 2) throw ConfigError(z.field("points") + ": need at least 2 points");
      z.finish();
      out = spectrometer::refined_grid(start * scale, stop * scale, points, center * scale, half * scale, n_fine);
    }
    out = ascending(g.field("start_" + unit), std::move(out), allow_zero);
  }
  g.finish();
  return out;
}

SpinSystem read_spin_system(ConfigReader s, const GyromagneticRatio& gamma) {
  if (s.has("lines")) {
    if (s.has("preset")) throw ConfigError(s.field("preset") + ": give either preset or lines");
    std::vector<EsrLine> lines;
    const auto readers = s.objects("lines");
    if (readers.empty()) throw ConfigError(s.field("lines") + ": no lines");
    for (auto r : readers) {
      EsrLine line;
      line.detuning = AngularFrequency::from_hz(r.number("detuning_hz"));
      line.sigma = AngularFrequency::from_hz(r.number("sigma_hz"));
      line.weight = r.number("weight", 1.0 / static_cast<double>(readers.size()));
      r.finish();
      checked(s.field("lines"), [&] { line.validate(); });
      lines.push_back(line);
    }
    s.finish();
    std::optional<SpinSystem> out;
    checked(s.field("lines"), [&] { out.emplace(gamma, lines); });
    return *out;
  }
  s.choice("preset", "nv14_triplet", {"nv14_triplet"});
  s.finish();
  return SpinSystem::nv14_triplet(gamma);
}

RfProbe read_probe(ConfigReader p, const GyromagneticRatio& gamma) {
  const double frequency = positive(p, "frequency_hz");
  const double phase = p.number("phase_rad", 0.0);
  RfProbe probe;
  if (p.has("amplitude_t") == p.has("amplitude_hz")) {
    throw ConfigError(p.field("amplitude_hz") + ": give exactly one of amplitude_hz and amplitude_t");
  }
  if (p.has("amplitude_t")) {
    const double b = non_negative(p, "amplitude_t", 0.0);
    probe = RfProbe::from_field(MagneticField::from_tesla(b), AngularFrequency::from_hz(frequency), gamma, phase);
  } else {
    const double a = non_negative(p, "amplitude_hz", 0.0);
    probe = RfProbe::from_amplitude(AngularFrequency::from_hz(a), AngularFrequency::from_hz(frequency), gamma, phase);
  }
  p.finish();
  return probe;
}

propagator::RampConfig read_ramps(ConfigReader r) {
  propagator::RampConfig c;
  c.ideal = r.boolean("ideal", true);
  c.segment_duration = positive(r, "segment_s", c.segment_duration);
  c.start_detuning = AngularFrequency::from_hz(r.number("start_detuning_hz", c.start_detuning.hz()));
  const auto variant = r.choice("variant", "frequency_sweep", {"frequency_sweep", "amplitude_sweep"});
  c.variant = variant == "frequency_sweep" ? propagator::RampVariant::frequency_sweep
                                           : propagator::RampVariant::amplitude_sweep;
  c.detuning_fraction = r.number("detuning_fraction", c.detuning_fraction);
  c.amplitude_fraction = r.number("amplitude_fraction", c.amplitude_fraction);
  const std::string where = r.field("variant");
  r.finish();
  checked(where, [&] { c.validate(); });
  return c;
}

NoiseSettings read_noise(ConfigReader n, const std::optional<AngularFrequency>& omega1) {
  NoiseSettings s;
  s.model.tau_c = n.number_or_inf("tau_c_s", 0.0);
  if (!(s.model.tau_c > 0.0)) throw ConfigError(n.field("tau_c_s") + ": must be > 0 or \"inf\"");
  s.model.carrier = AngularFrequency::from_hz(non_negative(n, "carrier_hz", 0.0));
  if (n.has("omega_rms_hz") == n.has("t1rho_target_s")) {
    throw ConfigError(n.field("omega_rms_hz") + ": give exactly one of omega_rms_hz and t1rho_target_s");
  }
  if (n.has("omega_rms_hz")) {
    s.model.omega_rms = AngularFrequency::from_hz(positive(n, "omega_rms_hz"));
  } else {
    const double target = positive(n, "t1rho_target_s");
    if (!omega1) throw ConfigError(n.field("t1rho_target_s") + ": requires drive/omega1_hz");
    checked(n.field("t1rho_target_s"), [&] {
      s.model.omega_rms = stochastic::omega_rms_for_t1rho(target, s.model.tau_c, *omega1, s.model.carrier);
    });
  }
  s.realizations = n.unsigned_integer("realizations", s.realizations);
  if (s.realizations < 2) throw ConfigError(n.field("realizations") + ": need at least 2");
  s.steps_per_period = positive(n, "steps_per_period", s.steps_per_period);
  s.stratify_static = n.boolean("stratify_static", s.stratify_static);
  n.finish();
  return s;
}

BudgetSettings read_budget(ConfigReader b) {
  BudgetSettings s;
  auto& x = s.budget;
  x.tau = positive(b, "tau_s");
  x.t_meas = positive(b, "t_meas_s");
  x.total_time = positive(b, "total_time_s");
  x.counts = positive(b, "counts");
  x.shots = positive(b, "shots");
  x.photons_per_shot = positive(b, "photons_per_shot");
  x.contrast = unit_interval(b, "contrast", 1.0);
  x.p0 = unit_interval(b, "p0", 1.0);
  x.overlap_factor = unit_interval(b, "overlap_factor", 1.0);
  x.t1rho = b.number_or_inf("t1rho_s", inf);
  if (!(x.t1rho > 0.0)) throw ConfigError(b.field("t1rho_s") + ": must be > 0 or \"inf\"");
  s.sigma_p = positive(b, "sigma_p");
  x.baseline_sigma = s.sigma_p;
  b.finish();
  return s;
}

spectrometer::ReadoutModel read_readout(ConfigReader r) {
  spectrometer::ReadoutModel m;
  m.epsilon = r.number("epsilon", m.epsilon);
  m.photons_per_shot = positive(r, "photons_per_shot");
  m.t_meas = positive(r, "t_meas_s");
  m.total_time = positive(r, "total_time_s");
  const std::string where = r.field("epsilon");
  r.finish();
  checked(where, [&] { m.validate(); });
  return m;
}

RelaxSettings read_relax(ConfigReader r) {
  RelaxSettings s;
  s.mode = r.choice("mode", s.mode, {"monte_carlo", "analytic"});
  const auto kind = r.choice("kind", "t1rho", {"t1rho", "t1"});
  s.kind = kind == "t1" ? stochastic::RelaxationKind::t1 : stochastic::RelaxationKind::t1rho;
  if (r.has("t_s")) s.t = positive(r, "t_s");
  s.bootstrap = static_cast<int>(r.unsigned_integer("bootstrap", 200));
  s.noise_trace = r.boolean("noise_trace", false);
  r.finish();
  return s;
}

FitSettings read_fit(ConfigReader f) {
  FitSettings s;
  s.model = f.choice("model", "", {"gaussian_peak", "decaying_sinusoid", "exponential_saturation",
                                   "inhomogeneous_oscillation"});
  if (f.has("input_csv")) s.input_csv = f.string("input_csv");
  if (f.has("initial")) s.initial = f.number_map("initial");
  if (f.has("fixed")) s.fixed = f.strings("fixed");
  f.finish();
  return s;
}

}  // namespace

ConfigReader::ConfigReader(const json& source, json& resolved, std::string path)
    : source_(&source), resolved_(&resolved), path_(std::move(path)) {
  if (!source.is_object()) throw ConfigError((path_.empty() ? "/" : path_) + ": expected an object");
  if (!resolved.is_object()) resolved = json::object();
}

bool ConfigReader::has(const std::string& key) const { return source_->contains(key); }

std::string ConfigReader::field(const std::string& key) const { return join_path(path_, key); }

void ConfigReader::fail(const std::string& key, const std::string& what) const {
  throw ConfigError(field(key) + ": " + what);
}

const json& ConfigReader::get(const std::string& key) {
  seen_.insert(key);
  if (!has(key)) fail(key, "missing required field");
  return source_->at(key);
}

double ConfigReader::number(const std::string& key) {
  const auto& v = get(key);
  if (!v.is_number()) fail(key, "expected a number");
  (*resolved_)[key] = v;
  return v.get<double>();
}

double ConfigReader::number(const std::string& key, double fallback) {
  seen_.insert(key);
  if (!has(key)) {
    (*resolved_)[key] = fallback;
    return fallback;
  }
  return number(key);
}

double ConfigReader::number_or_inf(const std::string& key, double fallback) {
  seen_.insert(key);
  const auto store = [&](double v) {
    if (std::isinf(v)) {
      (*resolved_)[key] = "inf";
    } else {
      (*resolved_)[key] = v;
    }
    return v;
  };
  if (!has(key)) return store(fallback);
  const auto& v = source_->at(key);
  if (v.is_string() && v.get<std::string>() == "inf") return store(inf);
  if (!v.is_number()) fail(key, "expected a number or \"inf\"");
  return store(v.get<double>());
}

std::uint64_t ConfigReader::unsigned_integer(const std::string& key, std::uint64_t fallback) {
  seen_.insert(key);
  if (!has(key)) {
    (*resolved_)[key] = fallback;
    return fallback;
  }
  const auto& v = source_->at(key);
  if (!v.is_number_unsigned()) fail(key, "expected a non-negative integer");
  (*resolved_)[key] = v;
  return v.get<std::uint64_t>();
}

bool ConfigReader::boolean(const std::string& key, bool fallback) {
  seen_.insert(key);
  if (!has(key)) {
    (*resolved_)[key] = fallback;
    return fallback;
  }
  const auto& v = source_->at(key);
  if (!v.is_boolean()) fail(key, "expected true or false");
  (*resolved_)[key] = v;
  return v.get<bool>();
}

std::string ConfigReader::string(const std::string& key) {
  const auto& v = get(key);
  if (!v.is_string()) fail(key, "expected a string");
  (*resolved_)[key] = v;
  return v.get<std::string>();
}

std::string ConfigReader::choice(const std::string& key, const std::string& fallback,
                                 std::initializer_list<std::string_view> allowed) {
  seen_.insert(key);
  std::string value = fallback;
  if (has(key)) {
    value = string(key);
  } else if (fallback.empty()) {
    fail(key, "missing required field");
  }
  if (std::find(allowed.begin(), allowed.end(), value) == allowed.end()) {
    std::string list;
    for (auto a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
    fail(key, "'" + value + "' is not one of " + list);
  }
  (*resolved_)[key] = value;
  return value;
}

std::vector<double> ConfigReader::numbers(const std::string& key) {
  const auto& v = get(key);
  if (!v.is_array()) fail(key, "expected an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) fail(key, "expected an array of numbers");
    out.push_back(e.get<double>());
  }
  (*resolved_)[key] = v;
  return out;
}

std::vector<std::string> ConfigReader::strings(const std::string& key) {
  const auto& v = get(key);
  if (!v.is_array()) fail(key, "expected an array of strings");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) fail(key, "expected an array of strings");
    out.push_back(e.get<std::string>());
  }
  (*resolved_)[key] = v;
  return out;
}

ConfigReader ConfigReader::object(const std::string& key) {
  const auto& v = get(key);
  if (!v.is_object()) fail(key, "expected an object");
  auto& slot = (*resolved_)[key];
  slot = json::object();
  return ConfigReader(v, slot, field(key));
}

ConfigReader ConfigReader::section(const std::string& key) {
  static const json empty = json::object();
  if (has(key)) return object(key);
  seen_.insert(key);
  auto& slot = (*resolved_)[key];
  slot = json::object();
  return ConfigReader(empty, slot, field(key));
}

std::vector<ConfigReader> ConfigReader::objects(const std::string& key) {
  const auto& v = get(key);
  if (!v.is_array()) fail(key, "expected an array of objects");
  auto& slot = (*resolved_)[key];
  slot = json(std::vector<json>(v.size(), json::object()));
  std::vector<ConfigReader> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_object()) fail(key, "element " + std::to_string(i) + " is not an object");
    out.emplace_back(v[i], slot[i], field(key) + "/" + std::to_string(i));
  }
  return out;
}

std::vector<std::pair<std::string, double>> ConfigReader::number_map(const std::string& key) {
  const auto& v = get(key);
  if (!v.is_object()) fail(key, "expected an object of numbers");
  std::vector<std::pair<std::string, double>> out;
  for (auto it = v.begin(); it != v.end(); ++it) {
    if (!it.value().is_number()) fail(key + "/" + it.key(), "expected a number");
    out.emplace_back(it.key(), it.value().get<double>());
  }
  (*resolved_)[key] = v;
  return out;
}

void ConfigReader::finish() const {
  for (auto it = source_->begin(); it != source_->end(); ++it) {
    if (!seen_.count(it.key())) throw ConfigError(field(it.key()) + ": unknown field");
  }
}

std::string parameter_key(const std::string& name, const std::string& unit) {
  if (unit == "1") return name;
  std::string suffix = unit;
  std::replace(suffix.begin(), suffix.end(), '/', '_');
  return name + "_" + suffix;
}

RunConfig parse_config(const std::string& text, const Overrides& overrides) {
  json source;
  try {
    source = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto end = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(end), '\n');
    throw ConfigError("config parse error at line " + std::to_string(line) + ": " + e.what());
  }
  if (!source.is_object()) throw ConfigError("/: config must be a JSON object");
  if (overrides.seed) source["seed"] = *overrides.seed;
  if (overrides.engine) source["engine"] = *overrides.engine;
  if (overrides.threads) source["threads"] = *overrides.threads;
  if (overrides.fit_model || overrides.fit_input) {
    auto& f = source["fit"];
    if (!f.is_null() && !f.is_object()) throw ConfigError("/fit: expected an object");
    if (overrides.fit_model) f["model"] = *overrides.fit_model;
    if (overrides.fit_input) f["input_csv"] = *overrides.fit_input;
  }

  RunConfig c;
  json resolved = json::object();
  ConfigReader r(source, resolved, "");

  c.seed = r.unsigned_integer("seed", c.seed);
  c.threads = static_cast<unsigned>(r.unsigned_integer("threads", 1));
  const auto engine = r.choice("engine", "analytic", {"analytic", "numeric"});
  c.engine = engine == "numeric" ? spectrometer::Engine::numeric : spectrometer::Engine::analytic;
  c.gamma = GyromagneticRatio::from_hz_per_tesla(
      positive(r, "gamma_hz_per_t", GyromagneticRatio::default_hz_per_tesla));

  c.system = read_spin_system(r.section("spin_system"), c.gamma);
  if (r.has("drive")) {
    auto d = r.object("drive");
    c.omega1 = AngularFrequency::from_hz(non_negative(d, "omega1_hz", 0.0));
    d.finish();
  }
  if (r.has("probe")) c.probe = read_probe(r.object("probe"), c.gamma);
  {
    auto s = r.section("sequence");
    if (s.has("tau_s")) c.tau = positive(s, "tau_s");
    c.ramps = read_ramps(s.section("ramps"));
    s.finish();
  }
  c.p0 = unit_interval(r, "p0", 1.0);
  if (r.has("omega1_grid")) c.omega1_grid = read_grid(r.object("omega1_grid"), "hz", two_pi, false);
  if (r.has("tau_grid")) c.tau_grid = read_grid(r.object("tau_grid"), "s", 1.0, true);
  if (r.has("readout")) c.readout = read_readout(r.object("readout"));
  if (r.has("noise")) c.noise = read_noise(r.object("noise"), c.omega1);
  if (r.has("selection")) {
    auto s = r.object("selection");
    if (s.has("lines")) {
      for (double v : s.numbers("lines")) {
        if (!(v >= 0.0) || v != std::floor(v) || v >= static_cast<double>(c.system.size())) {
          throw ConfigError(s.field("lines") + ": line indices must be integers in [0, " +
                            std::to_string(c.system.size()) + ")");
        }
        c.selection.lines.push_back(static_cast<std::size_t>(v));
      }
    }
    c.selection.recombine = s.boolean("recombine", false);
    s.finish();
    if (c.selection.recombine && c.selection.lines.empty()) {
      throw ConfigError(s.field("recombine") + ": recombination needs selection/lines");
    }
  }
  if (r.has("budget")) c.budget = read_budget(r.object("budget"));
  if (r.has("rf_frequencies_hz")) {
    const auto where = r.field("rf_frequencies_hz");
    for (double f : r.numbers("rf_frequencies_hz")) {
      if (!(f > 0.0)) throw ConfigError(where + ": frequencies must be > 0");
      c.rf_frequencies.push_back(AngularFrequency::from_hz(f));
    }
    if (c.rf_frequencies.empty()) throw ConfigError(where + ": empty list");
  }
  if (r.has("fit")) c.fit = read_fit(r.object("fit"));
  c.relax = read_relax(r.section("relax"));
  if (r.has("output")) {
    auto o = r.object("output");
    c.trajectory = o.boolean("trajectory", false);
    o.finish();
  }
  r.finish();

  resolved.erase("threads");
  c.resolved = std::move(resolved);
  return c;
}

RunConfig load_config(const std::string& path, const Overrides& overrides) {
  std::string text;
  try {
    text = io::read_text_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text, overrides);
}

}  // namespace rfmag::cli
