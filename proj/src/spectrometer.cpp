#include "rfmag/spectrometer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

#include "rfmag/parallel.hpp"
#include "rfmag/quadrature.hpp"

namespace rfmag::spectrometer {

namespace {

constexpr double numeric_half_range = 8.0;

void validate_grid(const std::vector<double>& grid) {
  if (grid.empty()) throw std::invalid_argument("omega1 grid is empty");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!std::isfinite(grid[k]) || !(grid[k] > 0.0) || (k > 0 && grid[k] <= grid[k - 1])) {
      throw std::invalid_argument("omega1 grid must be strictly ascending, finite and > 0");
    }
  }
}

// Panel count for the numeric engine: resolve the sin^2 oscillation and the Lorentzian
// factor over the range of w_eff that the line covers.
int numeric_panel_count(double w1, const EsrLine& line, double tau, double rf_amp) {
  const double mu = line.detuning.value();
  const double s = line.sigma.value();
  const double lo = mu - numeric_half_range * s;
  const double hi = mu + numeric_half_range * s;
  double w_min = std::min(std::hypot(w1, lo), std::hypot(w1, hi));
  const double w_max = std::max(std::hypot(w1, lo), std::hypot(w1, hi));
  if (lo < 0.0 && hi > 0.0) w_min = w1;
  const double spread = w_max - w_min;
  if (spread * tau < 1e-3) return 0;  // delta limit: evaluate at the line centre
  const double periods = spread * tau / two_pi;
  const double lorentz = 2.0 * spread / (rf_amp + two_pi / tau);
  return static_cast<int>(std::clamp(std::ceil(std::max(periods, lorentz)), 1.0, 500.0));
}

SpectrumPoint numeric_point(const SpectrumConfig& c, double w1) {
  SpectrumPoint pt;
  pt.omega1 = AngularFrequency::from_rad_per_s(w1);
  for (const auto& line : c.system.lines()) {
    const int panels = c.numeric_panels > 0 ? c.numeric_panels
                                            : numeric_panel_count(w1, line, c.tau, c.rf.amplitude().value());
    propagator::NumericConfig nc;
    nc.tau = c.tau;
    nc.omega1 = pt.omega1;
    nc.params.probe = c.rf;
    nc.ramps = c.ramps;
    nc.options = c.propagate;
    double p_line = 0.0;
    if (panels == 0) {
      nc.params.detuning = line.detuning;
      p_line = propagator::transition_probability_numeric(nc);
    } else {
      const NormalRule rule = normal_rule(panels, numeric_half_range);
      for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
        nc.params.detuning = line.detuning + rule.nodes[k] * line.sigma;
        p_line += rule.weights[k] * propagator::transition_probability_numeric(nc);
      }
    }
    pt.p_lines.push_back(line.weight * c.p0 * p_line);
    pt.p_mean += pt.p_lines.back();
  }
  return pt;
}

SpectrumPoint analytic_point(const SpectrumConfig& c, double w1) {
  const auto w = AngularFrequency::from_rad_per_s(w1);
  const auto r = analytic::averaged_probability(c.system, w, c.rf, c.tau, c.p0, c.quadrature);
  SpectrumPoint pt;
  pt.omega1 = w;
  pt.p_mean = r.probability;
  pt.p_lines = r.contributions;
  return pt;
}

void check_same_grid(const Spectrum& a, const Spectrum& b) {
  if (a.size() != b.size()) throw std::invalid_argument("spectra have different grid sizes");
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].omega1 != b[k].omega1) throw std::invalid_argument("spectra have different omega1 grids");
  }
}

}  // namespace

void SpectrumConfig::validate() const {
  validate_grid(omega1_grid);
  if (!(tau > 0.0)) throw std::invalid_argument("spectrum tau must be > 0");
  if (!(p0 > 0.0 && p0 <= 1.0)) throw std::invalid_argument("spectrum p0 must lie in (0, 1]");
  if (numeric_panels < 0) throw std::invalid_argument("numeric_panels must be >= 0");
}

Spectrum synthesize_spectrum(const SpectrumConfig& config) {
  config.validate();
  Spectrum out(config.omega1_grid.size());
  parallel_for(out.size(), config.threads, [&](std::size_t k) {
    const double w1 = config.omega1_grid[k];
    out[k] = config.engine == Engine::analytic ? analytic_point(config, w1) : numeric_point(config, w1);
  });
  return out;
}

std::vector<OscillationPoint> oscillation(const SpectrumConfig& config, AngularFrequency omega1,
                                          const std::vector<double>& tau_grid) {
  if (tau_grid.empty()) throw std::invalid_argument("tau grid is empty");
  for (std::size_t k = 0; k < tau_grid.size(); ++k) {
    if (!(tau_grid[k] >= 0.0) || !std::isfinite(tau_grid[k]) || (k > 0 && tau_grid[k] <= tau_grid[k - 1])) {
      throw std::invalid_argument("tau grid must be strictly ascending, finite and >= 0");
    }
  }
  if (!(omega1.value() > 0.0)) throw std::invalid_argument("oscillation: omega1 must be > 0");
  if (!(config.p0 > 0.0 && config.p0 <= 1.0)) throw std::invalid_argument("p0 must lie in (0, 1]");
  const auto& lines = config.system.lines();
  std::vector<OscillationPoint> out(tau_grid.size());
  for (std::size_t k = 0; k < tau_grid.size(); ++k) {
    out[k].tau = tau_grid[k];
    out[k].p_lines.assign(lines.size(), 0.0);
  }
  if (config.engine == Engine::analytic) {
    parallel_for(tau_grid.size(), config.threads, [&](std::size_t k) {
      const auto r = analytic::averaged_probability(config.system, omega1, config.rf, tau_grid[k], config.p0,
                                                    config.quadrature);
      out[k].p_mean = r.probability;
      out[k].p_lines = r.contributions;
    });
    return out;
  }
  for (std::size_t l = 0; l < lines.size(); ++l) {
    const auto& line = lines[l];
    const int panels = config.numeric_panels > 0
                           ? config.numeric_panels
                           : numeric_panel_count(omega1.value(), line, tau_grid.back(), config.rf.amplitude().value());
    NormalRule rule;
    if (panels == 0) {
      rule.nodes = {0.0};
      rule.weights = {1.0};
    } else {
      rule = normal_rule(panels, numeric_half_range);
    }
    std::vector<std::vector<double>> traces(rule.nodes.size());
    parallel_for(rule.nodes.size(), config.threads, [&](std::size_t n) {
      propagator::NumericConfig nc;
      nc.omega1 = omega1;
      nc.params.probe = config.rf;
      nc.params.detuning = line.detuning + rule.nodes[n] * line.sigma;
      nc.ramps = config.ramps;
      nc.options = config.propagate;
      traces[n] = propagator::probability_trace(nc, tau_grid);
    });
    for (std::size_t k = 0; k < tau_grid.size(); ++k) {
      double p = 0.0;
      for (std::size_t n = 0; n < rule.nodes.size(); ++n) p += rule.weights[n] * traces[n][k];
      out[k].p_lines[l] = line.weight * config.p0 * p;
      out[k].p_mean += out[k].p_lines[l];
    }
  }
  return out;
}

std::vector<double> linear_grid(double start, double stop, std::size_t n) {
  if (n < 2 || !(stop > start)) throw std::invalid_argument("linear_grid: need n >= 2 and stop > start");
  std::vector<double> g(n);
  for (std::size_t k = 0; k < n; ++k) {
    g[k] = start + (stop - start) * static_cast<double>(k) / static_cast<double>(n - 1);
  }
  g.back() = stop;
  return g;
}

std::vector<double> refined_grid(double start, double stop, std::size_t n, double center, double half_width,
                                 std::size_t n_fine) {
  auto g = linear_grid(start, stop, n);
  const double lo = std::max(start, center - half_width);
  const double hi = std::min(stop, center + half_width);
  if (hi > lo && n_fine >= 2) {
    const auto fine = linear_grid(lo, hi, n_fine);
    g.insert(g.end(), fine.begin(), fine.end());
    std::sort(g.begin(), g.end());
    // Drop points closer than a part in 1e12 of the range so the grid stays strictly ascending.
    const double eps = 1e-12 * (stop - start);
    g.erase(std::unique(g.begin(), g.end(), [eps](double a, double b) { return std::abs(a - b) <= eps; }),
            g.end());
  }
  return g;
}

void ReadoutModel::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("readout epsilon must lie in (0, 1)");
  if (!(photons_per_shot > 0.0)) throw std::invalid_argument("readout photons_per_shot must be > 0");
  if (!(t_meas > 0.0) || !(total_time > 0.0)) throw std::invalid_argument("readout times must be > 0");
  if (shots() < 1.0) throw std::invalid_argument("readout needs at least one shot (total_time >= t_meas)");
}

double analytic_sigma_p(const ReadoutModel& readout) {
  readout.validate();
  return 1.0 / (readout.epsilon * std::sqrt(readout.counts()));
}

Spectrum apply_readout_noise(const Spectrum& spectrum, const ReadoutModel& readout, std::uint64_t seed) {
  readout.validate();
  const double c = readout.counts();
  const double eps = readout.epsilon;
  Spectrum out(spectrum.size());
  for (std::size_t k = 0; k < spectrum.size(); ++k) {
    std::mt19937_64 eng(derive_seed(seed, k));
    const double p = std::clamp(spectrum[k].p_mean, 0.0, 1.0);
    const double sig = static_cast<double>(std::poisson_distribution<long long>(c * (1.0 - eps * p))(eng));
    const double r0 = static_cast<double>(std::poisson_distribution<long long>(c)(eng));
    const double r1 = static_cast<double>(std::poisson_distribution<long long>(c * (1.0 - eps))(eng));
    const double d = r0 - r1;
    SpectrumPoint pt;
    pt.omega1 = spectrum[k].omega1;
    if (d > 0.0) {
      pt.p_mean = (r0 - sig) / d;
      const double q = pt.p_mean;
      pt.p_sigma = std::sqrt(sig + (1.0 - q) * (1.0 - q) * r0 + q * q * r1) / d;
    } else {
      // References indistinguishable: no information at this point.
      pt.p_mean = 0.0;
      pt.p_sigma = std::numeric_limits<double>::infinity();
    }
    out[k] = std::move(pt);
  }
  return out;
}

double empirical_sigma_p(const Spectrum& noisy, const Spectrum& clean) {
  check_same_grid(noisy, clean);
  if (noisy.size() < 2) throw std::invalid_argument("empirical_sigma_p: need at least two points");
  double mean = 0.0, m2 = 0.0;
  for (std::size_t k = 0; k < noisy.size(); ++k) {
    const double v = noisy[k].p_mean - clean[k].p_mean;
    const double d = v - mean;
    mean += d / static_cast<double>(k + 1);
    m2 += d * (v - mean);
  }
  return std::sqrt(m2 / static_cast<double>(noisy.size() - 1));
}

Spectrum spin_state_selection(const Spectrum& nonselective, const SelectionScheme& scheme,
                              const SpinSystem& system, double p0) {
  const std::size_t k = scheme.inverted_line_index;
  if (k >= system.size()) throw std::invalid_argument("selection: line index out of range");
  const double baseline = system.lines()[k].weight * p0;
  Spectrum out = nonselective;
  for (auto& pt : out) {
    if (pt.p_lines.size() != system.size()) {
      throw std::invalid_argument("selection: spectrum lacks per-line contributions");
    }
    const double flipped = baseline - pt.p_lines[k];
    pt.p_mean += flipped - pt.p_lines[k];
    pt.p_lines[k] = flipped;
  }
  return out;
}

Spectrum spin_state_selection(const SpectrumConfig& config, const SelectionScheme& scheme) {
  return spin_state_selection(synthesize_spectrum(config), scheme, config.system, config.p0);
}

std::vector<Spectrum> recombine_pure_states(const Spectrum& nonselective,
                                            const std::vector<SelectiveSpectrum>& selective,
                                            const SpinSystem& system, double p0) {
  const auto lines = static_cast<Eigen::Index>(system.size());
  const auto rows = static_cast<Eigen::Index>(selective.size() + 1);
  if (rows - 1 < lines - 1) {
    throw std::invalid_argument("recombine: need at least L - 1 selective spectra for L lines");
  }
  for (const auto& s : selective) {
    if (s.inverted_line >= system.size()) throw std::invalid_argument("recombine: line index out of range");
    check_same_grid(nonselective, s.spectrum);
  }
  Eigen::MatrixXd A = Eigen::MatrixXd::Ones(rows, lines);
  Eigen::VectorXd offset = Eigen::VectorXd::Zero(rows);
  for (Eigen::Index r = 1; r < rows; ++r) {
    const auto k = selective[static_cast<std::size_t>(r - 1)].inverted_line;
    A(r, static_cast<Eigen::Index>(k)) = -1.0;
    offset[r] = system.lines()[k].weight * p0;
  }
  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> qr(A);
  if (qr.rank() < lines) throw std::invalid_argument("recombine: selective spectra do not determine every line");
  const Eigen::MatrixXd pinv = qr.pseudoInverse();

  std::vector<Spectrum> out(system.size(), Spectrum(nonselective.size()));
  Eigen::VectorXd b(rows), var(rows);
  for (std::size_t g = 0; g < nonselective.size(); ++g) {
    b[0] = nonselective[g].p_mean;
    var[0] = nonselective[g].p_sigma * nonselective[g].p_sigma;
    for (Eigen::Index r = 1; r < rows; ++r) {
      const auto& pt = selective[static_cast<std::size_t>(r - 1)].spectrum[g];
      b[r] = pt.p_mean - offset[r];
      var[r] = pt.p_sigma * pt.p_sigma;
    }
    const Eigen::VectorXd c = pinv * b;
    const Eigen::MatrixXd cov = pinv * var.asDiagonal() * pinv.transpose();
    for (Eigen::Index l = 0; l < lines; ++l) {
      auto& pt = out[static_cast<std::size_t>(l)][g];
      pt.omega1 = nonselective[g].omega1;
      pt.p_mean = c[l];
      pt.p_sigma = std::sqrt(std::max(0.0, cov(l, l)));
    }
  }
  return out;
}

std::vector<Spectrum> sweep_rf(const SpectrumConfig& config, const std::vector<AngularFrequency>& rf_frequencies) {
  std::vector<Spectrum> out;
  out.reserve(rf_frequencies.size());
  for (const auto& f : rf_frequencies) {
    if (!(f.value() > 0.0)) throw std::invalid_argument("sweep_rf: probe frequencies must be > 0");
    SpectrumConfig c = config;
    c.rf = config.rf.with_frequency(f);
    out.push_back(synthesize_spectrum(c));
  }
  return out;
}

Peak find_peak(std::span<const double> x, std::span<const double> y, double lo, double hi) {
  if (x.size() != y.size()) throw std::invalid_argument("find_peak: x and y differ in length");
  std::size_t best = x.size();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < lo || x[i] > hi) continue;
    if (best == x.size() || y[i] > y[best]) best = i;
  }
  if (best == x.size()) throw std::invalid_argument("find_peak: no samples inside the window");
  Peak pk{x[best], y[best], best};
  if (best > 0 && best + 1 < x.size()) {
    const double x0 = x[best - 1], x1 = x[best], x2 = x[best + 1];
    const double y0 = y[best - 1], y1 = y[best], y2 = y[best + 1];
    const double d1 = (y1 - y0) / (x1 - x0);
    const double d2 = (y2 - y1) / (x2 - x1);
    const double curv = (d2 - d1) / (x2 - x0);
    if (curv < 0.0) {
      const double xv = 0.5 * (x0 + x1) - d1 / (2.0 * curv);
      if (xv >= x0 && xv <= x2) {
        pk.position = xv;
        pk.height = y1 + d1 * (xv - x1) + curv * (xv - x0) * (xv - x1);
      }
    }
  }
  return pk;
}

double measure_fwhm(std::span<const double> x, std::span<const double> y, const Peak& peak) {
  const double half = 0.5 * peak.height;
  auto crossing = [&](int dir) {
    auto i = static_cast<std::ptrdiff_t>(peak.index);
    const auto n = static_cast<std::ptrdiff_t>(x.size());
    while (i + dir >= 0 && i + dir < n) {
      const auto j = i + dir;
      if (y[static_cast<std::size_t>(j)] < half) {
        const double ya = y[static_cast<std::size_t>(i)], yb = y[static_cast<std::size_t>(j)];
        const double xa = x[static_cast<std::size_t>(i)], xb = x[static_cast<std::size_t>(j)];
        return xa + (half - ya) * (xb - xa) / (yb - ya);
      }
      i = j;
    }
    throw NumericalError("measure_fwhm: peak does not fall below half maximum inside the grid");
  };
  return crossing(+1) - crossing(-1);
}

std::vector<double> omega1_values(const Spectrum& s) {
  std::vector<double> v;
  v.reserve(s.size());
  for (const auto& p : s) v.push_back(p.omega1.value());
  return v;
}

std::vector<double> p_values(const Spectrum& s) {
  std::vector<double> v;
  v.reserve(s.size());
  for (const auto& p : s) v.push_back(p.p_mean);
  return v;
}

std::vector<double> line_values(const Spectrum& s, std::size_t line) {
  std::vector<double> v;
  v.reserve(s.size());
  for (const auto& p : s) v.push_back(p.p_lines.at(line));
  return v;
}

}  // namespace rfmag::spectrometer
