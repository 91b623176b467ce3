#pragma once

// Rotating-frame spectra: hyperfine-averaged response on a drive-amplitude grid,
// Poisson photon readout, spin-state selection and pure-state recombination.

#include <cstdint>
#include <span>
#include <vector>

#include "rfmag/analytic.hpp"
#include "rfmag/core.hpp"
#include "rfmag/propagator.hpp"

namespace rfmag::spectrometer {

struct SpectrumPoint {
  AngularFrequency omega1;
  double p_mean = 0.0;
  double p_sigma = 0.0;
  std::vector<double> p_lines;  // per-line contributions, sum to p_mean when noiseless
};

using Spectrum = std::vector<SpectrumPoint>;

enum class Engine { analytic, numeric };

struct SpectrumConfig {
  SpinSystem system = SpinSystem::nv14_triplet();
  RfProbe rf;
  double tau = 0.0;
  double p0 = 1.0;
  std::vector<double> omega1_grid;  // rad/s, strictly ascending
  Engine engine = Engine::analytic;
  unsigned threads = 1;
  analytic::QuadratureOptions quadrature;
  /// Numeric engine only. Ramps default to ideal; numeric_panels = 0 sizes the
  /// per-line Gauss-Legendre rule from the spread of w_eff across the line.
  propagator::RampConfig ramps = ideal_ramps();
  propagator::PropagateOptions propagate;
  int numeric_panels = 0;

  void validate() const;
  static propagator::RampConfig ideal_ramps() {
    propagator::RampConfig r;
    r.ideal = true;
    return r;
  }
};

/// Throws std::invalid_argument for an empty or non-monotone grid.
Spectrum synthesize_spectrum(const SpectrumConfig& config);

/// n points from start to stop inclusive (n >= 2).
std::vector<double> linear_grid(double start, double stop, std::size_t n = 201);

/// Uniform coarse grid plus a dense window of +-half_width around center.
std::vector<double> refined_grid(double start, double stop, std::size_t n, double center, double half_width,
                                 std::size_t n_fine);

struct OscillationPoint {
  double tau = 0.0;
  double p_mean = 0.0;
  std::vector<double> p_lines;
};

/// p(tau) at fixed drive amplitude, averaged over the ESR lines of config.system.
/// The numeric engine integrates each quadrature node once over the whole tau grid.
/// config.omega1_grid and config.tau are ignored.
std::vector<OscillationPoint> oscillation(const SpectrumConfig& config, AngularFrequency omega1,
                                          const std::vector<double>& tau_grid);

struct ReadoutModel {
  double epsilon = 0.31;
  double photons_per_shot = 0.0;
  double t_meas = 0.0;
  double total_time = 0.0;

  /// Throws std::invalid_argument unless epsilon in (0,1), r > 0, and N >= 1.
  void validate() const;
  double shots() const { return std::floor(total_time / t_meas); }
  double counts() const { return shots() * photons_per_shot; }
};

/// 1/(epsilon sqrt(C)), the shot-noise standard deviation of p.
double analytic_sigma_p(const ReadoutModel& readout);

/// Per point: signal counts ~ Poisson(C (1 - eps p)), references ~ Poisson(C) and
/// Poisson(C (1 - eps)); p_hat = (R0 - S)/(R0 - R1) with a delta-method sigma.
/// Point k draws from mt19937_64(derive_seed(seed, k)). Per-line contributions are dropped.
Spectrum apply_readout_noise(const Spectrum& spectrum, const ReadoutModel& readout, std::uint64_t seed);

/// Sample standard deviation of noisy - clean over all points.
double empirical_sigma_p(const Spectrum& noisy, const Spectrum& clean);

struct SelectionScheme {
  std::size_t inverted_line_index = 0;
};

/// Replaces the selected contribution c_k by weight_k p0 - c_k. Applying it twice is the identity.
Spectrum spin_state_selection(const Spectrum& nonselective, const SelectionScheme& scheme,
                              const SpinSystem& system, double p0);
Spectrum spin_state_selection(const SpectrumConfig& config, const SelectionScheme& scheme);

struct SelectiveSpectrum {
  std::size_t inverted_line = 0;
  Spectrum spectrum;
};

/// Least-squares inversion per grid point. Unknowns are the contributions c_1..c_L:
///   nonselective:   sum_j c_j            = N
///   selective k:    sum_j c_j - 2 c_k    = S_k - b_k,   b_k = weight_k p0
/// With all L selective spectra and L = 3 the normal matrix is 4 I, and in the
/// noiseless case c_k = (N - S_k + b_k)/2. Returns one spectrum per line with
/// p_mean = c_k and p_sigma propagated from the input sigmas.
std::vector<Spectrum> recombine_pure_states(const Spectrum& nonselective,
                                            const std::vector<SelectiveSpectrum>& selective,
                                            const SpinSystem& system, double p0);

/// One spectrum per probe frequency, each from config with rf.frequency replaced.
std::vector<Spectrum> sweep_rf(const SpectrumConfig& config, const std::vector<AngularFrequency>& rf_frequencies);

struct Peak {
  double position = 0.0;  // parabolic vertex through the maximum and its neighbours
  double height = 0.0;
  std::size_t index = 0;
};

/// Largest sample of y with x in [lo, hi]. Throws std::invalid_argument if the window is empty.
Peak find_peak(std::span<const double> x, std::span<const double> y, double lo, double hi);

/// Full width at half of the peak height above zero, by linear interpolation of the
/// crossings on either side. Throws NumericalError if a side never drops below half.
double measure_fwhm(std::span<const double> x, std::span<const double> y, const Peak& peak);

std::vector<double> omega1_values(const Spectrum& s);
std::vector<double> p_values(const Spectrum& s);
std::vector<double> line_values(const Spectrum& s, std::size_t line);

}  // namespace rfmag::spectrometer
