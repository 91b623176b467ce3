#pragma once

// Fixed-step RK4 integration of the rotating-frame Bloch equations
//   dv/dt = W(t) x v,  W = (w1 cos phi, w1 sin phi, dw0 + sweep + 2 W1 cos(W_rf t + phi_rf) + W_z(t))
// through a spin-lock pulse sequence.

#include <cstddef>
#include <span>
#include <vector>

#include "rfmag/core.hpp"

namespace rfmag::propagator {

struct BlochState {
  double x = 0.0;
  double y = 0.0;
  double z = 1.0;

  double norm() const;
  double dot(const BlochState& o) const { return x * o.x + y * o.y + z * o.z; }
};

enum class SegmentKind { adiabatic_ramp, spin_lock_hold, idle };

/// Linear sweep of drive amplitude and detuning over `duration`.
/// The RF probe is only applied during spin_lock_hold segments.
struct PulseSegment {
  SegmentKind kind = SegmentKind::idle;
  double duration = 0.0;
  double amplitude_start = 0.0;  // w1, rad/s
  double amplitude_end = 0.0;
  double detuning_start = 0.0;   // sweep offset added to the line detuning, rad/s
  double detuning_end = 0.0;
  double phase = 0.0;            // drive phase, rad

  void validate() const;
};

class PulseSequence {
 public:
  void append(const PulseSegment& segment);

  const std::vector<PulseSegment>& segments() const { return segments_; }
  double total_duration() const;
  double hold_duration() const;

  /// True when the passages are idealized: the state starts on the lock axis
  /// and p is read as the projection onto it.
  bool ideal_ramps = false;

 private:
  std::vector<PulseSegment> segments_;
};

enum class RampVariant { frequency_sweep, amplitude_sweep };

/// Three linear sweeps per half-passage.
/// frequency_sweep: amplitude 0 -> w1 at start_detuning, then detuning
///   start -> detuning_fraction*start -> 0 at constant w1.
/// amplitude_sweep: amplitude 0 -> amplitude_fraction*w1 at start_detuning,
///   detuning -> 0, then amplitude up to w1.
struct RampConfig {
  double segment_duration = 1e-6;
  AngularFrequency start_detuning = AngularFrequency::from_hz(20e6);
  RampVariant variant = RampVariant::frequency_sweep;
  double detuning_fraction = 0.25;
  double amplitude_fraction = 0.5;
  bool ideal = false;

  void validate() const;
};

/// Half-passage from +z onto the lock axis; `reverse` gives the mirror sequence.
std::vector<PulseSegment> half_passage(AngularFrequency omega1, const RampConfig& ramp, bool reverse);

/// Passage, hold for tau, reverse passage. With ideal ramps only the hold is emitted.
PulseSequence build_spinlock_sequence(double tau, AngularFrequency omega1, const RampConfig& ramp);

struct HamiltonianParams {
  AngularFrequency detuning;      // line detuning dw0
  RfProbe probe;                  // amplitude 0 disables the probe
  double power_scale = 1.0;       // static drive-amplitude error
  std::span<const double> noise;  // W_z samples, rad/s, linearly interpolated
  double noise_dt = 0.0;          // sample spacing; t = 0 is the sequence start
};

struct PropagateOptions {
  double dt = 0.0;          // 0 selects the default step
  std::size_t stride = 0;   // record every `stride` steps; 0 records only the endpoints
};

struct Trajectory {
  std::vector<double> t;
  std::vector<BlochState> states;
  double max_norm_deviation = 0.0;
};

/// Largest rotation rate that the step size has to resolve.
double max_rotation_rate(const PulseSequence& seq, const HamiltonianParams& params);

/// (2 pi / max rate) / 512.
double default_time_step(const PulseSequence& seq, const HamiltonianParams& params);

/// (2 pi / max rate) / 40. Coarser steps are rejected.
double max_time_step(const PulseSequence& seq, const HamiltonianParams& params);

/// Throws std::invalid_argument for a too-coarse dt, NumericalError on a non-finite state.
Trajectory propagate(const BlochState& initial, const PulseSequence& seq, const HamiltonianParams& params,
                     const PropagateOptions& options = {});

/// Unit vector of the hold-segment drive, (w1 cos phi, w1 sin phi, dw0)/w_eff.
BlochState lock_axis(AngularFrequency omega1, AngularFrequency detuning, double phase = 0.0);

struct NumericConfig {
  double tau = 0.0;
  AngularFrequency omega1;
  HamiltonianParams params;
  RampConfig ramps;
  PropagateOptions options;
};

/// Runs the full sequence from |0> (+z). Ideal ramps: p = (1 - v.lock)/2; otherwise
/// p = (1 - z)/2 after the reverse passage.
double transition_probability_numeric(const NumericConfig& config);

/// p(tau) for every tau in the ascending grid from a single hold trajectory.
/// config.tau is ignored.
std::vector<double> probability_trace(const NumericConfig& config, std::span<const double> tau_grid);

/// Projection of the post-passage Bloch vector onto the lock axis.
double passage_fidelity(const RampConfig& ramp, AngularFrequency omega1,
                        AngularFrequency detuning = {}, const PropagateOptions& options = {});

}  // namespace rfmag::propagator
