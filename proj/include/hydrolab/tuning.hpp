#ifndef HYDROLAB_TUNING_HPP_
#define HYDROLAB_TUNING_HPP_

#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "hydrolab/control.hpp"
#include "hydrolab/plant.hpp"

namespace hydrolab {

/// Ziegler-Nichols ultimate-gain rules with rational coefficients:
///   P   kp = Ku/2
///   PI  kp = 0.45·Ku, Ti = Pu/1.2
///   PID kp = 0.6·Ku,  Ti = Pu/2, Td = Pu/8
///   PD  kp = 0.45·Ku, Td = Pu/8   (the training-rig variant, not 0.8·Ku)
/// returned in parallel form (ki = kp/Ti, kd = kp·Td). Each gain is a single
/// division of exact products, so integer Ku/Pu give correctly rounded results.
/// Throws ValidationError for OnOff or non-positive Ku/Pu.
Gains zn_gains(ControllerMode mode, double ku, double pu_s);

struct OscillationOptions {
  /// Leading fraction of the horizon discarded before analysis.
  double warmup_fraction = 0.3;
  /// Crossing level; the mean of the analysed window when unset.
  std::optional<double> reference;
  /// Peak-to-peak amplitude below which the window counts as flat.
  double resolution = 1e-6;
  int min_cycles = 3;
  /// Analyse at most this many periods after warm-up; 0 means no cap.
  int max_cycles = 0;
};

struct OscillationStats {
  double period_mean_s = 0.0;
  double period_std_s = 0.0;
  /// Mean ratio of successive peak-to-trough amplitudes; 1 is sustained.
  double decay_ratio = 0.0;
  int n_periods = 0;
};

/// Periods come from interpolated upward crossings of the reference, falling
/// back to peak-to-peak intervals when the signal does not cross it.
/// Throws TooFewCycles or FlatSignal.
OscillationStats measure_oscillation(std::span<const double> t, std::span<const double> pv,
                                     const OscillationOptions& options = {});

/// Plants the tuner can drive: a tank loop, or a transfer-function test plant.
using LoopPlant = std::variant<PlantConfig, TransferFunctionConfig>;

struct TuningOptions {
  double tol = 0.05;
  int max_iterations = 40;
  double dt = 0.01;
  /// Initial level offset below the setpoint that starts the oscillation,
  /// reduced automatically so the first output swing stays unsaturated.
  double kick_pct = 1.0;
  double warmup_fraction = 0.3;
  int min_cycles = 5;
  int max_cycles = 50;
  /// Manual vanes held during the experiment (tank plants only).
  double inlet_limit = 1.0;
  double load_fraction = 1.0;

  void validate() const;
};

struct UltimateGainResult {
  double ku = 0.0;
  double pu_s = 0.0;
  int periods_used = 0;
  double period_std_s = 0.0;
  double decay_ratio = 0.0;
  int iterations = 0;
};

/// Record of one P-only closed-loop run started from equilibrium.
struct ProportionalTrial {
  std::vector<double> t;
  std::vector<double> pv;
  double bias_pct = 0.0;
  double kick_pct = 0.0;
  /// Output clamp or tank bound reached; the run stops there.
  bool saturated = false;
};

/// P-only loop with manual reset equal to the equilibrium output at `sp`,
/// started `kick` below the setpoint.
ProportionalTrial run_proportional_trial(const LoopPlant& plant, double setpoint_pct, double kp,
                                         double horizon_s, const TuningOptions& options = {});

/// Bisection (on log Kp) for the gain whose P-only loop oscillates with a
/// decay ratio within [1 − tol, 1 + tol]. Throws PureFirstOrderPlant,
/// NoBracket or NoConvergence.
UltimateGainResult find_ultimate_gain(const LoopPlant& plant, double setpoint_pct, double kp_lo,
                                      double kp_hi, const TuningOptions& options = {});

}  // namespace hydrolab

#endif  // HYDROLAB_TUNING_HPP_
