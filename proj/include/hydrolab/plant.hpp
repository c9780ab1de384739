#ifndef HYDROLAB_PLANT_HPP_
#define HYDROLAB_PLANT_HPP_

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace hydrolab {

enum class OutflowModel { LinearResistance, Torricelli };

std::string_view to_string(OutflowModel model);

/// Level at which the Torricelli drain is matched to the linear resistance
/// when no explicit coefficient is configured.
inline constexpr double kTorricelliMatchLevel = 0.5;

/// Physical parameters of the tank. The ODE is C·dh/dt = q_in − q_out, so
/// `capacitance` (not `area`) sets the dynamics; `area` is geometric metadata.
struct TankConfig {
  double capacitance = 0.5063;   // m³ per m of level
  double resistance = 2000.0;    // s/m²
  double area = 0.5063;          // m², metadata
  double h_max = 1.0;            // m
  double q_in_max = 0.0005;      // m³/s, fully open inlet
  OutflowModel outflow = OutflowModel::LinearResistance;
  double torricelli_coeff = 0.0;  // m^2.5/s; 0 derives it from `resistance`

  /// Throws ValidationError on a non-physical configuration.
  void validate() const;

  /// Effective √h drain coefficient; matches h/R at kTorricelliMatchLevel
  /// unless an explicit coefficient is set.
  double torricelli_k() const;

  bool operator==(const TankConfig&) const = default;
};

struct ValveConfig {
  double travel_time_s = 25.0;  // full-stroke time
  double v_min = 0.0;
  double v_max = 10.0;

  void validate() const;
  bool operator==(const ValveConfig&) const = default;
};

/// Differential-pressure level transmitter, 0..span Pa mapped to 4..20 mA.
struct SensorConfig {
  double p_span_pa = 6600.0;
  double i_min_ma = 4.0;
  double i_max_ma = 20.0;
  double rho = 998.2;  // kg/m³
  double g = 9.8;      // m/s²
  double noise_std_pct = 0.0;  // additive measurement noise, off by default
  std::uint64_t noise_seed = 1;

  void validate() const;
  /// Level that produces full-span pressure.
  double span_height() const { return p_span_pa / (rho * g); }
  double level_for_percent(double pct) const { return pct / 100.0 * span_height(); }

  bool operator==(const SensorConfig&) const = default;
};

/// A tank loop as configured by a preset or a scenario: tank, inlet valve,
/// transmitter and an optional transport delay on the valve command.
struct PlantConfig {
  TankConfig tank;
  ValveConfig valve;
  SensorConfig sensor;
  double dead_time_s = 0.0;

  void validate() const;
  bool operator==(const PlantConfig&) const = default;
};

struct PlantState {
  double t = 0.0;
  double h = 0.0;              // m
  double valve_opening = 0.0;  // [0, 1]
  double q_in = 0.0;           // m³/s, held over the last step
  double q_out = 0.0;          // m³/s, at time t
  double volume_in = 0.0;      // ∫q_in dt since start, m³
  double volume_out = 0.0;     // ∫q_out dt since start, m³
  bool overflow = false;       // sticky
  bool underflow = false;      // sticky
  bool clamped_last_step = false;
};

enum class ModelOutput { Level, Outflow };

struct LinearizedModel {
  double gain = 1.0;
  double tau = 1.0;
};

/// First-order model of the linear-resistance tank: tau = R·C, gain R for
/// the level output and 1 for the outflow output.
LinearizedModel linearized_model(const TankConfig& config,
                                 ModelOutput output = ModelOutput::Level);

/// K·u₀·(1 − e^(−t/τ)).
double analytic_step_response(const LinearizedModel& model, double step_amplitude, double t);

/// Slew-rate-limited valve travel toward the position commanded by `command_v`.
double actuator_step(double opening, double command_v, const ValveConfig& valve, double dt);

/// Drain flow at level h for the configured outflow model and load vane.
double outflow_rate(double h, const TankConfig& config, double load_fraction);

/// One fixed-step RK4 update of the tank with the valve moved first and the
/// resulting inflow held over the step.
PlantState plant_step(const PlantState& state, const TankConfig& config, const ValveConfig& valve,
                      double command_v, double inlet_limit, double load_fraction, double dt);

struct Measurement {
  double pressure_pa = 0.0;
  double current_ma = 0.0;
  double level_pct = 0.0;
};

Measurement measure(const PlantState& state, const SensorConfig& sensor);

/// Fixed-length transport delay for a sampled signal.
class DelayLine {
 public:
  DelayLine() = default;
  DelayLine(std::size_t samples, double initial);

  /// Pushes `value` and returns the sample from `samples` steps ago.
  double push(double value);
  void fill(double value);
  std::size_t length() const { return buffer_.size(); }

 private:
  std::vector<double> buffer_;
  std::size_t head_ = 0;
};

/// Whole samples of transport delay, round(dead_time / dt). Throws
/// ValidationError for a non-positive dt or a negative dead time.
std::size_t delay_samples(double dead_time_s, double dt);

/// Stateful tank loop: PlantConfig + state + command delay + manual vanes.
class TankSimulator {
 public:
  TankSimulator(PlantConfig config, double dt, PlantState initial = {});

  void step(double command_v);
  Measurement measurement();

  const PlantState& state() const { return state_; }
  const PlantConfig& config() const { return config_; }
  double dt() const { return dt_; }

  double inlet_limit() const { return inlet_limit_; }
  double load_fraction() const { return load_fraction_; }
  void set_inlet_limit(double fraction);
  void set_load_fraction(double fraction);

  /// Restores the initial state and refills the delay line with `command_v`.
  void reset(PlantState initial, double command_v = 0.0);

 private:
  PlantConfig config_;
  double dt_;
  PlantState state_;
  DelayLine delay_;
  double inlet_limit_ = 1.0;
  double load_fraction_ = 1.0;
  std::mt19937_64 noise_rng_;
};

/// Deviation-form test plant, K·e^(−Ls)/(τs + 1) or K·e^(−Ls)/s when τ = 0,
/// driven in controller percent around (u_ref, pv_ref).
struct TransferFunctionConfig {
  double gain = 1.0;
  double tau_s = 10.0;  // 0 selects the integrating plant
  double dead_time_s = 2.0;
  double u_ref_pct = 50.0;
  double pv_ref_pct = 50.0;

  void validate() const;
  bool is_integrating() const { return tau_s == 0.0; }
  bool operator==(const TransferFunctionConfig&) const = default;
};

class TransferFunctionSimulator {
 public:
  TransferFunctionSimulator(TransferFunctionConfig config, double dt);

  void step(double u_pct);
  double pv_pct() const { return config_.pv_ref_pct + x_; }
  double t() const { return t_; }

  /// Places the plant in steady state at `pv` with the delay line full of `u`.
  void settle(double pv, double u);

 private:
  TransferFunctionConfig config_;
  double dt_;
  double t_ = 0.0;
  double x_ = 0.0;
  DelayLine delay_;
};

}  // namespace hydrolab

#endif  // HYDROLAB_PLANT_HPP_
