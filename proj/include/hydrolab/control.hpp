#ifndef HYDROLAB_CONTROL_HPP_
#define HYDROLAB_CONTROL_HPP_

#include <string_view>

namespace hydrolab {

enum class ControllerMode { OnOff, P, PD, PI, PID };

std::string_view to_string(ControllerMode mode);
/// Accepts the lowercase names used in scenario files and on the wire
/// ("onoff", "p", "pd", "pi", "pid"). Throws ValidationError otherwise.
ControllerMode parse_mode(std::string_view name);

/// Parallel-form gains, in percent-of-span units: kp is output-% per error-%,
/// ki in 1/s, kd in s.
struct Gains {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;

  void validate() const;
  bool operator==(const Gains&) const = default;
};

/// Gains with the terms the mode does not use forced to zero.
Gains effective_gains(const Gains& gains, ControllerMode mode);

struct OnOffConfig {
  double setpoint_pct = 70.0;
  double hysteresis_pct = 10.0;

  void validate() const;
};

/// Memory of the discrete PID. A value-initialized state is the reset state.
struct ControllerState {
  double integral = 0.0;              // %·s
  double prev_measurement_pct = 0.0;  // %
  double prev_derivative = 0.0;       // %/s, filtered d(−pv)/dt
  double last_output_v = 0.0;
  bool primed = false;  // false until the first sample after reset

  bool operator==(const ControllerState&) const = default;
};

inline constexpr double kOutputMinV = 0.0;
inline constexpr double kOutputMaxV = 10.0;

struct PidOptions {
  /// Derivative filter time is kd / derivative_filter_n.
  double derivative_filter_n = 10.0;
  /// Manual reset added to the controller output, in percent.
  double output_bias_pct = 0.0;
};

/// Two-position controller. Closes (0 V) at or above the setpoint, opens
/// (10 V) at or below setpoint − hysteresis, holds in between.
double onoff_step(const OnOffConfig& cfg, double measurement_pct, double prev_output_v);

struct PidStep {
  double output_v = 0.0;
  ControllerState state;
  /// Unclamped controller output, percent.
  double raw_pct = 0.0;
  bool saturated = false;
};

/// One sample of the parallel PID:
///   u = kp·e + ki·∫e + kd·D,   D = filtered derivative of −pv
/// The integral uses the trapezoid rule and is frozen while the output is
/// saturated in the direction the error would push it. 100 % maps to 10 V.
PidStep pid_step(const Gains& gains, ControllerMode mode, double setpoint_pct,
                 double measurement_pct, const ControllerState& state, double dt,
                 const PidOptions& options = {});

ControllerState reset(const ControllerState& state);

/// Everything needed to start a controller.
struct ControllerSetup {
  ControllerMode mode = ControllerMode::PID;
  Gains gains;
  double setpoint_pct = 50.0;
  double hysteresis_pct = 10.0;

  void validate() const;
  bool operator==(const ControllerSetup&) const = default;
};

/// Mode-switching controller used by the scenario runner and the runtime.
class Controller {
 public:
  explicit Controller(ControllerSetup setup = {});

  /// Returns the valve command in volts.
  double step(double measurement_pct, double dt);

  /// Validates and adopts a whole setup; memory is cleared on a mode change.
  void reconfigure(const ControllerSetup& setup);
  void set_mode(ControllerMode mode);
  void set_gains(const Gains& gains);
  void set_setpoint(double pct);
  void set_on_off(double setpoint_pct, double hysteresis_pct);
  void reset();

  ControllerMode mode() const { return setup_.mode; }
  const Gains& gains() const { return setup_.gains; }
  Gains active_gains() const;
  double setpoint() const { return setup_.setpoint_pct; }
  double hysteresis() const { return setup_.hysteresis_pct; }
  const ControllerSetup& setup() const { return setup_; }
  const ControllerState& state() const { return state_; }
  double last_output_v() const { return state_.last_output_v; }

  PidOptions& options() { return options_; }
  const PidOptions& options() const { return options_; }

 private:
  ControllerSetup setup_;
  ControllerState state_;
  PidOptions options_;
};

}  // namespace hydrolab

#endif  // HYDROLAB_CONTROL_HPP_
