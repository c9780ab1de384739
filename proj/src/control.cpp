#include "hydrolab/control.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hydrolab/error.hpp"

namespace hydrolab {

std::string_view to_string(ControllerMode mode) {
  switch (mode) {
    case ControllerMode::OnOff:
      return "onoff";
    case ControllerMode::P:
      return "p";
    case ControllerMode::PD:
      return "pd";
    case ControllerMode::PI:
      return "pi";
    case ControllerMode::PID:
      return "pid";
  }
  return "pid";
}

ControllerMode parse_mode(std::string_view name) {
  if (name == "onoff") return ControllerMode::OnOff;
  if (name == "p") return ControllerMode::P;
  if (name == "pd") return ControllerMode::PD;
  if (name == "pi") return ControllerMode::PI;
  if (name == "pid") return ControllerMode::PID;
  throw ValidationError("mode", "unknown controller mode '" + std::string(name) +
                                    "' (expected onoff|p|pd|pi|pid)");
}

void Gains::validate() const {
  auto check = [](double v, const char* field) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ValidationError(field, "must be a finite value >= 0");
    }
  };
  check(kp, "kp");
  check(ki, "ki");
  check(kd, "kd");
}

Gains effective_gains(const Gains& gains, ControllerMode mode) {
  switch (mode) {
    case ControllerMode::OnOff:
      return {};
    case ControllerMode::P:
      return {gains.kp, 0.0, 0.0};
    case ControllerMode::PD:
      return {gains.kp, 0.0, gains.kd};
    case ControllerMode::PI:
      return {gains.kp, gains.ki, 0.0};
    case ControllerMode::PID:
      return gains;
  }
  return gains;
}

void OnOffConfig::validate() const {
  if (!(setpoint_pct >= 0.0 && setpoint_pct <= 100.0)) {
    throw ValidationError("sp", "must lie in [0, 100]");
  }
  if (!(hysteresis_pct > 0.0 && hysteresis_pct <= setpoint_pct)) {
    throw ValidationError("hyst", "must satisfy 0 < hyst <= sp");
  }
}

double onoff_step(const OnOffConfig& cfg, double measurement_pct, double prev_output_v) {
  require_finite(measurement_pct, "measurement");
  if (measurement_pct >= cfg.setpoint_pct) return kOutputMinV;
  if (measurement_pct <= cfg.setpoint_pct - cfg.hysteresis_pct) return kOutputMaxV;
  return prev_output_v >= 0.5 * (kOutputMinV + kOutputMaxV) ? kOutputMaxV : kOutputMinV;
}

PidStep pid_step(const Gains& gains, ControllerMode mode, double setpoint_pct,
                 double measurement_pct, const ControllerState& state, double dt,
                 const PidOptions& options) {
  require_finite(setpoint_pct, "setpoint");
  require_finite(measurement_pct, "measurement");
  require_finite(dt, "dt");
  if (!(dt > 0.0)) throw InvalidInput("dt must be > 0");

  const Gains g = effective_gains(gains, mode);
  const double error = setpoint_pct - measurement_pct;

  PidStep out;
  out.state = state;

  double derivative = 0.0;
  if (g.kd > 0.0 && state.primed) {
    const double filter_time = g.kd / options.derivative_filter_n;
    derivative =
        (filter_time * state.prev_derivative - (measurement_pct - state.prev_measurement_pct)) /
        (filter_time + dt);
    out.state.prev_derivative = derivative;
  }

  double integral = state.integral;
  if (g.ki > 0.0) {
    const double prev_error = state.primed ? setpoint_pct - state.prev_measurement_pct : error;
    integral += 0.5 * (error + prev_error) * dt;
  }

  auto raw_output = [&](double i) {
    return options.output_bias_pct + g.kp * error + g.ki * i + g.kd * derivative;
  };
  double raw = raw_output(integral);
  if (g.ki > 0.0 && ((raw > 100.0 && error > 0.0) || (raw < 0.0 && error < 0.0))) {
    integral = state.integral;
    raw = raw_output(integral);
  }
  out.state.integral = integral;

  const double clamped = std::clamp(raw, 0.0, 100.0);
  out.raw_pct = raw;
  out.saturated = clamped != raw;
  out.output_v = clamped / 100.0 * kOutputMaxV;
  out.state.prev_measurement_pct = measurement_pct;
  out.state.primed = true;
  out.state.last_output_v = out.output_v;
  return out;
}

ControllerState reset(const ControllerState&) { return ControllerState{}; }

void ControllerSetup::validate() const {
  gains.validate();
  if (!(setpoint_pct >= 0.0 && setpoint_pct <= 100.0)) {
    throw ValidationError("sp", "must lie in [0, 100]");
  }
  if (!(hysteresis_pct > 0.0 && hysteresis_pct <= 100.0)) {
    throw ValidationError("hyst", "must lie in (0, 100]");
  }
  if (mode == ControllerMode::OnOff) {
    OnOffConfig{setpoint_pct, hysteresis_pct}.validate();
  }
}

Controller::Controller(ControllerSetup setup) : setup_(setup) { setup_.validate(); }

double Controller::step(double measurement_pct, double dt) {
  if (setup_.mode == ControllerMode::OnOff) {
    const double out = onoff_step({setup_.setpoint_pct, setup_.hysteresis_pct}, measurement_pct,
                                  state_.last_output_v);
    state_.last_output_v = out;
    state_.prev_measurement_pct = measurement_pct;
    state_.primed = true;
    return out;
  }
  PidStep result = pid_step(setup_.gains, setup_.mode, setup_.setpoint_pct, measurement_pct,
                            state_, dt, options_);
  state_ = result.state;
  return result.output_v;
}

void Controller::reconfigure(const ControllerSetup& setup) {
  setup.validate();
  if (setup.mode != setup_.mode) state_ = ControllerState{};
  setup_ = setup;
}

void Controller::set_mode(ControllerMode mode) {
  ControllerSetup next = setup_;
  next.mode = mode;
  reconfigure(next);
}

void Controller::set_gains(const Gains& gains) {
  gains.validate();
  setup_.gains = gains;
}

void Controller::set_setpoint(double pct) {
  ControllerSetup next = setup_;
  next.setpoint_pct = pct;
  next.validate();
  setup_ = next;
}

void Controller::set_on_off(double setpoint_pct, double hysteresis_pct) {
  OnOffConfig{setpoint_pct, hysteresis_pct}.validate();
  setup_.setpoint_pct = setpoint_pct;
  setup_.hysteresis_pct = hysteresis_pct;
}

void Controller::reset() { state_ = ControllerState{}; }

Gains Controller::active_gains() const { return effective_gains(setup_.gains, setup_.mode); }

}  // namespace hydrolab
