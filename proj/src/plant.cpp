#include "hydrolab/plant.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hydrolab/error.hpp"

namespace hydrolab {

namespace {

void require_positive(double value, const char* field) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw ValidationError(field, "must be a finite value > 0, got " + std::to_string(value));
  }
}

void require_fraction(double value, const char* field) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw ValidationError(field, "must lie in [0, 1], got " + std::to_string(value));
  }
}

}  // namespace

std::string_view to_string(OutflowModel model) {
  switch (model) {
    case OutflowModel::LinearResistance:
      return "linear";
    case OutflowModel::Torricelli:
      return "torricelli";
  }
  return "linear";
}

void TankConfig::validate() const {
  require_positive(capacitance, "C");
  require_positive(resistance, "R");
  require_positive(area, "A");
  require_positive(h_max, "hmax");
  require_positive(q_in_max, "qmax");
  if (!(torricelli_coeff >= 0.0) || !std::isfinite(torricelli_coeff)) {
    throw ValidationError("torricelli_coeff", "must be finite and >= 0");
  }
}

double TankConfig::torricelli_k() const {
  if (torricelli_coeff > 0.0) return torricelli_coeff;
  return std::sqrt(kTorricelliMatchLevel) / resistance;
}

void ValveConfig::validate() const {
  if (!(travel_time_s >= 0.0) || !std::isfinite(travel_time_s)) {
    throw ValidationError("travel", "must be finite and >= 0");
  }
  if (!(v_min < v_max) || !std::isfinite(v_min) || !std::isfinite(v_max)) {
    throw ValidationError("valve", "v_min must be below v_max");
  }
}

void SensorConfig::validate() const {
  require_positive(p_span_pa, "p_span_pa");
  require_positive(rho, "rho");
  require_positive(g, "g");
  if (!(i_min_ma < i_max_ma)) throw ValidationError("sensor", "i_min_ma must be below i_max_ma");
  if (!(noise_std_pct >= 0.0)) throw ValidationError("noise_std_pct", "must be >= 0");
}

void PlantConfig::validate() const {
  tank.validate();
  valve.validate();
  sensor.validate();
  if (!(dead_time_s >= 0.0) || !std::isfinite(dead_time_s)) {
    throw ValidationError("deadtime", "must be finite and >= 0");
  }
}

LinearizedModel linearized_model(const TankConfig& config, ModelOutput output) {
  LinearizedModel model;
  model.tau = config.resistance * config.capacitance;
  model.gain = output == ModelOutput::Level ? config.resistance : 1.0;
  return model;
}

double analytic_step_response(const LinearizedModel& model, double step_amplitude, double t) {
  return model.gain * step_amplitude * (1.0 - std::exp(-t / model.tau));
}

double actuator_step(double opening, double command_v, const ValveConfig& valve, double dt) {
  require_finite(opening, "valve opening");
  require_finite(command_v, "valve command");
  const double target =
      std::clamp((command_v - valve.v_min) / (valve.v_max - valve.v_min), 0.0, 1.0);
  if (valve.travel_time_s == 0.0) return target;
  const double max_move = dt / valve.travel_time_s;
  return opening + std::clamp(target - opening, -max_move, max_move);
}

double outflow_rate(double h, const TankConfig& config, double load_fraction) {
  const double level = std::max(h, 0.0);
  switch (config.outflow) {
    case OutflowModel::LinearResistance:
      return load_fraction * level / config.resistance;
    case OutflowModel::Torricelli:
      return load_fraction * config.torricelli_k() * std::sqrt(level);
  }
  return 0.0;
}

PlantState plant_step(const PlantState& state, const TankConfig& config, const ValveConfig& valve,
                      double command_v, double inlet_limit, double load_fraction, double dt) {
  require_finite(state.h, "level");
  require_finite(command_v, "valve command");
  require_finite(inlet_limit, "inlet limit");
  require_finite(load_fraction, "load fraction");
  require_finite(dt, "dt");
  if (!(dt > 0.0)) throw InvalidInput("dt must be > 0");
  require_fraction(inlet_limit, "inlimit");
  require_fraction(load_fraction, "outload");

  PlantState next = state;
  next.valve_opening = actuator_step(state.valve_opening, command_v, valve, dt);
  next.q_in = next.valve_opening * inlet_limit * config.q_in_max;

  // RK4 stages of the drain flow; the level and the drained volume share them
  // so that C·Δh = q_in·dt − ΔV_out holds per step.
  const double c = config.capacitance;
  const double q_in = next.q_in;
  const double qo1 = outflow_rate(state.h, config, load_fraction);
  const double qo2 = outflow_rate(state.h + 0.5 * dt * (q_in - qo1) / c, config, load_fraction);
  const double qo3 = outflow_rate(state.h + 0.5 * dt * (q_in - qo2) / c, config, load_fraction);
  const double qo4 = outflow_rate(state.h + dt * (q_in - qo3) / c, config, load_fraction);
  const double drained = dt / 6.0 * (qo1 + 2.0 * qo2 + 2.0 * qo3 + qo4);
  const double supplied = q_in * dt;

  double h = state.h + (supplied - drained) / c;
  next.clamped_last_step = false;
  if (h > config.h_max) {
    h = config.h_max;
    next.overflow = true;
    next.clamped_last_step = true;
  } else if (h < 0.0) {
    h = 0.0;
    next.underflow = true;
    next.clamped_last_step = true;
  }
  next.h = h;
  next.volume_in = state.volume_in + supplied;
  next.volume_out = state.volume_out + drained;
  next.q_out = outflow_rate(h, config, load_fraction);
  next.t = state.t + dt;
  return next;
}

Measurement measure(const PlantState& state, const SensorConfig& sensor) {
  Measurement m;
  m.pressure_pa = sensor.rho * sensor.g * state.h;
  const double fraction = m.pressure_pa / sensor.p_span_pa;
  m.current_ma = std::clamp(sensor.i_min_ma + (sensor.i_max_ma - sensor.i_min_ma) * fraction,
                            sensor.i_min_ma, sensor.i_max_ma);
  m.level_pct = 100.0 * fraction;
  return m;
}

DelayLine::DelayLine(std::size_t samples, double initial) : buffer_(samples, initial) {}

double DelayLine::push(double value) {
  if (buffer_.empty()) return value;
  const double out = buffer_[head_];
  buffer_[head_] = value;
  head_ = (head_ + 1) % buffer_.size();
  return out;
}

void DelayLine::fill(double value) {
  std::fill(buffer_.begin(), buffer_.end(), value);
  head_ = 0;
}

std::size_t delay_samples(double dead_time_s, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("dt", "must be > 0");
  if (!(dead_time_s >= 0.0) || !std::isfinite(dead_time_s)) {
    throw ValidationError("deadtime", "must be a finite value >= 0");
  }
  return static_cast<std::size_t>(std::llround(dead_time_s / dt));
}

TankSimulator::TankSimulator(PlantConfig config, double dt, PlantState initial)
    : config_(config),
      dt_(dt),
      state_(initial),
      delay_(delay_samples(config.dead_time_s, dt), 0.0),
      noise_rng_(config.sensor.noise_seed) {
  config_.validate();
}

void TankSimulator::step(double command_v) {
  const double delayed = delay_.push(command_v);
  state_ = plant_step(state_, config_.tank, config_.valve, delayed, inlet_limit_, load_fraction_,
                      dt_);
}

Measurement TankSimulator::measurement() {
  Measurement m = measure(state_, config_.sensor);
  if (config_.sensor.noise_std_pct > 0.0) {
    std::normal_distribution<double> noise(0.0, config_.sensor.noise_std_pct);
    m.level_pct += noise(noise_rng_);
  }
  return m;
}

void TankSimulator::set_inlet_limit(double fraction) {
  require_fraction(fraction, "inlimit");
  inlet_limit_ = fraction;
}

void TankSimulator::set_load_fraction(double fraction) {
  require_fraction(fraction, "outload");
  load_fraction_ = fraction;
}

void TankSimulator::reset(PlantState initial, double command_v) {
  state_ = initial;
  delay_.fill(command_v);
  noise_rng_.seed(config_.sensor.noise_seed);
}

}  // namespace hydrolab
