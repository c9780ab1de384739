#include "hydrolab/loop.hpp"

namespace hydrolab {

ControlLoop::ControlLoop(PlantConfig plant, ControllerSetup controller, double dt,
                         PlantState initial)
    : plant_(plant, dt, initial), controller_(controller), dt_(dt) {}

TimeSeriesRow ControlLoop::step() {
  const double pv = plant_.measurement().level_pct;
  const double u = controller_.step(pv, dt_);
  plant_.step(u);
  ++steps_;

  const PlantState& s = plant_.state();
  const Measurement after = measure(s, plant_.config().sensor);
  TimeSeriesRow row;
  row.t_s = static_cast<double>(steps_) * dt_;
  row.level_m = s.h;
  row.level_pct = after.level_pct;
  row.sp_pct = controller_.setpoint();
  row.error_pct = row.sp_pct - after.level_pct;
  row.u_volts = u;
  row.valve_frac = s.valve_opening;
  row.q_in = s.q_in;
  row.q_out = s.q_out;
  row.mode = controller_.mode();
  row.clamped = s.clamped_last_step;
  return row;
}

void ControlLoop::reset_process(const PlantState& initial) {
  PlantState restored = initial;
  restored.t = plant_.state().t;
  plant_.reset(restored, 0.0);
  controller_.reset();
}

}  // namespace hydrolab
