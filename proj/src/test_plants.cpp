#include <cmath>

#include "hydrolab/error.hpp"
#include "hydrolab/plant.hpp"

namespace hydrolab {

void TransferFunctionConfig::validate() const {
  if (!(gain > 0.0) || !std::isfinite(gain)) throw ValidationError("gain", "must be > 0");
  if (!(tau_s >= 0.0) || !std::isfinite(tau_s)) throw ValidationError("tau_s", "must be >= 0");
  if (!(dead_time_s >= 0.0) || !std::isfinite(dead_time_s)) {
    throw ValidationError("dead_time_s", "must be >= 0");
  }
  if (!(u_ref_pct >= 0.0 && u_ref_pct <= 100.0)) {
    throw ValidationError("u_ref_pct", "must lie in [0, 100]");
  }
}

TransferFunctionSimulator::TransferFunctionSimulator(TransferFunctionConfig config, double dt)
    : config_(config),
      dt_(dt),
      delay_(delay_samples(config.dead_time_s, dt), config.u_ref_pct) {
  config_.validate();
}

void TransferFunctionSimulator::step(double u_pct) {
  require_finite(u_pct, "plant input");
  const double du = delay_.push(u_pct) - config_.u_ref_pct;
  const double k = config_.gain;
  if (config_.is_integrating()) {
    x_ += k * du * dt_;
  } else {
    const double tau = config_.tau_s;
    auto f = [&](double x) { return (k * du - x) / tau; };
    const double k1 = f(x_);
    const double k2 = f(x_ + 0.5 * dt_ * k1);
    const double k3 = f(x_ + 0.5 * dt_ * k2);
    const double k4 = f(x_ + dt_ * k3);
    x_ += dt_ / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  t_ += dt_;
}

void TransferFunctionSimulator::settle(double pv, double u) {
  x_ = pv - config_.pv_ref_pct;
  delay_.fill(u);
  t_ = 0.0;
}

}  // namespace hydrolab
