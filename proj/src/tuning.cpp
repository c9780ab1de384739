#include "hydrolab/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <string>

#include "hydrolab/error.hpp"

namespace hydrolab {

Gains zn_gains(ControllerMode mode, double ku, double pu_s) {
  if (!(ku > 0.0) || !std::isfinite(ku)) throw ValidationError("ku", "must be > 0");
  if (!(pu_s > 0.0) || !std::isfinite(pu_s)) throw ValidationError("pu", "must be > 0");
  switch (mode) {
    case ControllerMode::P:
      return {ku / 2.0, 0.0, 0.0};
    case ControllerMode::PI:
      return {9.0 * ku / 20.0, 27.0 * ku / (50.0 * pu_s), 0.0};
    case ControllerMode::PID:
      return {3.0 * ku / 5.0, 6.0 * ku / (5.0 * pu_s), 3.0 * ku * pu_s / 40.0};
    case ControllerMode::PD:
      return {9.0 * ku / 20.0, 0.0, 9.0 * ku * pu_s / 160.0};
    case ControllerMode::OnOff:
      break;
  }
  throw ValidationError("mode", "Ziegler-Nichols rules do not apply to on-off control");
}

namespace {

struct Extremum {
  double t;
  double value;
};

// Three-point parabolic refinement of a sampled extremum at index i.
Extremum refine(std::span<const double> t, std::span<const double> x, std::size_t i) {
  if (i == 0 || i + 1 >= x.size()) return {t[i], x[i]};
  const double y0 = x[i - 1], y1 = x[i], y2 = x[i + 1];
  const double denom = y0 - 2.0 * y1 + y2;
  if (denom == 0.0) return {t[i], y1};
  const double delta = std::clamp(0.5 * (y0 - y2) / denom, -0.5, 0.5);
  const double h = delta >= 0.0 ? t[i + 1] - t[i] : t[i] - t[i - 1];
  return {t[i] + delta * h, y1 - 0.25 * (y0 - y2) * delta};
}

std::size_t arg_extreme(std::span<const double> x, std::size_t from, std::size_t to, bool max) {
  std::size_t best = from;
  for (std::size_t i = from; i < to; ++i) {
    if (max ? x[i] > x[best] : x[i] < x[best]) best = i;
  }
  return best;
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

OscillationStats summarize(const std::vector<double>& periods,
                           const std::vector<double>& amplitudes) {
  OscillationStats stats;
  stats.n_periods = static_cast<int>(periods.size());
  stats.period_mean_s = mean(periods);
  stats.period_std_s = sample_std(periods);
  std::vector<double> ratios;
  for (std::size_t k = 1; k < amplitudes.size(); ++k) {
    if (amplitudes[k - 1] > 0.0) ratios.push_back(amplitudes[k] / amplitudes[k - 1]);
  }
  stats.decay_ratio = ratios.empty() ? 0.0 : mean(ratios);
  return stats;
}

}  // namespace

OscillationStats measure_oscillation(std::span<const double> t, std::span<const double> pv,
                                     const OscillationOptions& options) {
  if (t.size() != pv.size()) throw InvalidInput("time and value series differ in length");
  if (t.size() < 3) throw TooFewCycles("series has fewer than 3 samples");

  const double start = t.front() + options.warmup_fraction * (t.back() - t.front());
  const auto first = static_cast<std::size_t>(
      std::lower_bound(t.begin(), t.end(), start) - t.begin());
  const std::span<const double> wt = t.subspan(first);
  const std::span<const double> wx = pv.subspan(first);
  if (wx.size() < 3) throw TooFewCycles("no samples after warm-up");

  const auto [lo, hi] = std::minmax_element(wx.begin(), wx.end());
  if (*hi - *lo < options.resolution) {
    throw FlatSignal("peak-to-peak amplitude " + std::to_string(*hi - *lo) +
                     " is below the resolution threshold");
  }

  const double ref = options.reference.value_or(
      std::accumulate(wx.begin(), wx.end(), 0.0) / static_cast<double>(wx.size()));

  // Upward crossings of the reference, linearly interpolated.
  std::vector<std::size_t> cross_idx;
  std::vector<double> cross_t;
  for (std::size_t i = 1; i < wx.size(); ++i) {
    if (wx[i - 1] < ref && wx[i] >= ref) {
      cross_idx.push_back(i);
      cross_t.push_back(wt[i - 1] + (ref - wx[i - 1]) / (wx[i] - wx[i - 1]) * (wt[i] - wt[i - 1]));
    }
  }

  const std::size_t cap = options.max_cycles > 0 ? static_cast<std::size_t>(options.max_cycles)
                                                 : std::numeric_limits<std::size_t>::max();
  std::vector<double> periods;
  std::vector<double> amplitudes;

  if (cross_t.size() >= static_cast<std::size_t>(options.min_cycles) + 1) {
    for (std::size_t k = 0; k + 1 < cross_t.size() && periods.size() < cap; ++k) {
      periods.push_back(cross_t[k + 1] - cross_t[k]);
      const std::size_t imax = arg_extreme(wx, cross_idx[k], cross_idx[k + 1], true);
      const std::size_t imin = arg_extreme(wx, cross_idx[k], cross_idx[k + 1], false);
      amplitudes.push_back(refine(wt, wx, imax).value - refine(wt, wx, imin).value);
    }
  } else {
    // Peak-to-peak fallback for oscillations that do not straddle the reference.
    std::vector<std::size_t> maxima;
    for (std::size_t i = 1; i + 1 < wx.size(); ++i) {
      if (wx[i] > wx[i - 1] && wx[i] >= wx[i + 1]) maxima.push_back(i);
    }
    for (std::size_t k = 0; k + 1 < maxima.size() && periods.size() < cap; ++k) {
      const Extremum a = refine(wt, wx, maxima[k]);
      const Extremum b = refine(wt, wx, maxima[k + 1]);
      periods.push_back(b.t - a.t);
      const std::size_t imin = arg_extreme(wx, maxima[k], maxima[k + 1], false);
      amplitudes.push_back(a.value - refine(wt, wx, imin).value);
    }
  }

  if (periods.size() < static_cast<std::size_t>(std::max(options.min_cycles, 1))) {
    throw TooFewCycles("detected " + std::to_string(periods.size()) + " cycles, need " +
                       std::to_string(options.min_cycles));
  }
  return summarize(periods, amplitudes);
}

void TuningOptions::validate() const {
  if (!(tol > 0.0 && tol < 1.0)) throw ValidationError("tol", "must lie in (0, 1)");
  if (max_iterations < 1) throw ValidationError("max_iterations", "must be >= 1");
  if (!(dt > 0.0 && dt <= 1.0)) throw ValidationError("dt", "must lie in (0, 1]");
  if (!(kick_pct > 0.0)) throw ValidationError("kick_pct", "must be > 0");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
    throw ValidationError("warmup_fraction", "must lie in [0, 1)");
  }
  if (min_cycles < 2) throw ValidationError("min_cycles", "must be >= 2");
  if (max_cycles < min_cycles) throw ValidationError("max_cycles", "must be >= min_cycles");
}

namespace {

// Uniform P-loop view of the two plant families.
class LoopProcess {
 public:
  virtual ~LoopProcess() = default;
  virtual double pv() const = 0;
  /// Returns false when the process hit a physical bound.
  virtual bool step(double u_pct) = 0;
  virtual double equilibrium_output_pct(double sp) const = 0;
  virtual void settle(double pv, double u_pct) = 0;
};

class TankProcess final : public LoopProcess {
 public:
  TankProcess(const PlantConfig& config, const TuningOptions& options)
      : sim_(config, options.dt) {
    sim_.set_inlet_limit(options.inlet_limit);
    sim_.set_load_fraction(options.load_fraction);
  }

  double pv() const override { return measure(sim_.state(), sim_.config().sensor).level_pct; }

  bool step(double u_pct) override {
    sim_.step(u_pct / 100.0 * kOutputMaxV);
    return !sim_.state().clamped_last_step;
  }

  double equilibrium_output_pct(double sp) const override {
    const PlantConfig& cfg = sim_.config();
    const double h = cfg.sensor.level_for_percent(sp);
    if (h > cfg.tank.h_max) throw ValidationError("sp", "setpoint lies above the tank top");
    const double q_out = outflow_rate(h, cfg.tank, sim_.load_fraction());
    const double q_full = sim_.inlet_limit() * cfg.tank.q_in_max;
    if (q_full <= 0.0 || q_out > q_full) {
      throw ValidationError("sp", "setpoint cannot be held with the configured vanes");
    }
    return 100.0 * q_out / q_full;
  }

  void settle(double pv, double u_pct) override {
    const PlantConfig& cfg = sim_.config();
    PlantState s;
    s.h = std::clamp(cfg.sensor.level_for_percent(pv), 0.0, cfg.tank.h_max);
    s.valve_opening = u_pct / 100.0;
    s.q_in = s.valve_opening * sim_.inlet_limit() * cfg.tank.q_in_max;
    s.q_out = outflow_rate(s.h, cfg.tank, sim_.load_fraction());
    sim_.reset(s, u_pct / 100.0 * kOutputMaxV);
  }

 private:
  TankSimulator sim_;
};

class TransferFunctionProcess final : public LoopProcess {
 public:
  TransferFunctionProcess(const TransferFunctionConfig& config, const TuningOptions& options)
      : config_(config), sim_(config, options.dt) {}

  double pv() const override { return sim_.pv_pct(); }

  bool step(double u_pct) override {
    sim_.step(u_pct);
    return std::isfinite(sim_.pv_pct());
  }

  double equilibrium_output_pct(double sp) const override {
    const double u = config_.is_integrating()
                         ? config_.u_ref_pct
                         : config_.u_ref_pct + (sp - config_.pv_ref_pct) / config_.gain;
    if (!(u >= 0.0 && u <= 100.0)) {
      throw ValidationError("sp", "setpoint needs an output outside [0, 100] %");
    }
    return u;
  }

  void settle(double pv, double u_pct) override {
    // Deviation state consistent with the held input, then offset by the kick.
    sim_.settle(pv, u_pct);
  }

 private:
  TransferFunctionConfig config_;
  TransferFunctionSimulator sim_;
};

std::unique_ptr<LoopProcess> make_process(const LoopPlant& plant, const TuningOptions& options) {
  if (const auto* tank = std::get_if<PlantConfig>(&plant)) {
    return std::make_unique<TankProcess>(*tank, options);
  }
  return std::make_unique<TransferFunctionProcess>(std::get<TransferFunctionConfig>(plant),
                                                   options);
}

void require_oscillation_capable(const LoopPlant& plant) {
  if (const auto* tank = std::get_if<PlantConfig>(&plant)) {
    tank->validate();
    if (tank->valve.travel_time_s == 0.0 && tank->dead_time_s == 0.0) {
      throw PureFirstOrderPlant(
          "tank loop has neither valve travel time nor dead time; a first-order loop cannot "
          "sustain oscillation under P control");
    }
    return;
  }
  const auto& tf = std::get<TransferFunctionConfig>(plant);
  tf.validate();
  if (tf.dead_time_s == 0.0) {
    throw PureFirstOrderPlant("test plant has no dead time and cannot sustain oscillation");
  }
}

double characteristic_lag(const LoopPlant& plant) {
  if (const auto* tank = std::get_if<PlantConfig>(&plant)) {
    return tank->dead_time_s + tank->valve.travel_time_s;
  }
  return std::get<TransferFunctionConfig>(plant).dead_time_s;
}

struct Classification {
  double decay_ratio = 0.0;
  std::optional<OscillationStats> stats;
};

}  // namespace

ProportionalTrial run_proportional_trial(const LoopPlant& plant, double setpoint_pct, double kp,
                                         double horizon_s, const TuningOptions& options) {
  options.validate();
  if (!(kp > 0.0)) throw ValidationError("kp", "must be > 0");
  auto process = make_process(plant, options);

  ProportionalTrial trial;
  trial.bias_pct = process->equilibrium_output_pct(setpoint_pct);
  const double headroom = std::min(trial.bias_pct, 100.0 - trial.bias_pct);
  trial.kick_pct =
      std::min({options.kick_pct, 0.25 * headroom / kp, 0.5 * setpoint_pct});
  process->settle(setpoint_pct - trial.kick_pct, trial.bias_pct);

  const Gains gains{kp, 0.0, 0.0};
  PidOptions pid_options;
  pid_options.output_bias_pct = trial.bias_pct;
  ControllerState state;

  const auto steps = static_cast<std::size_t>(std::ceil(horizon_s / options.dt));
  trial.t.reserve(steps + 1);
  trial.pv.reserve(steps + 1);
  trial.t.push_back(0.0);
  trial.pv.push_back(process->pv());
  for (std::size_t k = 1; k <= steps; ++k) {
    const PidStep out =
        pid_step(gains, ControllerMode::P, setpoint_pct, process->pv(), state, options.dt,
                 pid_options);
    state = out.state;
    const bool in_bounds = process->step(out.output_v / kOutputMaxV * 100.0);
    trial.t.push_back(static_cast<double>(k) * options.dt);
    trial.pv.push_back(process->pv());
    if (out.saturated || !in_bounds) {
      trial.saturated = true;
      break;
    }
  }
  return trial;
}

namespace {

Classification classify(const LoopPlant& plant, double sp, double kp, double base_horizon,
                        const TuningOptions& options) {
  double horizon = base_horizon;
  for (int attempt = 0; attempt < 7; ++attempt, horizon *= 2.0) {
    const ProportionalTrial trial = run_proportional_trial(plant, sp, kp, horizon, options);
    if (trial.saturated) return {std::numeric_limits<double>::infinity(), std::nullopt};
    OscillationOptions osc;
    osc.warmup_fraction = options.warmup_fraction;
    osc.reference = sp;
    osc.resolution = 1e-6 * trial.kick_pct;
    osc.min_cycles = options.min_cycles;
    osc.max_cycles = options.max_cycles;
    try {
      const OscillationStats stats = measure_oscillation(trial.t, trial.pv, osc);
      return {stats.decay_ratio, stats};
    } catch (const FlatSignal&) {
      return {0.0, std::nullopt};
    } catch (const TooFewCycles&) {
      // Either overdamped or the horizon is too short; extend and retry.
    }
  }
  return {0.0, std::nullopt};
}

UltimateGainResult accept(double kp, const OscillationStats& stats, int iterations) {
  UltimateGainResult r;
  r.ku = kp;
  r.pu_s = stats.period_mean_s;
  r.periods_used = stats.n_periods;
  r.period_std_s = stats.period_std_s;
  r.decay_ratio = stats.decay_ratio;
  r.iterations = iterations;
  return r;
}

}  // namespace

UltimateGainResult find_ultimate_gain(const LoopPlant& plant, double setpoint_pct, double kp_lo,
                                      double kp_hi, const TuningOptions& options) {
  options.validate();
  require_oscillation_capable(plant);
  if (!(setpoint_pct > 0.0 && setpoint_pct < 100.0)) {
    throw ValidationError("sp", "must lie in (0, 100)");
  }
  if (!(kp_lo > 0.0) || !(kp_hi > kp_lo) || !std::isfinite(kp_hi)) {
    throw ValidationError("kp", "bracket must satisfy 0 < kp_lo < kp_hi");
  }

  // Enough horizon for min_cycles after warm-up when Pu ≈ 4 × lag.
  const double lag = std::max(characteristic_lag(plant), 10.0 * options.dt);
  const double base_horizon =
      4.0 * lag * (options.min_cycles + 3) / (1.0 - options.warmup_fraction);

  auto within = [&](const Classification& c) {
    return c.stats && std::abs(c.decay_ratio - 1.0) <= options.tol;
  };

  const Classification at_lo = classify(plant, setpoint_pct, kp_lo, base_horizon, options);
  if (within(at_lo)) return accept(kp_lo, *at_lo.stats, 0);
  if (at_lo.decay_ratio > 1.0) {
    throw NoBracket("loop does not decay at kp_lo=" + std::to_string(kp_lo));
  }
  const Classification at_hi = classify(plant, setpoint_pct, kp_hi, base_horizon, options);
  if (within(at_hi)) return accept(kp_hi, *at_hi.stats, 0);
  if (at_hi.decay_ratio < 1.0) {
    throw NoBracket("loop does not diverge at kp_hi=" + std::to_string(kp_hi));
  }

  double lo = kp_lo;
  double hi = kp_hi;
  for (int iteration = 1; iteration <= options.max_iterations; ++iteration) {
    const double mid = std::sqrt(lo * hi);
    const Classification c = classify(plant, setpoint_pct, mid, base_horizon, options);
    if (within(c)) return accept(mid, *c.stats, iteration);
    if (c.decay_ratio < 1.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  throw NoConvergence("no sustained oscillation within " +
                      std::to_string(options.max_iterations) + " iterations (bracket " +
                      std::to_string(lo) + ".." + std::to_string(hi) + ")");
}

}  // namespace hydrolab
