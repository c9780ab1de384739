#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hydrolab/control.hpp"
#include "hydrolab/error.hpp"

using namespace hydrolab;

TEST(ModeNames, RoundTrip) {
  for (ControllerMode m : {ControllerMode::OnOff, ControllerMode::P, ControllerMode::PD,
                           ControllerMode::PI, ControllerMode::PID}) {
    EXPECT_EQ(parse_mode(to_string(m)), m);
  }
  EXPECT_THROW(parse_mode("PID"), ValidationError);
  EXPECT_THROW(parse_mode(""), ValidationError);
}

TEST(EffectiveGains, ModesMaskUnusedTerms) {
  const Gains g{2.0, 3.0, 4.0};
  EXPECT_EQ(effective_gains(g, ControllerMode::P), (Gains{2.0, 0.0, 0.0}));
  EXPECT_EQ(effective_gains(g, ControllerMode::PD), (Gains{2.0, 0.0, 4.0}));
  EXPECT_EQ(effective_gains(g, ControllerMode::PI), (Gains{2.0, 3.0, 0.0}));
  EXPECT_EQ(effective_gains(g, ControllerMode::PID), g);
  EXPECT_EQ(effective_gains(g, ControllerMode::OnOff), Gains{});
}

TEST(Gains, RejectNegativeOrNonFinite) {
  EXPECT_THROW((Gains{-1.0, 0.0, 0.0}.validate()), ValidationError);
  EXPECT_THROW((Gains{0.0, NAN, 0.0}.validate()), ValidationError);
  EXPECT_THROW((Gains{0.0, 0.0, INFINITY}.validate()), ValidationError);
  EXPECT_NO_THROW((Gains{0.0, 0.0, 0.0}.validate()));
}

TEST(OnOff, SwitchesAtBandEdgesAndHolds) {
  const OnOffConfig cfg{70.0, 10.0};
  EXPECT_EQ(onoff_step(cfg, 70.0, 10.0), 0.0);
  EXPECT_EQ(onoff_step(cfg, 75.0, 10.0), 0.0);
  EXPECT_EQ(onoff_step(cfg, 60.0, 0.0), 10.0);
  EXPECT_EQ(onoff_step(cfg, 10.0, 0.0), 10.0);
  EXPECT_EQ(onoff_step(cfg, 65.0, 10.0), 10.0);
  EXPECT_EQ(onoff_step(cfg, 65.0, 0.0), 0.0);
}

TEST(OnOff, OutputIsAlwaysAnEndpoint) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> pv(-10.0, 110.0);
  const OnOffConfig cfg{50.0, 5.0};
  double out = 0.0;
  for (int i = 0; i < 10000; ++i) {
    out = onoff_step(cfg, pv(rng), out);
    ASSERT_TRUE(out == 0.0 || out == 10.0);
  }
}

TEST(OnOffConfig, Validation) {
  EXPECT_THROW((OnOffConfig{70.0, 0.0}.validate()), ValidationError);
  EXPECT_THROW((OnOffConfig{5.0, 10.0}.validate()), ValidationError);
  EXPECT_THROW((OnOffConfig{101.0, 10.0}.validate()), ValidationError);
}

TEST(Pid, NullControllerHoldsZeroAndLeavesMemory) {
  ControllerState s;
  s.integral = 12.5;
  s.prev_derivative = 3.0;
  s.primed = true;
  s.prev_measurement_pct = 40.0;
  const PidStep r = pid_step(Gains{}, ControllerMode::PID, 70.0, 30.0, s, 0.1);
  EXPECT_EQ(r.output_v, 0.0);
  EXPECT_EQ(r.state.integral, 12.5);
  EXPECT_EQ(r.state.prev_derivative, 3.0);
}

TEST(Pid, ProportionalOnly) {
  const PidStep r = pid_step(Gains{2.0, 0.0, 0.0}, ControllerMode::P, 60.0, 50.0, {}, 0.1);
  EXPECT_DOUBLE_EQ(r.output_v, 2.0);  // 20 % of 10 V
  EXPECT_FALSE(r.saturated);
  const PidStep sat = pid_step(Gains{20.0, 0.0, 0.0}, ControllerMode::P, 60.0, 50.0, {}, 0.1);
  EXPECT_EQ(sat.output_v, 10.0);
  EXPECT_TRUE(sat.saturated);
  EXPECT_DOUBLE_EQ(sat.raw_pct, 200.0);
  const PidStep neg = pid_step(Gains{2.0, 0.0, 0.0}, ControllerMode::P, 40.0, 50.0, {}, 0.1);
  EXPECT_EQ(neg.output_v, 0.0);
}

TEST(Pid, OutputBiasIsAdded) {
  PidOptions opts;
  opts.output_bias_pct = 30.0;
  const PidStep r = pid_step(Gains{1.0, 0.0, 0.0}, ControllerMode::P, 50.0, 45.0, {}, 0.1, opts);
  EXPECT_DOUBLE_EQ(r.raw_pct, 35.0);
}

TEST(Pid, TrapezoidIntegralOfConstantError) {
  ControllerState s;
  const Gains g{0.0, 0.5, 0.0};
  for (int k = 1; k <= 100; ++k) {
    s = pid_step(g, ControllerMode::PI, 60.0, 50.0, s, 0.1).state;
    ASSERT_NEAR(s.integral, 10.0 * 0.1 * k, 1e-12);
  }
  EXPECT_NEAR(pid_step(g, ControllerMode::PI, 60.0, 50.0, s, 0.1).raw_pct, 0.5 * 101.0, 1e-9);
}

TEST(Pid, TrapezoidIntegralOfRamp) {
  // pv falls linearly, so the error grows linearly; the trapezoid rule is exact.
  ControllerState s;
  const Gains g{0.0, 1.0, 0.0};
  const double dt = 0.25;
  s = pid_step(g, ControllerMode::PI, 50.0, 50.0, s, dt).state;
  for (int k = 1; k <= 40; ++k) {
    s = pid_step(g, ControllerMode::PI, 50.0, 50.0 - 0.1 * k * dt, s, dt).state;
    const double t = k * dt;
    ASSERT_NEAR(s.integral, 0.05 * t * t, 1e-12);
  }
}

TEST(Pid, AntiWindupFreezesIntegralInSaturation) {
  const Gains g{5.0, 1.0, 0.0};
  ControllerState s;
  // Moderate error: the integral grows until the output reaches the top clamp.
  for (int k = 0; k < 2000; ++k) s = pid_step(g, ControllerMode::PI, 60.0, 50.0, s, 0.1).state;
  const double parked = s.integral;
  EXPECT_NEAR(parked, 50.0, 1.0);
  // Large error: saturated from the first sample, integral does not move.
  for (int k = 0; k < 200; ++k) {
    const PidStep r = pid_step(g, ControllerMode::PI, 90.0, 10.0, s, 0.1);
    ASSERT_TRUE(r.saturated);
    ASSERT_EQ(r.output_v, 10.0);
    s = r.state;
  }
  EXPECT_EQ(s.integral, parked);
  // Once the error reverses, the integral unwinds. The first trapezoid still
  // averages in the last positive error.
  const PidStep first = pid_step(g, ControllerMode::PI, 90.0, 95.0, s, 0.1);
  EXPECT_FALSE(first.saturated);
  EXPECT_DOUBLE_EQ(first.state.integral, parked + 0.5 * (80.0 - 5.0) * 0.1);
  const PidStep second = pid_step(g, ControllerMode::PI, 90.0, 95.0, first.state, 0.1);
  EXPECT_LT(second.state.integral, first.state.integral);
}

TEST(Pid, IntegralIsBoundedUnderSustainedSaturation) {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> pv(0.0, 100.0);
  ControllerState s;
  const Gains g{3.0, 0.2, 0.0};
  for (int k = 0; k < 20000; ++k) {
    s = pid_step(g, ControllerMode::PI, 50.0, pv(rng), s, 0.1).state;
    // The integral contribution alone never exceeds what the output can use
    // plus one step of the worst-case error.
    ASSERT_LE(std::abs(g.ki * s.integral), 100.0 + 3.0 * 50.0 + g.ki * 100.0 * 0.1);
  }
}

TEST(Pid, DerivativeOnMeasurementIgnoresSetpointSteps) {
  const Gains g{0.0, 0.0, 2.0};
  ControllerState s = pid_step(g, ControllerMode::PD, 50.0, 50.0, {}, 0.1).state;
  const PidStep r = pid_step(g, ControllerMode::PD, 80.0, 50.0, s, 0.1);
  EXPECT_EQ(r.raw_pct, 0.0);
}

TEST(Pid, FirstSampleAfterResetHasNoDerivativeKick) {
  const Gains g{0.0, 0.0, 2.0};
  EXPECT_EQ(pid_step(g, ControllerMode::PD, 50.0, 20.0, {}, 0.1).raw_pct, 0.0);
}

TEST(Pid, FilteredDerivativeConvergesToRampSlope) {
  const Gains g{0.0, 0.0, 1.0};
  ControllerState s;
  const double dt = 0.01;
  double raw = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const PidStep r = pid_step(g, ControllerMode::PD, 100.0, 100.0 - 2.0 * k * dt, s, dt);
    s = r.state;
    raw = r.raw_pct;
  }
  EXPECT_NEAR(raw, 2.0, 1e-9);
}

TEST(Pid, DerivativeFilterTimeConstant) {
  // Step in pv after priming: D jumps to −Δpv/(Tf + dt), then decays by Tf/(Tf + dt).
  const Gains g{0.0, 0.0, 1.0};
  const double dt = 0.01, tf = 0.1;
  ControllerState s = pid_step(g, ControllerMode::PD, 50.0, 50.0, {}, dt).state;
  PidStep r = pid_step(g, ControllerMode::PD, 50.0, 49.0, s, dt);
  const double d0 = 1.0 / (tf + dt);
  EXPECT_NEAR(r.state.prev_derivative, d0, 1e-12);
  r = pid_step(g, ControllerMode::PD, 50.0, 49.0, r.state, dt);
  EXPECT_NEAR(r.state.prev_derivative, d0 * tf / (tf + dt), 1e-12);
}

TEST(Pid, RejectsNonFinite) {
  EXPECT_THROW(pid_step(Gains{1, 0, 0}, ControllerMode::P, 50.0, NAN, {}, 0.1), InvalidInput);
  EXPECT_THROW(pid_step(Gains{1, 0, 0}, ControllerMode::P, 50.0, 10.0, {}, 0.0), InvalidInput);
}

TEST(Pid, ResetClearsEverything) {
  ControllerState s;
  s.integral = 4.0;
  s.primed = true;
  s.last_output_v = 7.0;
  EXPECT_EQ(reset(s), ControllerState{});
}

TEST(Controller, ModeChangeClearsMemory) {
  Controller c({ControllerMode::PI, {1.0, 1.0, 0.0}, 60.0, 10.0});
  c.step(50.0, 0.1);
  c.step(50.0, 0.1);
  EXPECT_GT(c.state().integral, 0.0);
  c.set_mode(ControllerMode::PID);
  EXPECT_EQ(c.state(), ControllerState{});
}

TEST(Controller, GainChangeKeepsMemory) {
  Controller c({ControllerMode::PI, {1.0, 1.0, 0.0}, 60.0, 10.0});
  c.step(50.0, 0.1);
  const double integral = c.state().integral;
  c.set_gains({2.0, 0.5, 0.0});
  EXPECT_EQ(c.state().integral, integral);
}

TEST(Controller, OnOffMode) {
  Controller c({ControllerMode::OnOff, {}, 70.0, 10.0});
  EXPECT_EQ(c.step(50.0, 0.1), 10.0);
  EXPECT_EQ(c.step(65.0, 0.1), 10.0);
  EXPECT_EQ(c.step(70.0, 0.1), 0.0);
  EXPECT_EQ(c.step(65.0, 0.1), 0.0);
  EXPECT_EQ(c.step(60.0, 0.1), 10.0);
}

TEST(Controller, RejectsInvalidSetup) {
  EXPECT_THROW(Controller({ControllerMode::PID, {}, 120.0, 10.0}), ValidationError);
  EXPECT_THROW(Controller({ControllerMode::OnOff, {}, 5.0, 10.0}), ValidationError);
  Controller c;
  EXPECT_THROW(c.set_setpoint(-1.0), ValidationError);
  EXPECT_THROW(c.set_gains({-1.0, 0.0, 0.0}), ValidationError);
  EXPECT_EQ(c.setpoint(), 50.0);
}
