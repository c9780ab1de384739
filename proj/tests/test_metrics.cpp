#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "hydrolab/error.hpp"
#include "hydrolab/metrics.hpp"

using namespace hydrolab;

namespace {

struct Trace {
  std::vector<double> t, pv, sp;
};

Trace first_order(double tau, double target, double duration, double dt) {
  Trace tr;
  const auto n = static_cast<int>(std::llround(duration / dt));
  for (int i = 0; i <= n; ++i) {
    const double t = i * dt;
    tr.t.push_back(t);
    tr.pv.push_back(target * (1.0 - std::exp(-t / tau)));
    tr.sp.push_back(target);
  }
  return tr;
}

}  // namespace

TEST(Metrics, FirstOrderSettlingTime) {
  const Trace tr = first_order(100.0, 100.0, 3000.0, 0.1);
  const auto m = compute_metrics(tr.t, tr.pv, tr.sp);
  ASSERT_EQ(m.size(), 1u);
  ASSERT_TRUE(m[0].settling_time_s.has_value());
  // 2 % band around a final value of 100: 100·e^(−t/100) = 2.
  const double expected = 100.0 * std::log(50.0);
  EXPECT_NEAR(expected, 391.2023005428146, 1e-9);
  EXPECT_NEAR(*m[0].settling_time_s, expected, 0.1);
  EXPECT_NEAR(m[0].final_value_pct, 100.0, 1e-9);
  EXPECT_NEAR(m[0].steady_state_error_pct, 0.0, 1e-9);
  EXPECT_EQ(m[0].overshoot_pct, 0.0);
  EXPECT_EQ(m[0].step_pct, 100.0);
}

TEST(Metrics, BandWidthChangesSettling) {
  const Trace tr = first_order(100.0, 100.0, 3000.0, 0.1);
  const auto m = compute_metrics(tr.t, tr.pv, tr.sp, 5.0);
  EXPECT_NEAR(*m[0].settling_time_s, 100.0 * std::log(20.0), 0.1);
}

TEST(Metrics, UnderdampedOvershoot) {
  const double zeta = 0.3, wn = 0.1;
  const double wd = wn * std::sqrt(1.0 - zeta * zeta);
  Trace tr;
  for (int i = 0; i <= 20000; ++i) {
    const double t = i * 0.05;
    tr.t.push_back(t);
    const double y = 1.0 - std::exp(-zeta * wn * t) *
                               (std::cos(wd * t) + zeta / std::sqrt(1.0 - zeta * zeta) * std::sin(wd * t));
    tr.pv.push_back(20.0 + 40.0 * y);
    tr.sp.push_back(60.0);
  }
  const auto m = compute_metrics(tr.t, tr.pv, tr.sp);
  const double expected = 100.0 * std::exp(-zeta * std::numbers::pi / std::sqrt(1.0 - zeta * zeta));
  EXPECT_NEAR(m[0].overshoot_pct, expected, 0.01);
  // The largest deviation is the initial error, not the overshoot.
  EXPECT_EQ(m[0].max_deviation_pct, -40.0);
}

TEST(Metrics, SteadyStateErrorIsSetpointMinusFinalValue) {
  Trace tr = first_order(10.0, 58.8, 500.0, 0.1);
  std::fill(tr.sp.begin(), tr.sp.end(), 60.0);
  const auto m = compute_metrics(tr.t, tr.pv, tr.sp);
  EXPECT_NEAR(m[0].steady_state_error_pct, 1.2, 1e-9);
  EXPECT_NEAR(m[0].final_value_pct, 58.8, 1e-9);
}

TEST(Metrics, SegmentsSplitOnSetpointChanges) {
  Trace tr;
  for (int i = 0; i < 300; ++i) {
    tr.t.push_back(i + 1.0);
    tr.sp.push_back(i < 100 ? 40.0 : i < 200 ? 50.0 : 45.0);
    tr.pv.push_back(tr.sp.back());
  }
  const auto m = compute_metrics(tr.t, tr.pv, tr.sp);
  ASSERT_EQ(m.size(), 3u);
  EXPECT_EQ(m[1].segment_start_s, 100.0);
  EXPECT_EQ(m[1].segment_end_s, 200.0);
  EXPECT_EQ(m[1].step_pct, 10.0);
  EXPECT_EQ(m[2].step_pct, -5.0);
  EXPECT_EQ(m[0].step_pct, 0.0);
  for (const auto& seg : m) {
    ASSERT_TRUE(seg.settling_time_s.has_value());
    EXPECT_LE(*seg.settling_time_s, 1.0);
  }
}

TEST(Metrics, DownwardStepOvershoot) {
  Trace tr;
  for (int i = 0; i < 200; ++i) {
    tr.t.push_back(i * 1.0);
    tr.sp.push_back(i < 100 ? 60.0 : 40.0);
    // Dips 2 below the lower setpoint on the way down.
    tr.pv.push_back(i < 100 ? 60.0 : (i < 110 ? 38.0 : 40.0));
  }
  const auto m = compute_metrics(tr.t, tr.pv, tr.sp);
  EXPECT_NEAR(m[1].overshoot_pct, 10.0, 1e-12);
  EXPECT_EQ(m[1].max_deviation_pct, -2.0);
}

TEST(Metrics, UnsettledSegment) {
  Trace tr;
  for (int i = 0; i < 1000; ++i) {
    tr.t.push_back(i * 0.1);
    tr.sp.push_back(50.0);
    tr.pv.push_back(50.0 + 10.0 * std::sin(i * 0.1));
  }
  // Ends on a sample outside the band.
  tr.pv.back() = 65.0;
  const auto m = compute_metrics(tr.t, tr.pv, tr.sp);
  EXPECT_FALSE(m[0].settling_time_s.has_value());
  EXPECT_NE(format_metrics_table(m).find("not_settled"), std::string::npos);
}

TEST(Metrics, ShortSegmentIsAnError) {
  Trace tr;
  for (int i = 0; i < 30; ++i) {
    tr.t.push_back(i);
    tr.sp.push_back(i >= 12 && i < 17 ? 60.0 : 50.0);
    tr.pv.push_back(50.0);
  }
  EXPECT_THROW(compute_metrics(tr.t, tr.pv, tr.sp), SegmentTooShort);
}

TEST(Metrics, InputChecks) {
  const std::vector<double> a{1, 2, 3}, b{1, 2};
  EXPECT_THROW(compute_metrics(a, b, a), InvalidInput);
  EXPECT_THROW(compute_metrics({}, {}, {}), InvalidInput);
  const Trace tr = first_order(1.0, 1.0, 10.0, 0.1);
  EXPECT_THROW(compute_metrics(tr.t, tr.pv, tr.sp, 0.0), ValidationError);
}

TEST(Metrics, TableHasOneRowPerSegment) {
  const Trace tr = first_order(100.0, 100.0, 3000.0, 0.1);
  const std::string table = format_metrics_table(compute_metrics(tr.t, tr.pv, tr.sp));
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 2);
  EXPECT_NE(table.find("391."), std::string::npos);
}
