#ifndef HYDROLAB_METRICS_HPP_
#define HYDROLAB_METRICS_HPP_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hydrolab/timeseries.hpp"

namespace hydrolab {

/// Transient response of one constant-setpoint segment. Percentages are of
/// sensor span except `overshoot_pct`, which is relative to the step size.
struct TransientMetrics {
  double segment_start_s = 0.0;
  double segment_end_s = 0.0;
  double setpoint_pct = 0.0;
  /// Setpoint change that opened the segment (first segment: sp − initial pv).
  double step_pct = 0.0;
  /// Time from segment start after which pv stays within the band around
  /// its final value; empty when the segment never settles.
  std::optional<double> settling_time_s;
  double final_value_pct = 0.0;
  double steady_state_error_pct = 0.0;
  /// Signed pv − sp with the largest magnitude.
  double max_deviation_pct = 0.0;
  double overshoot_pct = 0.0;
};

inline constexpr double kDefaultSettlingBandPct = 2.0;
inline constexpr std::size_t kMinSegmentSamples = 10;

/// One entry per run of equal setpoints. The final value is the mean of the
/// last 5 % of the segment. Throws SegmentTooShort for segments under 10
/// samples and InvalidInput for empty or mismatched series.
std::vector<TransientMetrics> compute_metrics(std::span<const double> t,
                                              std::span<const double> pv,
                                              std::span<const double> sp,
                                              double band_pct = kDefaultSettlingBandPct);

std::vector<TransientMetrics> compute_metrics(const TimeSeries& series,
                                              double band_pct = kDefaultSettlingBandPct);

/// Fixed-width table, one row per segment.
std::string format_metrics_table(const std::vector<TransientMetrics>& metrics);

}  // namespace hydrolab

#endif  // HYDROLAB_METRICS_HPP_
