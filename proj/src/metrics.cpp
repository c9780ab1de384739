#include "hydrolab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "hydrolab/error.hpp"

namespace hydrolab {

namespace {

TransientMetrics analyse_segment(std::span<const double> t, std::span<const double> pv,
                                 double sp, double start_s, double step, double band) {
  TransientMetrics m;
  m.segment_start_s = start_s;
  m.segment_end_s = t.back();
  m.setpoint_pct = sp;
  m.step_pct = step;

  const std::size_t n = pv.size();
  const std::size_t tail = std::max<std::size_t>(1, (n * 5 + 99) / 100);
  double sum = 0.0;
  for (std::size_t i = n - tail; i < n; ++i) sum += pv[i];
  m.final_value_pct = sum / static_cast<double>(tail);
  m.steady_state_error_pct = sp - m.final_value_pct;

  // Last sample outside the band decides settling.
  std::optional<std::size_t> last_outside;
  for (std::size_t i = n; i-- > 0;) {
    if (std::abs(pv[i] - m.final_value_pct) > band) {
      last_outside = i;
      break;
    }
  }
  if (!last_outside) {
    m.settling_time_s = t.front() - start_s;
  } else if (*last_outside + 1 < n) {
    m.settling_time_s = t[*last_outside + 1] - start_s;
  }

  double deviation = 0.0;
  for (double v : pv) {
    if (std::abs(v - sp) > std::abs(deviation)) deviation = v - sp;
  }
  m.max_deviation_pct = deviation;

  if (std::abs(step) >= band) {
    const double beyond = step > 0.0 ? *std::max_element(pv.begin(), pv.end()) - sp
                                     : sp - *std::min_element(pv.begin(), pv.end());
    m.overshoot_pct = std::max(0.0, beyond) / std::abs(step) * 100.0;
  }
  return m;
}

}  // namespace

std::vector<TransientMetrics> compute_metrics(std::span<const double> t,
                                              std::span<const double> pv,
                                              std::span<const double> sp, double band_pct) {
  if (t.empty()) throw InvalidInput("series is empty");
  if (t.size() != pv.size() || t.size() != sp.size()) {
    throw InvalidInput("series columns differ in length");
  }
  if (!(band_pct > 0.0)) throw ValidationError("band", "must be > 0");

  std::vector<TransientMetrics> out;
  std::size_t begin = 0;
  while (begin < t.size()) {
    std::size_t end = begin + 1;
    while (end < t.size() && sp[end] == sp[begin]) ++end;
    const std::size_t n = end - begin;
    if (n < kMinSegmentSamples) {
      throw SegmentTooShort("segment at t=" + std::to_string(t[begin]) + " has " +
                            std::to_string(n) + " samples, need " +
                            std::to_string(kMinSegmentSamples));
    }
    const double start = begin == 0 ? t[0] : t[begin - 1];
    const double step = begin == 0 ? sp[0] - pv[0] : sp[begin] - sp[begin - 1];
    out.push_back(analyse_segment(t.subspan(begin, n), pv.subspan(begin, n), sp[begin], start,
                                  step, band_pct));
    begin = end;
  }
  return out;
}

std::vector<TransientMetrics> compute_metrics(const TimeSeries& series, double band_pct) {
  std::vector<double> t, pv, sp;
  t.reserve(series.rows.size());
  pv.reserve(series.rows.size());
  sp.reserve(series.rows.size());
  for (const TimeSeriesRow& r : series.rows) {
    t.push_back(r.t_s);
    pv.push_back(r.level_pct);
    sp.push_back(r.sp_pct);
  }
  return compute_metrics(t, pv, sp, band_pct);
}

std::string format_metrics_table(const std::vector<TransientMetrics>& metrics) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-4s %10s %10s %8s %8s %12s %10s %10s %10s\n", "seg",
                "start_s", "end_s", "sp_pct", "step", "settling_s", "ss_err", "max_dev",
                "overshoot");
  out += line;
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    const TransientMetrics& m = metrics[i];
    char settling[32];
    if (m.settling_time_s) {
      std::snprintf(settling, sizeof settling, "%.1f", *m.settling_time_s);
    } else {
      std::snprintf(settling, sizeof settling, "not_settled");
    }
    std::snprintf(line, sizeof line, "%-4zu %10.1f %10.1f %8.2f %8.2f %12s %10.3f %10.3f %10.2f\n",
                  i + 1, m.segment_start_s, m.segment_end_s, m.setpoint_pct, m.step_pct, settling,
                  m.steady_state_error_pct, m.max_deviation_pct, m.overshoot_pct);
    out += line;
  }
  return out;
}

}  // namespace hydrolab
