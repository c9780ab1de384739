#ifndef HYDROLAB_TIMESERIES_HPP_
#define HYDROLAB_TIMESERIES_HPP_

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "hydrolab/control.hpp"
#include "hydrolab/plant.hpp"

namespace hydrolab {

/// One logged control step. `t_s` is the end of the step; `u_volts` and
/// `q_in` are the values held during it.
struct TimeSeriesRow {
  double t_s = 0.0;
  double level_m = 0.0;
  double level_pct = 0.0;
  double sp_pct = 0.0;
  double error_pct = 0.0;
  double u_volts = 0.0;
  double valve_frac = 0.0;
  double q_in = 0.0;
  double q_out = 0.0;
  ControllerMode mode = ControllerMode::PID;
  /// Level hit a tank bound during the step. Not part of the CSV.
  bool clamped = false;
};

struct TimeSeries {
  PlantState initial;
  std::vector<TimeSeriesRow> rows;
};

inline constexpr std::string_view kCsvHeader =
    "t_s,level_m,level_pct,sp_pct,error_pct,u_volts,valve_frac,q_in_m3s,q_out_m3s,mode";

/// Shortest decimal with at most 9 significant digits; zero prints as "0".
std::string format_csv_number(double value);

std::string csv_row(const TimeSeriesRow& row);
void write_csv(std::ostream& out, const TimeSeries& series);
std::string to_csv(const TimeSeries& series);

/// Parses a log written by write_csv. Throws ValidationError with the
/// offending line on malformed input.
TimeSeries read_csv(std::istream& in);

}  // namespace hydrolab

#endif  // HYDROLAB_TIMESERIES_HPP_
