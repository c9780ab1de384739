#include "hydrolab/timeseries.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

#include "hydrolab/error.hpp"

namespace hydrolab {

std::string format_csv_number(double value) {
  if (value == 0.0) return "0";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 9);
  if (ec != std::errc{}) throw InvalidInput("cannot format number");
  return std::string(buf, end);
}

std::string csv_row(const TimeSeriesRow& row) {
  std::string line;
  line.reserve(128);
  for (double v : {row.t_s, row.level_m, row.level_pct, row.sp_pct, row.error_pct, row.u_volts,
                   row.valve_frac, row.q_in, row.q_out}) {
    line += format_csv_number(v);
    line += ',';
  }
  line += to_string(row.mode);
  return line;
}

void write_csv(std::ostream& out, const TimeSeries& series) {
  out << kCsvHeader << '\n';
  for (const TimeSeriesRow& row : series.rows) out << csv_row(row) << '\n';
}

std::string to_csv(const TimeSeries& series) {
  std::ostringstream out;
  write_csv(out, series);
  return out.str();
}

namespace {

double parse_field(std::string_view text, int line_no) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ValidationError("csv", "line " + std::to_string(line_no) + ": bad number '" +
                                     std::string(text) + "'");
  }
  return value;
}

}  // namespace

TimeSeries read_csv(std::istream& in) {
  TimeSeries series;
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw ValidationError("csv", "missing or unexpected header row");
  }
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest = line;
    while (true) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != 10) {
      throw ValidationError("csv", "line " + std::to_string(line_no) + ": expected 10 fields");
    }
    TimeSeriesRow row;
    double* targets[] = {&row.t_s,      &row.level_m,   &row.level_pct,
                         &row.sp_pct,   &row.error_pct, &row.u_volts,
                         &row.valve_frac, &row.q_in,    &row.q_out};
    for (std::size_t i = 0; i < 9; ++i) *targets[i] = parse_field(fields[i], line_no);
    row.mode = parse_mode(fields[9]);
    series.rows.push_back(row);
  }
  return series;
}

}  // namespace hydrolab
