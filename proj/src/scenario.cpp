#include "hydrolab/scenario.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "hydrolab/error.hpp"

namespace hydrolab {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check_pct(double v, const char* field) {
  if (!(v >= 0.0 && v <= 100.0)) {
    throw ValidationError(field, "must lie in [0, 100], got " + std::to_string(v));
  }
}

void check_fraction(double v, const char* field) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw ValidationError(field, "must lie in [0, 1], got " + std::to_string(v));
  }
}

void check_gain(const std::optional<double>& v, const char* field) {
  if (v && !(*v >= 0.0 && std::isfinite(*v))) {
    throw ValidationError(field, "must be a finite value >= 0");
  }
}

}  // namespace

void validate_action(const ScenarioAction& action) {
  std::visit(overloaded{
                 [](const SetSetpoint& a) { check_pct(a.pct, "sp"); },
                 [](const SetOutputLoad& a) { check_fraction(a.fraction, "outload"); },
                 [](const SetInputLimit& a) { check_fraction(a.fraction, "inlimit"); },
                 [](const SetMode& a) {
                   check_gain(a.kp, "kp");
                   check_gain(a.ki, "ki");
                   check_gain(a.kd, "kd");
                   if (a.sp) check_pct(*a.sp, "sp");
                   if (a.hyst && !(*a.hyst > 0.0 && *a.hyst <= 100.0)) {
                     throw ValidationError("hyst", "must lie in (0, 100]");
                   }
                 },
                 [](const SetGains& a) { a.gains.validate(); },
                 [](const SetOnOff& a) { OnOffConfig{a.sp_pct, a.hyst_pct}.validate(); },
             },
             action);
}

ControllerSetup with_action(ControllerSetup setup, const ScenarioAction& action) {
  std::visit(overloaded{
                 [&](const SetSetpoint& a) { setup.setpoint_pct = a.pct; },
                 [](const SetOutputLoad&) {},
                 [](const SetInputLimit&) {},
                 [&](const SetMode& a) {
                   setup.mode = a.mode;
                   if (a.kp) setup.gains.kp = *a.kp;
                   if (a.ki) setup.gains.ki = *a.ki;
                   if (a.kd) setup.gains.kd = *a.kd;
                   if (a.sp) setup.setpoint_pct = *a.sp;
                   if (a.hyst) setup.hysteresis_pct = *a.hyst;
                 },
                 [&](const SetGains& a) { setup.gains = a.gains; },
                 [&](const SetOnOff& a) {
                   setup.setpoint_pct = a.sp_pct;
                   setup.hysteresis_pct = a.hyst_pct;
                 },
             },
             action);
  return setup;
}

void apply_action(ControlLoop& loop, const ScenarioAction& action) {
  validate_action(action);
  if (const auto* load = std::get_if<SetOutputLoad>(&action)) {
    loop.plant().set_load_fraction(load->fraction);
  } else if (const auto* limit = std::get_if<SetInputLimit>(&action)) {
    loop.plant().set_inlet_limit(limit->fraction);
  } else {
    loop.controller().reconfigure(with_action(loop.controller().setup(), action));
  }
}

PlantConfig InlinePlant::resolve() const {
  PlantConfig cfg;
  if (capacitance) cfg.tank.capacitance = *capacitance;
  if (resistance) cfg.tank.resistance = *resistance;
  if (h_max) cfg.tank.h_max = *h_max;
  if (q_max) cfg.tank.q_in_max = *q_max;
  if (outflow) cfg.tank.outflow = *outflow;
  if (travel) cfg.valve.travel_time_s = *travel;
  if (dead_time) cfg.dead_time_s = *dead_time;
  cfg.validate();
  return cfg;
}

ControllerSetup ControlSpec::resolve() const {
  ControllerSetup setup;
  setup.mode = mode;
  setup.gains = {kp.value_or(0.0), ki.value_or(0.0), kd.value_or(0.0)};
  if (sp) setup.setpoint_pct = *sp;
  if (hyst) setup.hysteresis_pct = *hyst;
  setup.validate();
  return setup;
}

std::size_t Scenario::step_count() const {
  return static_cast<std::size_t>(std::llround(duration_s / dt_s));
}

namespace {

void validate_header(const Scenario& s) {
  if (s.name.empty()) throw ValidationError("scenario", "name must not be empty");
  if (s.name.find_first_of("\"\n\r") != std::string::npos) {
    throw ValidationError("scenario", "name must not contain quotes or line breaks");
  }
  if (!(s.duration_s > 0.0) || !std::isfinite(s.duration_s)) {
    throw ValidationError("duration", "must be > 0");
  }
  if (!(s.dt_s > 0.0 && s.dt_s <= 1.0)) throw ValidationError("dt", "must lie in (0, 1] s");
  if (s.step_count() < 1) throw ValidationError("duration", "must cover at least one dt");
  if (const auto* inline_plant = std::get_if<InlinePlant>(&s.plant)) inline_plant->resolve();
}

void validate_event(const ScenarioEvent& e, double previous_at, double duration,
                    ControllerSetup& setup) {
  if (!(e.at_s >= 0.0) || !std::isfinite(e.at_s)) throw ValidationError("at", "must be >= 0");
  if (e.at_s < previous_at) {
    throw ValidationError("at", "events must be sorted by time");
  }
  if (e.at_s > duration) throw ValidationError("at", "event lies beyond the run duration");
  validate_action(e.action);
  setup = with_action(setup, e.action);
  setup.validate();
}

}  // namespace

void Scenario::validate() const {
  validate_header(*this);
  ControllerSetup setup = control.resolve();
  double previous = 0.0;
  for (const ScenarioEvent& e : events) {
    validate_event(e, previous, duration_s, setup);
    previous = e.at_s;
  }
}

// --- parsing ---------------------------------------------------------------

namespace {

struct Token {
  std::string text;
  int column = 0;
  bool quoted = false;
};

std::vector<Token> tokenize(std::string_view line, int line_no) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    const char c = line[i];
    if (c == ' ' || c == '\t' || c == '\r') {
      ++i;
      continue;
    }
    Token tok;
    tok.column = static_cast<int>(i) + 1;
    if (c == '"') {
      const std::size_t close = line.find('"', i + 1);
      if (close == std::string_view::npos) {
        throw SyntaxError({line_no, tok.column}, "unterminated string");
      }
      tok.text = std::string(line.substr(i + 1, close - i - 1));
      tok.quoted = true;
      i = close + 1;
    } else if (c == '{' || c == '}') {
      tok.text = std::string(1, c);
      ++i;
    } else {
      const std::size_t end = line.find_first_of(" \t\r{}\"", i);
      tok.text = std::string(line.substr(i, end == std::string_view::npos ? end : end - i));
      i = end == std::string_view::npos ? line.size() : end;
    }
    tokens.push_back(std::move(tok));
  }
  return tokens;
}

class LineParser {
 public:
  LineParser(std::vector<Token> tokens, int line_no)
      : tokens_(std::move(tokens)), line_(line_no) {}

  SourceLocation where(std::size_t index) const {
    if (index < tokens_.size()) return {line_, tokens_[index].column};
    const int col = tokens_.empty() ? 1
                                    : tokens_.back().column +
                                          static_cast<int>(tokens_.back().text.size());
    return {line_, col};
  }

  [[noreturn]] void fail(std::size_t index, const std::string& message) const {
    throw SyntaxError(where(index), message);
  }

  std::size_t size() const { return tokens_.size(); }
  const Token& at(std::size_t index) const {
    if (index >= tokens_.size()) fail(index, "unexpected end of line");
    return tokens_[index];
  }

  double number(std::size_t index, std::string_view text, std::string_view suffix = {}) const {
    if (!suffix.empty()) {
      if (text.size() <= suffix.size() || !text.ends_with(suffix)) {
        fail(index, "expected a number with unit '" + std::string(suffix) + "', got '" +
                        std::string(text) + "'");
      }
      text.remove_suffix(suffix.size());
    }
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value)) {
      fail(index, "expected a number, got '" + std::string(text) + "'");
    }
    return value;
  }

  /// Parses `key=value` tokens from `first` on into an ordered map.
  std::map<std::string, std::pair<std::string, std::size_t>> key_values(
      std::size_t first, std::size_t last, std::initializer_list<std::string_view> allowed) const {
    std::map<std::string, std::pair<std::string, std::size_t>> out;
    for (std::size_t i = first; i < last; ++i) {
      const std::string& t = at(i).text;
      const auto eq = t.find('=');
      if (eq == std::string::npos || eq == 0) fail(i, "expected key=value, got '" + t + "'");
      const std::string key = t.substr(0, eq);
      bool known = false;
      for (std::string_view a : allowed) known = known || a == key;
      if (!known) fail(i, "unknown key '" + key + "'");
      if (out.contains(key)) fail(i, "duplicate key '" + key + "'");
      out.emplace(key, std::make_pair(t.substr(eq + 1), i));
    }
    return out;
  }

  std::optional<double> optional_number(
      const std::map<std::string, std::pair<std::string, std::size_t>>& kv,
      const std::string& key) const {
    const auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    return number(it->second.second, it->second.first);
  }

  int line() const { return line_; }

 private:
  std::vector<Token> tokens_;
  int line_;
};

struct Pending {
  std::optional<SourceLocation> scenario, plant, control, run;
};

template <typename F>
void with_location(SourceLocation where, F&& f) {
  try {
    f();
  } catch (const ValidationError& e) {
    if (e.where()) throw;
    // Strip the "field: " prefix that ValidationError adds to its message.
    std::string message = e.what();
    const std::string prefix = e.field() + ": ";
    if (message.rfind(prefix, 0) == 0) message.erase(0, prefix.size());
    throw ValidationError(e.field(), message, where);
  }
}

void parse_plant(const LineParser& p, Scenario& s) {
  if (p.size() == 2 && !p.at(1).quoted && p.at(1).text != "{") {
    s.plant = p.at(1).text;
    return;
  }
  if (p.size() < 3 || p.at(1).text != "{") p.fail(1, "expected a preset name or '{'");
  if (p.at(p.size() - 1).text != "}") p.fail(p.size(), "expected '}' to close the plant block");
  const auto kv = p.key_values(2, p.size() - 1,
                               {"C", "R", "hmax", "qmax", "outflow", "travel", "deadtime"});
  InlinePlant plant;
  plant.capacitance = p.optional_number(kv, "C");
  plant.resistance = p.optional_number(kv, "R");
  plant.h_max = p.optional_number(kv, "hmax");
  plant.q_max = p.optional_number(kv, "qmax");
  plant.travel = p.optional_number(kv, "travel");
  plant.dead_time = p.optional_number(kv, "deadtime");
  if (const auto it = kv.find("outflow"); it != kv.end()) {
    if (it->second.first == "linear") {
      plant.outflow = OutflowModel::LinearResistance;
    } else if (it->second.first == "torricelli") {
      plant.outflow = OutflowModel::Torricelli;
    } else {
      p.fail(it->second.second, "outflow must be linear or torricelli");
    }
  }
  with_location(p.where(0), [&] { plant.resolve(); });
  s.plant = plant;
}

ControllerMode parse_mode_token(const LineParser& p, std::size_t index) {
  try {
    return parse_mode(p.at(index).text);
  } catch (const ValidationError&) {
    p.fail(index, "unknown controller mode '" + p.at(index).text + "'");
  }
}

void parse_control(const LineParser& p, Scenario& s) {
  ControlSpec spec;
  spec.mode = parse_mode_token(p, 1);
  const auto kv = p.key_values(2, p.size(), {"kp", "ki", "kd", "sp", "hyst"});
  spec.kp = p.optional_number(kv, "kp");
  spec.ki = p.optional_number(kv, "ki");
  spec.kd = p.optional_number(kv, "kd");
  spec.sp = p.optional_number(kv, "sp");
  spec.hyst = p.optional_number(kv, "hyst");
  with_location(p.where(0), [&] { spec.resolve(); });
  s.control = spec;
}

void parse_run(const LineParser& p, Scenario& s) {
  const auto kv = p.key_values(1, p.size(), {"duration", "dt"});
  for (const char* key : {"duration", "dt"}) {
    if (!kv.contains(key)) p.fail(p.size(), std::string("run needs ") + key + "=<num>s");
  }
  const auto& [duration, di] = kv.at("duration");
  const auto& [dt, ti] = kv.at("dt");
  s.duration_s = p.number(di, duration, "s");
  s.dt_s = p.number(ti, dt, "s");
}

ScenarioEvent parse_event(const LineParser& p) {
  ScenarioEvent e;
  e.at_s = p.number(1, p.at(1).text, "s");
  if (p.at(2).text != "set") p.fail(2, "expected 'set'");
  const std::string& what = p.at(3).text;
  auto single_value = [&]() {
    if (p.size() != 5) p.fail(std::min<std::size_t>(p.size(), 5), "expected exactly one value");
    return p.number(4, p.at(4).text);
  };
  if (what == "sp") {
    e.action = SetSetpoint{single_value()};
  } else if (what == "outload") {
    e.action = SetOutputLoad{single_value()};
  } else if (what == "inlimit") {
    e.action = SetInputLimit{single_value()};
  } else if (what == "mode") {
    SetMode a;
    a.mode = parse_mode_token(p, 4);
    const auto kv = p.key_values(5, p.size(), {"kp", "ki", "kd", "sp", "hyst"});
    a.kp = p.optional_number(kv, "kp");
    a.ki = p.optional_number(kv, "ki");
    a.kd = p.optional_number(kv, "kd");
    a.sp = p.optional_number(kv, "sp");
    a.hyst = p.optional_number(kv, "hyst");
    e.action = a;
  } else if (what == "gains") {
    const auto kv = p.key_values(4, p.size(), {"kp", "ki", "kd"});
    for (const char* key : {"kp", "ki", "kd"}) {
      if (!kv.contains(key)) p.fail(p.size(), std::string("set gains needs ") + key + "=<num>");
    }
    e.action = SetGains{{*p.optional_number(kv, "kp"), *p.optional_number(kv, "ki"),
                         *p.optional_number(kv, "kd")}};
  } else if (what == "onoff") {
    const auto kv = p.key_values(4, p.size(), {"sp", "hyst"});
    for (const char* key : {"sp", "hyst"}) {
      if (!kv.contains(key)) p.fail(p.size(), std::string("set onoff needs ") + key + "=<num>");
    }
    e.action = SetOnOff{*p.optional_number(kv, "sp"), *p.optional_number(kv, "hyst")};
  } else {
    p.fail(3, "unknown setting '" + what + "' (expected sp|outload|inlimit|mode|gains|onoff)");
  }
  return e;
}

}  // namespace

Scenario parse_scenario(std::string_view text) {
  Scenario s;
  Pending seen;
  std::vector<SourceLocation> event_locations;

  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view line =
        text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    const std::size_t first = line.find_first_not_of(" \t\r");
    if (first == std::string_view::npos || line[first] == '#') continue;

    const LineParser p(tokenize(line, line_no), line_no);
    const std::string& directive = p.at(0).text;
    auto once = [&](std::optional<SourceLocation>& slot) {
      if (slot) p.fail(0, "duplicate '" + directive + "' directive");
      slot = p.where(0);
    };
    if (directive == "scenario") {
      once(seen.scenario);
      if (p.size() != 2 || !p.at(1).quoted) p.fail(1, "expected scenario \"<name>\"");
      s.name = p.at(1).text;
      with_location(p.where(1), [&] {
        if (s.name.empty()) throw ValidationError("scenario", "name must not be empty");
      });
    } else if (directive == "plant") {
      once(seen.plant);
      parse_plant(p, s);
    } else if (directive == "control") {
      once(seen.control);
      parse_control(p, s);
    } else if (directive == "run") {
      once(seen.run);
      parse_run(p, s);
      with_location(p.where(0), [&] {
        Scenario header = s;
        header.name = "x";
        header.plant = std::string("paper_default");
        validate_header(header);
      });
    } else if (directive == "at") {
      s.events.push_back(parse_event(p));
      event_locations.push_back(p.where(1));
    } else {
      p.fail(0, "unknown directive '" + directive + "'");
    }
  }

  const SourceLocation end{line_no, 1};
  if (!seen.scenario) throw SyntaxError(end, "missing 'scenario' directive");
  if (!seen.control) throw SyntaxError(end, "missing 'control' directive");
  if (!seen.run) throw SyntaxError(end, "missing 'run' directive");
  if (!seen.plant) throw SyntaxError(end, "missing 'plant' directive");

  ControllerSetup setup = s.control.resolve();
  double previous = 0.0;
  for (std::size_t i = 0; i < s.events.size(); ++i) {
    with_location(event_locations[i],
                  [&] { validate_event(s.events[i], previous, s.duration_s, setup); });
    previous = s.events[i].at_s;
  }
  return s;
}

// --- serialization ---------------------------------------------------------

namespace {

std::string num(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, end);
}

void put_opt(std::ostringstream& out, const char* key, const std::optional<double>& v) {
  if (v) out << ' ' << key << '=' << num(*v);
}

}  // namespace

std::string serialize(const Scenario& s) {
  std::ostringstream out;
  out << "scenario \"" << s.name << "\"\n";
  if (const auto* preset = std::get_if<std::string>(&s.plant)) {
    out << "plant " << *preset << '\n';
  } else {
    const auto& p = std::get<InlinePlant>(s.plant);
    out << "plant {";
    put_opt(out, "C", p.capacitance);
    put_opt(out, "R", p.resistance);
    put_opt(out, "hmax", p.h_max);
    put_opt(out, "qmax", p.q_max);
    if (p.outflow) out << " outflow=" << to_string(*p.outflow);
    put_opt(out, "travel", p.travel);
    put_opt(out, "deadtime", p.dead_time);
    out << " }\n";
  }
  out << "control " << to_string(s.control.mode);
  put_opt(out, "kp", s.control.kp);
  put_opt(out, "ki", s.control.ki);
  put_opt(out, "kd", s.control.kd);
  put_opt(out, "sp", s.control.sp);
  put_opt(out, "hyst", s.control.hyst);
  out << '\n';
  out << "run duration=" << num(s.duration_s) << "s dt=" << num(s.dt_s) << "s\n";
  for (const ScenarioEvent& e : s.events) {
    out << "at " << num(e.at_s) << "s set ";
    std::visit(overloaded{
                   [&](const SetSetpoint& a) { out << "sp " << num(a.pct); },
                   [&](const SetOutputLoad& a) { out << "outload " << num(a.fraction); },
                   [&](const SetInputLimit& a) { out << "inlimit " << num(a.fraction); },
                   [&](const SetMode& a) {
                     out << "mode " << to_string(a.mode);
                     put_opt(out, "kp", a.kp);
                     put_opt(out, "ki", a.ki);
                     put_opt(out, "kd", a.kd);
                     put_opt(out, "sp", a.sp);
                     put_opt(out, "hyst", a.hyst);
                   },
                   [&](const SetGains& a) {
                     out << "gains kp=" << num(a.gains.kp) << " ki=" << num(a.gains.ki)
                         << " kd=" << num(a.gains.kd);
                   },
                   [&](const SetOnOff& a) {
                     out << "onoff sp=" << num(a.sp_pct) << " hyst=" << num(a.hyst_pct);
                   },
               },
               e.action);
    out << '\n';
  }
  return out.str();
}

Scenario load_scenario_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read scenario file '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_scenario(text.str());
}

PlantConfig resolve_plant(const Scenario& scenario, const PresetLibrary& presets) {
  if (const auto* name = std::get_if<std::string>(&scenario.plant)) {
    return require_tank(presets.find(*name));
  }
  return std::get<InlinePlant>(scenario.plant).resolve();
}

TimeSeries run_scenario(const Scenario& scenario, const PlantConfig& plant,
                        const ControllerSetup& controller) {
  scenario.validate();
  const double dt = scenario.dt_s;
  ControlLoop loop(plant, controller, dt);

  TimeSeries series;
  series.initial = loop.plant().state();
  series.initial.q_out =
      outflow_rate(series.initial.h, plant.tank, loop.plant().load_fraction());
  const std::size_t steps = scenario.step_count();
  series.rows.reserve(steps);

  std::size_t next_event = 0;
  const double eps = 1e-6 * dt;
  for (std::size_t k = 0; k < steps; ++k) {
    const double boundary = static_cast<double>(k) * dt;
    while (next_event < scenario.events.size() &&
           scenario.events[next_event].at_s <= boundary + eps) {
      apply_action(loop, scenario.events[next_event].action);
      ++next_event;
    }
    series.rows.push_back(loop.step());
  }
  return series;
}

TimeSeries run_scenario(const Scenario& scenario, const PresetLibrary& presets) {
  return run_scenario(scenario, resolve_plant(scenario, presets), scenario.control.resolve());
}

}  // namespace hydrolab
