#include "hydrolab/wire.hpp"

#include <cmath>
#include <initializer_list>
#include <limits>
#include <set>

#include "hydrolab/error.hpp"

namespace hydrolab {

using nlohmann::json;

namespace {

void reject_unknown(const json& args, std::initializer_list<std::string_view> allowed,
                    std::string_view cmd) {
  const std::set<std::string_view> keys(allowed);
  for (const auto& [key, _] : args.items()) {
    if (!keys.contains(key)) {
      throw ValidationError(key, "unknown argument for '" + std::string(cmd) + "'");
    }
  }
}

double number(const json& args, const char* key) {
  if (!args.contains(key)) throw ValidationError(key, "missing");
  const json& v = args.at(key);
  if (!v.is_number()) throw ValidationError(key, "must be a number");
  return v.get<double>();
}

std::optional<double> optional_number(const json& args, const char* key) {
  if (!args.contains(key)) return std::nullopt;
  return number(args, key);
}

std::string text(const json& args, const char* key) {
  if (!args.contains(key)) throw ValidationError(key, "missing");
  const json& v = args.at(key);
  if (!v.is_string()) throw ValidationError(key, "must be a string");
  return v.get<std::string>();
}

// Accepts either "fraction" or the short "f".
double fraction(const json& args) {
  if (args.contains("fraction") && args.contains("f")) {
    throw ValidationError("fraction", "give either 'fraction' or 'f', not both");
  }
  return number(args, args.contains("f") ? "f" : "fraction");
}

template <typename... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <typename... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void put(json& j, const char* key, const std::optional<double>& v) {
  if (v) j[key] = *v;
}

}  // namespace

json speed_to_json(double speed) {
  if (std::isinf(speed)) return "inf";
  return speed;
}

double speed_from_json(const json& j) {
  if (j.is_string() && j.get<std::string>() == "inf") {
    return std::numeric_limits<double>::infinity();
  }
  if (!j.is_number()) throw ValidationError("multiplier", "must be a number or \"inf\"");
  return j.get<double>();
}

Command command_from_json(std::string_view name, const json& args) {
  if (!args.is_object()) throw ValidationError("args", "must be an object");
  Command command;
  if (name == "set_setpoint") {
    reject_unknown(args, {"pct"}, name);
    command = SetSetpoint{number(args, "pct")};
  } else if (name == "set_gains") {
    reject_unknown(args, {"kp", "ki", "kd"}, name);
    command = SetGains{{number(args, "kp"), number(args, "ki"), number(args, "kd")}};
  } else if (name == "set_mode") {
    reject_unknown(args, {"mode", "kp", "ki", "kd", "sp", "hyst"}, name);
    SetMode m;
    m.mode = parse_mode(text(args, "mode"));
    m.kp = optional_number(args, "kp");
    m.ki = optional_number(args, "ki");
    m.kd = optional_number(args, "kd");
    m.sp = optional_number(args, "sp");
    m.hyst = optional_number(args, "hyst");
    command = m;
  } else if (name == "set_on_off") {
    reject_unknown(args, {"sp", "hyst"}, name);
    command = SetOnOff{number(args, "sp"), number(args, "hyst")};
  } else if (name == "set_output_load") {
    reject_unknown(args, {"fraction", "f"}, name);
    command = SetOutputLoad{fraction(args)};
  } else if (name == "set_input_limit") {
    reject_unknown(args, {"fraction", "f"}, name);
    command = SetInputLimit{fraction(args)};
  } else if (name == "start") {
    reject_unknown(args, {}, name);
    command = Start{};
  } else if (name == "pause") {
    reject_unknown(args, {}, name);
    command = Pause{};
  } else if (name == "reset") {
    reject_unknown(args, {}, name);
    command = Reset{};
  } else if (name == "set_speed") {
    reject_unknown(args, {"multiplier"}, name);
    if (!args.contains("multiplier")) throw ValidationError("multiplier", "missing");
    command = SetSpeed{speed_from_json(args.at("multiplier"))};
  } else if (name == "load_scenario") {
    reject_unknown(args, {"name"}, name);
    command = LoadScenario{text(args, "name")};
  } else if (name == "start_tune") {
    reject_unknown(args, {"mode", "sp", "kp_lo", "kp_hi", "tol"}, name);
    StartTune t;
    if (args.contains("mode")) t.mode = parse_mode(text(args, "mode"));
    t.sp = optional_number(args, "sp");
    t.kp_lo = optional_number(args, "kp_lo").value_or(t.kp_lo);
    t.kp_hi = optional_number(args, "kp_hi").value_or(t.kp_hi);
    t.tol = optional_number(args, "tol").value_or(t.tol);
    command = t;
  } else {
    throw ValidationError("cmd", "unknown command '" + std::string(name) + "'");
  }
  validate_command(command);
  return command;
}

json command_args(const Command& command) {
  return std::visit(
      Overloaded{
          [](const SetSetpoint& c) { return json{{"pct", c.pct}}; },
          [](const SetGains& c) {
            return json{{"kp", c.gains.kp}, {"ki", c.gains.ki}, {"kd", c.gains.kd}};
          },
          [](const SetMode& c) {
            json j{{"mode", std::string(to_string(c.mode))}};
            put(j, "kp", c.kp);
            put(j, "ki", c.ki);
            put(j, "kd", c.kd);
            put(j, "sp", c.sp);
            put(j, "hyst", c.hyst);
            return j;
          },
          [](const SetOnOff& c) { return json{{"sp", c.sp_pct}, {"hyst", c.hyst_pct}}; },
          [](const SetOutputLoad& c) { return json{{"fraction", c.fraction}}; },
          [](const SetInputLimit& c) { return json{{"fraction", c.fraction}}; },
          [](const Start&) { return json::object(); },
          [](const Pause&) { return json::object(); },
          [](const Reset&) { return json::object(); },
          [](const SetSpeed& c) { return json{{"multiplier", speed_to_json(c.multiplier)}}; },
          [](const LoadScenario& c) { return json{{"name", c.name}}; },
          [](const StartTune& c) {
            json j{{"mode", std::string(to_string(c.mode))},
                   {"kp_lo", c.kp_lo},
                   {"kp_hi", c.kp_hi},
                   {"tol", c.tol}};
            put(j, "sp", c.sp);
            return j;
          },
      },
      command);
}

Request parse_request(std::string_view text_in, std::optional<std::int64_t>* id_out) {
  json j;
  try {
    j = json::parse(text_in);
  } catch (const json::parse_error& e) {
    throw ValidationError("message", std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("message", "must be a JSON object");

  Request r;
  if (j.contains("id")) {
    const json& id = j.at("id");
    if (!id.is_number_integer()) throw ValidationError("id", "must be an integer");
    r.id = id.get<std::int64_t>();
    if (id_out) *id_out = r.id;
  }
  reject_unknown(j, {"cmd", "args", "id", "at_step"}, "request");
  if (!j.contains("cmd") || !j.at("cmd").is_string()) {
    throw ValidationError("cmd", "missing or not a string");
  }
  if (j.contains("at_step")) {
    const json& at = j.at("at_step");
    if (!at.is_number_unsigned()) throw ValidationError("at_step", "must be an integer >= 0");
    r.at_step = at.get<std::uint64_t>();
  }
  const json args = j.contains("args") ? j.at("args") : json::object();
  r.command = command_from_json(j.at("cmd").get<std::string>(), args);
  return r;
}

std::string request_frame(const Request& request) {
  json j{{"cmd", std::string(command_name(request.command))},
         {"args", command_args(request.command)}};
  if (request.id) j["id"] = *request.id;
  if (request.at_step) j["at_step"] = *request.at_step;
  return j.dump();
}

json to_json(const Snapshot& s) {
  return json{{"step", s.step},
              {"t_s", s.t_s},
              {"level_pct", s.level_pct},
              {"level_m", s.level_m},
              {"setpoint_pct", s.setpoint_pct},
              {"output_v", s.output_v},
              {"valve_frac", s.valve_frac},
              {"q_in", s.q_in},
              {"q_out", s.q_out},
              {"mode", std::string(to_string(s.mode))},
              {"gains", {{"kp", s.gains.kp}, {"ki", s.gains.ki}, {"kd", s.gains.kd}}},
              {"clock", {{"speed", speed_to_json(s.speed)}, {"paused", s.paused}}},
              {"tuning", s.tuning},
              {"alarms", s.alarms()}};
}

Snapshot snapshot_from_json(const json& j) {
  try {
    Snapshot s;
    s.step = j.at("step").get<std::uint64_t>();
    s.t_s = j.at("t_s").get<double>();
    s.level_pct = j.at("level_pct").get<double>();
    s.level_m = j.at("level_m").get<double>();
    s.setpoint_pct = j.at("setpoint_pct").get<double>();
    s.output_v = j.at("output_v").get<double>();
    s.valve_frac = j.at("valve_frac").get<double>();
    s.q_in = j.at("q_in").get<double>();
    s.q_out = j.at("q_out").get<double>();
    s.mode = parse_mode(j.at("mode").get<std::string>());
    const json& g = j.at("gains");
    s.gains = {g.at("kp").get<double>(), g.at("ki").get<double>(), g.at("kd").get<double>()};
    s.speed = speed_from_json(j.at("clock").at("speed"));
    s.paused = j.at("clock").at("paused").get<bool>();
    s.tuning = j.value("tuning", false);
    for (const auto& alarm : j.at("alarms")) {
      const std::string name = alarm.get<std::string>();
      if (name == "overflow") {
        s.overflow = true;
      } else if (name == "underflow") {
        s.underflow = true;
      } else {
        throw ValidationError("alarms", "unknown alarm '" + name + "'");
      }
    }
    return s;
  } catch (const json::exception& e) {
    throw ValidationError("snapshot", e.what());
  }
}

std::string hello_frame(const json& hello) { return json{{"hello", hello}}.dump(); }

std::string ack_frame(std::optional<std::int64_t> id, std::uint64_t applied_at_step,
                      const json& detail) {
  json j;
  j["ack"] = id ? json(*id) : json(nullptr);
  j["applied_at_step"] = applied_at_step;
  if (!detail.is_null()) j["detail"] = detail;
  return j.dump();
}

std::string error_frame(std::optional<std::int64_t> id, std::string_view message) {
  json j;
  j["error"] = id ? json(*id) : json(nullptr);
  j["message"] = message;
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

std::string snapshot_frame(const Snapshot& snapshot) {
  return json{{"snapshot", to_json(snapshot)}}.dump();
}

}  // namespace hydrolab
