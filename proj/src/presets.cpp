#include "hydrolab/presets.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "hydrolab/error.hpp"

namespace hydrolab {

using nlohmann::json;

namespace {

// Training-rig parameters, with the tank height as the level bound.
constexpr std::string_view kBuiltinPresets = R"json({
  "paper_default": {
    "description": "Training-rig tank (R=2000 s/m^2, C=0.5063 m^2, tau=1012.6 s), 25 s proportional valve, no dead time",
    "plant": {"kind": "tank", "C": 0.5063, "R": 2000, "A": 0.5063, "hmax": 1.0, "qmax": 0.0005,
              "outflow": "linear", "travel": 25, "deadtime": 0},
    "controller": {"mode": "pid", "zn": {"ku": 80, "pu": 36}, "sp": 70, "hyst": 10}
  },
  "paper_like_delay": {
    "description": "paper_default plus a 4 s loop dead time so a finite ultimate gain exists",
    "plant": {"kind": "tank", "C": 0.5063, "R": 2000, "A": 0.5063, "hmax": 1.0, "qmax": 0.0005,
              "outflow": "linear", "travel": 25, "deadtime": 4},
    "controller": {"mode": "pid", "zn": {"ku": 80, "pu": 36}, "sp": 70, "hyst": 10}
  },
  "paper_no_delay": {
    "description": "paper_default with an instantaneous valve and no dead time (pure first-order loop)",
    "plant": {"kind": "tank", "C": 0.5063, "R": 2000, "A": 0.5063, "hmax": 1.0, "qmax": 0.0005,
              "outflow": "linear", "travel": 0, "deadtime": 0},
    "controller": {"mode": "pid", "zn": {"ku": 80, "pu": 36}, "sp": 70, "hyst": 10}
  },
  "geometric_consistent": {
    "description": "Tank capacitance from the 0.15 m diameter (C = A = 0.017671 m^2, tau = 35.3 s)",
    "plant": {"kind": "tank", "C": 0.017671458676442587, "R": 2000, "A": 0.017671458676442587,
              "hmax": 1.0, "qmax": 0.0005, "outflow": "linear", "travel": 25, "deadtime": 0},
    "controller": {"mode": "pid", "zn": {"ku": 80, "pu": 36}, "sp": 70, "hyst": 10}
  },
  "fopdt_test": {
    "description": "Test plant e^(-2s)/(10s+1) in percent units",
    "plant": {"kind": "transfer_function", "gain": 1, "tau": 10, "deadtime": 2,
              "u_ref": 50, "pv_ref": 50}
  },
  "integrator_delay_test": {
    "description": "Test plant e^(-s)/s in percent units",
    "plant": {"kind": "transfer_function", "gain": 1, "tau": 0, "deadtime": 1,
              "u_ref": 50, "pv_ref": 50}
  }
})json";

void reject_unknown_keys(const json& j, std::initializer_list<std::string_view> allowed,
                         std::string_view where) {
  const std::set<std::string_view> keys(allowed);
  for (const auto& [key, _] : j.items()) {
    if (!keys.contains(key)) {
      throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("key '") + key + "' has the wrong type");
  }
}

OutflowModel parse_outflow(const std::string& name) {
  if (name == "linear") return OutflowModel::LinearResistance;
  if (name == "torricelli") return OutflowModel::Torricelli;
  throw ConfigError("outflow must be 'linear' or 'torricelli', got '" + name + "'");
}

TransferFunctionConfig transfer_function_from_json(const json& j) {
  reject_unknown_keys(j, {"kind", "gain", "tau", "deadtime", "u_ref", "pv_ref"}, "plant");
  TransferFunctionConfig tf;
  tf.gain = get_or(j, "gain", tf.gain);
  tf.tau_s = get_or(j, "tau", tf.tau_s);
  tf.dead_time_s = get_or(j, "deadtime", tf.dead_time_s);
  tf.u_ref_pct = get_or(j, "u_ref", tf.u_ref_pct);
  tf.pv_ref_pct = get_or(j, "pv_ref", tf.pv_ref_pct);
  try {
    tf.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  return tf;
}

}  // namespace

PlantConfig plant_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"kind", "C", "R", "A", "hmax", "qmax", "outflow", "torricelli_k", "travel",
                       "v_min", "v_max", "deadtime", "sensor"},
                      "plant");
  PlantConfig cfg;
  cfg.tank.capacitance = get_or(j, "C", cfg.tank.capacitance);
  cfg.tank.resistance = get_or(j, "R", cfg.tank.resistance);
  cfg.tank.area = get_or(j, "A", cfg.tank.area);
  cfg.tank.h_max = get_or(j, "hmax", cfg.tank.h_max);
  cfg.tank.q_in_max = get_or(j, "qmax", cfg.tank.q_in_max);
  cfg.tank.outflow = parse_outflow(get_or<std::string>(j, "outflow", "linear"));
  cfg.tank.torricelli_coeff = get_or(j, "torricelli_k", cfg.tank.torricelli_coeff);
  cfg.valve.travel_time_s = get_or(j, "travel", cfg.valve.travel_time_s);
  cfg.valve.v_min = get_or(j, "v_min", cfg.valve.v_min);
  cfg.valve.v_max = get_or(j, "v_max", cfg.valve.v_max);
  cfg.dead_time_s = get_or(j, "deadtime", cfg.dead_time_s);
  if (j.contains("sensor")) {
    const json& s = j.at("sensor");
    reject_unknown_keys(
        s, {"p_span_pa", "i_min_ma", "i_max_ma", "rho", "g", "noise_std_pct", "noise_seed"},
        "sensor");
    cfg.sensor.p_span_pa = get_or(s, "p_span_pa", cfg.sensor.p_span_pa);
    cfg.sensor.i_min_ma = get_or(s, "i_min_ma", cfg.sensor.i_min_ma);
    cfg.sensor.i_max_ma = get_or(s, "i_max_ma", cfg.sensor.i_max_ma);
    cfg.sensor.rho = get_or(s, "rho", cfg.sensor.rho);
    cfg.sensor.g = get_or(s, "g", cfg.sensor.g);
    cfg.sensor.noise_std_pct = get_or(s, "noise_std_pct", cfg.sensor.noise_std_pct);
    cfg.sensor.noise_seed = get_or(s, "noise_seed", cfg.sensor.noise_seed);
  }
  try {
    cfg.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

ControllerSetup controller_from_json(const json& j) {
  reject_unknown_keys(j, {"mode", "kp", "ki", "kd", "zn", "sp", "hyst"}, "controller");
  ControllerSetup setup;
  try {
    setup.mode = parse_mode(get_or<std::string>(j, "mode", "pid"));
    if (j.contains("zn")) {
      const json& zn = j.at("zn");
      reject_unknown_keys(zn, {"ku", "pu"}, "controller.zn");
      setup.gains = zn_gains(setup.mode, get_or(zn, "ku", 0.0), get_or(zn, "pu", 0.0));
    } else {
      setup.gains = {get_or(j, "kp", 0.0), get_or(j, "ki", 0.0), get_or(j, "kd", 0.0)};
    }
    setup.setpoint_pct = get_or(j, "sp", setup.setpoint_pct);
    setup.hysteresis_pct = get_or(j, "hyst", setup.hysteresis_pct);
    setup.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  return setup;
}

Preset preset_from_json(const json& j, std::string name) {
  if (!j.is_object()) throw ConfigError("preset '" + name + "' must be a JSON object");
  reject_unknown_keys(j, {"description", "plant", "controller"}, "preset");
  if (!j.contains("plant")) throw ConfigError("preset '" + name + "' has no plant");
  Preset preset{std::move(name), get_or<std::string>(j, "description", ""), PlantConfig{},
                std::nullopt};
  const json& plant = j.at("plant");
  const std::string kind = get_or<std::string>(plant, "kind", "tank");
  if (kind == "tank") {
    preset.plant = plant_from_json(plant);
  } else if (kind == "transfer_function") {
    preset.plant = transfer_function_from_json(plant);
  } else {
    throw ConfigError("plant kind must be 'tank' or 'transfer_function', got '" + kind + "'");
  }
  if (j.contains("controller")) preset.controller = controller_from_json(j.at("controller"));
  return preset;
}

json to_json(const PlantConfig& c) {
  return json{{"kind", "tank"},
              {"C", c.tank.capacitance},
              {"R", c.tank.resistance},
              {"A", c.tank.area},
              {"hmax", c.tank.h_max},
              {"qmax", c.tank.q_in_max},
              {"outflow", std::string(to_string(c.tank.outflow))},
              {"torricelli_k", c.tank.torricelli_coeff},
              {"travel", c.valve.travel_time_s},
              {"v_min", c.valve.v_min},
              {"v_max", c.valve.v_max},
              {"deadtime", c.dead_time_s},
              {"sensor",
               {{"p_span_pa", c.sensor.p_span_pa},
                {"i_min_ma", c.sensor.i_min_ma},
                {"i_max_ma", c.sensor.i_max_ma},
                {"rho", c.sensor.rho},
                {"g", c.sensor.g},
                {"noise_std_pct", c.sensor.noise_std_pct},
                {"noise_seed", c.sensor.noise_seed}}}};
}

json to_json(const TransferFunctionConfig& c) {
  return json{{"kind", "transfer_function"}, {"gain", c.gain},         {"tau", c.tau_s},
              {"deadtime", c.dead_time_s},   {"u_ref", c.u_ref_pct}, {"pv_ref", c.pv_ref_pct}};
}

json to_json(const ControllerSetup& s) {
  return json{{"mode", std::string(to_string(s.mode))},
              {"kp", s.gains.kp},
              {"ki", s.gains.ki},
              {"kd", s.gains.kd},
              {"sp", s.setpoint_pct},
              {"hyst", s.hysteresis_pct}};
}

json to_json(const Preset& p) {
  json j;
  j["description"] = p.description;
  j["plant"] = std::visit([](const auto& plant) { return to_json(plant); }, p.plant);
  if (p.controller) j["controller"] = to_json(*p.controller);
  return j;
}

PresetLibrary PresetLibrary::builtin() {
  PresetLibrary lib;
  const json all = json::parse(kBuiltinPresets);
  for (const auto& [name, body] : all.items()) lib.add(preset_from_json(body, name));
  return lib;
}

std::filesystem::path default_preset_dir() { return HYDROLAB_DEFAULT_PRESET_DIR; }

PresetLibrary PresetLibrary::from_environment() {
  PresetLibrary lib = builtin();
  const char* env = std::getenv("HYDROLAB_PRESET_DIR");
  const std::filesystem::path dir = env && *env ? std::filesystem::path(env) : default_preset_dir();
  if (std::filesystem::is_directory(dir)) lib.load_directory(dir);
  return lib;
}

void PresetLibrary::load_directory(const std::filesystem::path& dir) {
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    std::ifstream in(entry.path());
    if (!in) throw IoError("cannot read preset file " + entry.path().string());
    json body;
    try {
      body = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(entry.path().string() + ": " + e.what());
    }
    add(preset_from_json(body, entry.path().stem().string()));
  }
}

void PresetLibrary::add(Preset preset) {
  std::string key = preset.name;
  presets_.insert_or_assign(std::move(key), std::move(preset));
}

const Preset& PresetLibrary::find(std::string_view name) const {
  const auto it = presets_.find(name);
  if (it == presets_.end()) throw ConfigError("unknown preset '" + std::string(name) + "'");
  return it->second;
}

bool PresetLibrary::contains(std::string_view name) const {
  return presets_.find(name) != presets_.end();
}

std::vector<std::string> PresetLibrary::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : presets_) out.push_back(name);
  return out;
}

PlantConfig require_tank(const Preset& preset) {
  if (const auto* tank = std::get_if<PlantConfig>(&preset.plant)) return *tank;
  throw ValidationError("plant", "preset '" + preset.name +
                                     "' is a transfer-function test plant, not a tank");
}

}  // namespace hydrolab
