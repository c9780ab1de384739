#ifndef HYDROLAB_SCENARIO_HPP_
#define HYDROLAB_SCENARIO_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "hydrolab/control.hpp"
#include "hydrolab/loop.hpp"
#include "hydrolab/plant.hpp"
#include "hydrolab/presets.hpp"
#include "hydrolab/timeseries.hpp"

namespace hydrolab {

struct SetSetpoint {
  double pct = 0.0;
  bool operator==(const SetSetpoint&) const = default;
};
struct SetOutputLoad {
  double fraction = 1.0;
  bool operator==(const SetOutputLoad&) const = default;
};
struct SetInputLimit {
  double fraction = 1.0;
  bool operator==(const SetInputLimit&) const = default;
};
/// Mode switch with optional gain/setpoint overrides applied together.
struct SetMode {
  ControllerMode mode = ControllerMode::PID;
  std::optional<double> kp, ki, kd, sp, hyst;
  bool operator==(const SetMode&) const = default;
};
struct SetGains {
  Gains gains;
  bool operator==(const SetGains&) const = default;
};
struct SetOnOff {
  double sp_pct = 70.0;
  double hyst_pct = 10.0;
  bool operator==(const SetOnOff&) const = default;
};

using ScenarioAction =
    std::variant<SetSetpoint, SetOutputLoad, SetInputLimit, SetMode, SetGains, SetOnOff>;

/// Range checks shared with runtime commands. Throws ValidationError.
void validate_action(const ScenarioAction& action);

/// Applies an action at a step boundary.
void apply_action(ControlLoop& loop, const ScenarioAction& action);

/// Controller setup after applying a controller-affecting action.
ControllerSetup with_action(ControllerSetup setup, const ScenarioAction& action);

struct ScenarioEvent {
  double at_s = 0.0;
  ScenarioAction action;
  bool operator==(const ScenarioEvent&) const = default;
};

/// Inline `plant { ... }` block; absent keys take the paper_default values.
struct InlinePlant {
  std::optional<double> capacitance, resistance, h_max, q_max, travel, dead_time;
  std::optional<OutflowModel> outflow;

  PlantConfig resolve() const;
  bool operator==(const InlinePlant&) const = default;
};

using PlantSpec = std::variant<std::string, InlinePlant>;

struct ControlSpec {
  ControllerMode mode = ControllerMode::PID;
  std::optional<double> kp, ki, kd, sp, hyst;

  ControllerSetup resolve() const;
  bool operator==(const ControlSpec&) const = default;
};

struct Scenario {
  std::string name;
  PlantSpec plant = std::string("paper_default");
  ControlSpec control;
  double duration_s = 0.0;
  double dt_s = 0.1;
  std::vector<ScenarioEvent> events;

  /// Throws ValidationError.
  void validate() const;
  std::size_t step_count() const;
  bool operator==(const Scenario&) const = default;
};

/// Parses the line-oriented scenario grammar:
///
///   scenario "<name>"
///   plant    <preset> | plant { C=.. R=.. hmax=.. qmax=.. outflow=linear|torricelli travel=.. deadtime=.. }
///   control  <onoff|p|pd|pi|pid> [kp=..] [ki=..] [kd=..] [sp=..] [hyst=..]
///   run      duration=<num>s dt=<num>s
///   at <num>s set sp|outload|inlimit <num>
///   at <num>s set mode <name> [kp=..] [ki=..] [kd=..] [sp=..] [hyst=..]
///   at <num>s set gains kp=.. ki=.. kd=..
///   at <num>s set onoff sp=.. hyst=..
///   # comment
///
/// Throws SyntaxError or ValidationError, both carrying line and column.
Scenario parse_scenario(std::string_view text);

/// Canonical text form; parse_scenario(serialize(s)) == s.
std::string serialize(const Scenario& scenario);

/// Throws IoError when the file cannot be read.
Scenario load_scenario_file(const std::filesystem::path& path);

PlantConfig resolve_plant(const Scenario& scenario, const PresetLibrary& presets);

/// Runs the scenario headless. One row per step; events take effect at the
/// first step boundary at or after their timestamp.
TimeSeries run_scenario(const Scenario& scenario, const PlantConfig& plant,
                        const ControllerSetup& controller);
TimeSeries run_scenario(const Scenario& scenario, const PresetLibrary& presets);

}  // namespace hydrolab

#endif  // HYDROLAB_SCENARIO_HPP_
