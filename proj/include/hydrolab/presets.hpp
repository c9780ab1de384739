#ifndef HYDROLAB_PRESETS_HPP_
#define HYDROLAB_PRESETS_HPP_

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hydrolab/control.hpp"
#include "hydrolab/plant.hpp"
#include "hydrolab/tuning.hpp"

namespace hydrolab {

struct Preset {
  std::string name;
  std::string description;
  LoopPlant plant;
  std::optional<ControllerSetup> controller;
};

/// Named plant/controller presets. Built-ins are always present; JSON files
/// named `<preset>.json` in a preset directory override or extend them.
class PresetLibrary {
 public:
  static PresetLibrary builtin();
  /// Built-ins plus $HYDROLAB_PRESET_DIR, or the shipped preset directory
  /// when the variable is unset.
  static PresetLibrary from_environment();

  void load_directory(const std::filesystem::path& dir);
  void add(Preset preset);

  /// Throws ConfigError for an unknown name.
  const Preset& find(std::string_view name) const;
  bool contains(std::string_view name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, Preset, std::less<>> presets_;
};

/// Throws ValidationError when the preset is a transfer-function test plant.
PlantConfig require_tank(const Preset& preset);

nlohmann::json to_json(const PlantConfig& config);
nlohmann::json to_json(const TransferFunctionConfig& config);
nlohmann::json to_json(const ControllerSetup& setup);
nlohmann::json to_json(const Preset& preset);

PlantConfig plant_from_json(const nlohmann::json& j);
ControllerSetup controller_from_json(const nlohmann::json& j);
/// Throws ConfigError on schema violations.
Preset preset_from_json(const nlohmann::json& j, std::string name);

/// Search directory used when $HYDROLAB_PRESET_DIR is unset.
std::filesystem::path default_preset_dir();

}  // namespace hydrolab

#endif  // HYDROLAB_PRESETS_HPP_
