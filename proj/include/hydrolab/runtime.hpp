#ifndef HYDROLAB_RUNTIME_HPP_
#define HYDROLAB_RUNTIME_HPP_

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "hydrolab/control.hpp"
#include "hydrolab/loop.hpp"
#include "hydrolab/plant.hpp"
#include "hydrolab/presets.hpp"
#include "hydrolab/scenario.hpp"
#include "hydrolab/tuning.hpp"

namespace hydrolab {

// --- commands --------------------------------------------------------------

struct Start {
  bool operator==(const Start&) const = default;
};
struct Pause {
  bool operator==(const Pause&) const = default;
};
/// Plant back to its initial state and controller memory cleared; simulated
/// time keeps running. Pending scenario events and any tuning phase are dropped.
struct Reset {
  bool operator==(const Reset&) const = default;
};
/// Simulated seconds per wall second; +infinity runs unpaced.
struct SetSpeed {
  double multiplier = 1.0;
  bool operator==(const SetSpeed&) const = default;
};
/// Loads `<scenario_dir>/<name>.scn`: adopts its controller setup and
/// schedules its events relative to the current step.
struct LoadScenario {
  std::string name;
  bool operator==(const LoadScenario&) const = default;
};
/// Runs the ultimate-gain search on the live plant, holds the loop at Ku for
/// a few ultimate periods, then installs Ziegler-Nichols gains for `mode`.
struct StartTune {
  ControllerMode mode = ControllerMode::PID;
  std::optional<double> sp;
  double kp_lo = 0.1;
  double kp_hi = 2000.0;
  double tol = 0.05;
  bool operator==(const StartTune&) const = default;
};

using Command = std::variant<SetSetpoint, SetGains, SetMode, SetOnOff, SetOutputLoad,
                             SetInputLimit, Start, Pause, Reset, SetSpeed, LoadScenario, StartTune>;

/// snake_case wire name, e.g. "set_setpoint".
std::string_view command_name(const Command& command);

/// Range checks that need no session state. Throws ValidationError.
void validate_command(const Command& command);

// --- telemetry ---------------------------------------------------------------

struct Snapshot {
  std::uint64_t step = 0;
  double t_s = 0.0;
  double level_pct = 0.0;
  double level_m = 0.0;
  double setpoint_pct = 0.0;
  double output_v = 0.0;
  double valve_frac = 0.0;
  double q_in = 0.0;
  double q_out = 0.0;
  ControllerMode mode = ControllerMode::PID;
  Gains gains;
  double speed = 1.0;
  bool paused = true;
  bool tuning = false;
  bool overflow = false;
  bool underflow = false;

  std::vector<std::string> alarms() const;
  bool operator==(const Snapshot&) const = default;
};

// --- configuration -------------------------------------------------------------

struct SessionConfig {
  PlantConfig plant;
  ControllerSetup controller;
  double dt = 0.1;
  double speed = 1.0;
  /// Preset the config came from, reported in the hello frame.
  std::string preset = "paper_default";
  /// CSV log; `<log>.json` receives the replay record. Empty disables logging.
  std::filesystem::path log_path;
  std::filesystem::path scenario_dir;
  /// Pause automatically once this many steps have been logged.
  std::optional<std::uint64_t> stop_at_step;

  /// Throws ConfigError.
  void validate() const;
};

/// Session config from a preset (the preset's controller when it has one).
/// Throws ConfigError for unknown or non-tank presets.
SessionConfig session_config_from_preset(const PresetLibrary& presets, const std::string& name);

nlohmann::json to_json(const SessionConfig& config);

// --- deterministic core ------------------------------------------------------

/// A command as recorded in the replay schedule.
struct RecordedCommand {
  std::uint64_t step = 0;
  Command command;
  /// Serialized scenario for load_scenario, so replays need no files.
  std::optional<std::string> scenario_text;
};

struct CommandResult {
  std::uint64_t applied_at_step = 0;
  /// Extra ack payload, e.g. the tuning result.
  nlohmann::json detail;
};

/// Single-threaded session state: control loop, clock flags, scheduled
/// scenario events, tuning phase and the CSV log. Everything that touches
/// the trajectory goes through here, which is what makes replays exact.
class Session {
 public:
  explicit Session(SessionConfig config);
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  /// Applies a command at the current step boundary. Throws ValidationError
  /// (or a tuning error) and leaves the session unchanged on failure.
  CommandResult apply(const Command& command);
  /// Variant used by replay: a recorded load_scenario carries its text.
  CommandResult apply(const RecordedCommand& recorded);

  /// Runs one control step, logs it and returns its snapshot.
  Snapshot step();

  Snapshot snapshot() const;
  std::uint64_t step_index() const { return loop_.step_index(); }
  bool paused() const { return paused_; }
  double speed() const { return speed_; }
  bool tuning() const { return tune_.has_value(); }
  const SessionConfig& config() const { return config_; }
  const std::vector<RecordedCommand>& schedule() const { return schedule_; }
  const ControlLoop& loop() const { return loop_; }
  /// Row logged by the most recent step().
  const TimeSeriesRow& last_row() const { return last_row_; }

  /// Flushes the CSV and rewrites the replay record.
  void flush();
  nlohmann::json record() const;

 private:
  struct TunePhase {
    std::uint64_t end_step = 0;
    ControllerSetup before;
    ControllerSetup after;
  };

  CommandResult apply_impl(const Command& command, const std::optional<std::string>& scenario_text);
  void load_scenario(const Scenario& scenario);
  nlohmann::json start_tune(const StartTune& request);
  void finish_tune();

  SessionConfig config_;
  ControlLoop loop_;
  bool paused_ = true;
  double speed_ = 1.0;
  TimeSeriesRow last_row_;
  std::deque<std::pair<std::uint64_t, ScenarioAction>> pending_events_;
  std::optional<TunePhase> tune_;
  std::vector<RecordedCommand> schedule_;
  std::ofstream log_;
};

/// Re-runs a replay record for `steps` steps (the recorded count when unset)
/// and returns the trajectory. Clock commands are ignored.
TimeSeries replay(const nlohmann::json& record, std::optional<std::uint64_t> steps = {});

RecordedCommand recorded_command_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RecordedCommand& recorded);

// --- threaded session ---------------------------------------------------------

/// Outcome delivered for every submitted command: an ack or an error.
struct CommandOutcome {
  bool ok = false;
  std::uint64_t applied_at_step = 0;
  nlohmann::json detail;
  std::string error_kind;
  std::string message;
};

/// Fixed-capacity queue that discards the oldest entry when full. Used by
/// consumers that must never stall the stepper.
template <typename T>
class DropOldestQueue {
 public:
  explicit DropOldestQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

  void push(T value) {
    {
      std::lock_guard lock(mutex_);
      if (items_.size() == capacity_) {
        items_.pop_front();
        ++dropped_;
      }
      items_.push_back(std::move(value));
    }
    cv_.notify_one();
  }

  std::optional<T> pop_for(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    if (!cv_.wait_for(lock, timeout, [&] { return !items_.empty(); })) return std::nullopt;
    T value = std::move(items_.front());
    items_.pop_front();
    return value;
  }

  std::optional<T> try_pop() {
    std::lock_guard lock(mutex_);
    if (items_.empty()) return std::nullopt;
    T value = std::move(items_.front());
    items_.pop_front();
    return value;
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return items_.size();
  }
  std::uint64_t dropped() const {
    std::lock_guard lock(mutex_);
    return dropped_;
  }

 private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<T> items_;
  std::uint64_t dropped_ = 0;
};

/// Owns a Session on a dedicated stepper thread. Commands are queued and
/// applied at step boundaries; snapshots are fanned out to subscribers.
class LiveSession {
 public:
  using Subscriber = std::function<void(const Snapshot&)>;

  /// Starts the stepper; the session begins paused. Throws ConfigError or IoError.
  explicit LiveSession(SessionConfig config);
  ~LiveSession();
  LiveSession(const LiveSession&) = delete;
  LiveSession& operator=(const LiveSession&) = delete;

  /// Validates synchronously (throws ValidationError, SessionClosed), then
  /// queues the command for the first boundary at or after `at_step`.
  std::future<CommandOutcome> submit(Command command, std::optional<std::uint64_t> at_step = {});
  /// Callback flavour; `done` runs on the stepper thread.
  void submit(Command command, std::optional<std::uint64_t> at_step,
              std::function<void(CommandOutcome)> done);

  /// Subscribers run on the stepper thread and must not block.
  int subscribe(Subscriber subscriber);
  void unsubscribe(int id);

  Snapshot latest() const;
  /// Blocks until at least `step` steps are logged or the timeout expires.
  bool wait_for_step(std::uint64_t step, std::chrono::milliseconds timeout) const;
  /// Blocks until the stepper is paused (and has drained due commands).
  bool wait_until_paused(std::chrono::milliseconds timeout) const;

  const SessionConfig& config() const { return config_; }
  nlohmann::json hello() const;

  /// Stops the stepper, flushes the log and writes the replay record.
  void close();
  bool closed() const;

 private:
  struct Pending {
    Command command;
    std::uint64_t at_step = 0;
    std::uint64_t seq = 0;
    std::function<void(CommandOutcome)> done;
  };

  void run(std::stop_token stop);
  void drain_due(std::uint64_t step);
  void publish(const Snapshot& snapshot);

  SessionConfig config_;
  std::unique_ptr<Session> session_;

  mutable std::mutex mutex_;
  mutable std::condition_variable cv_;
  std::vector<Pending> queue_;
  std::uint64_t next_seq_ = 0;
  Snapshot latest_;
  bool closed_ = false;

  std::mutex subscribers_mutex_;
  std::map<int, Subscriber> subscribers_;
  int next_subscriber_ = 0;

  std::jthread stepper_;
};

}  // namespace hydrolab

#endif  // HYDROLAB_RUNTIME_HPP_
