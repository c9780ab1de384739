#include "hydrolab/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "hydrolab/error.hpp"
#include "hydrolab/presets.hpp"
#include "hydrolab/wire.hpp"

namespace hydrolab {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

template <typename... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <typename... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::optional<ScenarioAction> as_action(const Command& command) {
  return std::visit(
      Overloaded{
          [](const SetSetpoint& c) -> std::optional<ScenarioAction> { return c; },
          [](const SetGains& c) -> std::optional<ScenarioAction> { return c; },
          [](const SetMode& c) -> std::optional<ScenarioAction> { return c; },
          [](const SetOnOff& c) -> std::optional<ScenarioAction> { return c; },
          [](const SetOutputLoad& c) -> std::optional<ScenarioAction> { return c; },
          [](const SetInputLimit& c) -> std::optional<ScenarioAction> { return c; },
          [](const auto&) -> std::optional<ScenarioAction> { return std::nullopt; },
      },
      command);
}

bool touches_controller(const Command& command) {
  return std::holds_alternative<SetSetpoint>(command) ||
         std::holds_alternative<SetGains>(command) || std::holds_alternative<SetMode>(command) ||
         std::holds_alternative<SetOnOff>(command) ||
         std::holds_alternative<LoadScenario>(command) ||
         std::holds_alternative<StartTune>(command);
}

bool valid_scenario_name(const std::string& name) {
  if (name.empty() || name.size() > 64) return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '_' || c == '-';
  });
}

// Steps needed to reach simulated offset `seconds`, rounding up to the next
// boundary as scenario events do.
std::uint64_t steps_until(double seconds, double dt) {
  const double k = std::ceil(seconds / dt - 1e-6);
  return k <= 0.0 ? 0 : static_cast<std::uint64_t>(k);
}

}  // namespace

std::string_view command_name(const Command& command) {
  return std::visit(Overloaded{
                        [](const SetSetpoint&) { return std::string_view("set_setpoint"); },
                        [](const SetGains&) { return std::string_view("set_gains"); },
                        [](const SetMode&) { return std::string_view("set_mode"); },
                        [](const SetOnOff&) { return std::string_view("set_on_off"); },
                        [](const SetOutputLoad&) { return std::string_view("set_output_load"); },
                        [](const SetInputLimit&) { return std::string_view("set_input_limit"); },
                        [](const Start&) { return std::string_view("start"); },
                        [](const Pause&) { return std::string_view("pause"); },
                        [](const Reset&) { return std::string_view("reset"); },
                        [](const SetSpeed&) { return std::string_view("set_speed"); },
                        [](const LoadScenario&) { return std::string_view("load_scenario"); },
                        [](const StartTune&) { return std::string_view("start_tune"); },
                    },
                    command);
}

void validate_command(const Command& command) {
  if (const auto action = as_action(command)) {
    validate_action(*action);
    return;
  }
  if (const auto* speed = std::get_if<SetSpeed>(&command)) {
    if (!(speed->multiplier > 0.0)) {
      throw ValidationError("multiplier", "must be > 0 (or \"inf\" for unpaced)");
    }
  } else if (const auto* load = std::get_if<LoadScenario>(&command)) {
    if (!valid_scenario_name(load->name)) {
      throw ValidationError("name", "must be 1-64 characters from [A-Za-z0-9_-]");
    }
  } else if (const auto* tune = std::get_if<StartTune>(&command)) {
    if (tune->mode == ControllerMode::OnOff) {
      throw ValidationError("mode", "tuning targets p, pd, pi or pid");
    }
    if (tune->sp && !(*tune->sp >= 0.0 && *tune->sp <= 100.0)) {
      throw ValidationError("sp", "must lie in [0, 100]");
    }
    if (!(tune->kp_lo > 0.0 && tune->kp_hi > tune->kp_lo && std::isfinite(tune->kp_hi))) {
      throw ValidationError("kp_lo", "need 0 < kp_lo < kp_hi < inf");
    }
    if (!(tune->tol > 0.0 && tune->tol < 1.0)) throw ValidationError("tol", "must lie in (0, 1)");
  }
}

std::vector<std::string> Snapshot::alarms() const {
  std::vector<std::string> out;
  if (overflow) out.emplace_back("overflow");
  if (underflow) out.emplace_back("underflow");
  return out;
}

// --- configuration -------------------------------------------------------------

void SessionConfig::validate() const {
  if (!(dt > 0.0 && dt <= 1.0)) throw ConfigError("dt: must lie in (0, 1] s");
  if (!(speed > 0.0)) throw ConfigError("speed: must be > 0");
  try {
    plant.validate();
    controller.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
}

SessionConfig session_config_from_preset(const PresetLibrary& presets, const std::string& name) {
  const Preset& preset = presets.find(name);
  SessionConfig config;
  try {
    config.plant = require_tank(preset);
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  if (preset.controller) config.controller = *preset.controller;
  config.preset = name;
  return config;
}

json to_json(const SessionConfig& c) {
  return json{{"preset", c.preset},
              {"plant", to_json(c.plant)},
              {"controller", to_json(c.controller)},
              {"dt", c.dt},
              {"speed", speed_to_json(c.speed)}};
}

namespace {

SessionConfig session_config_from_json(const json& j) {
  SessionConfig c;
  try {
    c.preset = j.value("preset", std::string());
    c.plant = plant_from_json(j.at("plant"));
    c.controller = controller_from_json(j.at("controller"));
    c.dt = j.at("dt").get<double>();
    c.speed = speed_from_json(j.at("speed"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("session record: ") + e.what());
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("session record: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace

// --- replay record -------------------------------------------------------------

json to_json(const RecordedCommand& r) {
  json j{{"step", r.step},
         {"cmd", std::string(command_name(r.command))},
         {"args", command_args(r.command)}};
  if (r.scenario_text) j["scenario"] = *r.scenario_text;
  return j;
}

RecordedCommand recorded_command_from_json(const json& j) {
  try {
    RecordedCommand r;
    r.step = j.at("step").get<std::uint64_t>();
    r.command = command_from_json(j.at("cmd").get<std::string>(), j.value("args", json::object()));
    if (j.contains("scenario")) r.scenario_text = j.at("scenario").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("recorded command: ") + e.what());
  }
}

// --- Session -----------------------------------------------------------------

Session::Session(SessionConfig config)
    : config_((config.validate(), std::move(config))),
      loop_(config_.plant, config_.controller, config_.dt),
      speed_(config_.speed) {
  if (!config_.log_path.empty()) {
    log_.open(config_.log_path, std::ios::out | std::ios::trunc | std::ios::binary);
    if (!log_) throw IoError("cannot open session log '" + config_.log_path.string() + "'");
    log_ << kCsvHeader << '\n';
  }
}

Session::~Session() {
  try {
    flush();
  } catch (...) {
  }
}

Snapshot Session::snapshot() const {
  const PlantState& s = loop_.plant().state();
  Snapshot snap;
  snap.step = loop_.step_index();
  snap.t_s = static_cast<double>(snap.step) * config_.dt;
  snap.level_m = s.h;
  snap.level_pct = measure(s, config_.plant.sensor).level_pct;
  snap.setpoint_pct = loop_.controller().setpoint();
  snap.output_v = loop_.controller().last_output_v();
  snap.valve_frac = s.valve_opening;
  snap.q_in = s.q_in;
  snap.q_out = s.q_out;
  snap.mode = loop_.controller().mode();
  snap.gains = loop_.controller().gains();
  snap.speed = speed_;
  snap.paused = paused_;
  snap.tuning = tune_.has_value();
  snap.overflow = s.overflow;
  snap.underflow = s.underflow;
  return snap;
}

CommandResult Session::apply(const Command& command) { return apply_impl(command, std::nullopt); }

CommandResult Session::apply(const RecordedCommand& recorded) {
  return apply_impl(recorded.command, recorded.scenario_text);
}

CommandResult Session::apply_impl(const Command& command,
                                  const std::optional<std::string>& scenario_text) {
  validate_command(command);
  if (tune_ && touches_controller(command)) {
    throw ValidationError(std::string(command_name(command)), "tuning owns the controller");
  }

  CommandResult result;
  result.applied_at_step = loop_.step_index();
  RecordedCommand recorded{loop_.step_index(), command, std::nullopt};

  if (const auto action = as_action(command)) {
    apply_action(loop_, *action);
  } else if (std::holds_alternative<Start>(command)) {
    paused_ = false;
  } else if (std::holds_alternative<Pause>(command)) {
    paused_ = true;
  } else if (const auto* speed = std::get_if<SetSpeed>(&command)) {
    speed_ = speed->multiplier;
  } else if (std::holds_alternative<Reset>(command)) {
    pending_events_.clear();
    if (tune_) {
      loop_.controller().options().output_bias_pct = 0.0;
      loop_.controller().reconfigure(tune_->before);
      tune_.reset();
    }
    loop_.reset_process(PlantState{});
  } else if (const auto* load = std::get_if<LoadScenario>(&command)) {
    Scenario scenario;
    if (scenario_text) {
      scenario = parse_scenario(*scenario_text);
    } else {
      if (config_.scenario_dir.empty()) {
        throw ValidationError("name", "no scenario directory configured");
      }
      const auto path = config_.scenario_dir / (load->name + ".scn");
      if (!std::filesystem::is_regular_file(path)) {
        throw ValidationError("name", "no scenario '" + load->name + "'");
      }
      scenario = load_scenario_file(path);
    }
    load_scenario(scenario);
    recorded.scenario_text = serialize(scenario);
    result.detail = json{{"scenario", scenario.name}, {"events", scenario.events.size()}};
  } else if (const auto* tune = std::get_if<StartTune>(&command)) {
    result.detail = start_tune(*tune);
  }

  schedule_.push_back(std::move(recorded));
  return result;
}

void Session::load_scenario(const Scenario& scenario) {
  const ControllerSetup setup = scenario.control.resolve();
  const std::uint64_t now = loop_.step_index();
  std::deque<std::pair<std::uint64_t, ScenarioAction>> events;
  for (const ScenarioEvent& e : scenario.events) {
    events.emplace_back(now + steps_until(e.at_s, config_.dt), e.action);
  }
  loop_.controller().reconfigure(setup);
  pending_events_ = std::move(events);
}

json Session::start_tune(const StartTune& request) {
  const ControllerSetup before = loop_.controller().setup();
  const double sp = request.sp.value_or(before.setpoint_pct);

  TuningOptions options;
  options.tol = request.tol;
  options.inlet_limit = loop_.plant().inlet_limit();
  options.load_fraction = loop_.plant().load_fraction();
  const UltimateGainResult r =
      find_ultimate_gain(config_.plant, sp, request.kp_lo, request.kp_hi, options);
  const double bias = run_proportional_trial(config_.plant, sp, r.ku, options.dt, options).bias_pct;

  ControllerSetup after = before;
  after.mode = request.mode;
  after.gains = zn_gains(request.mode, r.ku, r.pu_s);
  after.setpoint_pct = sp;

  ControllerSetup hold = before;
  hold.mode = ControllerMode::P;
  hold.gains = {r.ku, 0.0, 0.0};
  hold.setpoint_pct = sp;
  loop_.controller().reconfigure(hold);
  loop_.controller().options().output_bias_pct = bias;

  const std::uint64_t end = loop_.step_index() + steps_until(6.0 * r.pu_s, config_.dt);
  tune_ = TunePhase{end, before, after};
  return json{{"ku", r.ku},
              {"pu", r.pu_s},
              {"mode", std::string(to_string(request.mode))},
              {"gains", {{"kp", after.gains.kp}, {"ki", after.gains.ki}, {"kd", after.gains.kd}}},
              {"hold_until_step", end}};
}

void Session::finish_tune() {
  loop_.controller().options().output_bias_pct = 0.0;
  loop_.controller().reconfigure(tune_->after);
  tune_.reset();
}

Snapshot Session::step() {
  const std::uint64_t k = loop_.step_index();
  if (tune_ && k >= tune_->end_step) finish_tune();
  while (!pending_events_.empty() && pending_events_.front().first <= k) {
    apply_action(loop_, pending_events_.front().second);
    pending_events_.pop_front();
  }
  last_row_ = loop_.step();
  if (log_.is_open()) log_ << csv_row(last_row_) << '\n';
  return snapshot();
}

json Session::record() const {
  json commands = json::array();
  for (const RecordedCommand& r : schedule_) commands.push_back(to_json(r));
  return json{{"version", kProtocolVersion},
              {"config", to_json(config_)},
              {"steps", loop_.step_index()},
              {"commands", std::move(commands)}};
}

void Session::flush() {
  if (!log_.is_open()) return;
  log_.flush();
  const std::filesystem::path sidecar = config_.log_path.string() + ".json";
  const std::filesystem::path tmp = sidecar.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::out | std::ios::trunc);
    if (!out) throw IoError("cannot write session record '" + sidecar.string() + "'");
    out << record().dump(2) << '\n';
  }
  std::filesystem::rename(tmp, sidecar);
}

TimeSeries replay(const json& record, std::optional<std::uint64_t> steps) {
  if (!record.is_object() || !record.contains("config") || !record.contains("commands")) {
    throw ConfigError("session record needs 'config' and 'commands'");
  }
  SessionConfig config = session_config_from_json(record.at("config"));
  config.log_path.clear();
  std::vector<RecordedCommand> schedule;
  for (const json& c : record.at("commands")) schedule.push_back(recorded_command_from_json(c));
  const std::uint64_t total = steps.value_or(record.value("steps", std::uint64_t{0}));

  Session session(config);
  TimeSeries series;
  series.initial = session.loop().plant().state();
  series.rows.reserve(static_cast<std::size_t>(total));
  std::size_t next = 0;
  for (std::uint64_t k = 0; k < total; ++k) {
    while (next < schedule.size() && schedule[next].step <= k) {
      const Command& c = schedule[next].command;
      if (!std::holds_alternative<Start>(c) && !std::holds_alternative<Pause>(c) &&
          !std::holds_alternative<SetSpeed>(c)) {
        session.apply(schedule[next]);
      }
      ++next;
    }
    session.step();
    series.rows.push_back(session.last_row());
  }
  return series;
}

// --- LiveSession ---------------------------------------------------------------

LiveSession::LiveSession(SessionConfig config)
    : config_((config.validate(), std::move(config))),
      session_(std::make_unique<Session>(config_)),
      latest_(session_->snapshot()) {
  stepper_ = std::jthread([this](std::stop_token stop) { run(stop); });
}

LiveSession::~LiveSession() {
  try {
    close();
  } catch (...) {
  }
}

std::future<CommandOutcome> LiveSession::submit(Command command,
                                                std::optional<std::uint64_t> at_step) {
  auto promise = std::make_shared<std::promise<CommandOutcome>>();
  std::future<CommandOutcome> future = promise->get_future();
  submit(std::move(command), at_step,
         [promise](CommandOutcome outcome) { promise->set_value(std::move(outcome)); });
  return future;
}

void LiveSession::submit(Command command, std::optional<std::uint64_t> at_step,
                         std::function<void(CommandOutcome)> done) {
  validate_command(command);
  {
    std::lock_guard lock(mutex_);
    if (closed_) throw SessionClosed("session is closed");
    queue_.push_back(Pending{std::move(command), at_step.value_or(0), next_seq_++, std::move(done)});
  }
  cv_.notify_all();
}

int LiveSession::subscribe(Subscriber subscriber) {
  std::lock_guard lock(subscribers_mutex_);
  const int id = next_subscriber_++;
  subscribers_.emplace(id, std::move(subscriber));
  return id;
}

void LiveSession::unsubscribe(int id) {
  std::lock_guard lock(subscribers_mutex_);
  subscribers_.erase(id);
}

Snapshot LiveSession::latest() const {
  std::lock_guard lock(mutex_);
  return latest_;
}

bool LiveSession::wait_for_step(std::uint64_t step, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  return cv_.wait_for(lock, timeout, [&] { return latest_.step >= step || closed_; }) &&
         latest_.step >= step;
}

bool LiveSession::wait_until_paused(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  return cv_.wait_for(lock, timeout, [&] {
    if (closed_) return true;
    if (!latest_.paused) return false;
    return std::none_of(queue_.begin(), queue_.end(),
                        [&](const Pending& p) { return p.at_step <= latest_.step; });
  });
}

json LiveSession::hello() const {
  return json{{"version", kProtocolVersion}, {"config", to_json(config_)}};
}

bool LiveSession::closed() const {
  std::lock_guard lock(mutex_);
  return closed_;
}

void LiveSession::close() {
  {
    std::lock_guard lock(mutex_);
    if (closed_) return;
    closed_ = true;
  }
  stepper_.request_stop();
  cv_.notify_all();
  if (stepper_.joinable()) stepper_.join();

  std::vector<Pending> leftover;
  {
    std::lock_guard lock(mutex_);
    leftover.swap(queue_);
  }
  for (Pending& p : leftover) {
    if (p.done) p.done(CommandOutcome{false, 0, nullptr, "SessionClosed", "session is closed"});
  }
  session_->flush();
}

void LiveSession::publish(const Snapshot& snapshot) {
  {
    std::lock_guard lock(mutex_);
    latest_ = snapshot;
  }
  cv_.notify_all();
  std::lock_guard lock(subscribers_mutex_);
  for (auto& [_, subscriber] : subscribers_) subscriber(snapshot);
}

void LiveSession::drain_due(std::uint64_t step) {
  std::vector<Pending> due;
  {
    std::lock_guard lock(mutex_);
    auto split = std::stable_partition(queue_.begin(), queue_.end(),
                                       [&](const Pending& p) { return p.at_step > step; });
    due.assign(std::make_move_iterator(split), std::make_move_iterator(queue_.end()));
    queue_.erase(split, queue_.end());
  }
  std::sort(due.begin(), due.end(), [](const Pending& a, const Pending& b) {
    return a.at_step != b.at_step ? a.at_step < b.at_step : a.seq < b.seq;
  });
  for (Pending& p : due) {
    CommandOutcome outcome;
    try {
      const CommandResult r = session_->apply(p.command);
      outcome.ok = true;
      outcome.applied_at_step = r.applied_at_step;
      outcome.detail = r.detail;
    } catch (const Error& e) {
      outcome.error_kind = std::string(e.kind());
      outcome.message = e.what();
    } catch (const std::exception& e) {
      outcome.error_kind = "Error";
      outcome.message = e.what();
    }
    if (p.done) p.done(std::move(outcome));
  }
}

void LiveSession::run(std::stop_token stop) {
  // Wall-clock pacing against an absolute deadline so rounding never drifts;
  // the anchor moves whenever the clock is started, re-sped or falls behind.
  Clock::time_point anchor_time = Clock::now();
  std::uint64_t anchor_step = 0;
  bool anchored = false;
  Snapshot published = latest();

  auto has_due = [&](std::uint64_t step) {
    return std::any_of(queue_.begin(), queue_.end(),
                       [&](const Pending& p) { return p.at_step <= step; });
  };

  while (!stop.stop_requested()) {
    const std::uint64_t k = session_->step_index();
    const double speed_before = session_->speed();
    const bool paused_before = session_->paused();
    drain_due(k);

    const bool stop_reached = config_.stop_at_step && k >= *config_.stop_at_step;
    if (stop_reached && !session_->paused()) session_->apply(Pause{});

    Snapshot current = session_->snapshot();
    if (!(current == published)) {
      publish(current);
      published = current;
    }

    if (session_->paused()) {
      anchored = false;
      std::unique_lock lock(mutex_);
      cv_.wait(lock, [&] { return stop.stop_requested() || has_due(k); });
      continue;
    }

    if (!anchored || session_->speed() != speed_before || paused_before) {
      anchor_time = Clock::now();
      anchor_step = k;
      anchored = true;
    }

    const double speed = session_->speed();
    if (std::isfinite(speed)) {
      const double wall_s = static_cast<double>(k + 1 - anchor_step) * config_.dt / speed;
      auto deadline = anchor_time + std::chrono::duration_cast<Clock::duration>(
                                        std::chrono::duration<double>(wall_s));
      const auto now = Clock::now();
      if (now - deadline > std::chrono::seconds(1)) {
        // Too far behind (e.g. after a tuning run): resynchronise instead of bursting.
        anchor_time = now;
        anchor_step = k;
        deadline = now + std::chrono::duration_cast<Clock::duration>(
                             std::chrono::duration<double>(config_.dt / speed));
      }
      std::unique_lock lock(mutex_);
      if (cv_.wait_until(lock, deadline, [&] { return stop.stop_requested() || has_due(k); })) {
        continue;
      }
    } else {
      std::lock_guard lock(mutex_);
      if (has_due(k)) continue;
    }

    published = session_->step();
    publish(published);
  }
}

}  // namespace hydrolab
