#include <csignal>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hydrolab/error.hpp"
#include "hydrolab/metrics.hpp"
#include "hydrolab/presets.hpp"
#include "hydrolab/runtime.hpp"
#include "hydrolab/scenario.hpp"
#include "hydrolab/server.hpp"
#include "hydrolab/timeseries.hpp"
#include "hydrolab/tuning.hpp"

namespace {

using namespace hydrolab;

enum Exit : int { kOk = 0, kInvalid = 1, kIo = 2, kTuning = 3 };

int fail(int code, std::string_view kind, const std::string& message) {
  std::cerr << "error: " << kind << ": " << message << '\n';
  return code;
}

int exit_code_for(const Error& e) {
  const std::string_view kind = e.kind();
  if (kind == "IoError") return kIo;
  if (kind == "NoBracket" || kind == "NoConvergence" || kind == "PureFirstOrderPlant") {
    return kTuning;
  }
  return kInvalid;
}

PresetLibrary load_presets(const std::string& dir) {
  if (dir.empty()) return PresetLibrary::from_environment();
  PresetLibrary lib = PresetLibrary::builtin();
  lib.load_directory(dir);
  return lib;
}

void write_file(const std::string& path, const std::string& content) {
  if (path == "-") {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << content;
  if (!out.flush()) throw IoError("cannot write '" + path + "'");
}

std::string format_gain(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

void print_gain_table(std::ostream& out, double ku, double pu) {
  out << "mode  " << std::setw(12) << "kp" << std::setw(12) << "ki" << std::setw(12) << "kd"
      << '\n';
  for (const ControllerMode mode :
       {ControllerMode::P, ControllerMode::PD, ControllerMode::PI, ControllerMode::PID}) {
    const Gains g = zn_gains(mode, ku, pu);
    out << std::left << std::setw(6) << to_string(mode) << std::right << std::setw(12)
        << format_gain(g.kp) << std::setw(12) << format_gain(g.ki) << std::setw(12)
        << format_gain(g.kd) << '\n';
  }
}

// --- subcommands -----------------------------------------------------------------

struct SimulateArgs {
  std::string scenario;
  std::string out;
  std::optional<double> dt;
  bool metrics = false;
  double band = kDefaultSettlingBandPct;
  std::string preset_dir;
};

int run_simulate(const SimulateArgs& a) {
  Scenario scenario;
  try {
    scenario = load_scenario_file(a.scenario);
    if (a.dt) {
      scenario.dt_s = *a.dt;
      scenario.validate();
    }
  } catch (const SyntaxError& e) {
    return fail(kInvalid, e.kind(), a.scenario + ":" + e.what());
  } catch (const ValidationError& e) {
    return fail(kInvalid, e.kind(), a.scenario + ":" + e.what());
  }
  const TimeSeries series = run_scenario(scenario, load_presets(a.preset_dir));
  write_file(a.out, to_csv(series));
  if (a.metrics) {
    std::cout << format_metrics_table(compute_metrics(series, a.band));
  }
  return kOk;
}

struct TuneArgs {
  std::string plant = "paper_default";
  double sp = 50.0;
  double tol = 0.05;
  double kp_lo = 0.1;
  double kp_hi = 2000.0;
  bool formulas_only = false;
  std::optional<double> ku;
  std::optional<double> pu;
  std::string preset_dir;
};

int run_tune(const TuneArgs& a) {
  double ku = 0.0;
  double pu = 0.0;
  if (a.formulas_only) {
    if (!a.ku || !a.pu) throw ValidationError("ku", "--formulas-only needs --ku and --pu");
    ku = *a.ku;
    pu = *a.pu;
  } else {
    const PresetLibrary presets = load_presets(a.preset_dir);
    TuningOptions options;
    options.tol = a.tol;
    const UltimateGainResult r =
        find_ultimate_gain(presets.find(a.plant).plant, a.sp, a.kp_lo, a.kp_hi, options);
    ku = r.ku;
    pu = r.pu_s;
  }
  std::cout << "Ku = " << format_gain(ku) << '\n' << "Pu = " << format_gain(pu) << " s\n";
  print_gain_table(std::cout, ku, pu);
  return kOk;
}

struct MetricsArgs {
  std::string csv;
  double band = kDefaultSettlingBandPct;
};

int run_metrics(const MetricsArgs& a) {
  std::ifstream in(a.csv, std::ios::binary);
  if (!in) throw IoError("cannot read '" + a.csv + "'");
  std::cout << format_metrics_table(compute_metrics(read_csv(in), a.band));
  return kOk;
}

struct ReplayArgs {
  std::string record;
  std::string out;
  std::optional<std::uint64_t> steps;
};

int run_replay(const ReplayArgs& a) {
  std::ifstream in(a.record, std::ios::binary);
  if (!in) throw IoError("cannot read '" + a.record + "'");
  nlohmann::json record;
  try {
    record = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("'" + a.record + "': " + e.what());
  }
  write_file(a.out, to_csv(replay(record, a.steps)));
  return kOk;
}

struct ServeArgs {
  std::string bind = "127.0.0.1:8765";
  std::string preset = "paper_default";
  double speed = 1.0;
  bool unpaced = false;
  double dt = 0.1;
  std::string log = "session.csv";
  std::string scenario_dir = HYDROLAB_DEFAULT_SCENARIO_DIR;
  std::string preset_dir;
  bool paused = false;
  std::optional<std::uint64_t> stop_at_step;
};

int run_serve(const ServeArgs& a) {
  // Block the shutdown signals before any thread starts so only sigwait sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  ServerOptions server_options;
  try {
    server_options = parse_bind(a.bind);
  } catch (const ConfigError& e) {
    return fail(kIo, "IoError", e.what());
  }

  SessionConfig config = session_config_from_preset(load_presets(a.preset_dir), a.preset);
  config.dt = a.dt;
  config.speed = a.unpaced ? std::numeric_limits<double>::infinity() : a.speed;
  config.log_path = a.log;
  config.scenario_dir = a.scenario_dir;
  config.stop_at_step = a.stop_at_step;

  LiveSession session(config);
  std::optional<Server> server;
  try {
    server.emplace(session, server_options);
  } catch (const IoError& e) {
    session.close();
    return fail(kIo, "IoError", e.what());
  }
  if (!a.paused) session.submit(Start{}).wait();
  std::cout << "listening on " << server_options.address << ':' << server->port() << std::endl;

  int signal = 0;
  sigwait(&signals, &signal);
  server->stop();
  session.close();
  const Snapshot last = session.latest();
  std::cout << "stopped at step " << last.step << " (t = " << last.t_s << " s)" << std::endl;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Liquid-level process-control twin: simulate, tune, analyse and serve."};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Run a scenario headless and write its CSV log");
  simulate->add_option("--scenario", sim.scenario, "Scenario file (.scn)")->required();
  simulate->add_option("--out", sim.out, "CSV output path, '-' for stdout")->required();
  simulate->add_option("--dt", sim.dt, "Override the scenario time step [s]");
  simulate->add_flag("--metrics", sim.metrics, "Print the transient metrics table");
  simulate->add_option("--band", sim.band, "Settling band [% of span]");
  simulate->add_option("--preset-dir", sim.preset_dir, "Extra preset directory");

  TuneArgs tune;
  auto* tune_cmd = app.add_subcommand("tune", "Find Ku/Pu and print Ziegler-Nichols gains");
  tune_cmd->add_option("--plant", tune.plant, "Preset name");
  tune_cmd->add_option("--sp", tune.sp, "Operating setpoint [%]");
  tune_cmd->add_option("--tol", tune.tol, "Decay-ratio tolerance around 1");
  tune_cmd->add_option("--kp-lo", tune.kp_lo, "Lower bracket gain");
  tune_cmd->add_option("--kp-hi", tune.kp_hi, "Upper bracket gain");
  tune_cmd->add_flag("--formulas-only", tune.formulas_only, "Skip the search; use --ku/--pu");
  tune_cmd->add_option("--ku", tune.ku, "Ultimate gain for --formulas-only");
  tune_cmd->add_option("--pu", tune.pu, "Ultimate period [s] for --formulas-only");
  tune_cmd->add_option("--preset-dir", tune.preset_dir, "Extra preset directory");

  MetricsArgs met;
  auto* metrics = app.add_subcommand("metrics", "Transient metrics of a CSV log");
  metrics->add_option("--csv", met.csv, "CSV log")->required();
  metrics->add_option("--band", met.band, "Settling band [% of span]");

  ReplayArgs rep;
  auto* replay_cmd = app.add_subcommand("replay", "Re-run a session record to CSV");
  replay_cmd->add_option("--record", rep.record, "Session record (<log>.json)")->required();
  replay_cmd->add_option("--out", rep.out, "CSV output path, '-' for stdout")->required();
  replay_cmd->add_option("--steps", rep.steps, "Steps to run (default: as recorded)");

  ServeArgs srv;
  auto* serve = app.add_subcommand("serve", "Run the live simulation service");
  serve->add_option("--bind", srv.bind, "host:port (port 0 picks a free one)");
  serve->add_option("--preset", srv.preset, "Plant/controller preset");
  serve->add_option("--speed", srv.speed, "Simulated seconds per wall second");
  serve->add_flag("--unpaced", srv.unpaced, "Run as fast as possible");
  serve->add_option("--dt", srv.dt, "Time step [s]");
  serve->add_option("--log", srv.log, "Session CSV log; the record goes to <log>.json");
  serve->add_option("--scenario-dir", srv.scenario_dir, "Directory for load_scenario");
  serve->add_option("--preset-dir", srv.preset_dir, "Extra preset directory");
  serve->add_flag("--paused", srv.paused, "Start paused");
  serve->add_option("--stop-at-step", srv.stop_at_step, "Pause after this many steps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*simulate) return run_simulate(sim);
    if (*tune_cmd) return run_tune(tune);
    if (*metrics) return run_metrics(met);
    if (*replay_cmd) return run_replay(rep);
    if (*serve) return run_serve(srv);
  } catch (const Error& e) {
    return fail(exit_code_for(e), e.kind(), e.what());
  } catch (const std::exception& e) {
    return fail(kIo, "Error", e.what());
  }
  return kOk;
}
