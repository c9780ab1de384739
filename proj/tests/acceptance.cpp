// Acceptance checks: one PASS/FAIL line per criterion with its runtime.
// Exit status is non-zero when any criterion fails.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "hydrolab/error.hpp"
#include "hydrolab/loop.hpp"
#include "hydrolab/metrics.hpp"
#include "hydrolab/plant.hpp"
#include "hydrolab/presets.hpp"
#include "hydrolab/runtime.hpp"
#include "hydrolab/scenario.hpp"
#include "hydrolab/timeseries.hpp"
#include "hydrolab/tuning.hpp"
#include "oracles.hpp"

namespace {

using namespace hydrolab;
namespace fs = std::filesystem;

const fs::path kScenarios = HYDROLAB_DEFAULT_SCENARIO_DIR;
const fs::path kCli = HYDROLAB_CLI_PATH;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string id;
  std::string name;
  double budget_ms;
  std::function<Outcome()> check;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

std::vector<fs::path> fixtures() {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(kScenarios)) {
    if (entry.path().extension() == ".scn") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

const PresetLibrary& presets() {
  static const PresetLibrary lib = PresetLibrary::builtin();
  return lib;
}

// --- AC1 -------------------------------------------------------------------------

Outcome zn_formulas() {
  struct Row {
    ControllerMode mode;
    Gains expected;
  };
  const Row rows[] = {{ControllerMode::P, {40.0, 0.0, 0.0}},
                      {ControllerMode::PD, {36.0, 0.0, 162.0}},
                      {ControllerMode::PI, {36.0, 1.2, 0.0}},
                      {ControllerMode::PID, {48.0, 8.0 / 3.0, 216.0}}};
  for (const Row& r : rows) {
    const Gains g = zn_gains(r.mode, 80.0, 36.0);
    if (!(g == r.expected)) {
      return {false, fmt("%s gave kp=%.17g ki=%.17g kd=%.17g", std::string(to_string(r.mode)).c_str(),
                         g.kp, g.ki, g.kd)};
    }
  }
  return {true, "P 40 | PD 36/162 | PI 36/1.2 | PID 48/(8/3)/216, exact"};
}

// --- AC2 -------------------------------------------------------------------------

Outcome plant_fidelity() {
  const PlantConfig plant = require_tank(presets().find("paper_default"));
  const LinearizedModel model = linearized_model(plant.tank);
  const double dt = 0.1;
  const double tau = plant.tank.capacitance * plant.tank.resistance;
  PlantState s;
  s.valve_opening = 1.0;
  double worst = 0.0;
  std::size_t k = 0;
  for (int multiple = 1; multiple <= 3; ++multiple) {
    const auto target = static_cast<std::size_t>(std::llround(multiple * tau / dt));
    for (; k < target; ++k) s = plant_step(s, plant.tank, plant.valve, 10.0, 1.0, 1.0, dt);
    const double expected = analytic_step_response(model, plant.tank.q_in_max, target * dt);
    worst = std::max(worst, std::abs(s.h - expected) / expected);
  }
  return {worst <= 1e-3, fmt("tau=%.1f s, worst relative error %.2e at t=tau,2tau,3tau", tau, worst)};
}

// --- AC3 -------------------------------------------------------------------------

Outcome mass_balance() {
  int checked = 0;
  int skipped = 0;
  double worst_ratio = 0.0;
  std::string worst_name;
  for (const fs::path& path : fixtures()) {
    const Scenario scn = load_scenario_file(path);
    ControlLoop loop(resolve_plant(scn, presets()), scn.control.resolve(), scn.dt_s);
    const PlantState start = loop.plant().state();
    bool saturated = false;
    std::size_t next = 0;
    for (std::size_t k = 0; k < scn.step_count(); ++k) {
      while (next < scn.events.size() &&
             scn.events[next].at_s <= static_cast<double>(k) * scn.dt_s + 1e-6 * scn.dt_s) {
        apply_action(loop, scn.events[next++].action);
      }
      loop.step();
      saturated = saturated || loop.plant().state().clamped_last_step;
    }
    if (saturated) {
      ++skipped;
      continue;
    }
    const PlantState& end = loop.plant().state();
    const double c = loop.plant().config().tank.capacitance;
    const double imbalance = std::abs(c * (end.h - start.h) -
                                      ((end.volume_in - start.volume_in) -
                                       (end.volume_out - start.volume_out)));
    const double ratio = imbalance / (1e-8 * scn.duration_s);
    if (ratio >= worst_ratio) {
      worst_ratio = ratio;
      worst_name = scn.name;
    }
    ++checked;
  }
  return {checked > 0 && worst_ratio <= 1.0,
          fmt("%d fixtures checked (%d saturating skipped); worst %s at %.2e of the bound",
              checked, skipped, worst_name.c_str(), worst_ratio)};
}

// --- AC4 -------------------------------------------------------------------------

Outcome offset_property() {
  struct Case {
    const char* file;
    bool offset_expected;
  };
  const Case cases[] = {
      {"fig5_p.scn", true}, {"fig5_pd.scn", true}, {"fig5_pi.scn", false}, {"fig5_pid.scn", false}};
  bool ok = true;
  std::string detail;
  for (const Case& c : cases) {
    const Scenario scn = load_scenario_file(kScenarios / c.file);
    const auto* preset = std::get_if<std::string>(&scn.plant);
    if (!preset || *preset != "paper_like_delay") return {false, std::string(c.file) + " plant"};
    const auto m = compute_metrics(run_scenario(scn, presets()));
    const double e = std::abs(m.back().steady_state_error_pct);
    ok = ok && (c.offset_expected ? e > 0.5 : e < 0.5);
    detail += fmt("%s |e_ss|=%.3f%% ", scn.name.c_str(), e);
  }
  return {ok, detail};
}

// --- AC5 -------------------------------------------------------------------------

Outcome ultimate_gain() {
  struct Case {
    const char* preset;
    oracle::UltimatePoint expected;
  };
  const Case cases[] = {{"fopdt_test", oracle::fopdt(1.0, 10.0, 2.0)},
                        {"integrator_delay_test", {std::numbers::pi / 2.0, 4.0}}};
  bool ok = true;
  std::string detail;
  for (const Case& c : cases) {
    const UltimateGainResult r = find_ultimate_gain(presets().find(c.preset).plant, 50.0, 0.1, 100.0);
    const double eku = std::abs(r.ku - c.expected.ku) / c.expected.ku;
    const double epu = std::abs(r.pu_s - c.expected.pu) / c.expected.pu;
    ok = ok && eku <= 0.05 && epu <= 0.05;
    detail += fmt("%s Ku %.4g vs %.4g (%.1f%%), Pu %.4g vs %.4g (%.1f%%); ", c.preset, r.ku,
                  c.expected.ku, 100 * eku, r.pu_s, c.expected.pu, 100 * epu);
  }
  return {ok, detail};
}

// --- AC6 -------------------------------------------------------------------------

Outcome onoff_behaviour() {
  const Scenario scn = load_scenario_file(kScenarios / "onoff.scn");
  const ControllerSetup setup = scn.control.resolve();
  const double sp = setup.setpoint_pct;
  const double lo = sp - setup.hysteresis_pct;
  PlantConfig plant = resolve_plant(scn, presets());
  if (plant.valve.travel_time_s != 25.0) return {false, "fixture valve travel is not 25 s"};

  // Travel 25 s: overshoot past SP, and a limit cycle that neither grows nor hits a bound.
  const TimeSeries slow = run_scenario(scn, plant, setup);
  const std::size_t half = slow.rows.size() / 2;
  double peak = -1e9;
  double late_max = -1e9;
  double late_min = 1e9;
  double early_max = -1e9;
  bool hit_bound = false;
  for (std::size_t i = 0; i < slow.rows.size(); ++i) {
    const double pv = slow.rows[i].level_pct;
    peak = std::max(peak, pv);
    hit_bound = hit_bound || slow.rows[i].clamped;
    if (i >= half) {
      late_max = std::max(late_max, pv);
      late_min = std::min(late_min, pv);
    } else if (i >= slow.rows.size() / 4) {
      early_max = std::max(early_max, pv);
    }
  }
  const double overshoot = peak - sp;
  // Peaks are sampled at dt, so successive cycles differ by up to one step of flow.
  const double one_step_pct = plant.tank.q_in_max * scn.dt_s / plant.tank.capacitance /
                              plant.sensor.span_height() * 100.0;
  const bool bounded = !hit_bound && late_max <= early_max + one_step_pct && late_min > 0.0;

  // Travel 0: pv stays within [SP - hyst, SP] give or take one step of flow.
  plant.valve.travel_time_s = 0.0;
  const TimeSeries fast = run_scenario(scn, plant, setup);
  bool entered = false;
  double excursion = 0.0;
  for (const TimeSeriesRow& row : fast.rows) {
    if (!entered) {
      entered = row.level_pct >= lo;
      continue;
    }
    excursion = std::max({excursion, row.level_pct - sp, lo - row.level_pct});
  }
  const bool pass = overshoot > 0.0 && bounded && entered && excursion <= one_step_pct;
  return {pass, fmt("travel 25 s: overshoot %.3f%%, late cycle [%.4f, %.4f]%% (early max %.4f); travel 0: "
                    "worst excursion %.4f%% (one step of flow %.4f%%)",
                    overshoot, late_min, late_max, early_max, excursion, one_step_pct)};
}

// --- AC7 -------------------------------------------------------------------------

int run_cli(const std::string& args) {
  const std::string cmd = kCli.string() + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string live_run(double speed, const fs::path& log) {
  SessionConfig c = session_config_from_preset(presets(), "paper_like_delay");
  c.speed = speed;
  c.log_path = log;
  c.stop_at_step = 3000;
  LiveSession live{c};
  live.submit(SetSetpoint{50.0}, 200);
  live.submit(SetOutputLoad{0.7}, 900);
  live.submit(SetMode{ControllerMode::PI, 36.0, 1.2, std::nullopt, std::nullopt, std::nullopt},
              1500);
  live.submit(SetInputLimit{0.8}, 2200);
  live.submit(Start{}).get();
  live.wait_for_step(3000, std::chrono::seconds(30));
  live.wait_until_paused(std::chrono::seconds(5));
  live.close();
  return read_file(log);
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / ("hydrolab_accept_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  int round_trips = 0;
  int identical = 0;
  std::string problem;
  for (const fs::path& path : fixtures()) {
    const Scenario scn = load_scenario_file(path);
    if (parse_scenario(serialize(scn)) == scn && serialize(parse_scenario(serialize(scn))) == serialize(scn)) {
      ++round_trips;
    } else {
      problem += " round-trip:" + path.filename().string();
    }
    const fs::path a = dir / "a.csv";
    const fs::path b = dir / "b.csv";
    const std::string base = "simulate --scenario " + path.string() + " --out ";
    if (run_cli(base + a.string()) == 0 && run_cli(base + b.string()) == 0 &&
        read_file(a) == read_file(b) && read_file(a) == to_csv(run_scenario(scn, presets()))) {
      ++identical;
    } else {
      problem += " simulate:" + path.filename().string();
    }
  }
  const std::string unpaced = live_run(std::numeric_limits<double>::infinity(), dir / "inf.csv");
  const std::string paced = live_run(3000.0, dir / "paced.csv");
  const auto record = nlohmann::json::parse(read_file(dir / "paced.csv.json"));
  const std::string replayed = to_csv(replay(record));
  const bool speeds_match = !unpaced.empty() && unpaced == paced && paced == replayed &&
                            std::count(paced.begin(), paced.end(), '\n') == 3001;
  if (!speeds_match) problem += " live-speed";
  fs::remove_all(dir);
  const int n = static_cast<int>(fixtures().size());
  return {problem.empty() && n > 0,
          fmt("%d/%d fixtures round-trip, %d/%d simulate byte-identical, live inf vs x3000 vs "
              "replay %s%s",
              round_trips, n, identical, n, speeds_match ? "identical" : "DIFFER",
              problem.c_str())};
}

// --- AC8 -------------------------------------------------------------------------

Outcome metrics_oracle() {
  const double tau = 100.0;
  const double dt = 0.1;
  // Full-span step: the band is a share of span, so only here is it also 2 % of the step.
  const double sp = 100.0;
  std::vector<double> t, pv, spv;
  for (int k = 1; k <= 20000; ++k) {
    t.push_back(k * dt);
    pv.push_back(sp * (1.0 - std::exp(-k * dt / tau)));
    spv.push_back(sp);
  }
  const auto m = compute_metrics(t, pv, spv);
  if (m.size() != 1 || !m[0].settling_time_s) return {false, "no settling time"};
  const double expected = tau * std::log(50.0);
  const double err = std::abs(*m[0].settling_time_s - expected);
  return {err <= dt, fmt("settling %.4f s vs tau*ln50 = %.4f s (|diff| %.4f s, one dt %.1f s)",
                         *m[0].settling_time_s, expected, err, dt)};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"AC1", "Z-N formula reproduction", 1.0, zn_formulas},
      {"AC2", "Plant fidelity vs analytic first-order response", 1000.0, plant_fidelity},
      {"AC3", "Mass balance over non-saturating fixtures", 5000.0, mass_balance},
      {"AC4", "Offset property (P/PD offset, PI/PID none)", 10000.0, offset_property},
      {"AC5", "Ultimate gain vs frequency-scan oracle", 30000.0, ultimate_gain},
      {"AC6", "On-off behaviour", 5000.0, onoff_behaviour},
      {"AC7", "Determinism and formats", 10000.0, determinism},
      {"AC8", "Metrics oracle (settling = tau ln 50)", 1000.0, metrics_oracle},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    Outcome outcome;
    const auto start = std::chrono::steady_clock::now();
    try {
      outcome = c.check();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    const bool in_budget = ms < c.budget_ms;
    const bool pass = outcome.pass && in_budget;
    failures += pass ? 0 : 1;
    std::printf("%s %s %s (%.3f ms, budget %.0f ms)%s: %s\n", pass ? "PASS" : "FAIL", c.id.c_str(),
                c.name.c_str(), ms, c.budget_ms, in_budget ? "" : " OVER BUDGET",
                outcome.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
