#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "hydrolab/error.hpp"
#include "hydrolab/metrics.hpp"
#include "hydrolab/scenario.hpp"

using namespace hydrolab;

namespace {

constexpr const char* kBasic = R"(# two-step ladder
scenario "ladder"
plant paper_like_delay
control pid kp=2 ki=0.02 kd=0 sp=40
run duration=600s dt=0.5s
at 200s set sp 60
at 400.25s set outload 0.5
)";

template <typename E>
E parse_error(const std::string& text) {
  try {
    parse_scenario(text);
  } catch (const E& e) {
    return e;
  }
  ADD_FAILURE() << "no error raised for:\n" << text;
  throw std::logic_error("unreachable");
}

}  // namespace

TEST(ScenarioParse, Basic) {
  const Scenario s = parse_scenario(kBasic);
  EXPECT_EQ(s.name, "ladder");
  EXPECT_EQ(std::get<std::string>(s.plant), "paper_like_delay");
  EXPECT_EQ(s.control.mode, ControllerMode::PID);
  EXPECT_EQ(s.control.kp, 2.0);
  EXPECT_EQ(s.control.sp, 40.0);
  EXPECT_FALSE(s.control.hyst.has_value());
  EXPECT_EQ(s.duration_s, 600.0);
  EXPECT_EQ(s.dt_s, 0.5);
  EXPECT_EQ(s.step_count(), 1200u);
  ASSERT_EQ(s.events.size(), 2u);
  EXPECT_EQ(s.events[0].at_s, 200.0);
  EXPECT_EQ(std::get<SetSetpoint>(s.events[0].action).pct, 60.0);
  EXPECT_EQ(std::get<SetOutputLoad>(s.events[1].action).fraction, 0.5);
}

TEST(ScenarioParse, InlinePlantAndAllEventKinds) {
  const Scenario s = parse_scenario(R"(
scenario "everything"
plant { C=0.2 R=1500 hmax=0.8 qmax=0.0004 outflow=torricelli travel=10 deadtime=1.5 }
control onoff sp=70 hyst=10
run duration=100s dt=0.1s
at 10s set inlimit 0.75
at 20s set mode pi kp=3 ki=0.1
at 30s set gains kp=1 ki=0.5 kd=2
at 40s set onoff sp=60 hyst=5
at 50s set mode onoff
)");
  const auto& p = std::get<InlinePlant>(s.plant);
  EXPECT_EQ(p.capacitance, 0.2);
  EXPECT_EQ(p.outflow, OutflowModel::Torricelli);
  const PlantConfig cfg = p.resolve();
  EXPECT_EQ(cfg.tank.resistance, 1500.0);
  EXPECT_EQ(cfg.valve.travel_time_s, 10.0);
  EXPECT_EQ(cfg.dead_time_s, 1.5);
  EXPECT_EQ(cfg.tank.area, TankConfig{}.area);
  ASSERT_EQ(s.events.size(), 5u);
  EXPECT_EQ(std::get<SetInputLimit>(s.events[0].action).fraction, 0.75);
  const auto& mode = std::get<SetMode>(s.events[1].action);
  EXPECT_EQ(mode.mode, ControllerMode::PI);
  EXPECT_EQ(mode.ki, 0.1);
  EXPECT_FALSE(mode.kd.has_value());
  EXPECT_EQ(std::get<SetGains>(s.events[2].action).gains, (Gains{1.0, 0.5, 2.0}));
  EXPECT_EQ(std::get<SetOnOff>(s.events[3].action).hyst_pct, 5.0);
}

TEST(ScenarioParse, RoundTripsThroughSerialize) {
  const Scenario s = parse_scenario(kBasic);
  EXPECT_EQ(parse_scenario(serialize(s)), s);
  // Serialization is canonical.
  EXPECT_EQ(serialize(parse_scenario(serialize(s))), serialize(s));
}

TEST(ScenarioParse, ShortestDecimalsSurviveRoundTrip) {
  Scenario s = parse_scenario(kBasic);
  s.control.kp = 0.1 + 0.2;
  s.control.ki = 1.0 / 3.0;
  s.events[0].at_s = 200.0 / 3.0;
  const Scenario back = parse_scenario(serialize(s));
  EXPECT_EQ(back.control.kp, s.control.kp);
  EXPECT_EQ(back.control.ki, s.control.ki);
  EXPECT_EQ(back.events[0].at_s, s.events[0].at_s);
}

TEST(ScenarioParse, SyntaxErrorsCarryLineAndColumn) {
  const auto e = parse_error<SyntaxError>(
      "scenario \"x\"\nplant paper_default\ncontrol pid\nrun duration=10s dt=0.1s\nat 5s bump sp 4\n");
  EXPECT_EQ(e.where().line, 5);
  EXPECT_EQ(e.where().column, 7);
  EXPECT_NE(std::string(e.what()).find("5:7:"), std::string::npos);
}

TEST(ScenarioParse, UnknownDirective) {
  const auto e = parse_error<SyntaxError>("scenario \"x\"\n  launch now\n");
  EXPECT_EQ(e.where().line, 2);
  EXPECT_EQ(e.where().column, 3);
}

TEST(ScenarioParse, MissingAndDuplicateDirectives) {
  parse_error<SyntaxError>("scenario \"x\"\nplant paper_default\ncontrol pid\n");
  parse_error<SyntaxError>(
      "scenario \"x\"\nplant paper_default\nplant paper_default\ncontrol pid\nrun duration=1s dt=0.1s\n");
  parse_error<SyntaxError>("scenario x\nplant paper_default\ncontrol pid\nrun duration=1s dt=0.1s\n");
  parse_error<SyntaxError>(
      "scenario \"x\nplant paper_default\ncontrol pid\nrun duration=1s dt=0.1s\n");
}

TEST(ScenarioParse, UnitsAreRequired) {
  parse_error<SyntaxError>("scenario \"x\"\nplant paper_default\ncontrol pid\nrun duration=10 dt=0.1s\n");
  parse_error<SyntaxError>(
      "scenario \"x\"\nplant paper_default\ncontrol pid\nrun duration=10s dt=0.1s\nat 5 set sp 3\n");
}

TEST(ScenarioParse, ValidationErrorsCarryLocation) {
  const auto e = parse_error<ValidationError>(
      "scenario \"x\"\nplant paper_default\ncontrol pid\nrun duration=10s dt=0.1s\nat 5s set sp 140\n");
  EXPECT_EQ(e.field(), "sp");
  ASSERT_TRUE(e.where().has_value());
  EXPECT_EQ(e.where()->line, 5);
}

TEST(ScenarioParse, RangeChecks) {
  const std::string head = "scenario \"x\"\nplant paper_default\ncontrol pid\nrun duration=10s dt=0.1s\n";
  parse_error<ValidationError>(head + "at 5s set outload 1.5\n");
  parse_error<ValidationError>(head + "at 5s set inlimit -0.1\n");
  parse_error<ValidationError>(head + "at 5s set gains kp=-1 ki=0 kd=0\n");
  parse_error<ValidationError>(head + "at 11s set sp 10\n");
  parse_error<ValidationError>(head + "at 5s set sp 10\nat 4s set sp 20\n");
  parse_error<ValidationError>("scenario \"x\"\nplant paper_default\ncontrol pid\nrun duration=10s dt=0s\n");
  parse_error<ValidationError>("scenario \"x\"\nplant paper_default\ncontrol pid sp=101\nrun duration=10s dt=0.1s\n");
  parse_error<ValidationError>("scenario \"x\"\nplant paper_default\ncontrol onoff sp=5 hyst=10\nrun duration=10s dt=0.1s\n");
}

TEST(ScenarioParse, UnknownKeysAreRejected) {
  EXPECT_THROW(parse_scenario("scenario \"x\"\nplant { volume=3 }\ncontrol pid\nrun duration=1s dt=0.1s\n"),
               Error);
  EXPECT_THROW(parse_scenario("scenario \"x\"\nplant paper_default\ncontrol pid gain=3\nrun duration=1s dt=0.1s\n"),
               Error);
}

TEST(ScenarioParse, MissingFileIsIoError) {
  EXPECT_THROW(load_scenario_file("/nonexistent/dir/x.scn"), IoError);
}

TEST(ScenarioRun, TestPlantPresetIsNotATank) {
  const Scenario s = parse_scenario(
      "scenario \"x\"\nplant fopdt_test\ncontrol pid\nrun duration=1s dt=0.1s\n");
  EXPECT_THROW(run_scenario(s, PresetLibrary::builtin()), ValidationError);
}

TEST(ScenarioRun, OneRowPerStepAndFixedTimeGrid) {
  const Scenario s = parse_scenario(kBasic);
  const TimeSeries ts = run_scenario(s, PresetLibrary::builtin());
  ASSERT_EQ(ts.rows.size(), 1200u);
  for (std::size_t k = 0; k < ts.rows.size(); ++k) {
    ASSERT_EQ(ts.rows[k].t_s, static_cast<double>(k + 1) * 0.5);
  }
  EXPECT_EQ(ts.initial.h, 0.0);
}

TEST(ScenarioRun, EventsApplyAtFirstBoundaryAtOrAfterTimestamp) {
  const Scenario s = parse_scenario(kBasic);
  const TimeSeries ts = run_scenario(s, PresetLibrary::builtin());
  // The step that starts at t = 200 s ends at 200.5 s and is the first with sp = 60.
  EXPECT_EQ(ts.rows[399].sp_pct, 40.0);
  EXPECT_EQ(ts.rows[400].sp_pct, 60.0);
  EXPECT_EQ(ts.rows[400].t_s, 200.5);
  // 400.25 s is not on the grid, so the load change waits for 400.5 s.
  EXPECT_NEAR(ts.rows[800].q_out, ts.rows[800].level_m / 2000.0, 1e-15);
  EXPECT_NEAR(ts.rows[801].q_out, 0.5 * ts.rows[801].level_m / 2000.0, 1e-15);
}

TEST(ScenarioRun, Deterministic) {
  const Scenario s = parse_scenario(kBasic);
  EXPECT_EQ(to_csv(run_scenario(s, PresetLibrary::builtin())),
            to_csv(run_scenario(s, PresetLibrary::builtin())));
}

TEST(ScenarioRun, RowsAreConsistent) {
  const Scenario s = parse_scenario(kBasic);
  const TimeSeries ts = run_scenario(s, PresetLibrary::builtin());
  const SensorConfig sensor;
  for (const TimeSeriesRow& r : ts.rows) {
    ASSERT_NEAR(r.level_pct, r.level_m / sensor.span_height() * 100.0, 1e-9);
    ASSERT_NEAR(r.error_pct, r.sp_pct - r.level_pct, 1e-12);
    ASSERT_GE(r.u_volts, 0.0);
    ASSERT_LE(r.u_volts, 10.0);
    ASSERT_NEAR(r.q_in, r.valve_frac * 0.0005, 1e-18);
  }
}

TEST(ScenarioRun, ModeSwitchMidRun) {
  const Scenario s = parse_scenario(R"(
scenario "switch"
plant paper_default
control onoff sp=70 hyst=10
run duration=200s dt=0.1s
at 100s set mode p kp=5
)");
  const TimeSeries ts = run_scenario(s, PresetLibrary::builtin());
  EXPECT_EQ(ts.rows[999].mode, ControllerMode::OnOff);
  EXPECT_EQ(ts.rows[1000].mode, ControllerMode::P);
  EXPECT_EQ(ts.rows[1000].sp_pct, 70.0);
}

TEST(ScenarioRun, PiReachesSetpoint) {
  const Scenario s = parse_scenario(R"(
scenario "pi"
plant geometric_consistent
control pi kp=2 ki=0.05 sp=50
run duration=1500s dt=0.1s
)");
  const TimeSeries ts = run_scenario(s, PresetLibrary::builtin());
  EXPECT_NEAR(ts.rows.back().level_pct, 50.0, 0.05);
}

TEST(ScenarioRun, RejectsInvalidScenario) {
  Scenario s = parse_scenario(kBasic);
  s.dt_s = -1.0;
  EXPECT_THROW(run_scenario(s, PresetLibrary::builtin()), ValidationError);
}

TEST(ScenarioRun, ShippedFixturesParseAndRoundTrip) {
  const std::filesystem::path dir = HYDROLAB_DEFAULT_SCENARIO_DIR;
  int count = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".scn") continue;
    SCOPED_TRACE(entry.path().string());
    const Scenario s = load_scenario_file(entry.path());
    EXPECT_EQ(parse_scenario(serialize(s)), s);
    EXPECT_NO_THROW(resolve_plant(s, PresetLibrary::builtin()));
    ++count;
  }
  EXPECT_GE(count, 5);
}
