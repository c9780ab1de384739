#ifndef HYDROLAB_LOOP_HPP_
#define HYDROLAB_LOOP_HPP_

#include <cstdint>

#include "hydrolab/control.hpp"
#include "hydrolab/plant.hpp"
#include "hydrolab/timeseries.hpp"

namespace hydrolab {

/// Transmitter → controller → valve → tank, one fixed step at a time. Shared
/// by the scenario runner and the live runtime so both log identical rows.
class ControlLoop {
 public:
  ControlLoop(PlantConfig plant, ControllerSetup controller, double dt, PlantState initial = {});

  TimeSeriesRow step();

  Controller& controller() { return controller_; }
  const Controller& controller() const { return controller_; }
  TankSimulator& plant() { return plant_; }
  const TankSimulator& plant() const { return plant_; }

  double dt() const { return dt_; }
  std::uint64_t step_index() const { return steps_; }

  /// Plant back to `initial`, controller memory cleared; time keeps running.
  void reset_process(const PlantState& initial);

 private:
  TankSimulator plant_;
  Controller controller_;
  double dt_;
  std::uint64_t steps_ = 0;
};

}  // namespace hydrolab

#endif  // HYDROLAB_LOOP_HPP_
