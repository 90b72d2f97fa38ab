#pragma once

#include <lpbf/dwell.hpp>
#include <lpbf/meltpool.hpp>
#include <lpbf/scanpath.hpp>
#include <lpbf/thermal.hpp>

#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace lpbf
{

struct ControlConfig
{
  double target_area = 0.0; // m^2
  std::map<RegionTag, double> region_targets; // overrides per region
  double p_min = 20.0;  // W
  double p_max = 500.0; // W
  double p_nominal = 0.0;
  double tolerance = 1e-10; // relative, on the area residual
  int max_iterations = 100;

  double target_for(RegionTag region) const;
  void validate() const;
};

struct PowerSolution
{
  double power = 0.0;
  double area = 0.0;
  bool clamped = false;
  int iterations = 0;
};

/// Power that brings the melt-pool area to `target` at the given speed and
/// subsurface temperature. Area grows strictly with power, so the root is
/// unique; it is found with Newton steps on u = sqrt(P) kept inside a
/// bisection bracket, and targets outside [A(P_min), A(P_max)] clamp.
PowerSolution solve_power(double t_below, double speed, double target,
                          ControlConfig const &cfg,
                          MeltPoolCoefficients const &c, MaterialProps const &mat);
PowerSolution solve_power(double t_below, double speed, ControlConfig const &cfg,
                          MeltPoolCoefficients const &c, MaterialProps const &mat);

struct ScheduleEntry
{
  int layer = 0;
  int vector_id = 0;
  Point3 start;
  Point3 end;
  double speed = 0.0;
  double power = 0.0;
  double t_below = 0.0;
  SubsurfaceMode mode = SubsurfaceMode::solid_below;
  double area = 0.0;
  bool clamped = false;
  RegionTag region = RegionTag::bulk;

  bool operator==(ScheduleEntry const &) const = default;
};

struct PowerSchedule
{
  std::vector<ScheduleEntry> entries; // one per mark vector, in scan order
};

/// Chooses the power for a mark vector from the subsurface temperature just
/// before it is scanned.
struct PowerChoice
{
  double power = 0.0;
  double area = 0.0;
  bool clamped = false;
};
using PowerPolicy =
    std::function<PowerChoice(ScanVector const &, SubsurfaceResult const &)>;

using LayerObserver = std::function<void(LayerScan const &, TemperatureField const &,
                                         PartRecord const &)>;

/// Runs the build vector by vector: subsurface temperature, power from the
/// policy, thermal step with that power; jumps advance the clock at zero
/// power. Between layers the part record goes through the interlayer dwell
/// and the window moves up. `layers` must already be subdivided.
PowerSchedule run_build(std::vector<LayerScan> const &layers,
                        ThermalContext const &ctx, PowerPolicy const &policy,
                        DwellOptions const &dwell,
                        LayerObserver const &observer = {});

/// Feedforward schedule: every mark vector gets the power that holds the
/// predicted melt-pool area at the configured target.
PowerSchedule run_feedforward(std::vector<LayerScan> const &layers,
                              ThermalContext const &ctx, ControlConfig const &cfg,
                              MeltPoolCoefficients const &c,
                              DwellOptions const &dwell,
                              LayerObserver const &observer = {});

/// Open-loop run with given powers (the vector's own nominal power when
/// `powers` is empty, else powers[i] for the i-th mark vector), reporting the
/// predicted area of each vector.
PowerSchedule run_fixed_power(std::vector<LayerScan> const &layers,
                              ThermalContext const &ctx,
                              std::vector<double> const &powers,
                              MeltPoolCoefficients const &c,
                              DwellOptions const &dwell,
                              LayerObserver const &observer = {});

/// Scan path ready for simulation: parsed with a timestep, gridded and
/// subdivided.
struct PreparedScan
{
  VoxelGrid grid;
  std::vector<LayerScan> layers;
  double dt = 0.0;
  int substrate_layers = 0;
};

/// When config.dt is unset the timestep is `dt_fraction` of the explicit
/// stability bound. A `substrate` record in the file overrides
/// config.substrate_layers.
PreparedScan prepare_scan(std::istream &in, GridConfig config,
                          MaterialProps const &mat,
                          std::string const &source_name = "<stream>",
                          double dt_fraction = 0.5);

ThermalContext make_thermal_context(PreparedScan const &scan,
                                    MaterialProps const &mat,
                                    BeamParams const &beam, int threads = 1);

struct LayerPower
{
  int layer = 0;
  std::size_t n_vectors = 0;
  double mean_power = 0.0;
  double min_power = 0.0;
  double max_power = 0.0;
};

std::vector<LayerPower> per_layer_power(PowerSchedule const &schedule);
double mean_power(std::vector<ScheduleEntry> const &entries,
                  std::function<bool(ScheduleEntry const &)> const &keep);

void write_schedule_csv(std::ostream &out, PowerSchedule const &schedule);
void write_layer_power_csv(std::ostream &out, PowerSchedule const &schedule);

} // namespace lpbf
