#pragma once

#include <lpbf/controller.hpp>

#include <array>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace lpbf
{

/// Single-layer stepped pyramid: three blocks of parallel vectors along y,
/// hatched along +x in snake order, block widths (vector lengths) decreasing.
struct PyramidSpec
{
  std::array<double, 3> widths{20e-3, 13.4e-3, 6.7e-3}; // m
  int vectors_per_step = 111;
  double hatch_spacing = 90e-6;
  double x_start = -15e-3;
  double speed = 1.0;   // m/s
  double power = 220.0; // W
  double skywrite = 1.8e-3;
  double layer_thickness = 40e-6;
  int substrate_layers = 29;

  // Widths and vector counts scaled down for quick runs.
  static PyramidSpec reduced(double scale = 0.1, int vectors_per_step = 15);

  int total_vectors() const { return 3 * vectors_per_step; }
  // Second half of the widest block, away from the start-up transient.
  std::pair<double, double> bulk_window() const;
  // x-range of block s (0 = widest).
  std::pair<double, double> step_range(int s) const;
};

/// Two layers of y-parallel lines hatched along +x in snake order. Layer 2
/// repeats layer 1 and adds `overhang_lines` further lines whose layer below
/// is powder.
struct SlabSpec
{
  double line_length = 10e-3;
  int base_lines = 20;
  int overhang_lines = 1;
  double hatch_spacing = 90e-6;
  double speed = 1.0;
  double power = 220.0;
  double skywrite = 1.8e-3;
  double layer_thickness = 40e-6;
  int substrate_layers = 10;
};

std::string stepped_pyramid_scanpath(PyramidSpec const &spec);
std::string overhang_slab_scanpath(SlabSpec const &spec);

/// ||A - mean(A)||_2 / mean(A).
double normalized_error(std::vector<double> const &areas);

/// Everything a tuning run needs besides the tuning factor itself.
struct CalibrationSetup
{
  PreparedScan scan;
  ThermalContext thermal; // beam.tuning_factor is overwritten per run
  ControlConfig control;  // target_area is overwritten per run
  MeltPoolCoefficients coefficients;
  DwellOptions dwell;
  double p_nominal = 0.0;
  double nominal_speed = 0.0;
  std::pair<double, double> bulk_window; // x-range of the bulk vectors, m
  double power_tolerance = 1e-3;         // relative, on the bulk mean power
};

bool in_window(ScheduleEntry const &e, std::pair<double, double> const &window);

struct TuneResult
{
  double target_area = 0.0;
  double bulk_mean_power = 0.0;
  int evaluations = 0;
  PowerSchedule schedule;
};

/// Target area for which the mean scheduled power over the bulk window equals
/// the nominal power. Starts from A(P_nominal, v, T_base) and, if that misses,
/// brackets and refines on log A (mean power rises with the target).
TuneResult tune_target(CalibrationSetup const &setup, double f);

/// Measured area per mark vector of a schedule.
using AreaSource =
    std::function<std::vector<double>(CalibrationSetup const &, PowerSchedule const &)>;

// The controller's own predictions.
AreaSource predicted_areas();
/// Reference machine: replays the schedule's powers through the thermal model
/// with tuning factor f_true and reports the melt-pool model's areas.
AreaSource virtual_machine(double f_true);
// Areas by vector id, e.g. from read_measured_areas.
AreaSource measured_areas(std::map<int, double> areas);

struct TuningRun
{
  double f = 0.0;
  double target_area = 0.0;
  std::vector<double> areas;
  double epsilon = 0.0;
  double bulk_mean_power = 0.0;
};

TuningRun evaluate_f(CalibrationSetup const &setup, double f,
                     AreaSource const &source);

struct FSweep
{
  TuningRun best;
  std::vector<TuningRun> trace;
};

FSweep sweep_f(CalibrationSetup const &setup, std::vector<double> const &f_values,
               AreaSource const &source);

// True when the trace falls strictly to its minimum and rises strictly after.
bool is_unimodal(std::vector<TuningRun> const &trace);

/// Measured-area table with header `vector_id, area_mm2`.
std::map<int, double> read_measured_areas(std::istream &in,
                                          std::string const &source_name =
                                              "<stream>");
void write_tuning_report_csv(std::ostream &out, FSweep const &sweep);

} // namespace lpbf
