#pragma once

#include <lpbf/calibration.hpp>
#include <lpbf/controller.hpp>
#include <lpbf/dwell.hpp>
#include <lpbf/material.hpp>
#include <lpbf/meltpool.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace lpbf::cli
{

enum class AreaSourceKind
{
  virtual_machine,
  predicted,
  file
};

/// Everything a run needs, in SI units. Built from an INI file on top of the
/// material preset's defaults.
struct RunConfig
{
  MaterialProps material;
  NominalParams nominal;
  GridConfig grid;
  double dt_fraction = 0.5;
  int window_layers = 30;
  BeamParams beam;
  MeltPoolCoefficients coefficients;
  ControlConfig control; // target_area 0 means A(P_nominal, v_nominal, T_base)
  DwellOptions dwell;

  std::optional<MeasurementSource> fit_source; // unset pools all rows

  std::vector<double> f_values;
  double f_true = 2.5;
  AreaSourceKind area_source = AreaSourceKind::virtual_machine;
  std::filesystem::path measured_areas;
  PyramidSpec pyramid;

  std::filesystem::path powers_file; // simulate: schedule CSV to replay
  bool snapshots = true;

  SlabSpec slab;
  double noise = 0.05; // relative, synthetic single tracks

  std::uint64_t seed = 1;
  int threads = 1;

  // Target area actually used by the controller.
  double target_area() const;
};

/// Reads an INI file. `material` (from --material) takes precedence over the
/// file's [material] preset. Unknown sections or keys are config errors.
RunConfig load_config(std::optional<std::filesystem::path> const &path,
                      std::optional<std::string> const &material);
RunConfig parse_config(std::istream &in, std::optional<std::string> const &material,
                       std::string const &source_name = "<config>");

// Every resolved value in the same INI layout, loadable again.
void write_resolved_config(std::ostream &out, RunConfig const &cfg);

std::vector<double> parse_f_values(std::string const &text);

} // namespace lpbf::cli
