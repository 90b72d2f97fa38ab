#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace lpbf
{

struct Point3
{
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  bool operator==(Point3 const &) const = default;
};

enum class RegionTag
{
  bulk,
  overhang,
  subdivided_turnaround
};

std::string to_string(RegionTag tag);

/// One laser segment on the layer timeline. Marks carry the laser; jumps
/// (skywrites, turnarounds, idle time) are zero-power vectors that only
/// advance the clock.
struct ScanVector
{
  int id = 0;
  int layer = 0;
  Point3 start;
  Point3 end;
  double speed = 0.0;         // m/s, marks only
  double power_nominal = 0.0; // W
  bool is_mark = true;
  long n_steps = 1;
  long start_step = 0; // first timestep, counted from the start of the layer
  RegionTag region = RegionTag::bulk;

  double length() const;
  // Laser position at the middle of step s, 0 <= s < n_steps.
  Point3 position_at_step(long s) const;

  bool operator==(ScanVector const &) const = default;
};

struct LayerScan
{
  int layer = 0;         // 1-based build layer; layer 1 sits on the plate
  double z_height = 0.0; // top surface of the layer, m
  double hatch_angle_deg = 0.0;
  std::vector<ScanVector> vectors;

  long total_steps() const;
  bool operator==(LayerScan const &) const = default;
};

/// In-plane extent of the voxel grid, m.
struct GridExtent
{
  double x_min = 0.0;
  double x_max = 0.0;
  double y_min = 0.0;
  double y_max = 0.0;
};

struct GridConfig
{
  double hatch_spacing = 90e-6;
  double layer_thickness = 40e-6;
  double dt = 0.0;              // timeline step, must be set before loading
  double skywrite_time = 1.8e-3; // used for `jump` records without a duration
  double default_power = 0.0;    // used for `mark` records without a power
  int margin_cells = 2;
  int substrate_layers = 0; // solid plate layers below layer 1
  double min_fragment_fraction = 0.25;
  std::optional<GridExtent> extent; // derived from the scan path when unset
};

/// Uniform voxel grid. Cell (i, j, k) spans
/// [origin.x + i dx, origin.x + (i+1) dx] and likewise in y and z. Layer
/// k = 0 sits on the build plate; the first `substrate_layers` layers form a
/// pre-existing solid plate and build layer L maps to
/// k = substrate_layers + L - 1.
class VoxelGrid
{
public:
  VoxelGrid() = default;
  VoxelGrid(double dx, double dz, Point3 origin, int nx, int ny, int nz,
            int substrate_layers);

  double dx() const { return _dx; }
  double dy() const { return _dx; }
  double dz() const { return _dz; }
  Point3 const &origin() const { return _origin; }
  int nx() const { return _nx; }
  int ny() const { return _ny; }
  int nz() const { return _nz; }
  int substrate_layers() const { return _substrate_layers; }
  std::size_t cells_per_layer() const
  {
    return static_cast<std::size_t>(_nx) * static_cast<std::size_t>(_ny);
  }
  std::size_t size() const { return cells_per_layer() * _nz; }

  std::size_t index(int i, int j, int k) const
  {
    return (static_cast<std::size_t>(k) * _ny + j) * _nx + i;
  }
  bool contains(int i, int j, int k) const
  {
    return i >= 0 && j >= 0 && k >= 0 && i < _nx && j < _ny && k < _nz;
  }

  int layer_to_k(int layer) const { return _substrate_layers + layer - 1; }
  double x_center(int i) const { return _origin.x + (i + 0.5) * _dx; }
  double y_center(int j) const { return _origin.y + (j + 0.5) * _dx; }
  double z_center(int k) const { return _origin.z + (k + 0.5) * _dz; }
  double z_top(int k) const { return _origin.z + (k + 1) * _dz; }

  bool solid(int i, int j, int k) const;
  // The build plate under k = 0 counts as solid.
  bool solid_below(int i, int j, int k) const
  {
    return k == 0 || solid(i, j, k - 1);
  }
  void set_solid(int i, int j, int k, bool value);
  bool occupancy_known(int k) const;
  void mark_layer_known(int k);

  bool inside_xy(double x, double y) const;

private:
  double _dx = 0.0;
  double _dz = 0.0;
  Point3 _origin;
  int _nx = 0;
  int _ny = 0;
  int _nz = 0;
  int _substrate_layers = 0;
  std::vector<std::uint8_t> _occupancy;
  std::vector<std::uint8_t> _known_layers;
};

struct ScanPathFile
{
  int substrate_layers = -1; // -1 when the file does not declare one
  std::vector<LayerScan> layers;
};

/// Parses the line-oriented scan path format (see README). Coordinates are in
/// mm, speeds in mm/s, durations in ms; everything returned is SI.
ScanPathFile parse_scanpath(std::istream &in, GridConfig const &config,
                            std::string const &source_name = "<stream>");

std::vector<LayerScan> load_scanpath(std::filesystem::path const &path,
                                     GridConfig const &config);
ScanPathFile load_scanpath_file(std::filesystem::path const &path,
                                GridConfig const &config);

// Jump durations are written as n_steps * dt so a re-parse with the same dt
// reproduces the timeline.
void write_scanpath(std::ostream &out, std::vector<LayerScan> const &layers,
                    double dt, int substrate_layers = 0);

// Number of timesteps needed to cover `duration`, at least one.
long steps_for_duration(double duration, double dt);

/// Grid covering every vector with `margin_cells` of padding, aligned so the
/// lowest vector coordinate sits on a cell centre. Occupancy of each build
/// layer is the set of cells its marks pass over; substrate layers are solid
/// across the whole footprint.
VoxelGrid build_grid(std::vector<LayerScan> const &layers,
                     GridConfig const &config);

struct CellIndex
{
  int i = 0;
  int j = 0;
  int k = 0;
  bool operator==(CellIndex const &) const = default;
};

/// Ordered distinct cells whose closed footprint the segment touches
/// (supercover), at the vector's layer. Degenerate vectors return the single
/// containing cell. Cells outside the grid are dropped.
std::vector<CellIndex> map_vector_to_elements(ScanVector const &v,
                                              VoxelGrid const &grid);

/// Splits marks wherever the class of the layer below (solid vs powder)
/// changes along the vector. Fragments shorter than
/// `min_fragment_fraction * dx` are merged into a neighbour. Vector ids are
/// renumbered sequentially over the whole build and start steps recomputed.
std::vector<LayerScan> subdivide_vectors(std::vector<LayerScan> const &layers,
                                         VoxelGrid const &grid,
                                         double min_fragment_fraction = 0.25);

// Sequential ids and start steps after editing vector lists.
void renumber(std::vector<LayerScan> &layers);

} // namespace lpbf
