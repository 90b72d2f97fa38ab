#pragma once

#include <lpbf/material.hpp>
#include <lpbf/parallel.hpp>
#include <lpbf/scanpath.hpp>

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace lpbf
{

/// How "half the temperature" of a reference is read for fresh layers and
/// powder pixels.
enum class HalfRule
{
  above_ambient, // T_amb + (T_ref - T_amb) / 2
  absolute       // T_ref / 2
};

double half_temperature(double reference, double ambient, HalfRule rule);

/// Largest stable forward-Euler step for the grid, including the top
/// convection sink.
double stability_bound(VoxelGrid const &grid, MaterialProps const &mat);
double stability_bound(double dx, double dz, MaterialProps const &mat);

/// Temperatures of the explicitly simulated layers [k_lo, k_lo + n_layers),
/// all cells of each layer, i fastest. Cells that are powder keep their value
/// but take no part in conduction. `bottom_boundary` holds the fixed
/// temperatures of the layer just below the window (the build plate when
/// k_lo == 0).
class TemperatureField
{
public:
  TemperatureField() = default;
  TemperatureField(int nx, int ny, int k_lo, int n_layers, double fill);

  int nx() const { return _nx; }
  int ny() const { return _ny; }
  int k_lo() const { return _k_lo; }
  int k_top() const { return _k_lo + _n_layers - 1; }
  int n_layers() const { return _n_layers; }
  bool has_layer(int k) const { return k >= _k_lo && k <= k_top(); }
  std::size_t size() const { return values.size(); }
  std::size_t cells_per_layer() const
  {
    return static_cast<std::size_t>(_nx) * _ny;
  }

  std::size_t index(int i, int j, int k) const
  {
    return (static_cast<std::size_t>(k - _k_lo) * _ny + j) * _nx + i;
  }
  double at(int i, int j, int k) const { return values[index(i, j, k)]; }
  double &at(int i, int j, int k) { return values[index(i, j, k)]; }
  double boundary(int i, int j) const
  {
    return bottom_boundary[static_cast<std::size_t>(j) * _nx + i];
  }

  std::vector<double> values;
  std::vector<double> bottom_boundary;

private:
  int _nx = 0;
  int _ny = 0;
  int _k_lo = 0;
  int _n_layers = 0;
};

struct BoundaryOptions
{
  bool top_convection = true; // convective top surface of the window
  bool bottom_fixed = true;   // fixed-temperature layer below the window
};

/// Explicit conduction operator T(l+1) = A T(l) + Q_disturbance + Q_laser(l)
/// stored as six neighbour bands. Row r of A is
///   A[r][r]   = 1 - sum_b c_b[r] - sink[r]
///   A[r][r+o] = c_b[r]
/// and it is applied in difference form,
///   T'[r] = T[r] + sum_b c_b[r] (T[r+o_b] - T[r]) + (Q_dist[r] - sink[r] T[r]),
/// with bands in ascending offset order, so a uniform field under insulated
/// boundaries is reproduced exactly.
class StateSystem
{
public:
  static constexpr int n_bands = 6;

  std::size_t size() const { return sink.size(); }
  double dt() const { return _dt; }
  std::array<std::ptrdiff_t, n_bands> const &offsets() const { return _offsets; }

  // out = A in + disturbance
  void apply(std::span<double const> in, std::span<double> out,
             Parallel const &pool) const;
  void apply(std::span<double const> in, std::span<double> out) const;

  // Row-major dense copy of A, for small test grids only.
  std::vector<double> to_dense() const;

  std::array<std::vector<double>, n_bands> couplings;
  std::vector<double> sink;
  std::vector<double> disturbance;
  std::vector<std::uint8_t> active;

private:
  friend StateSystem build_state_system(VoxelGrid const &,
                                        TemperatureField const &,
                                        MaterialProps const &, double,
                                        BoundaryOptions, double);
  std::array<std::ptrdiff_t, n_bands> _offsets{};
  double _dt = 0.0;
};

/// Assembles the 7-point operator over the window's solid cells. Sides and
/// any face touching powder are insulated, the window's top layer convects to
/// ambient, and the layer below the window is a fixed-temperature boundary.
/// Throws ConfigError if dt exceeds `stability_safety * stability_bound`.
StateSystem build_state_system(VoxelGrid const &grid,
                               TemperatureField const &window,
                               MaterialProps const &mat, double dt,
                               BoundaryOptions options = {},
                               double stability_safety = 1.0);

/// Per-step temperature increments of the element-integrated Goldak source.
struct SparseSource
{
  std::vector<std::size_t> index;
  std::vector<double> value; // K per step
};

// erf-integrated Gaussian over one cell along one axis:
// erf(sqrt3/r (c + h/2 - X)) - erf(sqrt3/r (c - h/2 - X)).
double goldak_axis_factor(double beam_center, double cell_center,
                          double cell_size, double radius);

/// Element average of the hemispherical Goldak source centred at
/// (center.x, center.y) on the window's top surface, converted to a
/// temperature increment over one step of length dt. Only solid cells within
/// four beam radii receive heat. One step injects f eta P dt of energy when
/// the support lies inside the grid.
SparseSource integrated_goldak(Point3 const &center, double power,
                               VoxelGrid const &grid,
                               TemperatureField const &window,
                               BeamParams const &beam, MaterialProps const &mat,
                               double dt);

struct ThermalContext
{
  VoxelGrid grid;
  MaterialProps material;
  BeamParams beam;
  double dt = 0.0;
  int window_layers = 30;
  HalfRule half_rule = HalfRule::above_ambient;
  BoundaryOptions boundaries;
  int threads = 1;
};

/// Advances the window through the vector's N_v steps with the source
/// sampled at the middle of each step. Equivalent to the lumped
/// T(l_v) = A^N_v T(l_v0) + b_v, evaluated by repeated sparse application.
TemperatureField step_vector(TemperatureField state, StateSystem const &sys,
                             ScanVector const &v, double power,
                             ThermalContext const &ctx, Parallel const &pool);
TemperatureField step_vector(TemperatureField state, StateSystem const &sys,
                             ScanVector const &v, double power,
                             ThermalContext const &ctx);

enum class SubsurfaceMode
{
  solid_below,
  powder_below
};

struct SubsurfaceResult
{
  double temperature = 0.0;
  int n_elements = 0;
  SubsurfaceMode mode = SubsurfaceMode::solid_below;
};

/// Midpoint temperature of a two-layer powder bed heated from above:
/// T_node + 4 (T_base - T_node)/pi sum_{m=0}^{terms-1} (-1)^m/(2m+1)
///   exp(-(pi(2m+1)/(4 dz))^2 alpha dtau) cos(pi(2m+1)/4).
double powder_subsurface_temperature(double t_node, double t_base,
                                     double alpha_powder, double dz,
                                     double dtau, int terms = 51);

/// Subsurface temperature for the next vector from the field just before it
/// is scanned. Solid below: mean of the layer below over the vector's cells
/// (the build plate or the window's boundary layer when below the window).
/// Overhang: powder series with T_node the mean current-layer temperature
/// under the vector and dtau the time until the vector starts.
SubsurfaceResult subsurface_temperature(TemperatureField const &state,
                                        ScanVector const &v_next,
                                        VoxelGrid const &grid,
                                        MaterialProps const &mat, double dtau);

/// Temperatures of every layer of the part, kept outside the explicit
/// window. Layers above `top_layer` are not yet built.
class PartRecord
{
public:
  PartRecord() = default;
  PartRecord(VoxelGrid const &grid, double fill);

  int nx() const { return _nx; }
  int ny() const { return _ny; }
  int nz() const { return _nz; }
  int top_layer() const { return _top; }
  void set_top_layer(int k) { _top = k; }
  std::size_t cells_per_layer() const
  {
    return static_cast<std::size_t>(_nx) * _ny;
  }
  std::size_t index(int i, int j, int k) const
  {
    return (static_cast<std::size_t>(k) * _ny + j) * _nx + i;
  }
  double at(int i, int j, int k) const { return values[index(i, j, k)]; }
  double &at(int i, int j, int k) { return values[index(i, j, k)]; }
  std::span<double> layer(int k)
  {
    return {values.data() + k * cells_per_layer(), cells_per_layer()};
  }
  std::span<double const> layer(int k) const
  {
    return {values.data() + k * cells_per_layer(), cells_per_layer()};
  }

  std::vector<double> values;

private:
  int _nx = 0;
  int _ny = 0;
  int _nz = 0;
  int _top = -1;
};

// Copies the window's layers into the record.
void store_window(TemperatureField const &window, PartRecord &record);

/// Opens the window for build layer k = new_k on the (post-dwell) record: the
/// window spans the top `window_layers` layers, layers below it are frozen in
/// the record and the one just below becomes the fixed bottom boundary. The
/// fresh layer starts at the half rule of the temperature beneath each cell.
TemperatureField advance_window(PartRecord &record, int new_k,
                                ThermalContext const &ctx);

/// Flat little-endian snapshot: "LPBFSNAP", u32 version, u32 nx, ny, nz,
/// f64 dx, dy, dz, i32 layer, then nx*ny*nz f32 values (i, then j, then k).
struct Snapshot
{
  std::uint32_t nx = 0;
  std::uint32_t ny = 0;
  std::uint32_t nz = 0;
  double dx = 0.0;
  double dy = 0.0;
  double dz = 0.0;
  std::int32_t layer = 0;
  std::vector<float> values;

  bool operator==(Snapshot const &) const = default;
};

Snapshot make_snapshot(TemperatureField const &field, VoxelGrid const &grid,
                       int layer);
void write_snapshot(std::ostream &out, Snapshot const &snap);
Snapshot read_snapshot(std::istream &in);
void write_snapshot(std::filesystem::path const &path, Snapshot const &snap);
Snapshot read_snapshot(std::filesystem::path const &path);

struct FieldSummary
{
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
};

// Statistics over the solid cells of the window.
FieldSummary summarize(TemperatureField const &field, VoxelGrid const &grid);

} // namespace lpbf
