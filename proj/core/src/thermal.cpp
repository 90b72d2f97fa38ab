#include <lpbf/error.hpp>
#include <lpbf/thermal.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <utility>

namespace lpbf
{

namespace
{

// Mean that reproduces a constant sequence exactly.
class StableMean
{
public:
  void add(double x)
  {
    if (_n == 0)
      _first = x;
    else
      _sum += x - _first;
    ++_n;
  }
  int count() const { return _n; }
  double value() const { return _first + _sum / _n; }

private:
  double _first = 0.0;
  double _sum = 0.0;
  int _n = 0;
};

} // namespace

double half_temperature(double reference, double ambient, HalfRule rule)
{
  if (rule == HalfRule::absolute)
    return 0.5 * reference;
  return ambient + 0.5 * (reference - ambient);
}

double stability_bound(double dx, double dz, MaterialProps const &mat)
{
  double const alpha = mat.diffusivity();
  double const inv = 2.0 / (dx * dx) + 1.0 / (dz * dz);
  double const conv = mat.convection_coeff / (mat.density * mat.heat_capacity * dz);
  return 1.0 / (2.0 * alpha * inv + conv);
}

double stability_bound(VoxelGrid const &grid, MaterialProps const &mat)
{
  return stability_bound(grid.dx(), grid.dz(), mat);
}

TemperatureField::TemperatureField(int nx, int ny, int k_lo, int n_layers,
                                   double fill)
    : values(static_cast<std::size_t>(nx) * ny * n_layers, fill),
      bottom_boundary(static_cast<std::size_t>(nx) * ny, fill), _nx(nx),
      _ny(ny), _k_lo(k_lo), _n_layers(n_layers)
{
  if (nx <= 0 || ny <= 0 || n_layers <= 0)
    throw ConfigError("temperature window needs positive dimensions");
  if (k_lo < 0)
    throw ConfigError("temperature window would extend below layer 0");
}

//----------------------------------------------------------------------------
// State system
//----------------------------------------------------------------------------

StateSystem build_state_system(VoxelGrid const &grid,
                               TemperatureField const &window,
                               MaterialProps const &mat, double dt,
                               BoundaryOptions options, double stability_safety)
{
  mat.validate();
  if (window.nx() != grid.nx() || window.ny() != grid.ny() ||
      window.k_top() >= grid.nz())
    throw ConfigError("temperature window does not match the voxel grid");
  if (!(stability_safety > 0.0 && stability_safety <= 1.0))
    throw ConfigError("stability safety factor must be in (0, 1]");
  double const bound = stability_bound(grid, mat);
  if (!(dt > 0.0) || dt > stability_safety * bound * (1.0 + 1e-12))
    throw ConfigError(fmt::format(
        "timestep {:.6g} s is not stable; the explicit bound is {:.6g} s "
        "(safety {:g})",
        dt, stability_safety * bound, stability_safety));

  int const nx = window.nx();
  int const ny = window.ny();
  std::ptrdiff_t const sx = 1;
  std::ptrdiff_t const sy = nx;
  std::ptrdiff_t const sz = static_cast<std::ptrdiff_t>(nx) * ny;
  std::size_t const n = window.size();

  StateSystem sys;
  sys._dt = dt;
  sys._offsets = {-sz, -sy, -sx, sx, sy, sz};
  for (auto &band : sys.couplings)
    band.assign(n, 0.0);
  sys.sink.assign(n, 0.0);
  sys.disturbance.assign(n, 0.0);
  sys.active.assign(n, 0);

  double const alpha = mat.diffusivity();
  double const cxy = alpha * dt / (grid.dx() * grid.dx());
  double const cz = alpha * dt / (grid.dz() * grid.dz());
  double const conv =
      mat.convection_coeff * dt / (mat.density * mat.heat_capacity * grid.dz());

  for (int k = window.k_lo(); k <= window.k_top(); ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
      {
        std::size_t const r = window.index(i, j, k);
        if (!grid.solid(i, j, k))
          continue;
        sys.active[r] = 1;
        auto couple = [&](int band, int ii, int jj, int kk, double c) {
          if (window.has_layer(kk) && grid.solid(ii, jj, kk))
            sys.couplings[band][r] = c;
        };
        couple(0, i, j, k - 1, cz);
        couple(1, i, j - 1, k, cxy);
        couple(2, i - 1, j, k, cxy);
        couple(3, i + 1, j, k, cxy);
        couple(4, i, j + 1, k, cxy);
        couple(5, i, j, k + 1, cz);

        if (k == window.k_lo() && options.bottom_fixed && grid.solid_below(i, j, k))
        {
          sys.sink[r] += cz;
          sys.disturbance[r] += cz * window.boundary(i, j);
        }
        if (k == window.k_top() && options.top_convection)
        {
          sys.sink[r] += conv;
          sys.disturbance[r] += conv * mat.ambient_temp;
        }
      }
  return sys;
}

void StateSystem::apply(std::span<double const> in, std::span<double> out,
                        Parallel const &pool) const
{
  std::size_t const n = size();
  if (in.size() != n || out.size() != n)
    throw ConfigError("state vector length does not match the system");
  // Powder rows carry zero couplings and sinks, so the same expression
  // returns them unchanged. Absent neighbours contribute an exact zero.
  double const *__restrict t = in.data();
  double *__restrict o = out.data();
  double const *c0 = couplings[0].data();
  double const *c1 = couplings[1].data();
  double const *c2 = couplings[2].data();
  double const *c3 = couplings[3].data();
  double const *c4 = couplings[4].data();
  double const *c5 = couplings[5].data();
  double const *sk = sink.data();
  double const *d = disturbance.data();
  auto const reach = static_cast<std::size_t>(_offsets[5]);

  auto edge_row = [&](std::size_t r) {
    double acc = 0.0;
    for (int b = 0; b < n_bands; ++b)
    {
      double const c = couplings[b][r];
      if (c != 0.0)
        acc += c * (t[r + _offsets[b]] - t[r]);
    }
    o[r] = t[r] + acc + (d[r] - sk[r] * t[r]);
  };

  pool.for_ranges(n, [&](std::size_t begin, std::size_t end) {
    std::size_t const lo = std::clamp(reach, begin, end);
    std::size_t const hi = std::clamp(n > reach ? n - reach : 0, lo, end);
    for (std::size_t r = begin; r < lo; ++r)
      edge_row(r);
    for (std::size_t r = lo; r < hi; ++r)
    {
      double const x = t[r];
      double acc = 0.0;
      acc += c0[r] * (t[r - reach] - x);
      acc += c1[r] * (t[r + _offsets[1]] - x);
      acc += c2[r] * (t[r - 1] - x);
      acc += c3[r] * (t[r + 1] - x);
      acc += c4[r] * (t[r + _offsets[4]] - x);
      acc += c5[r] * (t[r + reach] - x);
      o[r] = x + acc + (d[r] - sk[r] * x);
    }
    for (std::size_t r = hi; r < end; ++r)
      edge_row(r);
  });
}

void StateSystem::apply(std::span<double const> in, std::span<double> out) const
{
  apply(in, out, Parallel(1));
}

std::vector<double> StateSystem::to_dense() const
{
  std::size_t const n = size();
  std::vector<double> a(n * n, 0.0);
  for (std::size_t r = 0; r < n; ++r)
  {
    double diag = 1.0 - sink[r];
    for (int b = 0; b < n_bands; ++b)
    {
      double const c = couplings[b][r];
      if (c == 0.0)
        continue;
      a[r * n + static_cast<std::size_t>(r + _offsets[b])] = c;
      diag -= c;
    }
    a[r * n + r] = diag;
  }
  return a;
}

//----------------------------------------------------------------------------
// Heat source
//----------------------------------------------------------------------------

double goldak_axis_factor(double beam_center, double cell_center,
                          double cell_size, double radius)
{
  double const s = std::numbers::sqrt3 / radius;
  double const a = s * (cell_center - 0.5 * cell_size - beam_center);
  double const b = s * (cell_center + 0.5 * cell_size - beam_center);
  // erfc keeps precision in the far tail on either side.
  if (a > 0.0)
    return std::erfc(a) - std::erfc(b);
  if (b < 0.0)
    return std::erfc(-b) - std::erfc(-a);
  return std::erf(b) - std::erf(a);
}

SparseSource integrated_goldak(Point3 const &center, double power,
                               VoxelGrid const &grid,
                               TemperatureField const &window,
                               BeamParams const &beam, MaterialProps const &mat,
                               double dt)
{
  SparseSource src;
  if (power < 0.0)
    throw ConfigError("laser power must be non-negative");
  if (power == 0.0)
    return src;

  double const reach = 4.0 * beam.max_radius();
  double const dx = grid.dx();
  double const dz = grid.dz();
  int const k_top = window.k_top();
  double const z_max = grid.z_top(k_top);

  auto cell_range = [&](double c, double origin, double h, int n) {
    int lo = static_cast<int>(std::floor((c - reach - origin) / h));
    int hi = static_cast<int>(std::floor((c + reach - origin) / h));
    return std::pair{std::max(lo, 0), std::min(hi, n - 1)};
  };
  auto const [i0, i1] = cell_range(center.x, grid.origin().x, dx, grid.nx());
  auto const [j0, j1] = cell_range(center.y, grid.origin().y, dx, grid.ny());
  int const k0 = std::max(window.k_lo(),
                          k_top - static_cast<int>(std::ceil(reach / dz)));
  if (i0 > i1 || j0 > j1)
    return src;

  std::vector<double> fx(i1 - i0 + 1), fy(j1 - j0 + 1), fz(k_top - k0 + 1);
  for (int i = i0; i <= i1; ++i)
    fx[i - i0] = goldak_axis_factor(center.x, grid.x_center(i), dx, beam.rx);
  for (int j = j0; j <= j1; ++j)
    fy[j - j0] = goldak_axis_factor(center.y, grid.y_center(j), dx, beam.ry);
  // Hemisphere below the surface: only the lower half of the z Gaussian.
  for (int k = k0; k <= k_top; ++k)
  {
    double const top = z_max - grid.z_top(k);
    fz[k - k0] = goldak_axis_factor(0.0, top + 0.5 * dz, dz, beam.rz);
  }

  double const scale = dt / (mat.density * mat.heat_capacity) *
                       beam.tuning_factor * mat.absorptivity * power /
                       (4.0 * dx * dx * dz);
  for (int k = k0; k <= k_top; ++k)
    for (int j = j0; j <= j1; ++j)
      for (int i = i0; i <= i1; ++i)
      {
        if (!grid.solid(i, j, k))
          continue;
        double const q = scale * fx[i - i0] * fy[j - j0] * fz[k - k0];
        if (q == 0.0)
          continue;
        src.index.push_back(window.index(i, j, k));
        src.value.push_back(q);
      }
  return src;
}

//----------------------------------------------------------------------------
// Time stepping
//----------------------------------------------------------------------------

TemperatureField step_vector(TemperatureField state, StateSystem const &sys,
                             ScanVector const &v, double power,
                             ThermalContext const &ctx, Parallel const &pool)
{
  if (sys.size() != state.size())
    throw ConfigError("state system does not match the temperature window");
  double const p = v.is_mark ? power : 0.0;
  std::vector<double> next(state.size());
  for (long s = 0; s < v.n_steps; ++s)
  {
    sys.apply(state.values, next, pool);
    if (p > 0.0)
    {
      auto const src = integrated_goldak(v.position_at_step(s), p, ctx.grid,
                                         state, ctx.beam, ctx.material, sys.dt());
      for (std::size_t q = 0; q < src.index.size(); ++q)
      {
        double &t = next[src.index[q]];
        t += src.value[q];
        if (!std::isfinite(t))
          throw NumericError(fmt::format(
              "non-finite temperature in vector {} (layer {}) at step {}", v.id,
              v.layer, s));
      }
    }
    state.values.swap(next);
  }
  for (double t : state.values)
    if (!std::isfinite(t))
      throw NumericError(fmt::format(
          "non-finite temperature after vector {} (layer {})", v.id, v.layer));
  return state;
}

TemperatureField step_vector(TemperatureField state, StateSystem const &sys,
                             ScanVector const &v, double power,
                             ThermalContext const &ctx)
{
  return step_vector(std::move(state), sys, v, power, ctx, Parallel(1));
}

//----------------------------------------------------------------------------
// Subsurface temperature
//----------------------------------------------------------------------------

double powder_subsurface_temperature(double t_node, double t_base,
                                     double alpha_powder, double dz,
                                     double dtau, int terms)
{
  if (dtau < 0.0)
    throw ConfigError("time until scanning must be non-negative");
  double sum = 0.0;
  for (int m = 0; m < terms; ++m)
  {
    double const w = std::numbers::pi * (2 * m + 1);
    double const lam = w / (4.0 * dz);
    double const sign = (m % 2 == 0) ? 1.0 : -1.0;
    sum += sign / (2 * m + 1) * std::exp(-lam * lam * alpha_powder * dtau) *
           std::cos(w / 4.0);
  }
  return t_node + 4.0 * (t_base - t_node) / std::numbers::pi * sum;
}

SubsurfaceResult subsurface_temperature(TemperatureField const &state,
                                        ScanVector const &v_next,
                                        VoxelGrid const &grid,
                                        MaterialProps const &mat, double dtau)
{
  auto const cells = map_vector_to_elements(v_next, grid);
  if (cells.empty())
    throw ConfigError(
        fmt::format("vector {} does not cover any grid cell", v_next.id));
  int const k = cells.front().k;
  if (!state.has_layer(k))
    throw ConfigError(fmt::format(
        "vector {} lies outside the simulated window", v_next.id));

  SubsurfaceResult result;
  if (v_next.region != RegionTag::overhang)
  {
    StableMean below;
    for (auto const &c : cells)
    {
      if (!grid.solid_below(c.i, c.j, c.k))
        continue;
      if (k - 1 >= state.k_lo())
        below.add(state.at(c.i, c.j, k - 1));
      else if (k == 0)
        below.add(mat.baseplate_temp);
      else
        below.add(state.boundary(c.i, c.j));
    }
    if (below.count() > 0)
    {
      result.temperature = below.value();
      result.n_elements = below.count();
      result.mode = SubsurfaceMode::solid_below;
      return result;
    }
  }

  StableMean node;
  for (auto const &c : cells)
    node.add(state.at(c.i, c.j, c.k));
  result.temperature = powder_subsurface_temperature(
      node.value(), mat.baseplate_temp, mat.powder_diffusivity(), grid.dz(),
      dtau);
  result.n_elements = node.count();
  result.mode = SubsurfaceMode::powder_below;
  return result;
}

//----------------------------------------------------------------------------
// Part record and window
//----------------------------------------------------------------------------

PartRecord::PartRecord(VoxelGrid const &grid, double fill)
    : values(grid.size(), fill), _nx(grid.nx()), _ny(grid.ny()),
      _nz(grid.nz()), _top(grid.substrate_layers() - 1)
{
}

void store_window(TemperatureField const &window, PartRecord &record)
{
  if (window.nx() != record.nx() || window.ny() != record.ny() ||
      window.k_top() >= record.nz())
    throw ConfigError("temperature window does not match the part record");
  std::size_t const m = window.cells_per_layer();
  for (int k = window.k_lo(); k <= window.k_top(); ++k)
    std::copy_n(window.values.begin() + (k - window.k_lo()) * m, m,
                record.layer(k).begin());
  record.set_top_layer(std::max(record.top_layer(), window.k_top()));
}

TemperatureField advance_window(PartRecord &record, int new_k,
                                ThermalContext const &ctx)
{
  if (new_k < 0 || new_k >= record.nz())
    throw ConfigError(fmt::format("layer index {} is outside the part", new_k));
  if (ctx.window_layers < 1)
    throw ConfigError("window must span at least one layer");
  int const k_lo = std::max(0, new_k - ctx.window_layers + 1);
  int const n = new_k - k_lo + 1;
  auto const &mat = ctx.material;

  TemperatureField field(record.nx(), record.ny(), k_lo, n, mat.baseplate_temp);
  std::size_t const m = field.cells_per_layer();
  if (k_lo > 0)
  {
    auto const below = record.layer(k_lo - 1);
    std::copy(below.begin(), below.end(), field.bottom_boundary.begin());
  }
  for (int k = k_lo; k < new_k; ++k)
  {
    auto const layer = record.layer(k);
    std::copy(layer.begin(), layer.end(), field.values.begin() + (k - k_lo) * m);
  }
  for (int j = 0; j < field.ny(); ++j)
    for (int i = 0; i < field.nx(); ++i)
    {
      double const under =
          new_k == 0 ? mat.baseplate_temp : record.at(i, j, new_k - 1);
      double const t = half_temperature(under, mat.ambient_temp, ctx.half_rule);
      field.at(i, j, new_k) = t;
      record.at(i, j, new_k) = t;
    }
  record.set_top_layer(new_k);
  return field;
}

//----------------------------------------------------------------------------
// Snapshots
//----------------------------------------------------------------------------

namespace
{

constexpr char snapshot_magic[8] = {'L', 'P', 'B', 'F', 'S', 'N', 'A', 'P'};
constexpr std::uint32_t snapshot_version = 1;

template <class U> void put_le(std::ostream &out, U v)
{
  char bytes[sizeof(U)];
  for (std::size_t b = 0; b < sizeof(U); ++b)
    bytes[b] = static_cast<char>((v >> (8 * b)) & 0xff);
  out.write(bytes, sizeof(U));
}

template <class U> U get_le(std::istream &in)
{
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char *>(bytes), sizeof(U)))
    throw ConfigError("truncated snapshot");
  U v = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b)
    v |= static_cast<U>(bytes[b]) << (8 * b);
  return v;
}

} // namespace

Snapshot make_snapshot(TemperatureField const &field, VoxelGrid const &grid,
                       int layer)
{
  Snapshot snap;
  snap.nx = static_cast<std::uint32_t>(field.nx());
  snap.ny = static_cast<std::uint32_t>(field.ny());
  snap.nz = static_cast<std::uint32_t>(field.n_layers());
  snap.dx = grid.dx();
  snap.dy = grid.dy();
  snap.dz = grid.dz();
  snap.layer = layer;
  snap.values.assign(field.values.begin(), field.values.end());
  return snap;
}

void write_snapshot(std::ostream &out, Snapshot const &snap)
{
  if (snap.values.size() != static_cast<std::size_t>(snap.nx) * snap.ny * snap.nz)
    throw ConfigError("snapshot size does not match its dimensions");
  out.write(snapshot_magic, sizeof snapshot_magic);
  put_le(out, snapshot_version);
  put_le(out, snap.nx);
  put_le(out, snap.ny);
  put_le(out, snap.nz);
  for (double d : {snap.dx, snap.dy, snap.dz})
    put_le(out, std::bit_cast<std::uint64_t>(d));
  put_le(out, std::bit_cast<std::uint32_t>(snap.layer));
  for (float v : snap.values)
    put_le(out, std::bit_cast<std::uint32_t>(v));
}

Snapshot read_snapshot(std::istream &in)
{
  char magic[8];
  if (!in.read(magic, sizeof magic) ||
      std::memcmp(magic, snapshot_magic, sizeof magic) != 0)
    throw ConfigError("not a temperature snapshot");
  if (get_le<std::uint32_t>(in) != snapshot_version)
    throw ConfigError("unsupported snapshot version");
  Snapshot snap;
  snap.nx = get_le<std::uint32_t>(in);
  snap.ny = get_le<std::uint32_t>(in);
  snap.nz = get_le<std::uint32_t>(in);
  snap.dx = std::bit_cast<double>(get_le<std::uint64_t>(in));
  snap.dy = std::bit_cast<double>(get_le<std::uint64_t>(in));
  snap.dz = std::bit_cast<double>(get_le<std::uint64_t>(in));
  snap.layer = std::bit_cast<std::int32_t>(get_le<std::uint32_t>(in));
  std::size_t const n = static_cast<std::size_t>(snap.nx) * snap.ny * snap.nz;
  snap.values.resize(n);
  for (auto &v : snap.values)
    v = std::bit_cast<float>(get_le<std::uint32_t>(in));
  return snap;
}

void write_snapshot(std::filesystem::path const &path, Snapshot const &snap)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw ConfigError("cannot write " + path.string());
  write_snapshot(out, snap);
}

Snapshot read_snapshot(std::filesystem::path const &path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ConfigError("cannot read " + path.string());
  return read_snapshot(in);
}

FieldSummary summarize(TemperatureField const &field, VoxelGrid const &grid)
{
  FieldSummary s;
  s.min = std::numeric_limits<double>::infinity();
  s.max = -s.min;
  StableMean mean;
  for (int k = field.k_lo(); k <= field.k_top(); ++k)
    for (int j = 0; j < field.ny(); ++j)
      for (int i = 0; i < field.nx(); ++i)
      {
        if (!grid.solid(i, j, k))
          continue;
        double const t = field.at(i, j, k);
        s.min = std::min(s.min, t);
        s.max = std::max(s.max, t);
        mean.add(t);
      }
  if (mean.count() == 0)
    return {};
  s.mean = mean.value();
  return s;
}

} // namespace lpbf
