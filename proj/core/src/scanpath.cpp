#include <lpbf/error.hpp>
#include <lpbf/scanpath.hpp>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace lpbf
{

std::string to_string(RegionTag tag)
{
  switch (tag)
  {
  case RegionTag::bulk:
    return "bulk";
  case RegionTag::overhang:
    return "overhang";
  case RegionTag::subdivided_turnaround:
    return "turnaround";
  }
  return "bulk";
}

double ScanVector::length() const
{
  return std::hypot(end.x - start.x, end.y - start.y);
}

Point3 ScanVector::position_at_step(long s) const
{
  double const t = (static_cast<double>(s) + 0.5) / static_cast<double>(n_steps);
  return {start.x + t * (end.x - start.x), start.y + t * (end.y - start.y),
          start.z};
}

long LayerScan::total_steps() const
{
  long total = 0;
  for (auto const &v : vectors)
    total += v.n_steps;
  return total;
}

long steps_for_duration(double duration, double dt)
{
  if (!(dt > 0.0))
    throw ConfigError("timestep must be positive to map vectors to the timeline");
  // Tolerance absorbs round-off in quotients such as 1.8e-3 / 1e-5.
  double const n = std::ceil(duration / dt - 1e-6);
  return std::max(1L, static_cast<long>(n));
}

//----------------------------------------------------------------------------
// VoxelGrid
//----------------------------------------------------------------------------

VoxelGrid::VoxelGrid(double dx, double dz, Point3 origin, int nx, int ny,
                     int nz, int substrate_layers)
    : _dx(dx), _dz(dz), _origin(origin), _nx(nx), _ny(ny), _nz(nz),
      _substrate_layers(substrate_layers),
      _occupancy(static_cast<std::size_t>(nx) * ny * nz, 0),
      _known_layers(static_cast<std::size_t>(nz), 0)
{
  if (!(dx > 0.0 && dz > 0.0) || nx <= 0 || ny <= 0 || nz <= 0)
    throw ConfigError("voxel grid needs positive spacing and dimensions");
}

bool VoxelGrid::solid(int i, int j, int k) const
{
  if (!contains(i, j, k))
    return false;
  return _occupancy[index(i, j, k)] != 0;
}

void VoxelGrid::set_solid(int i, int j, int k, bool value)
{
  _occupancy[index(i, j, k)] = value ? 1 : 0;
}

bool VoxelGrid::occupancy_known(int k) const
{
  return k >= 0 && k < _nz && _known_layers[k] != 0;
}

void VoxelGrid::mark_layer_known(int k) { _known_layers.at(k) = 1; }

bool VoxelGrid::inside_xy(double x, double y) const
{
  double const eps = 1e-12;
  return x >= _origin.x - eps && y >= _origin.y - eps &&
         x <= _origin.x + _nx * _dx + eps && y <= _origin.y + _ny * _dx + eps;
}

//----------------------------------------------------------------------------
// Scan path file format
//----------------------------------------------------------------------------

namespace
{

double parse_number(std::string const &token, std::string const &source,
                    int line, char const *what)
{
  std::size_t used = 0;
  double value = 0.0;
  try
  {
    value = std::stod(token, &used);
  }
  catch (std::exception const &)
  {
    used = 0;
  }
  if (used != token.size() || !std::isfinite(value))
    throw ParseError(source, line,
                     fmt::format("expected a number for {} but got '{}'", what,
                                 token));
  return value;
}

int parse_int(std::string const &token, std::string const &source, int line,
              char const *what)
{
  double const v = parse_number(token, source, line, what);
  if (v != std::floor(v))
    throw ParseError(source, line,
                     fmt::format("expected an integer for {} but got '{}'",
                                 what, token));
  return static_cast<int>(v);
}

// Jumps carry no geometry in the file; park them between the surrounding
// marks so CSV output stays readable.
void place_jumps(LayerScan &layer)
{
  auto &vs = layer.vectors;
  for (std::size_t n = 0; n < vs.size(); ++n)
  {
    if (vs[n].is_mark)
      continue;
    Point3 from{0.0, 0.0, layer.z_height};
    Point3 to = from;
    bool have_from = false;
    for (std::size_t m = n; m-- > 0;)
      if (vs[m].is_mark)
      {
        from = vs[m].end;
        have_from = true;
        break;
      }
    bool have_to = false;
    for (std::size_t m = n + 1; m < vs.size(); ++m)
      if (vs[m].is_mark)
      {
        to = vs[m].start;
        have_to = true;
        break;
      }
    if (!have_from)
      from = to;
    if (!have_to)
      to = from;
    vs[n].start = from;
    vs[n].end = to;
  }
}

} // namespace

ScanPathFile parse_scanpath(std::istream &in, GridConfig const &config,
                            std::string const &source_name)
{
  ScanPathFile file;
  LayerScan *current = nullptr;
  double const mm = 1e-3;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line))
  {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;)
      tok.push_back(t);
    if (tok.empty())
      continue;

    auto const &kw = tok[0];
    if (kw == "substrate")
    {
      if (tok.size() != 2)
        throw ParseError(source_name, line_no, "usage: substrate <n_layers>");
      file.substrate_layers = parse_int(tok[1], source_name, line_no, "substrate");
      if (file.substrate_layers < 0)
        throw ParseError(source_name, line_no, "substrate layers must be >= 0");
    }
    else if (kw == "layer")
    {
      if (tok.size() != 4 && tok.size() != 6)
        throw ParseError(source_name, line_no,
                         "usage: layer <k> z <mm> [angle <deg>]");
      if (tok[2] != "z")
        throw ParseError(source_name, line_no, "expected 'z' after layer index");
      LayerScan layer;
      layer.layer = parse_int(tok[1], source_name, line_no, "layer index");
      layer.z_height = parse_number(tok[3], source_name, line_no, "z") * mm;
      if (tok.size() == 6)
      {
        if (tok[4] != "angle")
          throw ParseError(source_name, line_no, "expected 'angle'");
        layer.hatch_angle_deg =
            parse_number(tok[5], source_name, line_no, "angle");
      }
      if (layer.layer < 1)
        throw ParseError(source_name, line_no, "layer indices start at 1");
      if (!file.layers.empty() && layer.layer <= file.layers.back().layer)
        throw ParseError(source_name, line_no,
                         fmt::format("non-monotonic layer order: layer {} "
                                     "after layer {}",
                                     layer.layer, file.layers.back().layer));
      double const expected_z = layer.layer * config.layer_thickness;
      if (std::abs(layer.z_height - expected_z) > 1e-9)
        throw ParseError(source_name, line_no,
                         fmt::format("layer {} at z = {} mm is not layer index "
                                     "times the layer thickness ({} mm)",
                                     layer.layer, layer.z_height / mm,
                                     expected_z / mm));
      file.layers.push_back(std::move(layer));
      current = &file.layers.back();
    }
    else if (kw == "mark")
    {
      if (current == nullptr)
        throw ParseError(source_name, line_no, "mark record before any layer");
      if (tok.size() != 6 && tok.size() != 7)
        throw ParseError(source_name, line_no,
                         "usage: mark x0 y0 x1 y1 speed_mm_s [power_W]");
      ScanVector v;
      v.layer = current->layer;
      v.start = {parse_number(tok[1], source_name, line_no, "x0") * mm,
                 parse_number(tok[2], source_name, line_no, "y0") * mm,
                 current->z_height};
      v.end = {parse_number(tok[3], source_name, line_no, "x1") * mm,
               parse_number(tok[4], source_name, line_no, "y1") * mm,
               current->z_height};
      v.speed = parse_number(tok[5], source_name, line_no, "speed") * mm;
      v.power_nominal = tok.size() == 7
                            ? parse_number(tok[6], source_name, line_no, "power")
                            : config.default_power;
      if (!(v.speed > 0.0))
        throw ParseError(source_name, line_no, "mark speed must be positive");
      if (v.power_nominal < 0.0)
        throw ParseError(source_name, line_no, "power must be non-negative");
      if (config.extent)
      {
        auto const &e = *config.extent;
        for (auto const &p : {v.start, v.end})
          if (p.x < e.x_min || p.x > e.x_max || p.y < e.y_min || p.y > e.y_max)
            throw ParseError(source_name, line_no,
                             fmt::format("endpoint ({}, {}) mm lies outside "
                                         "the grid",
                                         p.x / mm, p.y / mm));
      }
      v.is_mark = true;
      v.n_steps = steps_for_duration(v.length() / v.speed, config.dt);
      current->vectors.push_back(v);
    }
    else if (kw == "jump")
    {
      if (current == nullptr)
        throw ParseError(source_name, line_no, "jump record before any layer");
      if (tok.size() > 2)
        throw ParseError(source_name, line_no, "usage: jump [duration_ms]");
      double const duration =
          tok.size() == 2
              ? parse_number(tok[1], source_name, line_no, "duration") * 1e-3
              : config.skywrite_time;
      if (!(duration > 0.0))
        throw ParseError(source_name, line_no, "jump duration must be positive");
      ScanVector v;
      v.layer = current->layer;
      v.is_mark = false;
      v.n_steps = steps_for_duration(duration, config.dt);
      current->vectors.push_back(v);
    }
    else
    {
      throw ParseError(source_name, line_no,
                       fmt::format("unknown record '{}'", kw));
    }
  }
  for (auto &layer : file.layers)
    place_jumps(layer);
  renumber(file.layers);
  return file;
}

ScanPathFile load_scanpath_file(std::filesystem::path const &path,
                                GridConfig const &config)
{
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open scan path file '" + path.string() + "'");
  return parse_scanpath(in, config, path.string());
}

std::vector<LayerScan> load_scanpath(std::filesystem::path const &path,
                                     GridConfig const &config)
{
  return load_scanpath_file(path, config).layers;
}

void write_scanpath(std::ostream &out, std::vector<LayerScan> const &layers,
                    double dt, int substrate_layers)
{
  out << "# scanpath v1: mm, mm/s, W, ms\n";
  if (substrate_layers > 0)
    fmt::print(out, "substrate {}\n", substrate_layers);
  for (auto const &layer : layers)
  {
    fmt::print(out, "layer {} z {:.9g} angle {:.9g}\n", layer.layer,
               layer.z_height * 1e3, layer.hatch_angle_deg);
    for (auto const &v : layer.vectors)
    {
      if (v.is_mark)
        fmt::print(out, "mark {:.9g} {:.9g} {:.9g} {:.9g} {:.9g} {:.9g}\n",
                   v.start.x * 1e3, v.start.y * 1e3, v.end.x * 1e3,
                   v.end.y * 1e3, v.speed * 1e3, v.power_nominal);
      else
        fmt::print(out, "jump {:.9g}\n", static_cast<double>(v.n_steps) * dt * 1e3);
    }
  }
}

void renumber(std::vector<LayerScan> &layers)
{
  int id = 0;
  for (auto &layer : layers)
  {
    long step = 0;
    for (auto &v : layer.vectors)
    {
      v.id = id++;
      v.layer = layer.layer;
      v.start_step = step;
      step += v.n_steps;
    }
  }
}

//----------------------------------------------------------------------------
// Grid construction and traversal
//----------------------------------------------------------------------------

namespace
{

// Closed-box test on one axis: parameter interval where p0 + t d lies in
// [lo, hi]. Returns false when empty.
bool clip_axis(double p0, double d, double lo, double hi, double &t_lo,
               double &t_hi)
{
  if (d == 0.0)
    return p0 >= lo && p0 <= hi;
  double t1 = (lo - p0) / d;
  double t2 = (hi - p0) / d;
  if (t1 > t2)
    std::swap(t1, t2);
  t_lo = std::max(t_lo, t1);
  t_hi = std::min(t_hi, t2);
  return t_lo <= t_hi;
}

struct GridSegment
{
  double u0, v0, du, dv; // cell coordinates
};

GridSegment to_cell_coords(ScanVector const &v, VoxelGrid const &grid)
{
  double const inv = 1.0 / grid.dx();
  double const u0 = (v.start.x - grid.origin().x) * inv;
  double const v0 = (v.start.y - grid.origin().y) * inv;
  double const u1 = (v.end.x - grid.origin().x) * inv;
  double const v1 = (v.end.y - grid.origin().y) * inv;
  return {u0, v0, u1 - u0, v1 - v0};
}

int floor_int(double x) { return static_cast<int>(std::floor(x)); }

} // namespace

std::vector<CellIndex> map_vector_to_elements(ScanVector const &v,
                                              VoxelGrid const &grid)
{
  int const k = grid.layer_to_k(v.layer);
  auto const seg = to_cell_coords(v, grid);
  std::vector<CellIndex> cells;

  if (std::abs(seg.du) < 1e-12 && std::abs(seg.dv) < 1e-12)
  {
    int const i = std::clamp(floor_int(seg.u0), 0, grid.nx() - 1);
    int const j = std::clamp(floor_int(seg.v0), 0, grid.ny() - 1);
    cells.push_back({i, j, k});
    return cells;
  }

  // Walk along the dominant axis; for each slab of that axis collect the
  // candidate cells across the minor axis, then keep the ones whose closed
  // box the segment really touches.
  bool const u_major = std::abs(seg.du) >= std::abs(seg.dv);
  double const a0 = u_major ? seg.u0 : seg.v0;
  double const da = u_major ? seg.du : seg.dv;
  double const b0 = u_major ? seg.v0 : seg.u0;
  double const db = u_major ? seg.dv : seg.du;

  double const a_min = std::min(a0, a0 + da);
  double const a_max = std::max(a0, a0 + da);
  struct Hit
  {
    double t;
    CellIndex c;
  };
  std::vector<Hit> hits;
  for (int a = static_cast<int>(std::ceil(a_min)) - 1; a <= floor_int(a_max);
       ++a)
  {
    double t_lo = 0.0, t_hi = 1.0;
    if (!clip_axis(a0, da, a, a + 1.0, t_lo, t_hi))
      continue;
    double const b_lo = std::min(b0 + t_lo * db, b0 + t_hi * db);
    double const b_hi = std::max(b0 + t_lo * db, b0 + t_hi * db);
    for (int b = static_cast<int>(std::ceil(b_lo)) - 1; b <= floor_int(b_hi);
         ++b)
    {
      int const i = u_major ? a : b;
      int const j = u_major ? b : a;
      double s_lo = 0.0, s_hi = 1.0;
      if (!clip_axis(seg.u0, seg.du, i, i + 1.0, s_lo, s_hi))
        continue;
      if (!clip_axis(seg.v0, seg.dv, j, j + 1.0, s_lo, s_hi))
        continue;
      if (!grid.contains(i, j, k))
        continue;
      hits.push_back({s_lo, {i, j, k}});
    }
  }
  std::sort(hits.begin(), hits.end(), [](Hit const &x, Hit const &y) {
    if (x.t != y.t)
      return x.t < y.t;
    if (x.c.j != y.c.j)
      return x.c.j < y.c.j;
    return x.c.i < y.c.i;
  });
  cells.reserve(hits.size());
  for (auto const &h : hits)
    cells.push_back(h.c);
  return cells;
}

VoxelGrid build_grid(std::vector<LayerScan> const &layers,
                     GridConfig const &config)
{
  double const h = config.hatch_spacing;
  if (!(h > 0.0) || !(config.layer_thickness > 0.0))
    throw ConfigError("hatch spacing and layer thickness must be positive");

  double x_min = std::numeric_limits<double>::infinity();
  double y_min = x_min;
  double x_max = -x_min;
  double y_max = -x_min;
  int top_layer = 0;
  for (auto const &layer : layers)
  {
    top_layer = std::max(top_layer, layer.layer);
    for (auto const &v : layer.vectors)
    {
      if (!v.is_mark)
        continue;
      for (auto const &p : {v.start, v.end})
      {
        x_min = std::min(x_min, p.x);
        x_max = std::max(x_max, p.x);
        y_min = std::min(y_min, p.y);
        y_max = std::max(y_max, p.y);
      }
    }
  }
  if (config.extent)
  {
    x_min = config.extent->x_min;
    x_max = config.extent->x_max;
    y_min = config.extent->y_min;
    y_max = config.extent->y_max;
  }
  if (!std::isfinite(x_min))
    x_min = x_max = y_min = y_max = 0.0;

  int const margin = std::max(0, config.margin_cells);
  Point3 origin{x_min - (0.5 + margin) * h, y_min - (0.5 + margin) * h,
                -config.substrate_layers * config.layer_thickness};
  int const nx =
      static_cast<int>(std::floor((x_max - origin.x) / h)) + 1 + margin;
  int const ny =
      static_cast<int>(std::floor((y_max - origin.y) / h)) + 1 + margin;
  int const nz = std::max(1, config.substrate_layers + top_layer);

  VoxelGrid grid(h, config.layer_thickness, origin, nx, ny, nz,
                 config.substrate_layers);
  for (int k = 0; k < config.substrate_layers; ++k)
  {
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
        grid.set_solid(i, j, k, true);
    grid.mark_layer_known(k);
  }
  for (auto const &layer : layers)
  {
    for (auto const &v : layer.vectors)
    {
      if (!v.is_mark)
        continue;
      for (auto const &c : map_vector_to_elements(v, grid))
        grid.set_solid(c.i, c.j, c.k, true);
    }
    grid.mark_layer_known(grid.layer_to_k(layer.layer));
  }
  return grid;
}

//----------------------------------------------------------------------------
// Subdivision
//----------------------------------------------------------------------------

namespace
{

struct Fragment
{
  double t0;
  double t1;
  bool solid_below;
};

std::vector<Fragment> classify_along(ScanVector const &v, VoxelGrid const &grid)
{
  int const k = grid.layer_to_k(v.layer);
  auto const seg = to_cell_coords(v, grid);

  std::vector<double> ts{0.0, 1.0};
  auto add_crossings = [&](double p0, double d) {
    if (d == 0.0)
      return;
    double const p1 = p0 + d;
    for (int c = static_cast<int>(std::ceil(std::min(p0, p1)));
         c <= floor_int(std::max(p0, p1)); ++c)
    {
      double const t = (c - p0) / d;
      if (t > 0.0 && t < 1.0)
        ts.push_back(t);
    }
  };
  add_crossings(seg.u0, seg.du);
  add_crossings(seg.v0, seg.dv);
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());

  std::vector<Fragment> frags;
  for (std::size_t n = 0; n + 1 < ts.size(); ++n)
  {
    double const tm = 0.5 * (ts[n] + ts[n + 1]);
    int const i = floor_int(seg.u0 + tm * seg.du);
    int const j = floor_int(seg.v0 + tm * seg.dv);
    bool const solid = grid.solid_below(i, j, k);
    if (!frags.empty() && frags.back().solid_below == solid)
      frags.back().t1 = ts[n + 1];
    else
      frags.push_back({ts[n], ts[n + 1], solid});
  }
  if (frags.empty())
  {
    int const i = floor_int(seg.u0);
    int const j = floor_int(seg.v0);
    frags.push_back({0.0, 1.0, grid.solid_below(i, j, k)});
  }
  return frags;
}

void merge_equal_neighbours(std::vector<Fragment> &frags)
{
  std::vector<Fragment> out;
  for (auto const &f : frags)
  {
    if (!out.empty() && out.back().solid_below == f.solid_below)
      out.back().t1 = f.t1;
    else
      out.push_back(f);
  }
  frags = std::move(out);
}

void merge_short_fragments(std::vector<Fragment> &frags, double total_length,
                           double min_length)
{
  while (frags.size() > 1)
  {
    std::size_t shortest = frags.size();
    double shortest_len = min_length;
    for (std::size_t n = 0; n < frags.size(); ++n)
    {
      double const len = (frags[n].t1 - frags[n].t0) * total_length;
      if (len < shortest_len)
      {
        shortest_len = len;
        shortest = n;
      }
    }
    if (shortest == frags.size())
      break;
    // Absorb into the longer neighbour, which keeps its class.
    std::size_t target;
    if (shortest == 0)
      target = 1;
    else if (shortest + 1 == frags.size())
      target = shortest - 1;
    else
    {
      double const left = frags[shortest - 1].t1 - frags[shortest - 1].t0;
      double const right = frags[shortest + 1].t1 - frags[shortest + 1].t0;
      target = right > left ? shortest + 1 : shortest - 1;
    }
    if (target < shortest)
      frags[target].t1 = frags[shortest].t1;
    else
      frags[target].t0 = frags[shortest].t0;
    frags.erase(frags.begin() + static_cast<std::ptrdiff_t>(shortest));
    merge_equal_neighbours(frags);
  }
}

Point3 lerp(Point3 const &a, Point3 const &b, double t)
{
  return {a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), a.z};
}

} // namespace

std::vector<LayerScan> subdivide_vectors(std::vector<LayerScan> const &layers,
                                         VoxelGrid const &grid,
                                         double min_fragment_fraction)
{
  std::vector<LayerScan> out;
  out.reserve(layers.size());
  for (auto const &layer : layers)
  {
    int const k = grid.layer_to_k(layer.layer);
    if (k < 0 || k >= grid.nz())
      throw ConfigError(fmt::format("layer {} lies outside the voxel grid",
                                    layer.layer));
    if (k > 0 && !grid.occupancy_known(k - 1))
      throw ConfigError(fmt::format("missing occupancy for the layer below "
                                    "build layer {}",
                                    layer.layer));
    LayerScan result = layer;
    result.vectors.clear();
    for (auto const &v : layer.vectors)
    {
      if (!v.is_mark)
      {
        result.vectors.push_back(v);
        continue;
      }
      auto frags = classify_along(v, grid);
      double const len = v.length();
      merge_short_fragments(frags, len, min_fragment_fraction * grid.dx());
      if (frags.size() == 1)
      {
        ScanVector w = v;
        if (!frags[0].solid_below)
          w.region = RegionTag::overhang;
        else if (w.region == RegionTag::overhang)
          w.region = RegionTag::bulk;
        result.vectors.push_back(w);
        continue;
      }
      // Share the original step count by cumulative rounding so the layer
      // duration is preserved; each fragment still gets at least one step.
      long prev_boundary = 0;
      for (std::size_t n = 0; n < frags.size(); ++n)
      {
        ScanVector w = v;
        w.start = n == 0 ? v.start : lerp(v.start, v.end, frags[n].t0);
        w.end = n + 1 == frags.size() ? v.end : lerp(v.start, v.end, frags[n].t1);
        long const boundary =
            n + 1 == frags.size()
                ? v.n_steps
                : std::llround(static_cast<double>(v.n_steps) * frags[n].t1);
        w.n_steps = std::max(1L, boundary - prev_boundary);
        prev_boundary = std::max(boundary, prev_boundary + 1);
        w.region = frags[n].solid_below ? RegionTag::subdivided_turnaround
                                        : RegionTag::overhang;
        result.vectors.push_back(w);
      }
    }
    out.push_back(std::move(result));
  }
  renumber(out);
  return out;
}

} // namespace lpbf
