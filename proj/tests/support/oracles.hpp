#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. None of them call into the library's kernels.

#include <lpbf/dwell.hpp>
#include <lpbf/scanpath.hpp>
#include <lpbf/thermal.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <tuple>
#include <vector>

namespace lpbf::oracle
{

/// Explicit finite differences for a 1D column on [0, L] (z = 0 at the
/// bottom) with `intervals` equal cells, node-centred, ghost nodes for the
/// insulated and convective ends. Returns node values at each requested time
/// (ascending).
inline std::vector<std::vector<double>>
fdm_column(PiecewiseLinearProfile const &profile, DwellCase const &c, double alpha,
           std::vector<double> const &times, int intervals)
{
  int const n = intervals + 1;
  double const L = profile.length;
  double const dz = L / intervals;
  bool const fixed_bottom = c.kind == BoundaryCase::convection_fixed ||
                            c.kind == BoundaryCase::insulated_fixed;
  bool const convective_top = c.kind == BoundaryCase::convection_fixed ||
                              c.kind == BoundaryCase::convection_insulated;
  double const beta = convective_top ? c.h * dz / c.k : 0.0;
  double const dt_max = dz * dz / (2.0 * alpha * (1.0 + beta));

  std::vector<double> u(n), next(n);
  for (int i = 0; i < n; ++i)
    u[i] = profile(i * dz);
  if (fixed_bottom)
    u[0] = c.t_fixed;

  std::vector<std::vector<double>> out;
  double t = 0.0;
  for (double target : times)
  {
    double const span = target - t;
    long const steps = std::max(1L, static_cast<long>(std::ceil(span / (0.9 * dt_max))));
    double const dt = span / static_cast<double>(steps);
    double const r = alpha * dt / (dz * dz);
    for (long s = 0; s < steps; ++s)
    {
      for (int i = 1; i < n - 1; ++i)
        next[i] = u[i] + r * (u[i - 1] - 2.0 * u[i] + u[i + 1]);
      next[0] = fixed_bottom ? c.t_fixed : u[0] + 2.0 * r * (u[1] - u[0]);
      double const top_ghost =
          u[n - 2] - (convective_top ? 2.0 * beta * (u[n - 1] - c.t_ambient) : 0.0);
      next[n - 1] = u[n - 1] + r * (u[n - 2] - 2.0 * u[n - 1] + top_ghost);
      std::swap(u, next);
    }
    t = target;
    out.push_back(u);
  }
  return out;
}

/// Random piecewise-linear profile with `nodes` nodes spanning [0, L].
inline PiecewiseLinearProfile random_profile(std::mt19937_64 &rng, int nodes, double L,
                                             double t_lo, double t_hi)
{
  std::uniform_real_distribution<double> temp(t_lo, t_hi);
  std::uniform_real_distribution<double> jitter(-0.3, 0.3);
  PiecewiseLinearProfile p;
  p.length = L;
  double const h = L / (nodes - 1);
  for (int i = 0; i < nodes; ++i)
  {
    double z = i * h;
    if (i > 0 && i + 1 < nodes)
      z += jitter(rng) * h;
    p.z.push_back(z);
    p.temperature.push_back(temp(rng));
  }
  return p;
}

/// Segment against closed axis-aligned box by separating axes: the x and y
/// axes and the segment normal.
inline bool segment_touches_box(double x0, double y0, double x1, double y1,
                                double bx0, double by0, double bx1, double by1)
{
  double const eps = 1e-12;
  if (std::max(x0, x1) < bx0 - eps || std::min(x0, x1) > bx1 + eps)
    return false;
  if (std::max(y0, y1) < by0 - eps || std::min(y0, y1) > by1 + eps)
    return false;
  double const nx = -(y1 - y0);
  double const ny = x1 - x0;
  double const d = nx * x0 + ny * y0;
  double lo = 1e300, hi = -1e300;
  for (double cx : {bx0, bx1})
    for (double cy : {by0, by1})
    {
      double const p = nx * cx + ny * cy - d;
      lo = std::min(lo, p);
      hi = std::max(hi, p);
    }
  double const scale = std::hypot(nx, ny) * (bx1 - bx0);
  return lo <= eps * scale && hi >= -eps * scale;
}

/// Every cell of the vector's layer whose closed box the segment touches.
inline std::set<std::tuple<int, int, int>> brute_force_cells(ScanVector const &v,
                                                             VoxelGrid const &grid)
{
  std::set<std::tuple<int, int, int>> out;
  int const k = grid.layer_to_k(v.layer);
  auto const &o = grid.origin();
  double const h = grid.dx();
  for (int j = 0; j < grid.ny(); ++j)
    for (int i = 0; i < grid.nx(); ++i)
      if (segment_touches_box(v.start.x, v.start.y, v.end.x, v.end.y, o.x + i * h,
                              o.y + j * h, o.x + (i + 1) * h, o.y + (j + 1) * h))
        out.insert({i, j, k});
  return out;
}

/// Straightforward per-cell explicit update, written from the stencil
/// definition rather than the library's band storage: same operation order
/// as the documented difference form.
inline std::vector<double> naive_apply(StateSystem const &sys,
                                       std::vector<double> const &in)
{
  std::vector<double> out(in.size());
  auto const &off = sys.offsets();
  for (std::size_t r = 0; r < in.size(); ++r)
  {
    double acc = 0.0;
    for (int b = 0; b < StateSystem::n_bands; ++b)
    {
      double const c = sys.couplings[b][r];
      if (c != 0.0)
        acc += c * (in[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(r) + off[b])] -
                    in[r]);
    }
    out[r] = in[r] + acc + (sys.disturbance[r] - sys.sink[r] * in[r]);
  }
  return out;
}

} // namespace lpbf::oracle
