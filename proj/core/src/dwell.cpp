#include <lpbf/dwell.hpp>
#include <lpbf/error.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

namespace lpbf
{

namespace
{

constexpr double pi = std::numbers::pi;

bool uses_sine(BoundaryCase kind)
{
  return kind == BoundaryCase::convection_fixed ||
         kind == BoundaryCase::insulated_fixed;
}

// Eigenvalue condition in beta = lambda L.
double condition(BoundaryCase kind, double beta, double bi)
{
  if (kind == BoundaryCase::convection_fixed)
    return beta * std::cos(beta) + bi * std::sin(beta);
  return beta * std::sin(beta) - bi * std::cos(beta);
}

// Roots of both convective conditions, written as beta = base + d with
// base = (n + 1/2) pi (case 1) or n pi (case 2). The shifted form
//   g(d) = (base + d) sin d - Bi cos d,   d in [0, pi/2]
// is exact for either case and keeps a clean sign change even when the root
// sits next to the bracket end (Bi -> 0 or Bi -> infinity).
double bracketed_root(double base, double bi)
{
  auto g = [&](double d) { return (base + d) * std::sin(d) - bi * std::cos(d); };
  double lo = 0.0, hi = pi / 2.0;
  if (g(lo) >= 0.0)
    return base;
  if (g(hi) <= 0.0)
    return base + hi;
  for (int it = 0; it < 200 && hi - lo > 2.0 * std::numeric_limits<double>::epsilon() *
                                              std::max(hi, std::numeric_limits<double>::min());
       ++it)
  {
    double const mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi)
      break;
    if (g(mid) > 0.0)
      hi = mid;
    else
      lo = mid;
  }
  double d = 0.5 * (lo + hi);
  for (int it = 0; it < 4; ++it)
  {
    double const slope = (1.0 + bi) * std::sin(d) + (base + d) * std::cos(d);
    if (!(slope > 0.0))
      break;
    double const next = d - g(d) / slope;
    if (!(next >= lo && next <= hi) || std::abs(g(next)) >= std::abs(g(d)))
      break;
    d = next;
  }
  return base + d;
}

struct Piece
{
  double a, b; // interval
  double ua, s; // value at a and slope
};

std::vector<Piece> pieces_of(PiecewiseLinearProfile const &p, double steady_slope,
                             double steady_offset)
{
  auto u = [&](double z, double t) { return t - (steady_slope * z + steady_offset); };
  std::vector<Piece> out;
  std::size_t const n = p.z.size();
  if (p.z.front() > 0.0)
    out.push_back({0.0, p.z.front(), u(0.0, p.temperature.front()), -steady_slope});
  for (std::size_t e = 0; e + 1 < n; ++e)
  {
    double const a = p.z[e], b = p.z[e + 1];
    double const s = (p.temperature[e + 1] - p.temperature[e]) / (b - a);
    out.push_back({a, b, u(a, p.temperature[e]), s - steady_slope});
  }
  if (p.z.back() < p.length)
    out.push_back({p.z.back(), p.length, u(p.z.back(), p.temperature.back()),
                   -steady_slope});
  return out;
}

double mode(BoundaryCase kind, double lambda, double z)
{
  return uses_sine(kind) ? std::sin(lambda * z) : std::cos(lambda * z);
}

double mode_norm(BoundaryCase kind, double lambda, double length)
{
  double const half = 0.5 * length;
  double const w = std::sin(2.0 * lambda * length) / (4.0 * lambda);
  return uses_sine(kind) ? half - w : half + w;
}

double mode_integral(BoundaryCase kind, double lambda, double length)
{
  if (uses_sine(kind))
    return (1.0 - std::cos(lambda * length)) / lambda;
  return std::sin(lambda * length) / lambda;
}

} // namespace

//----------------------------------------------------------------------------
// Profiles and cases
//----------------------------------------------------------------------------

void PiecewiseLinearProfile::validate() const
{
  if (z.size() < 2 || z.size() != temperature.size())
    throw ConfigError("profile needs at least two nodes with temperatures");
  if (!(length > 0.0))
    throw ConfigError("profile domain length must be positive");
  for (std::size_t i = 0; i < z.size(); ++i)
  {
    if (!std::isfinite(z[i]) || !std::isfinite(temperature[i]))
      throw ConfigError("profile values must be finite");
    if (i > 0 && !(z[i] > z[i - 1]))
      throw ConfigError("profile nodes must be strictly increasing");
  }
  if (z.front() < 0.0 || z.back() > length * (1.0 + 1e-12))
    throw ConfigError("profile nodes must lie inside the domain");
}

double PiecewiseLinearProfile::operator()(double at) const
{
  if (at <= z.front())
    return temperature.front();
  if (at >= z.back())
    return temperature.back();
  auto const it = std::upper_bound(z.begin(), z.end(), at);
  auto const e = static_cast<std::size_t>(it - z.begin()) - 1;
  double const w = (at - z[e]) / (z[e + 1] - z[e]);
  return temperature[e] + w * (temperature[e + 1] - temperature[e]);
}

double PiecewiseLinearProfile::mean() const
{
  double sum = temperature.front() * z.front() +
               temperature.back() * (length - z.back());
  for (std::size_t e = 0; e + 1 < z.size(); ++e)
    sum += 0.5 * (temperature[e] + temperature[e + 1]) * (z[e + 1] - z[e]);
  return sum / length;
}

double PiecewiseLinearProfile::min() const
{
  return *std::min_element(temperature.begin(), temperature.end());
}

double PiecewiseLinearProfile::max() const
{
  return *std::max_element(temperature.begin(), temperature.end());
}

void DwellCase::validate() const
{
  if (!(k > 0.0))
    throw ConfigError("column conductivity must be positive");
  bool const convective = kind == BoundaryCase::convection_fixed ||
                          kind == BoundaryCase::convection_insulated;
  if (convective && !(h > 0.0))
    throw ConfigError("convective column boundary needs a positive coefficient");
}

//----------------------------------------------------------------------------
// Eigenvalues
//----------------------------------------------------------------------------

std::vector<double> solve_eigenvalues(DwellCase const &c, double length, int m)
{
  c.validate();
  if (m < 1)
    throw ConfigError("need at least one eigenvalue");
  if (!(length > 0.0))
    throw ConfigError("column length must be positive");
  std::vector<double> lambda(static_cast<std::size_t>(m));
  double const bi = c.biot(length);
  for (int n = 0; n < m; ++n)
  {
    double beta = 0.0;
    switch (c.kind)
    {
    case BoundaryCase::insulated_insulated:
      beta = (n + 1) * pi;
      break;
    case BoundaryCase::insulated_fixed:
      beta = (2 * n + 1) * pi / 2.0;
      break;
    case BoundaryCase::convection_fixed:
      beta = bracketed_root((n + 0.5) * pi, bi);
      break;
    case BoundaryCase::convection_insulated:
      beta = bracketed_root(n * pi, bi);
      break;
    }
    lambda[n] = beta / length;
  }
  return lambda;
}

double eigen_residual(DwellCase const &c, double length, double lambda)
{
  double const beta = lambda * length;
  double const bi = c.biot(length);
  switch (c.kind)
  {
  case BoundaryCase::insulated_insulated:
    return std::abs(std::sin(beta));
  case BoundaryCase::insulated_fixed:
    return std::abs(std::cos(beta));
  default:
    return std::abs(condition(c.kind, beta, bi)) / (beta + bi);
  }
}

//----------------------------------------------------------------------------
// Projection and evaluation
//----------------------------------------------------------------------------

double SeriesSolution::steady(double z) const
{
  switch (boundary.kind)
  {
  case BoundaryCase::convection_fixed:
    return slope * z + boundary.t_fixed;
  case BoundaryCase::convection_insulated:
    return boundary.t_ambient;
  case BoundaryCase::insulated_insulated:
    return c0;
  case BoundaryCase::insulated_fixed:
    return boundary.t_fixed;
  }
  return c0;
}

SeriesSolution project_profile(PiecewiseLinearProfile const &profile,
                               DwellCase const &c,
                               std::vector<double> const &lambda)
{
  profile.validate();
  c.validate();
  SeriesSolution sol;
  sol.boundary = c;
  sol.length = profile.length;
  sol.lambda = lambda;
  sol.range = profile.max() - profile.min();
  double const L = profile.length;
  if (c.kind == BoundaryCase::convection_fixed)
    sol.slope = c.h * (c.t_ambient - c.t_fixed) / (c.h * L + c.k);
  if (c.kind == BoundaryCase::insulated_insulated)
    sol.c0 = profile.mean();

  double const offset = sol.steady(0.0);
  auto const pieces = pieces_of(profile, sol.slope, offset);
  bool const sine = uses_sine(c.kind);

  sol.coeff.resize(lambda.size());
  for (std::size_t n = 0; n < lambda.size(); ++n)
  {
    double const l = lambda[n];
    double num = 0.0;
    for (auto const &p : pieces)
    {
      double const ub = p.ua + p.s * (p.b - p.a);
      if (sine)
        num += (-ub * std::cos(l * p.b) + p.s * std::sin(l * p.b) / l) / l -
               (-p.ua * std::cos(l * p.a) + p.s * std::sin(l * p.a) / l) / l;
      else
        num += (ub * std::sin(l * p.b) + p.s * std::cos(l * p.b) / l) / l -
               (p.ua * std::sin(l * p.a) + p.s * std::cos(l * p.a) / l) / l;
    }
    sol.coeff[n] = num / mode_norm(c.kind, l, L);
  }
  return sol;
}

namespace
{

template <class Fn> void for_modes(SeriesSolution const &sol, double alpha, double t,
                                   TruncationRule const &rule, Fn &&fn)
{
  double const amp = rule.amplitude_floor * sol.range;
  int quiet = 0;
  for (std::size_t n = 0; n < sol.lambda.size(); ++n)
  {
    double const l = sol.lambda[n];
    double const damp = std::exp(-l * l * alpha * t);
    if (damp < rule.damping_floor)
      break;
    fn(n, sol.coeff[n] * damp);
    if (std::abs(sol.coeff[n]) * damp <= amp)
    {
      if (++quiet >= rule.quiet_modes)
        break;
    }
    else
      quiet = 0;
  }
}

} // namespace

double evaluate_series(SeriesSolution const &sol, double alpha, double t,
                       double z, TruncationRule const &rule)
{
  double const zs[1] = {z};
  return evaluate_series(sol, alpha, t, zs, rule).front();
}

std::vector<double> evaluate_series(SeriesSolution const &sol, double alpha,
                                    double t, std::span<double const> z,
                                    TruncationRule const &rule)
{
  if (t < 0.0)
    throw ConfigError("series time must be non-negative");
  std::vector<double> out(z.size());
  for (std::size_t q = 0; q < z.size(); ++q)
    out[q] = sol.steady(z[q]);
  for_modes(sol, alpha, t, rule, [&](std::size_t n, double amplitude) {
    for (std::size_t q = 0; q < z.size(); ++q)
      out[q] += amplitude * mode(sol.boundary.kind, sol.lambda[n], z[q]);
  });
  return out;
}

double series_mean(SeriesSolution const &sol, double alpha, double t)
{
  double const L = sol.length;
  double mean = sol.steady(0.5 * L);
  for_modes(sol, alpha, t, {}, [&](std::size_t n, double amplitude) {
    mean += amplitude * mode_integral(sol.boundary.kind, sol.lambda[n], L) / L;
  });
  return mean;
}

int modes_for_time(DwellCase const &c, double length, double alpha, double t,
                   int cap, double floor)
{
  (void)c;
  if (!(t > 0.0) || !(alpha > 0.0))
    return cap;
  double const lambda_max = std::sqrt(-std::log(floor) / (alpha * t));
  double const n = std::ceil(lambda_max * length / pi) + 2.0;
  return static_cast<int>(std::clamp(n, 1.0, static_cast<double>(cap)));
}

std::vector<double> solve_column(PiecewiseLinearProfile const &profile,
                                 DwellCase const &c, double alpha, double t,
                                 std::span<double const> z, int max_modes)
{
  int const m = modes_for_time(c, profile.length, alpha, t, max_modes);
  auto const sol =
      project_profile(profile, c, solve_eigenvalues(c, profile.length, m));
  return evaluate_series(sol, alpha, t, z);
}

//----------------------------------------------------------------------------
// Lateral blur
//----------------------------------------------------------------------------

void gaussian_blur(std::span<double> image, int nx, int ny, double sigma,
                   BlurBoundary boundary)
{
  if (image.size() != static_cast<std::size_t>(nx) * ny)
    throw ConfigError("blur image size does not match its dimensions");
  if (!(sigma > 0.0))
    return;
  int const radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> w(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int d = -radius; d <= radius; ++d)
  {
    w[d + radius] = std::exp(-0.5 * d * d / (sigma * sigma));
    total += w[d + radius];
  }
  for (auto &x : w)
    x /= total;

  auto wrap = [&](int i, int n) {
    if (boundary == BlurBoundary::periodic)
      return ((i % n) + n) % n;
    return std::clamp(i, 0, n - 1);
  };

  std::vector<double> tmp(image.size());
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
    {
      double acc = 0.0;
      for (int d = -radius; d <= radius; ++d)
        acc += w[d + radius] * image[static_cast<std::size_t>(j) * nx + wrap(i + d, nx)];
      tmp[static_cast<std::size_t>(j) * nx + i] = acc;
    }
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
    {
      double acc = 0.0;
      for (int d = -radius; d <= radius; ++d)
        acc += w[d + radius] * tmp[static_cast<std::size_t>(wrap(j + d, ny)) * nx + i];
      image[static_cast<std::size_t>(j) * nx + i] = acc;
    }
}

//----------------------------------------------------------------------------
// Interlayer dwell
//----------------------------------------------------------------------------

namespace
{

struct Segment
{
  int i, j, k_lo, k_hi;
  BoundaryCase kind;
};

} // namespace

void apply_interlayer_dwell(PartRecord &record, VoxelGrid const &grid,
                            MaterialProps const &mat, DwellOptions const &options,
                            Parallel const &pool)
{
  if (record.nx() != grid.nx() || record.ny() != grid.ny() ||
      record.nz() != grid.nz())
    throw ConfigError("part record does not match the voxel grid");
  if (options.time < 0.0)
    throw ConfigError("dwell time must be non-negative");
  int const top = record.top_layer();
  if (options.time == 0.0 || top < 0)
    return;

  double const alpha = mat.diffusivity();
  double const dz = grid.dz();
  DwellCase base;
  base.k = mat.conductivity;
  base.h = options.convection_coeff.value_or(mat.convection_coeff);
  base.t_ambient = mat.ambient_temp;
  base.t_fixed = mat.baseplate_temp;

  // Step 1: vertical runs of part cells.
  std::vector<Segment> segments;
  for (int j = 0; j < grid.ny(); ++j)
    for (int i = 0; i < grid.nx(); ++i)
    {
      int k = 0;
      while (k <= top)
      {
        if (!grid.solid(i, j, k))
        {
          ++k;
          continue;
        }
        int const lo = k;
        while (k + 1 <= top && grid.solid(i, j, k + 1))
          ++k;
        bool const conv = k == top;
        bool const fixed = lo == 0;
        BoundaryCase kind = conv ? (fixed ? BoundaryCase::convection_fixed
                                          : BoundaryCase::convection_insulated)
                                 : (fixed ? BoundaryCase::insulated_fixed
                                          : BoundaryCase::insulated_insulated);
        segments.push_back({i, j, lo, k, kind});
        ++k;
      }
    }

  std::map<std::pair<int, int>, std::vector<double>> eigen;
  for (auto const &s : segments)
  {
    auto const key = std::pair{static_cast<int>(s.kind), s.k_hi - s.k_lo + 1};
    if (eigen.count(key))
      continue;
    DwellCase c = base;
    c.kind = s.kind;
    double const L = key.second * dz;
    int const m = modes_for_time(c, L, alpha, options.time, options.max_modes);
    eigen.emplace(key, solve_eigenvalues(c, L, m));
  }

  pool.for_ranges(
      segments.size(),
      [&](std::size_t begin, std::size_t end) {
        PiecewiseLinearProfile profile;
        std::vector<double> centres;
        for (std::size_t q = begin; q < end; ++q)
        {
          auto const &s = segments[q];
          int const n = s.k_hi - s.k_lo + 1;
          DwellCase c = base;
          c.kind = s.kind;
          bool const fixed = s.kind == BoundaryCase::convection_fixed ||
                             s.kind == BoundaryCase::insulated_fixed;
          profile.length = n * dz;
          profile.z.assign(1, 0.0);
          profile.temperature.assign(
              1, fixed ? base.t_fixed : record.at(s.i, s.j, s.k_lo));
          centres.clear();
          for (int k = s.k_lo; k <= s.k_hi; ++k)
          {
            double const zc = (k - s.k_lo + 0.5) * dz;
            centres.push_back(zc);
            profile.z.push_back(zc);
            profile.temperature.push_back(record.at(s.i, s.j, k));
          }
          profile.z.push_back(profile.length);
          profile.temperature.push_back(record.at(s.i, s.j, s.k_hi));

          auto const sol = project_profile(
              profile, c, eigen.at({static_cast<int>(s.kind), n}));
          auto const t = evaluate_series(sol, alpha, options.time, centres);
          for (int k = s.k_lo; k <= s.k_hi; ++k)
            record.at(s.i, s.j, k) = t[k - s.k_lo];
        }
      },
      64);

  // Step 2: powder reset and lateral blur, layer by layer.
  double const sigma = std::sqrt(2.0 * alpha * options.time) / grid.dx();
  pool.for_ranges(
      static_cast<std::size_t>(top + 1),
      [&](std::size_t begin, std::size_t end) {
        for (auto k = static_cast<int>(begin); k < static_cast<int>(end); ++k)
        {
          double sum = 0.0;
          long count = 0;
          for (int j = 0; j < grid.ny(); ++j)
            for (int i = 0; i < grid.nx(); ++i)
              if (grid.solid(i, j, k))
              {
                sum += record.at(i, j, k);
                ++count;
              }
          if (count > 0)
          {
            double const powder = half_temperature(
                sum / static_cast<double>(count), mat.ambient_temp,
                options.half_rule);
            for (int j = 0; j < grid.ny(); ++j)
              for (int i = 0; i < grid.nx(); ++i)
                if (!grid.solid(i, j, k))
                  record.at(i, j, k) = powder;
          }
          gaussian_blur(record.layer(k), grid.nx(), grid.ny(), sigma,
                        options.blur_boundary);
        }
      },
      1);

  for (double t : record.values)
    if (!std::isfinite(t))
      throw NumericError("non-finite temperature after interlayer dwell");
}

void apply_interlayer_dwell(PartRecord &record, VoxelGrid const &grid,
                            MaterialProps const &mat, DwellOptions const &options)
{
  apply_interlayer_dwell(record, grid, mat, options, Parallel(1));
}

} // namespace lpbf
