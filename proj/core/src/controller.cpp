#include <lpbf/controller.hpp>
#include <lpbf/error.hpp>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace lpbf
{

double ControlConfig::target_for(RegionTag region) const
{
  auto const it = region_targets.find(region);
  return it == region_targets.end() ? target_area : it->second;
}

void ControlConfig::validate() const
{
  if (!(target_area > 0.0))
    throw ConfigError("target melt-pool area must be positive");
  for (auto const &[region, a] : region_targets)
    if (!(a > 0.0))
      throw ConfigError("target area for " + to_string(region) +
                        " must be positive");
  if (!(p_min >= 0.0) || !(p_max > p_min))
    throw ConfigError(
        fmt::format("power bounds must satisfy 0 <= P_min < P_max, got [{}, {}]",
                    p_min, p_max));
  if (!(tolerance > 0.0) || max_iterations < 1)
    throw ConfigError("solver tolerance and iteration limit must be positive");
}

PowerSolution solve_power(double t_below, double speed, double target,
                          ControlConfig const &cfg,
                          MeltPoolCoefficients const &c, MaterialProps const &mat)
{
  if (!(target > 0.0))
    throw ConfigError("target melt-pool area must be positive");
  auto const poly = area_polynomial(speed, t_below, c, mat);

  PowerSolution out;
  if (target < poly(cfg.p_min))
  {
    out.power = cfg.p_min;
    out.clamped = true;
  }
  else if (target > poly(cfg.p_max))
  {
    out.power = cfg.p_max;
    out.clamped = true;
  }
  else
  {
    double lo = std::sqrt(cfg.p_min);
    double hi = std::sqrt(cfg.p_max);
    auto g = [&](double u) { return (poly.a * u + poly.b) * u * u - target; };
    double u = 0.5 * (lo + hi);
    int it = 0;
    for (; it < cfg.max_iterations; ++it)
    {
      double const r = g(u);
      if (r == 0.0)
        break;
      if (r > 0.0)
        hi = u;
      else
        lo = u;
      double const slope = (3.0 * poly.a * u + 2.0 * poly.b) * u;
      double next = slope > 0.0 ? u - r / slope : 0.5 * (lo + hi);
      if (!(next > lo && next < hi))
        next = 0.5 * (lo + hi);
      if (std::abs(next - u) <= 2.0 * std::numeric_limits<double>::epsilon() * u)
      {
        u = next;
        break;
      }
      u = next;
    }
    out.power = u * u;
    out.iterations = it;
    if (std::abs(g(u)) > cfg.tolerance * target)
      throw NumericError(fmt::format(
          "power solve did not converge: residual {:.3g} of target {:.3g} after "
          "{} iterations",
          g(u), target, it));
  }
  out.area = melt_area(out.power, speed, t_below, c, mat);
  return out;
}

PowerSolution solve_power(double t_below, double speed, ControlConfig const &cfg,
                          MeltPoolCoefficients const &c, MaterialProps const &mat)
{
  return solve_power(t_below, speed, cfg.target_area, cfg, c, mat);
}

//----------------------------------------------------------------------------
// Build driver
//----------------------------------------------------------------------------

PreparedScan prepare_scan(std::istream &in, GridConfig config,
                          MaterialProps const &mat,
                          std::string const &source_name, double dt_fraction)
{
  mat.validate();
  if (!(config.dt > 0.0))
  {
    if (!(dt_fraction > 0.0 && dt_fraction <= 1.0))
      throw ConfigError("timestep fraction of the stability bound must be in (0, 1]");
    config.dt =
        dt_fraction * stability_bound(config.hatch_spacing, config.layer_thickness, mat);
  }
  auto file = parse_scanpath(in, config, source_name);
  if (file.substrate_layers >= 0)
    config.substrate_layers = file.substrate_layers;
  PreparedScan scan;
  scan.grid = build_grid(file.layers, config);
  scan.layers =
      subdivide_vectors(file.layers, scan.grid, config.min_fragment_fraction);
  scan.dt = config.dt;
  scan.substrate_layers = config.substrate_layers;
  return scan;
}

ThermalContext make_thermal_context(PreparedScan const &scan,
                                    MaterialProps const &mat,
                                    BeamParams const &beam, int threads)
{
  ThermalContext ctx;
  ctx.grid = scan.grid;
  ctx.material = mat;
  ctx.beam = beam;
  ctx.dt = scan.dt;
  ctx.threads = threads;
  return ctx;
}

PowerSchedule run_build(std::vector<LayerScan> const &layers,
                        ThermalContext const &ctx, PowerPolicy const &policy,
                        DwellOptions const &dwell, LayerObserver const &observer)
{
  auto const &grid = ctx.grid;
  auto const &mat = ctx.material;
  mat.validate();
  ctx.beam.validate();
  Parallel const pool(ctx.threads);

  PowerSchedule schedule;
  PartRecord record(grid, mat.baseplate_temp);
  for (std::size_t li = 0; li < layers.size(); ++li)
  {
    auto const &layer = layers[li];
    int const k = grid.layer_to_k(layer.layer);
    if (k < 0 || k >= grid.nz())
      throw ConfigError(fmt::format("layer {} is outside the grid", layer.layer));
    if (li > 0)
      apply_interlayer_dwell(record, grid, mat, dwell, pool);
    auto window = advance_window(record, k, ctx);
    auto const sys = build_state_system(grid, window, mat, ctx.dt, ctx.boundaries);

    for (auto const &v : layer.vectors)
    {
      if (!v.is_mark)
      {
        window = step_vector(std::move(window), sys, v, 0.0, ctx, pool);
        continue;
      }
      auto const tb = subsurface_temperature(
          window, v, grid, mat, static_cast<double>(v.start_step) * ctx.dt);
      PowerChoice choice;
      try
      {
        choice = policy(v, tb);
      }
      catch (DomainError const &e)
      {
        throw DomainError(fmt::format("vector {} (layer {}): {}", v.id, v.layer,
                                      e.what()));
      }
      ScheduleEntry entry;
      entry.layer = layer.layer;
      entry.vector_id = v.id;
      entry.start = v.start;
      entry.end = v.end;
      entry.speed = v.speed;
      entry.power = choice.power;
      entry.t_below = tb.temperature;
      entry.mode = tb.mode;
      entry.area = choice.area;
      entry.clamped = choice.clamped;
      entry.region = v.region;
      schedule.entries.push_back(entry);
      window = step_vector(std::move(window), sys, v, choice.power, ctx, pool);
    }
    store_window(window, record);
    if (observer)
      observer(layer, window, record);
  }
  return schedule;
}

PowerSchedule run_feedforward(std::vector<LayerScan> const &layers,
                              ThermalContext const &ctx, ControlConfig const &cfg,
                              MeltPoolCoefficients const &c,
                              DwellOptions const &dwell,
                              LayerObserver const &observer)
{
  cfg.validate();
  c.validate();
  auto policy = [&](ScanVector const &v, SubsurfaceResult const &tb) {
    auto const s = solve_power(tb.temperature, v.speed, cfg.target_for(v.region),
                               cfg, c, ctx.material);
    return PowerChoice{s.power, s.area, s.clamped};
  };
  return run_build(layers, ctx, policy, dwell, observer);
}

PowerSchedule run_fixed_power(std::vector<LayerScan> const &layers,
                              ThermalContext const &ctx,
                              std::vector<double> const &powers,
                              MeltPoolCoefficients const &c,
                              DwellOptions const &dwell,
                              LayerObserver const &observer)
{
  c.validate();
  std::size_t next = 0;
  auto policy = [&](ScanVector const &v, SubsurfaceResult const &tb) {
    double p = v.power_nominal;
    if (!powers.empty())
    {
      if (next >= powers.size())
        throw ConfigError(fmt::format(
            "{} powers supplied but the scan path has more mark vectors",
            powers.size()));
      p = powers[next];
    }
    ++next;
    return PowerChoice{p, melt_area(p, v.speed, tb.temperature, c, ctx.material),
                       false};
  };
  auto schedule = run_build(layers, ctx, policy, dwell, observer);
  if (!powers.empty() && next != powers.size())
    throw ConfigError(fmt::format("{} powers supplied for {} mark vectors",
                                  powers.size(), next));
  return schedule;
}

//----------------------------------------------------------------------------
// Reporting
//----------------------------------------------------------------------------

std::vector<LayerPower> per_layer_power(PowerSchedule const &schedule)
{
  std::vector<LayerPower> out;
  for (auto const &e : schedule.entries)
  {
    if (out.empty() || out.back().layer != e.layer)
      out.push_back({e.layer, 0, 0.0, e.power, e.power});
    auto &lp = out.back();
    ++lp.n_vectors;
    lp.mean_power += e.power;
    lp.min_power = std::min(lp.min_power, e.power);
    lp.max_power = std::max(lp.max_power, e.power);
  }
  for (auto &lp : out)
    lp.mean_power /= static_cast<double>(lp.n_vectors);
  return out;
}

double mean_power(std::vector<ScheduleEntry> const &entries,
                  std::function<bool(ScheduleEntry const &)> const &keep)
{
  double sum = 0.0;
  std::size_t n = 0;
  for (auto const &e : entries)
    if (keep(e))
    {
      sum += e.power;
      ++n;
    }
  if (n == 0)
    return std::numeric_limits<double>::quiet_NaN();
  return sum / static_cast<double>(n);
}

void write_schedule_csv(std::ostream &out, PowerSchedule const &schedule)
{
  fmt::print(out, "# lpbf schedule v1\n");
  fmt::print(out, "layer,vector_id,x0_mm,y0_mm,x1_mm,y1_mm,speed_mm_s,power_W,"
                  "Tb_K,Ac_mm2,clamped,region\n");
  for (auto const &e : schedule.entries)
    fmt::print(out, "{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.9g},{:.9g},{:.9g},{},{}\n",
               e.layer, e.vector_id, e.start.x * 1e3, e.start.y * 1e3,
               e.end.x * 1e3, e.end.y * 1e3, e.speed * 1e3, e.power, e.t_below,
               e.area * 1e6, e.clamped ? 1 : 0, to_string(e.region));
}

void write_layer_power_csv(std::ostream &out, PowerSchedule const &schedule)
{
  fmt::print(out, "# lpbf layer-power v1\n");
  fmt::print(out, "layer,n_vectors,mean_power_W,min_power_W,max_power_W\n");
  for (auto const &lp : per_layer_power(schedule))
    fmt::print(out, "{},{},{:.9g},{:.9g},{:.9g}\n", lp.layer, lp.n_vectors,
               lp.mean_power, lp.min_power, lp.max_power);
}

} // namespace lpbf
