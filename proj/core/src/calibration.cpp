#include <lpbf/calibration.hpp>
#include <lpbf/error.hpp>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>

namespace lpbf
{

namespace
{

// Millimetres rounded to the written precision, without a negative zero.
double mm(double metres)
{
  double const v = std::round(metres * 1e9) / 1e6;
  return v == 0.0 ? 0.0 : v;
}

} // namespace

PyramidSpec PyramidSpec::reduced(double scale, int vectors_per_step)
{
  PyramidSpec s;
  for (auto &w : s.widths)
    w *= scale;
  s.vectors_per_step = vectors_per_step;
  s.x_start = -1.5 * vectors_per_step * s.hatch_spacing;
  return s;
}

std::pair<double, double> PyramidSpec::bulk_window() const
{
  double const block = vectors_per_step * hatch_spacing;
  return {x_start + 0.5 * block - 0.5 * hatch_spacing,
          x_start + block - 0.5 * hatch_spacing};
}

std::pair<double, double> PyramidSpec::step_range(int s) const
{
  double const block = vectors_per_step * hatch_spacing;
  return {x_start + s * block - 0.5 * hatch_spacing,
          x_start + (s + 1) * block - 0.5 * hatch_spacing};
}

std::string stepped_pyramid_scanpath(PyramidSpec const &spec)
{
  if (spec.vectors_per_step < 1)
    throw ConfigError("pyramid needs at least one vector per step");
  std::ostringstream out;
  out << "# scanpath v1: mm, mm/s, W, ms\n";
  fmt::print(out, "# stepped pyramid, {} vectors, widths {:g}/{:g}/{:g} mm\n",
             spec.total_vectors(), spec.widths[0] * 1e3, spec.widths[1] * 1e3,
             spec.widths[2] * 1e3);
  fmt::print(out, "substrate {}\n", spec.substrate_layers);
  fmt::print(out, "layer 1 z {:.6f}\n", spec.layer_thickness * 1e3);
  int idx = 0;
  for (int s = 0; s < 3; ++s)
    for (int v = 0; v < spec.vectors_per_step; ++v, ++idx)
    {
      if (idx > 0)
        fmt::print(out, "jump {:g}\n", spec.skywrite * 1e3);
      double const x = mm(spec.x_start + idx * spec.hatch_spacing);
      double const half = mm(0.5 * spec.widths[s]);
      double const y0 = idx % 2 == 0 ? -half : half;
      fmt::print(out, "mark {:.6f} {:.6f} {:.6f} {:.6f} {:g} {:g}\n", x, y0, x,
                 -y0, spec.speed * 1e3, spec.power);
    }
  return out.str();
}

std::string overhang_slab_scanpath(SlabSpec const &spec)
{
  if (spec.base_lines < 1 || spec.overhang_lines < 0)
    throw ConfigError("slab needs at least one base line and no negative overhang");
  std::ostringstream out;
  out << "# scanpath v1: mm, mm/s, W, ms\n";
  fmt::print(out, "# overhang slab, {} base lines, {} overhang lines\n",
             spec.base_lines, spec.overhang_lines);
  fmt::print(out, "substrate {}\n", spec.substrate_layers);
  double const half = mm(0.5 * spec.line_length);
  for (int layer = 1; layer <= 2; ++layer)
  {
    int const lines = spec.base_lines + (layer == 2 ? spec.overhang_lines : 0);
    fmt::print(out, "layer {} z {:.6f}\n", layer,
               layer * spec.layer_thickness * 1e3);
    for (int j = 0; j < lines; ++j)
    {
      if (j > 0)
        fmt::print(out, "jump {:g}\n", spec.skywrite * 1e3);
      double const x = mm(j * spec.hatch_spacing);
      double const y0 = j % 2 == 0 ? -half : half;
      fmt::print(out, "mark {:.6f} {:.6f} {:.6f} {:.6f} {:g} {:g}\n", x, y0, x,
                 -y0, spec.speed * 1e3, spec.power);
    }
  }
  return out.str();
}

double normalized_error(std::vector<double> const &areas)
{
  if (areas.empty())
    throw ConfigError("normalized error needs at least one area");
  double mean = 0.0;
  for (double a : areas)
  {
    if (!(a > 0.0))
      throw ConfigError("areas must be positive");
    mean += a;
  }
  mean /= static_cast<double>(areas.size());
  double ss = 0.0;
  for (double a : areas)
    ss += (a - mean) * (a - mean);
  return std::sqrt(ss) / mean;
}

bool in_window(ScheduleEntry const &e, std::pair<double, double> const &window)
{
  double const x = 0.5 * (e.start.x + e.end.x);
  return x > window.first && x < window.second;
}

//----------------------------------------------------------------------------
// Target tuning
//----------------------------------------------------------------------------

TuneResult tune_target(CalibrationSetup const &setup, double f)
{
  if (!(f > 0.0))
    throw ConfigError("tuning factor must be positive");
  if (!(setup.p_nominal > 0.0) || !(setup.nominal_speed > 0.0))
    throw ConfigError("tuning needs a nominal power and speed");
  ThermalContext ctx = setup.thermal;
  ctx.beam.tuning_factor = f;
  ControlConfig cfg = setup.control;
  double const pn = setup.p_nominal;

  TuneResult result;
  // Mean bulk power minus nominal, or nothing when the schedule drives the
  // layer to the melting point. Lower targets mean lower powers and a cooler
  // layer, so an overheated run counts as a target that is too high.
  auto evaluate = [&](double log_area) -> std::optional<double> {
    cfg.target_area = std::exp(log_area);
    PowerSchedule schedule;
    try
    {
      schedule = run_feedforward(setup.scan.layers, ctx, cfg, setup.coefficients,
                                 setup.dwell);
    }
    catch (DomainError const &)
    {
      return std::nullopt;
    }
    double const mean = mean_power(schedule.entries, [&](ScheduleEntry const &e) {
      return in_window(e, setup.bulk_window);
    });
    if (std::isnan(mean))
      throw ConfigError("no scan vectors fall inside the bulk window");
    ++result.evaluations;
    result.target_area = cfg.target_area;
    result.bulk_mean_power = mean;
    result.schedule = std::move(schedule);
    return mean - pn;
  };
  auto converged = [&](std::optional<double> g) {
    return g && std::abs(*g) <= setup.power_tolerance * pn;
  };
  auto high = [](std::optional<double> g) { return !g || *g > 0.0; };

  double const a0 = melt_area(pn, setup.nominal_speed,
                              ctx.material.baseplate_temp, setup.coefficients,
                              ctx.material);
  double xb = std::log(a0);
  auto gb = evaluate(xb);
  if (converged(gb))
    return result;

  // Bracket the root in log-area.
  double const step = high(gb) ? -0.25 : 0.25;
  double xa = xb;
  auto ga = gb;
  for (int n = 0;; ++n)
  {
    if (n == 40)
      throw ConfigError(fmt::format(
          "nominal power {:g} W is unreachable within the power bounds", pn));
    xa = xb;
    ga = gb;
    xb = xa + step;
    gb = evaluate(xb);
    if (converged(gb))
      return result;
    if (high(gb) != high(ga))
      break;
  }

  // Illinois false position, bisecting while the high end overheats.
  for (int n = 0; n < 60; ++n)
  {
    double const x = ga && gb ? xb - *gb * (xb - xa) / (*gb - *ga)
                              : 0.5 * (xa + xb);
    auto const g = evaluate(x);
    if (converged(g))
      return result;
    if (high(g) != high(gb))
    {
      xa = xb;
      ga = gb;
    }
    else if (ga)
      *ga *= 0.5;
    xb = x;
    gb = g;
  }
  throw NumericError("target tuning did not converge");
}

//----------------------------------------------------------------------------
// Area sources and the f sweep
//----------------------------------------------------------------------------

AreaSource predicted_areas()
{
  return [](CalibrationSetup const &, PowerSchedule const &schedule) {
    std::vector<double> a;
    for (auto const &e : schedule.entries)
      a.push_back(e.area);
    return a;
  };
}

AreaSource virtual_machine(double f_true)
{
  if (!(f_true > 0.0))
    throw ConfigError("reference tuning factor must be positive");
  return [f_true](CalibrationSetup const &setup, PowerSchedule const &schedule) {
    ThermalContext ctx = setup.thermal;
    ctx.beam.tuning_factor = f_true;
    std::vector<double> powers;
    for (auto const &e : schedule.entries)
      powers.push_back(e.power);
    auto const replay = run_fixed_power(setup.scan.layers, ctx, powers,
                                        setup.coefficients, setup.dwell);
    std::vector<double> a;
    for (auto const &e : replay.entries)
      a.push_back(e.area);
    return a;
  };
}

AreaSource measured_areas(std::map<int, double> areas)
{
  return [areas = std::move(areas)](CalibrationSetup const &,
                                    PowerSchedule const &schedule) {
    std::vector<double> a;
    for (auto const &e : schedule.entries)
    {
      auto const it = areas.find(e.vector_id);
      if (it == areas.end())
        throw ConfigError(fmt::format("no measured area for vector {}", e.vector_id));
      a.push_back(it->second);
    }
    if (a.size() != areas.size())
      throw ConfigError(fmt::format("{} measured areas for {} scheduled vectors",
                                    areas.size(), a.size()));
    return a;
  };
}

TuningRun evaluate_f(CalibrationSetup const &setup, double f,
                     AreaSource const &source)
{
  auto const tuned = tune_target(setup, f);
  TuningRun run;
  run.f = f;
  run.target_area = tuned.target_area;
  run.bulk_mean_power = tuned.bulk_mean_power;
  run.areas = source(setup, tuned.schedule);
  if (run.areas.size() != tuned.schedule.entries.size())
    throw ConfigError(fmt::format("{} areas for {} scheduled vectors",
                                  run.areas.size(), tuned.schedule.entries.size()));
  run.epsilon = normalized_error(run.areas);
  return run;
}

FSweep sweep_f(CalibrationSetup const &setup, std::vector<double> const &f_values,
               AreaSource const &source)
{
  if (f_values.empty())
    throw ConfigError("f sweep needs at least one candidate");
  FSweep sweep;
  for (double f : f_values)
  {
    sweep.trace.push_back(evaluate_f(setup, f, source));
    if (sweep.trace.size() == 1 || sweep.trace.back().epsilon < sweep.best.epsilon)
      sweep.best = sweep.trace.back();
  }
  return sweep;
}

bool is_unimodal(std::vector<TuningRun> const &trace)
{
  if (trace.empty())
    return false;
  auto const best = std::min_element(trace.begin(), trace.end(),
                                     [](TuningRun const &a, TuningRun const &b) {
                                       return a.epsilon < b.epsilon;
                                     });
  for (auto it = trace.begin(); it != best; ++it)
    if (!(it->epsilon > std::next(it)->epsilon))
      return false;
  for (auto it = best; std::next(it) != trace.end(); ++it)
    if (!(std::next(it)->epsilon > it->epsilon))
      return false;
  return true;
}

std::map<int, double> read_measured_areas(std::istream &in,
                                          std::string const &source_name)
{
  std::map<int, double> out;
  std::string line;
  int line_no = 0;
  int id_col = -1, area_col = -1;
  while (std::getline(in, line))
  {
    ++line_no;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');)
    {
      c.erase(0, c.find_first_not_of(" \t\r"));
      c.erase(c.find_last_not_of(" \t\r") + 1);
      cells.push_back(c);
    }
    if (cells.empty() || cells[0].empty() || cells[0][0] == '#')
      continue;
    if (id_col < 0)
    {
      for (std::size_t i = 0; i < cells.size(); ++i)
      {
        if (cells[i] == "vector_id")
          id_col = static_cast<int>(i);
        if (cells[i] == "area_mm2")
          area_col = static_cast<int>(i);
      }
      if (id_col < 0)
        throw ParseError(source_name, line_no, "missing column 'vector_id'");
      if (area_col < 0)
        throw ParseError(source_name, line_no, "missing column 'area_mm2'");
      continue;
    }
    if (std::max(id_col, area_col) >= static_cast<int>(cells.size()))
      throw ParseError(source_name, line_no, "too few columns");
    try
    {
      out[std::stoi(cells[id_col])] = std::stod(cells[area_col]) * 1e-6;
    }
    catch (std::exception const &)
    {
      throw ParseError(source_name, line_no, "bad number");
    }
  }
  if (id_col < 0)
    throw ParseError(source_name, line_no, "missing header row");
  return out;
}

void write_tuning_report_csv(std::ostream &out, FSweep const &sweep)
{
  fmt::print(out, "# lpbf tuning-report v1\n");
  fmt::print(out, "f,Ac_target_mm2,epsilon\n");
  for (auto const &r : sweep.trace)
    fmt::print(out, "{:g},{:.9g},{:.9g}\n", r.f, r.target_area * 1e6, r.epsilon);
}

} // namespace lpbf
