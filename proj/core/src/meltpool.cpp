#include <lpbf/error.hpp>
#include <lpbf/meltpool.hpp>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

namespace lpbf
{

namespace
{

constexpr double celsius_offset = 273.15;

double superheat(double t_below, MaterialProps const &mat)
{
  double const d = mat.melting_temp - t_below;
  if (!(d >= min_superheat))
    throw DomainError(fmt::format(
        "subsurface temperature {:.6g} K is within {:g} K of the melting point "
        "{:.6g} K; the melt-pool model is undefined",
        t_below, min_superheat, mat.melting_temp));
  return d;
}

void check_inputs(double power, double speed)
{
  if (!(power >= 0.0) || !std::isfinite(power))
    throw DomainError("melt-pool power must be finite and non-negative");
  if (!(speed > 0.0) || !std::isfinite(speed))
    throw DomainError("melt-pool speed must be finite and positive");
}

std::string trim(std::string s)
{
  auto const not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split_csv(std::string const &line)
{
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ','))
    out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',')
    out.emplace_back();
  return out;
}

double r_squared(std::vector<double> const &y, std::vector<double> const &fit)
{
  double mean = 0.0;
  for (double v : y)
    mean += v;
  mean /= static_cast<double>(y.size());
  double ss_tot = 0.0, ss_res = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
  {
    ss_tot += (y[i] - mean) * (y[i] - mean);
    ss_res += (y[i] - fit[i]) * (y[i] - fit[i]);
  }
  if (ss_tot == 0.0)
    return 1.0;
  return 1.0 - ss_res / ss_tot;
}

ResidualStats residual_stats(std::vector<double> const &y,
                             std::vector<double> const &fit)
{
  std::vector<double> r(y.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    r[i] = std::abs(fit[i] - y[i]) / y[i];
  std::sort(r.begin(), r.end());
  auto quantile = [&](double q) {
    double const pos = q * static_cast<double>(r.size() - 1);
    auto const lo = static_cast<std::size_t>(std::floor(pos));
    auto const hi = std::min(lo + 1, r.size() - 1);
    return r[lo] + (pos - static_cast<double>(lo)) * (r[hi] - r[lo]);
  };
  return {quantile(0.5), quantile(0.9), r.back()};
}

} // namespace

MeltPoolCoefficients MeltPoolCoefficients::from_convention(double c1, double c2,
                                                           double length_unit,
                                                           double speed_unit)
{
  MeltPoolCoefficients c;
  c.c1 = c1 * length_unit * std::sqrt(speed_unit);
  c.c2 = c2 * length_unit;
  c.units = fmt::format("W, m/s, K -> m (from c1={:g}, c2={:g} with lengths x{:g} m, "
                        "speeds x{:g} m/s)",
                        c1, c2, length_unit, speed_unit);
  c.validate();
  return c;
}

std::pair<double, double>
MeltPoolCoefficients::to_convention(double length_unit, double speed_unit) const
{
  return {c1 / (length_unit * std::sqrt(speed_unit)), c2 / length_unit};
}

void MeltPoolCoefficients::validate() const
{
  if (!(c1 > 0.0) || !(c2 > 0.0) || !std::isfinite(c1) || !std::isfinite(c2))
    throw ConfigError("melt-pool coefficients must be positive and finite");
}

MeltPoolCoefficients in718_coefficients()
{
  return MeltPoolCoefficients::from_convention(261.0, 499.0, 1e-6, 1.0);
}

MeltPoolCoefficients ss316l_coefficients()
{
  return MeltPoolCoefficients::from_convention(256.0, 529.0, 1e-6, 1.0);
}

MeltPoolCoefficients preset_coefficients(std::string const &material_name)
{
  auto const mat = material_preset(material_name);
  return mat.name == "IN718" ? in718_coefficients() : ss316l_coefficients();
}

double melt_width(double power, double speed, double t_below,
                  MeltPoolCoefficients const &c, MaterialProps const &mat)
{
  check_inputs(power, speed);
  return c.c1 * std::sqrt(power / (superheat(t_below, mat) * speed));
}

double melt_length(double power, double t_below, MeltPoolCoefficients const &c,
                   MaterialProps const &mat)
{
  check_inputs(power, 1.0);
  return c.c2 * power / superheat(t_below, mat);
}

double melt_area(double power, double speed, double t_below,
                 MeltPoolCoefficients const &c, MaterialProps const &mat)
{
  double const w = melt_width(power, speed, t_below, c, mat);
  double const l = melt_length(power, t_below, c, mat);
  return 0.5 * w * l + std::numbers::pi / 8.0 * w * w;
}

double AreaPolynomial::operator()(double power) const
{
  return a * power * std::sqrt(power) + b * power;
}

AreaPolynomial area_polynomial(double speed, double t_below,
                               MeltPoolCoefficients const &c,
                               MaterialProps const &mat)
{
  check_inputs(0.0, speed);
  double const d = superheat(t_below, mat);
  AreaPolynomial p;
  p.a = 0.5 * c.c1 * c.c2 / std::sqrt(d * d * d * speed);
  p.b = std::numbers::pi * c.c1 * c.c1 / (8.0 * d * speed);
  return p;
}

std::string to_string(MeasurementSource s)
{
  switch (s)
  {
  case MeasurementSource::camera:
    return "camera";
  case MeasurementSource::microscope:
    return "microscope";
  case MeasurementSource::synthetic:
    return "synthetic";
  }
  return "synthetic";
}

MeasurementSource parse_measurement_source(std::string const &s)
{
  std::string lower = trim(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (lower == "camera")
    return MeasurementSource::camera;
  if (lower == "microscope")
    return MeasurementSource::microscope;
  if (lower == "synthetic" || lower.empty())
    return MeasurementSource::synthetic;
  throw ConfigError("unknown measurement source '" + s + "'");
}

MeltPoolFit fit_coefficients(std::vector<SingleTrackRecord> const &records,
                             MaterialProps const &mat,
                             std::optional<MeasurementSource> only)
{
  std::vector<SingleTrackRecord> used;
  for (auto const &r : records)
    if (!only || r.source == *only)
      used.push_back(r);
  if (used.empty())
    throw ConfigError("no single-track records to fit");

  std::vector<double> xw, yw, xl, yl;
  for (auto const &r : used)
  {
    if (!(r.width > 0.0) || !(r.length > 0.0))
      throw ConfigError("single-track measurements must be positive");
    double const d = superheat(r.t_below, mat);
    check_inputs(r.power, r.speed);
    xw.push_back(std::sqrt(r.power / (d * r.speed)));
    yw.push_back(r.width);
    xl.push_back(r.power / d);
    yl.push_back(r.length);
  }

  auto through_origin = [](std::vector<double> const &x,
                           std::vector<double> const &y) {
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
    {
      sxx += x[i] * x[i];
      sxy += x[i] * y[i];
    }
    if (sxx == 0.0)
      throw ConfigError("all melt-pool regressors are zero; nothing to fit");
    return sxy / sxx;
  };

  MeltPoolFit fit;
  fit.coefficients.c1 = through_origin(xw, yw);
  fit.coefficients.c2 = through_origin(xl, yl);
  fit.coefficients.validate();
  fit.n_records = used.size();

  std::vector<double> fw(xw.size()), fl(xl.size());
  for (std::size_t i = 0; i < xw.size(); ++i)
  {
    fw[i] = fit.coefficients.c1 * xw[i];
    fl[i] = fit.coefficients.c2 * xl[i];
  }
  fit.r2_width = r_squared(yw, fw);
  fit.r2_length = r_squared(yl, fl);
  fit.width_residuals = residual_stats(yw, fw);
  fit.length_residuals = residual_stats(yl, fl);
  return fit;
}

std::vector<double> SweepRange::values() const
{
  if (!std::isfinite(start) || !std::isfinite(end) || !std::isfinite(step))
    throw ConfigError("sweep range must be finite");
  if (step == 0.0)
  {
    if (start != end)
      throw ConfigError("zero sweep step needs start == end");
    return {start};
  }
  if ((end - start) / step < -1e-9)
    throw ConfigError(fmt::format("empty sweep range {}:{}:{}", start, step, end));
  auto const n = static_cast<long>(std::floor((end - start) / step + 1e-9)) + 1;
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i)
    v.push_back(start + static_cast<double>(i) * step);
  return v;
}

std::vector<SweepPoint> generate_sweep_design(SweepRange const &power,
                                              SweepRange const &speed,
                                              std::vector<double> const &t_below)
{
  if (t_below.empty())
    throw ConfigError("sweep needs at least one subsurface temperature");
  std::vector<SweepPoint> out;
  for (double p : power.values())
    for (double v : speed.values())
      for (double t : t_below)
        out.push_back({p, v, t});
  return out;
}

std::vector<SweepPoint> standard_sweep_design()
{
  std::vector<double> temps;
  for (double c : {50.0, 200.0, 300.0, 433.0})
    temps.push_back(c + celsius_offset);
  return generate_sweep_design({100.0, 40.0, 420.0}, {0.5, 0.15, 1.85}, temps);
}

std::vector<SingleTrackRecord> read_measurements(std::istream &in,
                                                 std::string const &source_name)
{
  static std::vector<std::string> const required{"P_W",      "v_mm_s",
                                                 "Tb_C",     "width_um",
                                                 "length_um"};
  std::vector<SingleTrackRecord> records;
  std::map<std::string, std::size_t> column;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(in, line))
  {
    ++line_no;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    std::string const t = trim(line);
    if (t.empty() || t.front() == '#')
      continue;
    auto const cells = split_csv(t);
    if (!have_header)
    {
      for (std::size_t i = 0; i < cells.size(); ++i)
        column[cells[i]] = i;
      for (auto const &name : required)
        if (!column.count(name))
          throw ParseError(source_name, line_no,
                           "missing column '" + name + "'");
      have_header = true;
      continue;
    }
    auto get = [&](std::string const &name) {
      auto const idx = column.at(name);
      if (idx >= cells.size())
        throw ParseError(source_name, line_no, "missing value for '" + name + "'");
      try
      {
        std::size_t used = 0;
        double const v = std::stod(cells[idx], &used);
        if (used != cells[idx].size())
          throw std::invalid_argument(cells[idx]);
        return v;
      }
      catch (std::exception const &)
      {
        throw ParseError(source_name, line_no,
                         "bad number '" + cells[idx] + "' in column '" + name + "'");
      }
    };
    SingleTrackRecord r;
    r.power = get("P_W");
    r.speed = get("v_mm_s") * 1e-3;
    r.t_below = get("Tb_C") + celsius_offset;
    r.width = get("width_um") * 1e-6;
    r.length = get("length_um") * 1e-6;
    if (auto it = column.find("source"); it != column.end() && it->second < cells.size())
    {
      try
      {
        r.source = parse_measurement_source(cells[it->second]);
      }
      catch (ConfigError const &e)
      {
        throw ParseError(source_name, line_no, e.what());
      }
    }
    records.push_back(r);
  }
  if (!have_header)
    throw ParseError(source_name, line_no, "missing header row");
  return records;
}

void write_measurements(std::ostream &out,
                        std::vector<SingleTrackRecord> const &records)
{
  fmt::print(out, "# lpbf measurements v1\n");
  fmt::print(out, "P_W,v_mm_s,Tb_C,width_um,length_um,source\n");
  for (auto const &r : records)
    fmt::print(out, "{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{}\n", r.power,
               r.speed * 1e3, r.t_below - celsius_offset, r.width * 1e6,
               r.length * 1e6, to_string(r.source));
}

void write_fit_report_csv(std::ostream &out, MeltPoolFit const &fit)
{
  auto const [c1, c2] = fit.coefficients.to_convention(1e-6, 1.0);
  fmt::print(out, "# lpbf fit-report v1\n");
  fmt::print(out, "quantity,value\n");
  fmt::print(out, "c1_um,{:.10g}\n", c1);
  fmt::print(out, "c2_um,{:.10g}\n", c2);
  fmt::print(out, "c1_si,{:.10g}\n", fit.coefficients.c1);
  fmt::print(out, "c2_si,{:.10g}\n", fit.coefficients.c2);
  fmt::print(out, "r2_width,{:.10g}\n", fit.r2_width);
  fmt::print(out, "r2_length,{:.10g}\n", fit.r2_length);
  fmt::print(out, "width_residual_median,{:.6g}\n", fit.width_residuals.median_abs_rel);
  fmt::print(out, "width_residual_p90,{:.6g}\n", fit.width_residuals.p90_abs_rel);
  fmt::print(out, "width_residual_max,{:.6g}\n", fit.width_residuals.max_abs_rel);
  fmt::print(out, "length_residual_median,{:.6g}\n", fit.length_residuals.median_abs_rel);
  fmt::print(out, "length_residual_p90,{:.6g}\n", fit.length_residuals.p90_abs_rel);
  fmt::print(out, "length_residual_max,{:.6g}\n", fit.length_residuals.max_abs_rel);
  fmt::print(out, "records,{}\n", fit.n_records);
}

void write_fit_summary(std::ostream &out, MeltPoolFit const &fit,
                       std::string const &material_name)
{
  auto const [c1, c2] = fit.coefficients.to_convention(1e-6, 1.0);
  fmt::print(out, "material: {}\n", material_name);
  fmt::print(out, "records:  {}\n", fit.n_records);
  fmt::print(out, "c1 = {:.6g}  (um, m/s)   R^2 = {:.6f}\n", c1, fit.r2_width);
  fmt::print(out, "c2 = {:.6g}  (um)        R^2 = {:.6f}\n", c2, fit.r2_length);
  fmt::print(out, "width  |rel. residual| median {:.3g}, p90 {:.3g}, max {:.3g}\n",
             fit.width_residuals.median_abs_rel, fit.width_residuals.p90_abs_rel,
             fit.width_residuals.max_abs_rel);
  fmt::print(out, "length |rel. residual| median {:.3g}, p90 {:.3g}, max {:.3g}\n",
             fit.length_residuals.median_abs_rel, fit.length_residuals.p90_abs_rel,
             fit.length_residuals.max_abs_rel);
}

} // namespace lpbf
