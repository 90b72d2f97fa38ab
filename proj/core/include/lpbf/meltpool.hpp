#pragma once

#include <lpbf/material.hpp>

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace lpbf
{

/// Constants of the analytical melt-pool model
///   W = c1 sqrt(P / ((T_m - T_b) v)),   L = c2 P / (T_m - T_b),
/// stored for P in W, v in m/s, T in K with W and L in m.
struct MeltPoolCoefficients
{
  double c1 = 0.0;
  double c2 = 0.0;
  std::string units = "W, m/s, K -> m";

  /// Converts constants fitted in another convention: outputs in
  /// `length_unit` metres and speeds in `speed_unit` m/s.
  static MeltPoolCoefficients from_convention(double c1, double c2,
                                              double length_unit,
                                              double speed_unit);
  // Inverse of from_convention: {c1, c2} in the given convention.
  std::pair<double, double> to_convention(double length_unit,
                                          double speed_unit) const;

  void validate() const;
};

// Preset constants, quoted with widths/lengths in um and speed in m/s.
MeltPoolCoefficients in718_coefficients();
MeltPoolCoefficients ss316l_coefficients();
MeltPoolCoefficients preset_coefficients(std::string const &material_name);

// Smallest admissible melting-point margin T_m - T_b, K.
inline constexpr double min_superheat = 1.0;

double melt_width(double power, double speed, double t_below,
                  MeltPoolCoefficients const &c, MaterialProps const &mat);
double melt_length(double power, double t_below, MeltPoolCoefficients const &c,
                   MaterialProps const &mat);
// Half disc of diameter W on a triangle of base W and height L.
double melt_area(double power, double speed, double t_below,
                 MeltPoolCoefficients const &c, MaterialProps const &mat);

/// Area as a * P^(3/2) + b * P at fixed speed and subsurface temperature.
struct AreaPolynomial
{
  double a = 0.0;
  double b = 0.0;
  double operator()(double power) const;
};
AreaPolynomial area_polynomial(double speed, double t_below,
                               MeltPoolCoefficients const &c,
                               MaterialProps const &mat);

enum class MeasurementSource
{
  camera,
  microscope,
  synthetic
};

std::string to_string(MeasurementSource s);
MeasurementSource parse_measurement_source(std::string const &s);

struct SingleTrackRecord
{
  double power = 0.0;   // W
  double speed = 0.0;   // m/s
  double t_below = 0.0; // K
  double width = 0.0;   // m
  double length = 0.0;  // m
  MeasurementSource source = MeasurementSource::synthetic;
};

struct ResidualStats
{
  double median_abs_rel = 0.0;
  double p90_abs_rel = 0.0;
  double max_abs_rel = 0.0;
};

struct MeltPoolFit
{
  MeltPoolCoefficients coefficients;
  double r2_width = 1.0;
  double r2_length = 1.0;
  ResidualStats width_residuals;
  ResidualStats length_residuals;
  std::size_t n_records = 0;
};

/// Through-origin least squares for c1 and c2. R^2 is taken against each
/// dataset's mean and reported as 1 when the data have no spread.
MeltPoolFit fit_coefficients(std::vector<SingleTrackRecord> const &records,
                             MaterialProps const &mat,
                             std::optional<MeasurementSource> only = {});

struct SweepRange
{
  double start = 0.0;
  double step = 0.0;
  double end = 0.0;

  // Inclusive arithmetic sequence; end is kept when reached within 1e-9 step.
  std::vector<double> values() const;
};

struct SweepPoint
{
  double power = 0.0;
  double speed = 0.0;
  double t_below = 0.0;
};

// Full Cartesian product, power slowest and temperature fastest.
std::vector<SweepPoint> generate_sweep_design(SweepRange const &power,
                                              SweepRange const &speed,
                                              std::vector<double> const &t_below);

// Default single-track design: P 100:40:420 W, v 500:150:1850 mm/s,
// T_b in {50, 200, 300, 433} C.
std::vector<SweepPoint> standard_sweep_design();

/// Measurement table with header `P_W, v_mm_s, Tb_C, width_um, length_um,
/// source`; columns may appear in any order and `#` lines are skipped.
std::vector<SingleTrackRecord> read_measurements(std::istream &in,
                                                 std::string const &source_name =
                                                     "<stream>");
void write_measurements(std::ostream &out,
                        std::vector<SingleTrackRecord> const &records);

void write_fit_report_csv(std::ostream &out, MeltPoolFit const &fit);
void write_fit_summary(std::ostream &out, MeltPoolFit const &fit,
                       std::string const &material_name);

} // namespace lpbf
