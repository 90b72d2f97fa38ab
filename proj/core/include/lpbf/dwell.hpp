#pragma once

#include <lpbf/material.hpp>
#include <lpbf/parallel.hpp>
#include <lpbf/thermal.hpp>

#include <optional>
#include <span>
#include <vector>

namespace lpbf
{

/// Temperatures at ascending heights z in [0, length]; linear in between and
/// constant beyond the first and last node.
struct PiecewiseLinearProfile
{
  std::vector<double> z;
  std::vector<double> temperature;
  double length = 0.0;

  void validate() const;
  double operator()(double at) const;
  double mean() const;
  double min() const;
  double max() const;
};

/// Boundary pair of a 1D column, top first; z = 0 is the bottom.
enum class BoundaryCase
{
  convection_fixed = 1,     // convective top, fixed-temperature bottom
  convection_insulated = 2, // convective top, insulated bottom
  insulated_insulated = 3,
  insulated_fixed = 4 // insulated top, fixed-temperature bottom
};

struct DwellCase
{
  BoundaryCase kind = BoundaryCase::insulated_insulated;
  double t_fixed = 0.0;   // bottom temperature, K (cases 1 and 4)
  double t_ambient = 0.0; // K (cases 1 and 2)
  double h = 0.0;         // W/(m^2 K) (cases 1 and 2)
  double k = 1.0;         // W/(m K)

  void validate() const;
  double biot(double length) const { return h * length / k; }
};

/// First m eigenvalues (1/m), strictly increasing. Cases 1 and 2 are
/// bracketed one root per half period, bisected and polished by Newton.
std::vector<double> solve_eigenvalues(DwellCase const &c, double length, int m);

// Scaled residual of the eigenvalue condition at lambda.
double eigen_residual(DwellCase const &c, double length, double lambda);

struct SeriesSolution
{
  DwellCase boundary;
  double length = 0.0;
  double slope = 0.0; // steady gradient, case 1
  double c0 = 0.0;    // mean, case 3
  std::vector<double> lambda;
  std::vector<double> coeff;
  double range = 0.0; // max - min of the projected profile

  // Time-independent part of the solution.
  double steady(double z) const;
};

/// Coefficients of the eigenfunction expansion of (profile - steady part),
/// from exact integrals of linear pieces against sin / cos.
SeriesSolution project_profile(PiecewiseLinearProfile const &profile,
                               DwellCase const &c,
                               std::vector<double> const &lambda);

struct TruncationRule
{
  double damping_floor = 1e-15; // stop once exp(-lambda^2 alpha t) drops below
  double amplitude_floor = 1e-9; // relative to profile range ...
  int quiet_modes = 3;           // ... for this many consecutive modes
};

double evaluate_series(SeriesSolution const &sol, double alpha, double t,
                       double z, TruncationRule const &rule = {});
std::vector<double> evaluate_series(SeriesSolution const &sol, double alpha,
                                    double t, std::span<double const> z,
                                    TruncationRule const &rule = {});
// Spatial mean over [0, length], integrated mode by mode.
double series_mean(SeriesSolution const &sol, double alpha, double t);

// Modes needed for exp(-lambda^2 alpha t) to fall below `floor`, at most cap.
int modes_for_time(DwellCase const &c, double length, double alpha, double t,
                   int cap, double floor = 1e-15);

/// Projects and evaluates in one call, sizing the expansion for t.
std::vector<double> solve_column(PiecewiseLinearProfile const &profile,
                                 DwellCase const &c, double alpha, double t,
                                 std::span<double const> z, int max_modes = 500);

enum class BlurBoundary
{
  replicate,
  periodic
};

/// Separable Gaussian blur of an nx x ny image (i fastest), sigma in pixels,
/// kernel truncated at ceil(4 sigma). sigma = 0 leaves the image unchanged.
void gaussian_blur(std::span<double> image, int nx, int ny, double sigma,
                   BlurBoundary boundary = BlurBoundary::replicate);

struct DwellOptions
{
  double time = 10.0; // s
  std::optional<double> convection_coeff; // overrides the material value
  int max_modes = 500;
  BlurBoundary blur_boundary = BlurBoundary::replicate;
  HalfRule half_rule = HalfRule::above_ambient;
};

/// One interlayer pause on the part record, layers 0..top_layer:
/// 1. every vertical run of part cells is solved as a 1D column (convective
///    top when it reaches the top layer, fixed bottom on the plate, insulated
///    otherwise);
/// 2. per layer, powder cells are reset to the half rule of the layer's part
///    mean and the layer is blurred with sigma = sqrt(2 alpha t) / dx pixels.
void apply_interlayer_dwell(PartRecord &record, VoxelGrid const &grid,
                            MaterialProps const &mat, DwellOptions const &options,
                            Parallel const &pool);
void apply_interlayer_dwell(PartRecord &record, VoxelGrid const &grid,
                            MaterialProps const &mat, DwellOptions const &options);

} // namespace lpbf
