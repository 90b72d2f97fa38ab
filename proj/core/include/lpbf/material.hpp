#pragma once

#include <string>

namespace lpbf
{

/// Thermophysical constants of the build material, SI units throughout.
///
/// Powder is modelled with the same heat capacity as the solid but with
/// derated density and conductivity, so its diffusivity is
/// `powder_conductivity_factor / powder_density_factor` times the solid one.
struct MaterialProps
{
  std::string name = "custom";
  double density = 0.0;          // kg/m^3
  double heat_capacity = 0.0;    // J/(kg K)
  double conductivity = 0.0;     // W/(m K)
  double convection_coeff = 0.0; // W/(m^2 K)
  double melting_temp = 0.0;     // K
  double ambient_temp = 0.0;     // K
  double baseplate_temp = 0.0;   // K
  double absorptivity = 0.0;
  double powder_density_factor = 0.48;
  double powder_conductivity_factor = 0.10;

  double diffusivity() const
  {
    return conductivity / (density * heat_capacity);
  }
  double powder_diffusivity() const
  {
    return (powder_conductivity_factor * conductivity) /
           (powder_density_factor * density * heat_capacity);
  }

  // Throws ConfigError naming the first offending field.
  void validate() const;
};

MaterialProps in718();
MaterialProps ss316l();
// Accepts "IN718" or "316LSS" (case-insensitive); throws ConfigError otherwise.
MaterialProps material_preset(std::string const &name);

struct BeamParams
{
  double rx = 39e-6;
  double ry = 39e-6;
  double rz = 39e-6;
  double spot_size = 78e-6;
  double tuning_factor = 1.0;

  // Radii set to half the D4-sigma spot size.
  static BeamParams from_spot(double spot_size, double tuning_factor);
  double max_radius() const;
  void validate() const;
};

/// Nominal process parameters that accompany each material preset.
struct NominalParams
{
  double power = 0.0; // W
  double speed = 0.0; // m/s
  double tuning_factor = 1.0;
  double layer_thickness = 40e-6;
  double hatch_spacing = 90e-6;
  double hatch_rotation_deg = 67.0;
};

NominalParams nominal_params(std::string const &material_name);

} // namespace lpbf
