#include <lpbf/error.hpp>
#include <lpbf/material.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>

namespace lpbf
{

namespace
{

void require_positive(double value, char const *field)
{
  if (!(value > 0.0) || !std::isfinite(value))
    throw ConfigError(std::string("material property '") + field +
                      "' must be finite and strictly positive");
}

std::string upper(std::string s)
{
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  return s;
}

} // namespace

void MaterialProps::validate() const
{
  require_positive(density, "density");
  require_positive(heat_capacity, "heat_capacity");
  require_positive(conductivity, "conductivity");
  require_positive(convection_coeff, "convection_coeff");
  require_positive(melting_temp, "melting_temp");
  require_positive(ambient_temp, "ambient_temp");
  require_positive(baseplate_temp, "baseplate_temp");
  require_positive(powder_density_factor, "powder_density_factor");
  require_positive(powder_conductivity_factor, "powder_conductivity_factor");
  if (!(absorptivity > 0.0 && absorptivity <= 1.0))
    throw ConfigError("material property 'absorptivity' must lie in (0, 1]");
}

MaterialProps in718()
{
  MaterialProps m;
  m.name = "IN718";
  m.density = 8260.0;
  m.heat_capacity = 543.0;
  m.conductivity = 14.90;
  m.convection_coeff = 20.0;
  m.melting_temp = 1610.0;
  m.ambient_temp = 293.0;
  m.baseplate_temp = 293.0;
  m.absorptivity = 0.33;
  return m;
}

MaterialProps ss316l()
{
  MaterialProps m;
  m.name = "316LSS";
  m.density = 7900.0;
  m.heat_capacity = 434.0;
  m.conductivity = 13.96;
  m.convection_coeff = 20.0;
  m.melting_temp = 1710.0;
  m.ambient_temp = 293.0;
  m.baseplate_temp = 293.0;
  m.absorptivity = 0.33;
  return m;
}

MaterialProps material_preset(std::string const &name)
{
  auto const key = upper(name);
  if (key == "IN718")
    return in718();
  if (key == "316LSS" || key == "316L")
    return ss316l();
  throw ConfigError("unknown material preset '" + name +
                    "' (expected IN718 or 316LSS)");
}

BeamParams BeamParams::from_spot(double spot_size, double tuning_factor)
{
  BeamParams b;
  b.spot_size = spot_size;
  b.rx = b.ry = b.rz = 0.5 * spot_size;
  b.tuning_factor = tuning_factor;
  return b;
}

double BeamParams::max_radius() const { return std::max({rx, ry, rz}); }

void BeamParams::validate() const
{
  if (!(rx > 0.0 && ry > 0.0 && rz > 0.0))
    throw ConfigError("beam radii must be strictly positive");
  if (!(tuning_factor > 0.0))
    throw ConfigError("beam tuning factor f must be strictly positive");
}

NominalParams nominal_params(std::string const &material_name)
{
  auto const key = upper(material_name);
  NominalParams p;
  if (key == "IN718")
  {
    p.power = 220.0;
    p.speed = 1.0;
    p.tuning_factor = 4.0;
  }
  else if (key == "316LSS" || key == "316L")
  {
    p.power = 290.0;
    p.speed = 1.2;
    p.tuning_factor = 2.5;
  }
  else
  {
    throw ConfigError("no nominal parameters for material '" + material_name +
                      "'");
  }
  return p;
}

} // namespace lpbf
