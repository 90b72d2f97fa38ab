#include <lpbf/cli/config.hpp>
#include <lpbf/error.hpp>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace lpbf::cli
{

namespace pt = boost::property_tree;

namespace
{

std::string trim(std::string s)
{
  s.erase(0, s.find_first_not_of(" \t\r"));
  s.erase(s.find_last_not_of(" \t\r") + 1);
  return s;
}

double to_double(std::string const &text, std::string const &key)
{
  auto const s = trim(text);
  double v = 0.0;
  auto const [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw ConfigError(fmt::format("{}: '{}' is not a number", key, text));
  return v;
}

long to_long(std::string const &text, std::string const &key)
{
  auto const s = trim(text);
  long v = 0;
  auto const [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw ConfigError(fmt::format("{}: '{}' is not an integer", key, text));
  return v;
}

bool to_bool(std::string const &text, std::string const &key)
{
  auto const s = trim(text);
  if (s == "true" || s == "1" || s == "yes" || s == "on")
    return true;
  if (s == "false" || s == "0" || s == "no" || s == "off")
    return false;
  throw ConfigError(fmt::format("{}: '{}' is not a boolean", key, text));
}

// Typed access to an INI tree that remembers which keys were read, so that
// misspelt keys can be reported.
class Reader
{
public:
  explicit Reader(pt::ptree const &tree) : _tree(tree) {}

  std::optional<std::string> text(std::string const &section, std::string const &key)
  {
    _known[section].insert(key);
    auto const sec = _tree.get_child_optional(pt::ptree::path_type(section, '\0'));
    if (!sec)
      return std::nullopt;
    auto const v = sec->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!v || trim(*v).empty())
      return std::nullopt;
    return trim(*v);
  }

  // Values are stored in the file in units of 1/per of the SI unit; dividing
  // (rather than multiplying by the reciprocal) lets written values reload
  // unchanged.
  void number(std::string const &section, std::string const &key, double &out,
              double per = 1.0)
  {
    if (auto v = text(section, key))
      out = to_double(*v, section + "." + key) / per;
  }

  template <class Int>
  void integer(std::string const &section, std::string const &key, Int &out)
  {
    if (auto v = text(section, key))
      out = static_cast<Int>(to_long(*v, section + "." + key));
  }

  void flag(std::string const &section, std::string const &key, bool &out)
  {
    if (auto v = text(section, key))
      out = to_bool(*v, section + "." + key);
  }

  void check_unknown(std::string const &source) const
  {
    for (auto const &[section, body] : _tree)
    {
      auto const it = _known.find(section);
      if (it == _known.end())
        throw ConfigError(fmt::format("{}: unknown section [{}]", source, section));
      for (auto const &[key, value] : body)
        if (!it->second.count(key))
          throw ConfigError(
              fmt::format("{}: unknown key '{}' in [{}]", source, key, section));
    }
  }

private:
  pt::ptree const &_tree;
  std::map<std::string, std::set<std::string>> _known;
};

std::string to_string(AreaSourceKind k)
{
  switch (k)
  {
  case AreaSourceKind::virtual_machine:
    return "virtual";
  case AreaSourceKind::predicted:
    return "predicted";
  case AreaSourceKind::file:
    return "file";
  }
  return "virtual";
}

AreaSourceKind parse_area_source(std::string const &s)
{
  if (s == "virtual")
    return AreaSourceKind::virtual_machine;
  if (s == "predicted")
    return AreaSourceKind::predicted;
  if (s == "file")
    return AreaSourceKind::file;
  throw ConfigError("tune.area_source must be virtual, predicted or file, got '" + s +
                    "'");
}

std::string to_string(BlurBoundary b)
{
  return b == BlurBoundary::periodic ? "periodic" : "replicate";
}

std::string to_string(HalfRule r)
{
  return r == HalfRule::absolute ? "absolute" : "above_ambient";
}

} // namespace

double RunConfig::target_area() const
{
  if (control.target_area > 0.0)
    return control.target_area;
  return melt_area(nominal.power, nominal.speed, material.baseplate_temp, coefficients,
                   material);
}

std::vector<double> parse_f_values(std::string const &text)
{
  std::vector<double> out;
  auto const s = trim(text);
  // start:step:end, or a comma-separated list
  if (s.find(':') != std::string::npos)
  {
    std::vector<double> parts;
    std::stringstream ss(s);
    for (std::string p; std::getline(ss, p, ':');)
      parts.push_back(to_double(p, "tune.f_values"));
    if (parts.size() != 3 || !(parts[1] > 0.0) || parts[2] < parts[0])
      throw ConfigError("tune.f_values range must be start:step:end with step > 0");
    return SweepRange{parts[0], parts[1], parts[2]}.values();
  }
  std::stringstream ss(s);
  for (std::string p; std::getline(ss, p, ',');)
    out.push_back(to_double(p, "tune.f_values"));
  if (out.empty())
    throw ConfigError("tune.f_values is empty");
  for (double f : out)
    if (!(f > 0.0))
      throw ConfigError("tune.f_values must be positive");
  return out;
}

RunConfig parse_config(std::istream &in, std::optional<std::string> const &material,
                       std::string const &source_name)
{
  pt::ptree tree;
  try
  {
    pt::read_ini(in, tree);
  }
  catch (pt::ini_parser_error const &e)
  {
    throw ParseError(source_name, static_cast<int>(e.line()), e.message());
  }
  Reader r(tree);

  RunConfig cfg;
  std::string preset = "316LSS";
  if (auto p = r.text("material", "preset"))
    preset = *p;
  if (material)
    preset = *material;
  cfg.material = material_preset(preset);
  cfg.nominal = nominal_params(cfg.material.name);
  cfg.coefficients = preset_coefficients(cfg.material.name);

  auto &m = cfg.material;
  r.number("material", "density", m.density);
  r.number("material", "heat_capacity", m.heat_capacity);
  r.number("material", "conductivity", m.conductivity);
  r.number("material", "convection_coeff", m.convection_coeff);
  r.number("material", "melting_temp_K", m.melting_temp);
  r.number("material", "ambient_temp_K", m.ambient_temp);
  r.number("material", "baseplate_temp_K", m.baseplate_temp);
  r.number("material", "absorptivity", m.absorptivity);
  r.number("material", "powder_density_factor", m.powder_density_factor);
  r.number("material", "powder_conductivity_factor", m.powder_conductivity_factor);
  m.validate();

  auto &n = cfg.nominal;
  r.number("process", "power_W", n.power);
  r.number("process", "speed_mm_s", n.speed, 1e3);
  r.number("process", "layer_thickness_um", n.layer_thickness, 1e6);
  r.number("process", "hatch_spacing_um", n.hatch_spacing, 1e6);
  if (!(n.power > 0.0) || !(n.speed > 0.0))
    throw ConfigError("process.power_W and process.speed_mm_s must be positive");

  auto &g = cfg.grid;
  g.hatch_spacing = n.hatch_spacing;
  g.layer_thickness = n.layer_thickness;
  g.default_power = n.power;
  g.substrate_layers = 10;
  r.number("grid", "dt_ms", g.dt, 1e3);
  r.number("grid", "dt_fraction", cfg.dt_fraction);
  r.integer("grid", "window_layers", cfg.window_layers);
  r.integer("grid", "substrate_layers", g.substrate_layers);
  r.integer("grid", "margin_cells", g.margin_cells);
  r.number("grid", "skywrite_ms", g.skywrite_time, 1e3);
  r.number("grid", "min_fragment_fraction", g.min_fragment_fraction);
  if (cfg.window_layers < 1)
    throw ConfigError("grid.window_layers must be at least 1");

  double spot = cfg.beam.spot_size;
  double f = n.tuning_factor;
  r.number("beam", "spot_size_um", spot, 1e6);
  r.number("beam", "tuning_factor", f);
  cfg.beam = BeamParams::from_spot(spot, f);
  cfg.beam.validate();

  auto [c1, c2] = cfg.coefficients.to_convention(1e-6, 1.0);
  r.number("meltpool", "c1_um", c1);
  r.number("meltpool", "c2_um", c2);
  cfg.coefficients = MeltPoolCoefficients::from_convention(c1, c2, 1e-6, 1.0);
  cfg.coefficients.validate();

  auto &c = cfg.control;
  c.p_nominal = n.power;
  r.number("control", "target_area_mm2", c.target_area, 1e6);
  double a = 0.0;
  r.number("control", "overhang_target_area_mm2", a, 1e6);
  if (a > 0.0)
    c.region_targets[RegionTag::overhang] = a;
  a = 0.0;
  r.number("control", "turnaround_target_area_mm2", a, 1e6);
  if (a > 0.0)
    c.region_targets[RegionTag::subdivided_turnaround] = a;
  r.number("control", "p_min_W", c.p_min);
  r.number("control", "p_max_W", c.p_max);
  r.number("control", "tolerance", c.tolerance);
  r.integer("control", "max_iterations", c.max_iterations);
  {
    ControlConfig check = c;
    check.target_area = cfg.target_area();
    check.validate();
  }

  auto &d = cfg.dwell;
  r.number("dwell", "time_s", d.time);
  if (auto v = r.text("dwell", "convection_coeff"))
    d.convection_coeff = to_double(*v, "dwell.convection_coeff");
  r.integer("dwell", "max_modes", d.max_modes);
  if (auto v = r.text("dwell", "blur_boundary"))
  {
    if (*v == "replicate")
      d.blur_boundary = BlurBoundary::replicate;
    else if (*v == "periodic")
      d.blur_boundary = BlurBoundary::periodic;
    else
      throw ConfigError("dwell.blur_boundary must be replicate or periodic");
  }
  if (auto v = r.text("dwell", "half_rule"))
  {
    if (*v == "above_ambient")
      d.half_rule = HalfRule::above_ambient;
    else if (*v == "absolute")
      d.half_rule = HalfRule::absolute;
    else
      throw ConfigError("dwell.half_rule must be above_ambient or absolute");
  }
  if (!(d.time >= 0.0) || d.max_modes < 1)
    throw ConfigError("dwell.time_s must be >= 0 and dwell.max_modes >= 1");

  if (auto v = r.text("fit", "source"); v && *v != "all")
    cfg.fit_source = parse_measurement_source(*v);

  cfg.f_values = parse_f_values("1.0:0.5:5.0");
  if (auto v = r.text("tune", "f_values"))
    cfg.f_values = parse_f_values(*v);
  r.number("tune", "f_true", cfg.f_true);
  if (auto v = r.text("tune", "area_source"))
    cfg.area_source = parse_area_source(*v);
  if (auto v = r.text("tune", "measured_areas"))
    cfg.measured_areas = *v;
  if (cfg.area_source == AreaSourceKind::file && cfg.measured_areas.empty())
    throw ConfigError("tune.area_source = file needs tune.measured_areas");
  if (!(cfg.f_true > 0.0))
    throw ConfigError("tune.f_true must be positive");

  auto &py = cfg.pyramid;
  int vps = 8;
  r.integer("tune", "pyramid_vectors_per_step", vps);
  if (vps < 1)
    throw ConfigError("tune.pyramid_vectors_per_step must be at least 1");
  py = PyramidSpec::reduced(1.0, vps);
  py.substrate_layers = 9;
  r.integer("tune", "pyramid_substrate_layers", py.substrate_layers);
  py.speed = n.speed;
  py.power = n.power;
  py.hatch_spacing = n.hatch_spacing;
  py.layer_thickness = n.layer_thickness;
  py.skywrite = g.skywrite_time;

  if (auto v = r.text("simulate", "powers_file"))
    cfg.powers_file = *v;
  r.flag("simulate", "snapshots", cfg.snapshots);

  auto &sl = cfg.slab;
  r.number("fixture", "slab_line_length_mm", sl.line_length, 1e3);
  r.integer("fixture", "slab_base_lines", sl.base_lines);
  r.integer("fixture", "slab_overhang_lines", sl.overhang_lines);
  r.integer("fixture", "slab_substrate_layers", sl.substrate_layers);
  r.number("fixture", "noise", cfg.noise);
  sl.speed = n.speed;
  sl.power = n.power;
  sl.hatch_spacing = n.hatch_spacing;
  sl.layer_thickness = n.layer_thickness;
  sl.skywrite = g.skywrite_time;
  if (!(cfg.noise >= 0.0))
    throw ConfigError("fixture.noise must be >= 0");

  r.integer("run", "seed", cfg.seed);
  r.integer("run", "threads", cfg.threads);
  if (cfg.threads < 1)
    throw ConfigError("run.threads must be at least 1");

  r.check_unknown(source_name);
  return cfg;
}

RunConfig load_config(std::optional<std::filesystem::path> const &path,
                      std::optional<std::string> const &material)
{
  if (!path)
  {
    std::istringstream empty;
    return parse_config(empty, material);
  }
  std::ifstream in(*path);
  if (!in)
    throw ConfigError("cannot open config file " + path->string());
  return parse_config(in, material, path->string());
}

void write_resolved_config(std::ostream &out, RunConfig const &cfg)
{
  auto num = [](double v) { return fmt::format("{:.17g}", v); };
  auto const &m = cfg.material;
  auto const &n = cfg.nominal;
  auto const &g = cfg.grid;
  auto const &c = cfg.control;
  auto const &d = cfg.dwell;
  auto const [c1, c2] = cfg.coefficients.to_convention(1e-6, 1.0);

  fmt::print(out, "; lpbf resolved config v1\n");
  fmt::print(out, "[material]\npreset = {}\n", m.name);
  fmt::print(out, "density = {}\nheat_capacity = {}\nconductivity = {}\n", num(m.density),
             num(m.heat_capacity), num(m.conductivity));
  fmt::print(out, "convection_coeff = {}\nmelting_temp_K = {}\nambient_temp_K = {}\n",
             num(m.convection_coeff), num(m.melting_temp), num(m.ambient_temp));
  fmt::print(out, "baseplate_temp_K = {}\nabsorptivity = {}\n", num(m.baseplate_temp),
             num(m.absorptivity));
  fmt::print(out, "powder_density_factor = {}\npowder_conductivity_factor = {}\n",
             num(m.powder_density_factor), num(m.powder_conductivity_factor));

  fmt::print(out, "\n[process]\npower_W = {}\nspeed_mm_s = {}\n", num(n.power),
             num(n.speed * 1e3));
  fmt::print(out, "layer_thickness_um = {}\nhatch_spacing_um = {}\n",
             num(n.layer_thickness * 1e6), num(n.hatch_spacing * 1e6));

  fmt::print(out, "\n[grid]\ndt_ms = {}\ndt_fraction = {}\nwindow_layers = {}\n",
             num(g.dt * 1e3), num(cfg.dt_fraction), cfg.window_layers);
  fmt::print(out, "substrate_layers = {}\nmargin_cells = {}\nskywrite_ms = {}\n",
             g.substrate_layers, g.margin_cells, num(g.skywrite_time * 1e3));
  fmt::print(out, "min_fragment_fraction = {}\n", num(g.min_fragment_fraction));

  fmt::print(out, "\n[beam]\nspot_size_um = {}\ntuning_factor = {}\n",
             num(cfg.beam.spot_size * 1e6), num(cfg.beam.tuning_factor));

  fmt::print(out, "\n[meltpool]\nc1_um = {}\nc2_um = {}\n", num(c1), num(c2));

  fmt::print(out, "\n[control]\ntarget_area_mm2 = {}\n", num(cfg.target_area() * 1e6));
  if (auto it = c.region_targets.find(RegionTag::overhang); it != c.region_targets.end())
    fmt::print(out, "overhang_target_area_mm2 = {}\n", num(it->second * 1e6));
  if (auto it = c.region_targets.find(RegionTag::subdivided_turnaround);
      it != c.region_targets.end())
    fmt::print(out, "turnaround_target_area_mm2 = {}\n", num(it->second * 1e6));
  fmt::print(out, "p_min_W = {}\np_max_W = {}\ntolerance = {}\nmax_iterations = {}\n",
             num(c.p_min), num(c.p_max), num(c.tolerance), c.max_iterations);

  fmt::print(out, "\n[dwell]\ntime_s = {}\n", num(d.time));
  fmt::print(out, "convection_coeff = {}\n",
             num(d.convection_coeff.value_or(m.convection_coeff)));
  fmt::print(out, "max_modes = {}\nblur_boundary = {}\nhalf_rule = {}\n", d.max_modes,
             to_string(d.blur_boundary), to_string(d.half_rule));

  fmt::print(out, "\n[fit]\nsource = {}\n",
             cfg.fit_source ? to_string(*cfg.fit_source) : "all");

  std::string fs;
  for (std::size_t i = 0; i < cfg.f_values.size(); ++i)
    fs += (i ? ", " : "") + num(cfg.f_values[i]);
  fmt::print(out, "\n[tune]\nf_values = {}\nf_true = {}\narea_source = {}\n", fs,
             num(cfg.f_true), to_string(cfg.area_source));
  fmt::print(out, "measured_areas = {}\n", cfg.measured_areas.string());
  fmt::print(out, "pyramid_vectors_per_step = {}\npyramid_substrate_layers = {}\n",
             cfg.pyramid.vectors_per_step, cfg.pyramid.substrate_layers);

  fmt::print(out, "\n[simulate]\npowers_file = {}\nsnapshots = {}\n",
             cfg.powers_file.string(), cfg.snapshots ? "true" : "false");

  fmt::print(out, "\n[fixture]\nslab_line_length_mm = {}\nslab_base_lines = {}\n",
             num(cfg.slab.line_length * 1e3), cfg.slab.base_lines);
  fmt::print(out, "slab_overhang_lines = {}\nslab_substrate_layers = {}\nnoise = {}\n",
             cfg.slab.overhang_lines, cfg.slab.substrate_layers, num(cfg.noise));

  fmt::print(out, "\n[run]\nseed = {}\nthreads = {}\n", cfg.seed, cfg.threads);
}

} // namespace lpbf::cli
