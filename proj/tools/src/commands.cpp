#include <lpbf/cli/commands.hpp>
#include <lpbf/error.hpp>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

namespace lpbf::cli
{

namespace fs = std::filesystem;

namespace
{

std::ofstream open_output(fs::path const &path)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw ConfigError("cannot write " + path.string());
  return out;
}

std::ifstream open_input(fs::path const &path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ConfigError("cannot open " + path.string());
  return in;
}

std::ostream &log_of(CommandContext const &ctx)
{
  static std::ostringstream sink;
  return ctx.log ? *ctx.log : sink;
}

void write_config_echo(CommandContext const &ctx)
{
  fs::create_directories(ctx.out_dir);
  auto out = open_output(ctx.out_dir / "resolved_config.ini");
  write_resolved_config(out, ctx.config);
}

PreparedScan prepare_file(RunConfig const &cfg, fs::path const &path)
{
  auto in = open_input(path);
  return prepare_input(cfg, in, path.string());
}

// power_W column of a schedule CSV, in row order.
std::vector<double> read_schedule_powers(fs::path const &path)
{
  auto in = open_input(path);
  std::vector<double> out;
  std::string line;
  int line_no = 0;
  int col = -1;
  while (std::getline(in, line))
  {
    ++line_no;
    if (line.empty() || line[0] == '#')
      continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');)
      cells.push_back(c);
    if (col < 0)
    {
      for (std::size_t i = 0; i < cells.size(); ++i)
        if (cells[i] == "power_W")
          col = static_cast<int>(i);
      if (col < 0)
        throw ParseError(path.string(), line_no, "missing column 'power_W'");
      continue;
    }
    if (col >= static_cast<int>(cells.size()))
      throw ParseError(path.string(), line_no, "too few columns");
    try
    {
      out.push_back(std::stod(cells[col]));
    }
    catch (std::exception const &)
    {
      throw ParseError(path.string(), line_no, "bad number");
    }
  }
  if (col < 0)
    throw ParseError(path.string(), line_no, "missing header row");
  return out;
}

} // namespace

PreparedScan prepare_input(RunConfig const &cfg, std::istream &in, std::string const &name)
{
  return prepare_scan(in, cfg.grid, cfg.material, name, cfg.dt_fraction);
}

ThermalContext thermal_context(RunConfig const &cfg, PreparedScan const &scan)
{
  auto ctx = make_thermal_context(scan, cfg.material, cfg.beam, cfg.threads);
  ctx.window_layers = cfg.window_layers;
  ctx.half_rule = cfg.dwell.half_rule;
  return ctx;
}

ControlConfig control_config(RunConfig const &cfg)
{
  auto c = cfg.control;
  c.target_area = cfg.target_area();
  return c;
}

CalibrationSetup calibration_setup(RunConfig const &cfg, fs::path const &scanpath)
{
  CalibrationSetup setup;
  if (scanpath.empty())
  {
    std::istringstream in(stepped_pyramid_scanpath(cfg.pyramid));
    setup.scan = prepare_input(cfg, in, "<stepped pyramid>");
    setup.bulk_window = cfg.pyramid.bulk_window();
  }
  else
  {
    setup.scan = prepare_file(cfg, scanpath);
    setup.bulk_window = {-std::numeric_limits<double>::infinity(),
                         std::numeric_limits<double>::infinity()};
  }
  setup.thermal = thermal_context(cfg, setup.scan);
  setup.control = control_config(cfg);
  setup.coefficients = cfg.coefficients;
  setup.dwell = cfg.dwell;
  setup.p_nominal = cfg.nominal.power;
  setup.nominal_speed = cfg.nominal.speed;
  return setup;
}

void cmd_fit_meltpool(CommandContext const &ctx, fs::path const &measurements)
{
  auto const &cfg = ctx.config;
  auto in = open_input(measurements);
  auto const records = read_measurements(in, measurements.string());
  auto const fit = fit_coefficients(records, cfg.material, cfg.fit_source);
  write_config_echo(ctx);
  {
    auto out = open_output(ctx.out_dir / "fit_report.csv");
    write_fit_report_csv(out, fit);
  }
  auto out = open_output(ctx.out_dir / "fit_summary.txt");
  write_fit_summary(out, fit, cfg.material.name);
  write_fit_summary(log_of(ctx), fit, cfg.material.name);
}

void cmd_schedule(CommandContext const &ctx, fs::path const &scanpath)
{
  auto const &cfg = ctx.config;
  auto const scan = prepare_file(cfg, scanpath);
  auto const thermal = thermal_context(cfg, scan);
  auto const schedule = run_feedforward(scan.layers, thermal, control_config(cfg),
                                        cfg.coefficients, cfg.dwell);
  write_config_echo(ctx);
  {
    auto out = open_output(ctx.out_dir / "schedule.csv");
    write_schedule_csv(out, schedule);
  }
  auto out = open_output(ctx.out_dir / "layer_power.csv");
  write_layer_power_csv(out, schedule);

  std::size_t clamped = 0;
  for (auto const &e : schedule.entries)
    clamped += e.clamped ? 1 : 0;
  fmt::print(log_of(ctx), "{} vectors, {} clamped, mean power {:.2f} W\n",
             schedule.entries.size(), clamped,
             mean_power(schedule.entries, [](ScheduleEntry const &) { return true; }));
}

void cmd_tune_f(CommandContext const &ctx, fs::path const &scanpath)
{
  auto const &cfg = ctx.config;
  auto const setup = calibration_setup(cfg, scanpath);

  AreaSource source;
  switch (cfg.area_source)
  {
  case AreaSourceKind::virtual_machine:
    source = virtual_machine(cfg.f_true);
    break;
  case AreaSourceKind::predicted:
    source = predicted_areas();
    break;
  case AreaSourceKind::file:
  {
    auto in = open_input(cfg.measured_areas);
    source = measured_areas(read_measured_areas(in, cfg.measured_areas.string()));
    break;
  }
  }
  auto const sweep = sweep_f(setup, cfg.f_values, source);
  write_config_echo(ctx);
  auto out = open_output(ctx.out_dir / "tuning_report.csv");
  write_tuning_report_csv(out, sweep);
  for (auto const &r : sweep.trace)
    fmt::print(log_of(ctx), "f = {:<5g} target {:.6f} mm^2  epsilon {:.6g}\n", r.f,
               r.target_area * 1e6, r.epsilon);
  fmt::print(log_of(ctx), "best f = {:g}\n", sweep.best.f);
}

void cmd_simulate(CommandContext const &ctx, fs::path const &scanpath)
{
  auto const &cfg = ctx.config;
  auto const scan = prepare_file(cfg, scanpath);
  auto const thermal = thermal_context(cfg, scan);
  std::vector<double> powers;
  if (!cfg.powers_file.empty())
    powers = read_schedule_powers(cfg.powers_file);

  write_config_echo(ctx);
  auto const snap_dir = ctx.out_dir / "snapshots";
  if (cfg.snapshots)
    fs::create_directories(snap_dir);
  auto observer = [&](LayerScan const &layer, TemperatureField const &window,
                      PartRecord const &) {
    if (cfg.snapshots)
      write_snapshot(snap_dir / fmt::format("layer_{:04d}.bin", layer.layer),
                     make_snapshot(window, scan.grid, layer.layer));
  };
  auto const result =
      run_fixed_power(scan.layers, thermal, powers, cfg.coefficients, cfg.dwell, observer);

  auto out = open_output(ctx.out_dir / "predicted_areas.csv");
  fmt::print(out, "# lpbf predicted-areas v1\n");
  fmt::print(out, "layer,vector_id,power_W,Tb_K,Ac_mm2,region\n");
  for (auto const &e : result.entries)
    fmt::print(out, "{},{},{:.9g},{:.9g},{:.9g},{}\n", e.layer, e.vector_id, e.power,
               e.t_below, e.area * 1e6, to_string(e.region));
  fmt::print(log_of(ctx), "{} vectors simulated over {} layers\n", result.entries.size(),
             scan.layers.size());
}

void cmd_gen_fixture(CommandContext const &ctx, std::string const &kind)
{
  auto const &cfg = ctx.config;
  if (kind == "pyramid")
  {
    write_config_echo(ctx);
    auto out = open_output(ctx.out_dir / "pyramid.scan");
    out << stepped_pyramid_scanpath(cfg.pyramid);
  }
  else if (kind == "slab")
  {
    write_config_echo(ctx);
    auto out = open_output(ctx.out_dir / "slab.scan");
    out << overhang_slab_scanpath(cfg.slab);
  }
  else if (kind == "single-tracks")
  {
    // Model widths and lengths over the standard design with multiplicative
    // Gaussian noise.
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<SingleTrackRecord> records;
    for (auto const &p : standard_sweep_design())
    {
      SingleTrackRecord r;
      r.power = p.power;
      r.speed = p.speed;
      r.t_below = p.t_below;
      double const nw = noise(rng);
      double const nl = noise(rng);
      r.width = melt_width(p.power, p.speed, p.t_below, cfg.coefficients, cfg.material) *
                (1.0 + cfg.noise * nw);
      r.length = melt_length(p.power, p.t_below, cfg.coefficients, cfg.material) *
                 (1.0 + cfg.noise * nl);
      r.source = MeasurementSource::synthetic;
      records.push_back(r);
    }
    write_config_echo(ctx);
    auto out = open_output(ctx.out_dir / "single_tracks.csv");
    write_measurements(out, records);
  }
  else
    throw ConfigError("unknown fixture '" + kind +
                      "' (expected pyramid, slab or single-tracks)");
  fmt::print(log_of(ctx), "wrote {} fixture to {}\n", kind, ctx.out_dir.string());
}

int run(std::vector<std::string> const &args, std::ostream &out, std::ostream &err)
{
  CLI::App app{"Vector-level feedforward laser power scheduling for LPBF", "lpbf-ff"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, material, out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  app.add_option("--config", config_path, "INI run configuration")->check(CLI::ExistingFile);
  app.add_option("--material", material, "material preset: IN718 or 316LSS");
  app.add_option("--out-dir", out_dir, "directory for outputs");
  app.add_option("--seed", seed, "seed for synthetic data");
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

  std::string input;
  auto *fit = app.add_subcommand("fit-meltpool", "fit c1, c2 to single-track measurements");
  fit->add_option("measurements", input, "measurement CSV")->required();
  auto *sched = app.add_subcommand("schedule", "feedforward power schedule for a scan path");
  sched->add_option("scanpath", input, "scan path file")->required();
  auto *tune = app.add_subcommand("tune-f", "sweep the tuning factor");
  tune->add_option("scanpath", input, "scan path file (default: stepped pyramid)");
  auto *sim = app.add_subcommand("simulate", "open-loop run with fixed powers");
  sim->add_option("scanpath", input, "scan path file")->required();
  auto *gen = app.add_subcommand("gen-fixture", "write a test fixture");
  gen->add_option("kind", input, "pyramid, slab or single-tracks")->required();

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try
  {
    app.parse(argv);
  }
  catch (CLI::CallForHelp const &)
  {
    out << app.help();
    return 0;
  }
  catch (CLI::ParseError const &e)
  {
    err << "lpbf-ff: " << e.what() << "\n";
    return 2;
  }

  try
  {
    CommandContext ctx;
    ctx.config = load_config(config_path.empty() ? std::nullopt
                                                 : std::optional<fs::path>(config_path),
                             material.empty() ? std::nullopt
                                              : std::optional<std::string>(material));
    if (seed)
      ctx.config.seed = *seed;
    if (threads)
      ctx.config.threads = *threads;
    ctx.out_dir = out_dir;
    ctx.log = &out;

    if (fit->parsed())
      cmd_fit_meltpool(ctx, input);
    else if (sched->parsed())
      cmd_schedule(ctx, input);
    else if (tune->parsed())
      cmd_tune_f(ctx, input);
    else if (sim->parsed())
      cmd_simulate(ctx, input);
    else if (gen->parsed())
      cmd_gen_fixture(ctx, input);
    return 0;
  }
  catch (ConfigError const &e)
  {
    err << "lpbf-ff: " << e.what() << "\n";
    return 2;
  }
  catch (fs::filesystem_error const &e)
  {
    err << "lpbf-ff: " << e.what() << "\n";
    return 2;
  }
  catch (NumericError const &e)
  {
    err << "lpbf-ff: numerical failure: " << e.what() << "\n";
    return 3;
  }
  catch (DomainError const &e)
  {
    err << "lpbf-ff: numerical failure: " << e.what() << "\n";
    return 3;
  }
}

} // namespace lpbf::cli
