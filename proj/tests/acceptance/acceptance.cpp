// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 when any
// check fails.

#include <lpbf/calibration.hpp>
#include <lpbf/cli/commands.hpp>
#include <lpbf/cli/config.hpp>
#include <lpbf/controller.hpp>
#include <lpbf/dwell.hpp>
#include <lpbf/error.hpp>
#include <lpbf/meltpool.hpp>
#include <lpbf/thermal.hpp>

#include <support/oracles.hpp>

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>

using namespace lpbf;
namespace fs = std::filesystem;

namespace
{

struct Outcome
{
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

VoxelGrid solid_block(int nx, int ny, int nz)
{
  VoxelGrid g(90e-6, 40e-6, {0.0, 0.0, -nz * 40e-6}, nx, ny, nz, nz);
  for (int k = 0; k < nz; ++k)
  {
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
        g.set_solid(i, j, k, true);
    g.mark_layer_known(k);
  }
  return g;
}

bool fixed_bottom(BoundaryCase kind)
{
  return kind == BoundaryCase::convection_fixed || kind == BoundaryCase::insulated_fixed;
}

std::string slurp(fs::path const &p)
{
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

//----------------------------------------------------------------------------

Outcome dwell_matches_finite_differences()
{
  auto const t0 = Clock::now();
  auto const m = in718();
  double const alpha = m.diffusivity();
  double const L = 0.05;
  std::vector<double> const times{0.1, 1.0, 10.0};
  int const nodes = 30, refine = 50;
  int const intervals = (nodes - 1) * refine;
  std::vector<double> z(intervals + 1);
  for (int i = 0; i <= intervals; ++i)
    z[i] = i * L / intervals;

  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int n = 0; n < 100; ++n)
  {
    auto const base = oracle::random_profile(rng, nodes, L, 300.0, 1600.0);
    for (auto kind : {BoundaryCase::convection_fixed, BoundaryCase::convection_insulated,
                      BoundaryCase::insulated_insulated, BoundaryCase::insulated_fixed})
    {
      DwellCase c;
      c.kind = kind;
      c.k = m.conductivity;
      c.h = n % 2 == 0 ? m.convection_coeff : 1000.0;
      c.t_ambient = m.ambient_temp;
      c.t_fixed = m.baseplate_temp;
      auto p = base;
      if (fixed_bottom(kind))
        p.temperature[0] = c.t_fixed;
      double const range = p.max() - p.min();
      auto const fdm = oracle::fdm_column(p, c, alpha, times, intervals);
      for (std::size_t q = 0; q < times.size(); ++q)
      {
        auto const series = solve_column(p, c, alpha, times[q], z);
        for (std::size_t i = 0; i < z.size(); ++i)
          worst = std::max(worst, std::abs(series[i] - fdm[q][i]) / range);
      }
    }
  }
  double const secs = seconds_since(t0);
  return {worst <= 0.01 && secs <= 60.0,
          fmt::format("max error {:.3g} of range, {:.1f} s", worst, secs)};
}

Outcome eigenvalues_and_limits()
{
  double worst_res = 0.0, worst_lim = 0.0;
  double const L = 0.01;
  for (auto kind : {BoundaryCase::convection_fixed, BoundaryCase::convection_insulated})
    for (double h : {0.5, 20.0, 500.0, 2e4, 1e6})
    {
      DwellCase c;
      c.kind = kind;
      c.h = h;
      c.k = 11.4;
      for (double lambda : solve_eigenvalues(c, L, 300))
        worst_res = std::max(worst_res, eigen_residual(c, L, lambda));
    }
  auto rel = [](double a, double b) { return std::abs(a - b) / b; };
  constexpr double pi = std::numbers::pi;
  for (auto kind : {BoundaryCase::convection_fixed, BoundaryCase::convection_insulated})
  {
    DwellCase c;
    c.kind = kind;
    c.k = 11.4;
    c.h = 1e-12;
    auto const small = solve_eigenvalues(c, L, 50);
    c.h = 1e12;
    auto const large = solve_eigenvalues(c, L, 50);
    for (int n = 0; n < 50; ++n)
    {
      if (kind == BoundaryCase::convection_fixed)
      {
        worst_lim = std::max(worst_lim, rel(small[n] * L, (2 * n + 1) * pi / 2));
        worst_lim = std::max(worst_lim, rel(large[n] * L, (n + 1) * pi));
      }
      else
      {
        // the lowest insulated eigenvalue is zero
        worst_lim = std::max(worst_lim, n == 0 ? small[0] * L : rel(small[n] * L, n * pi));
        worst_lim = std::max(worst_lim, rel(large[n] * L, (2 * n + 1) * pi / 2));
      }
    }
  }
  return {worst_res < 1e-12 && worst_lim <= 1e-6,
          fmt::format("max residual {:.2g}, max limit deviation {:.2g}", worst_res, worst_lim)};
}

Outcome insulated_mean_is_conserved()
{
  auto const m = in718();
  double const alpha = m.diffusivity(), L = 0.02;
  DwellCase c;
  c.kind = BoundaryCase::insulated_insulated;
  std::mt19937_64 rng(99);
  double worst = 0.0;
  for (int n = 0; n < 100; ++n)
  {
    auto const p = oracle::random_profile(rng, 30, L, 300.0, 1600.0);
    auto const sol = project_profile(p, c, solve_eigenvalues(c, L, 500));
    for (double t : {0.0, 0.01, 0.1, 1.0, 10.0, 100.0})
      worst = std::max(worst, std::abs(series_mean(sol, alpha, t) - p.mean()));
  }
  return {worst <= 1e-12, fmt::format("max mean drift {:.2g} K", worst)};
}

Outcome explicit_scheme_conservation()
{
  auto const m = in718();
  // uniform fixed point
  bool fixed_ok = true;
  {
    auto const g = solid_block(12, 9, 6);
    TemperatureField f(12, 9, 0, 6, 731.123456789);
    auto const sys = build_state_system(g, f, m, 0.9 * stability_bound(g, m),
                                        {.top_convection = false, .bottom_fixed = false});
    std::vector<double> out(f.size());
    for (int s = 0; s < 10; ++s)
    {
      sys.apply(f.values, out);
      for (double t : out)
        fixed_ok = fixed_ok && t == 731.123456789;
      f.values.swap(out);
    }
  }
  // enthalpy with a source
  double balance = 0.0;
  {
    auto const g = solid_block(40, 40, 10);
    ThermalContext ctx;
    ctx.grid = g;
    ctx.material = m;
    ctx.beam = BeamParams::from_spot(78e-6, 4.0);
    ctx.dt = 0.5 * stability_bound(g, m);
    TemperatureField f(40, 40, 0, 10, 500.0);
    auto const sys = build_state_system(g, f, m, ctx.dt,
                                        {.top_convection = false, .bottom_fixed = false});
    ScanVector v;
    v.start = {1.0e-3, 1.1e-3, 0.0};
    v.end = {2.6e-3, 2.3e-3, 0.0};
    v.n_steps = 300;
    double const p = 250.0;
    auto sum = [](TemperatureField const &x) {
      double s = 0.0;
      for (double t : x.values)
        s += t;
      return s;
    };
    double const cell = m.density * m.heat_capacity * g.dx() * g.dy() * g.dz();
    double const before = sum(f) * cell;
    auto const after = step_vector(f, sys, v, p, ctx);
    double const injected = ctx.beam.tuning_factor * m.absorptivity * p * ctx.dt * v.n_steps;
    balance = std::abs((sum(after) * cell - before) / injected - 1.0);
  }
  // maximum principle
  long violations = 0;
  {
    auto g = solid_block(10, 9, 6);
    g.set_solid(3, 3, 5, false);
    g.set_solid(7, 2, 5, false);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(293.0, 1700.0);
    for (int trial = 0; trial < 20; ++trial)
    {
      TemperatureField f(10, 9, 0, 6, 0.0);
      for (auto &t : f.values)
        t = u(rng);
      for (auto &t : f.bottom_boundary)
        t = u(rng);
      double const dt = std::uniform_real_distribution<double>(0.05, 1.0)(rng) *
                        stability_bound(g, m);
      auto const sys = build_state_system(g, f, m, dt);
      double lo = m.ambient_temp, hi = m.ambient_temp;
      for (double t : f.values)
        lo = std::min(lo, t), hi = std::max(hi, t);
      for (double t : f.bottom_boundary)
        lo = std::min(lo, t), hi = std::max(hi, t);
      std::vector<double> next(f.size());
      for (int s = 0; s < 50; ++s)
      {
        sys.apply(f.values, next);
        for (double t : next)
          violations += (t < lo || t > hi) ? 1 : 0;
        f.values.swap(next);
      }
    }
  }
  return {fixed_ok && balance <= 1e-6 && violations == 0,
          fmt::format("fixed point {}, enthalpy error {:.2g}, {} bound violations in 1000 steps",
                      fixed_ok ? "exact" : "broken", balance, violations)};
}

Outcome source_energy_is_shift_invariant()
{
  auto const m = ss316l();
  auto const g = solid_block(24, 24, 8);
  TemperatureField f(24, 24, 0, 8, 300.0);
  auto const beam = BeamParams::from_spot(78e-6, 2.5);
  double const dt = 1e-5, p = 290.0;
  double const cell = m.density * m.heat_capacity * g.dx() * g.dy() * g.dz();
  double const expected = beam.tuning_factor * m.absorptivity * p * dt;
  double lo = 1e300, hi = -1e300;
  for (int a = 0; a < 20; ++a)
    for (int b = 0; b < 20; ++b)
    {
      Point3 c{1.0e-3 + a / 20.0 * g.dx(), 1.0e-3 + b / 20.0 * g.dx(), 0.0};
      auto const src = integrated_goldak(c, p, g, f, beam, m, dt);
      double e = 0.0;
      for (double v : src.value)
        e += v * cell;
      lo = std::min(lo, e / expected);
      hi = std::max(hi, e / expected);
    }
  double const spread = std::max(std::abs(hi - 1.0), std::abs(lo - 1.0));
  return {spread <= 1e-6, fmt::format("max relative deviation {:.2g} over 400 offsets", spread)};
}

Outcome power_inversion()
{
  auto const m = in718();
  auto const c = in718_coefficients();
  ControlConfig cfg;
  cfg.target_area = 1.0;
  std::mt19937_64 rng(314);
  std::uniform_real_distribution<double> power(cfg.p_min, cfg.p_max), speed(0.3, 2.5),
      tb(293.0, m.melting_temp - 5.0);
  double worst = 0.0;
  for (int n = 0; n < 1000; ++n)
  {
    double const p = power(rng), v = speed(rng), t = tb(rng);
    auto const s = solve_power(t, v, melt_area(p, v, t, c, m), cfg, c, m);
    worst = std::max(worst, s.clamped ? 1.0 : std::abs(s.power - p) / p);
  }
  double const a_lo = melt_area(cfg.p_min, 1.0, 500.0, c, m);
  double const a_hi = melt_area(cfg.p_max, 1.0, 500.0, c, m);
  auto const lo = solve_power(500.0, 1.0, 0.5 * a_lo, cfg, c, m);
  auto const hi = solve_power(500.0, 1.0, 2.0 * a_hi, cfg, c, m);
  bool const clamps = lo.clamped && lo.power == cfg.p_min && hi.clamped && hi.power == cfg.p_max;
  bool decreasing = true;
  double prev = 1e300;
  double const target = melt_area(285.0, 0.96, m.baseplate_temp, c, m);
  for (double t = 293.0; t < 1600.0; t += 5.0)
  {
    auto const s = solve_power(t, 0.96, target, cfg, c, m);
    if (s.clamped)
      break;
    decreasing = decreasing && s.power < prev;
    prev = s.power;
  }
  return {worst <= 1e-9 && clamps && decreasing,
          fmt::format("max recovery error {:.2g}, clamps {}, monotone {}", worst,
                      clamps ? "ok" : "wrong", decreasing ? "yes" : "no")};
}

Outcome fit_round_trip()
{
  auto const m = in718();
  auto const truth = MeltPoolCoefficients::from_convention(261.0, 499.0, 1e-6, 1.0);
  auto tracks = [&](double noise) {
    std::mt19937_64 rng(1234);
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<SingleTrackRecord> out;
    for (auto const &p : standard_sweep_design())
    {
      SingleTrackRecord r;
      r.power = p.power;
      r.speed = p.speed;
      r.t_below = p.t_below;
      r.width = melt_width(p.power, p.speed, p.t_below, truth, m) * (1.0 + noise * z(rng));
      r.length = melt_length(p.power, p.t_below, truth, m) * (1.0 + noise * z(rng));
      out.push_back(r);
    }
    return out;
  };
  auto const clean = fit_coefficients(tracks(0.0), m).coefficients;
  auto const noisy = fit_coefficients(tracks(0.05), m).coefficients;
  double const e0 = std::max(std::abs(clean.c1 / truth.c1 - 1.0), std::abs(clean.c2 / truth.c2 - 1.0));
  double const e1 = std::max(std::abs(noisy.c1 / truth.c1 - 1.0), std::abs(noisy.c2 / truth.c2 - 1.0));
  return {e0 <= 1e-10 && e1 <= 0.02,
          fmt::format("noiseless error {:.2g}, 5% noise error {:.3g}", e0, e1)};
}

Outcome single_vector_on_plate()
{
  auto const m = ss316l();
  auto const c = ss316l_coefficients();
  std::istringstream in("layer 1 z 0.04\nmark 0 0 2 0 1200 290\n");
  GridConfig g;
  auto const scan = prepare_scan(in, g, m);
  auto const ctx = make_thermal_context(scan, m, BeamParams::from_spot(78e-6, 2.5));
  ControlConfig cfg;
  cfg.target_area = 0.9 * melt_area(290.0, 1.2, m.baseplate_temp, c, m);
  auto const s = run_feedforward(scan.layers, ctx, cfg, c, {});
  if (s.entries.size() != 1)
    return {false, "expected one scheduled vector"};
  auto const &e = s.entries[0];
  // closed-form root of a u^3 + b u^2 = A with u = sqrt(P)
  auto const poly = area_polynomial(1.2, m.baseplate_temp, c, m);
  double const a = poly.a, b = poly.b, A = cfg.target_area;
  double const p = -b * b / (3 * a * a);
  double const q = 2 * b * b * b / (27 * a * a * a) - A / a;
  double const disc = q * q / 4 + p * p * p / 27;
  double y;
  if (disc >= 0)
    y = std::cbrt(-q / 2 + std::sqrt(disc)) + std::cbrt(-q / 2 - std::sqrt(disc));
  else
  {
    double const r = std::sqrt(-p * p * p / 27);
    y = 2 * std::cbrt(r) * std::cos(std::acos(std::clamp(-q / (2 * r), -1.0, 1.0)) / 3);
  }
  double const u = y - b / (3 * a);
  double const err = std::abs(e.power / (u * u) - 1.0);
  bool const exact_tb = e.t_below == m.baseplate_temp;
  return {exact_tb && err <= 1e-9,
          fmt::format("T_b = {} K (base {} K), power {:.6f} W vs closed form {:.6f} W", e.t_below,
                      m.baseplate_temp, e.power, u * u)};
}

Outcome tuning_factor_recovery(cli::RunConfig const &cfg)
{
  auto const t0 = Clock::now();
  auto const setup = cli::calibration_setup(cfg, {});
  auto const sweep = sweep_f(setup, cfg.f_values, virtual_machine(cfg.f_true));
  double const secs = seconds_since(t0);
  std::string trace;
  for (auto const &r : sweep.trace)
    trace += fmt::format(" {:g}:{:.3g}", r.f, r.epsilon);
  bool const unimodal = is_unimodal(sweep.trace);
  return {sweep.best.f == cfg.f_true && unimodal && secs <= 600.0,
          fmt::format("best f {:g}, unimodal {}, {:.0f} s, eps{}", sweep.best.f,
                      unimodal ? "yes" : "no", secs, trace)};
}

Outcome controller_trends(cli::RunConfig const &cfg)
{
  // stepped pyramid: short vectors follow each other quickly and run hotter
  std::istringstream pin(stepped_pyramid_scanpath(cfg.pyramid));
  auto const pyr = cli::prepare_input(cfg, pin, "<pyramid>");
  auto const ps = run_feedforward(pyr.layers, cli::thermal_context(cfg, pyr),
                                  cli::control_config(cfg), cfg.coefficients, cfg.dwell);
  auto step_mean = [&](int s) {
    auto const range = cfg.pyramid.step_range(s);
    return mean_power(ps.entries, [&](ScheduleEntry const &e) { return in_window(e, range); });
  };
  double const wide = step_mean(0), narrow = step_mean(2);

  std::istringstream sin(overhang_slab_scanpath(cfg.slab));
  auto const slab = cli::prepare_input(cfg, sin, "<slab>");
  auto const ss = run_feedforward(slab.layers, cli::thermal_context(cfg, slab),
                                  cli::control_config(cfg), cfg.coefficients, cfg.dwell);
  double const over = mean_power(
      ss.entries, [](ScheduleEntry const &e) { return e.region == RegionTag::overhang; });
  double const bulk = mean_power(
      ss.entries, [](ScheduleEntry const &e) { return e.region != RegionTag::overhang; });
  bool const ok = narrow < wide && over <= 0.9 * bulk;
  return {ok, fmt::format("pyramid widest {:.1f} W, narrowest {:.1f} W; slab overhang {:.1f} W, "
                          "bulk {:.1f} W",
                          wide, narrow, over, bulk)};
}

Outcome schedule_determinism()
{
  std::random_device rd;
  auto const dir = fs::temp_directory_path() / ("lpbf_accept_" + std::to_string(rd()));
  fs::create_directories(dir);
  std::ostringstream out, err;
  auto run = [&](std::vector<std::string> args) { return cli::run(args, out, err); };
  auto const scan = (dir / "pyramid.scan").string();
  bool ok = run({"--out-dir", dir.string(), "gen-fixture", "pyramid"}) == 0;
  ok = ok && run({"--out-dir", (dir / "a").string(), "schedule", scan}) == 0;
  ok = ok && run({"--out-dir", (dir / "b").string(), "schedule", scan}) == 0;
  ok = ok && run({"--out-dir", (dir / "c").string(), "--threads", "4", "schedule", scan}) == 0;
  std::string detail = err.str();
  if (ok)
  {
    auto const a = slurp(dir / "a" / "schedule.csv");
    bool const same = a == slurp(dir / "b" / "schedule.csv");
    bool const threads = a == slurp(dir / "c" / "schedule.csv") &&
                         slurp(dir / "a" / "layer_power.csv") ==
                             slurp(dir / "c" / "layer_power.csv");
    ok = same && threads && !a.empty();
    detail = fmt::format("repeat identical {}, 1 vs 4 threads identical {}", same ? "yes" : "no",
                         threads ? "yes" : "no");
  }
  fs::remove_all(dir);
  return {ok, detail};
}

} // namespace

int main()
{
  auto const cfg = cli::load_config(std::nullopt, std::nullopt);
  std::vector<std::pair<std::string, std::function<Outcome()>>> const checks{
      {"dwell series agrees with refined finite differences", dwell_matches_finite_differences},
      {"dwell eigenvalues solve their conditions and reach both Biot limits",
       eigenvalues_and_limits},
      {"insulated dwell column conserves its mean", insulated_mean_is_conserved},
      {"explicit scheme: fixed point, enthalpy balance, maximum principle",
       explicit_scheme_conservation},
      {"beam source energy is invariant under sub-voxel shifts", source_energy_is_shift_invariant},
      {"power solve inverts the melt-pool model, clamps and falls with T_b", power_inversion},
      {"melt-pool fit recovers its constants", fit_round_trip},
      {"single vector on the plate uses the base temperature and closed-form power",
       single_vector_on_plate},
      {"tuning-factor sweep recovers the reference machine",
       [&] { return tuning_factor_recovery(cfg); }},
      {"controller lowers power on narrow steps and overhangs", [&] { return controller_trends(cfg); }},
      {"schedules are byte-identical across runs and thread counts", schedule_determinism},
  };

  int failed = 0;
  for (std::size_t i = 0; i < checks.size(); ++i)
  {
    Outcome o;
    try
    {
      o = checks[i].second();
    }
    catch (std::exception const &e)
    {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    fmt::print("{} {:2d}  {}: {}\n", o.pass ? "PASS" : "FAIL", i + 1, checks[i].first, o.detail);
    std::fflush(stdout);
  }
  fmt::print("{} of {} checks passed\n", checks.size() - failed, checks.size());
  return failed == 0 ? 0 : 1;
}
