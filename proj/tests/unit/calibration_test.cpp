#include <lpbf/calibration.hpp>
#include <lpbf/error.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

using namespace lpbf;

namespace
{

CalibrationSetup setup_for(std::string const &text, MaterialProps const &m, double p_nom,
                           double speed)
{
  std::istringstream in(text);
  GridConfig g;
  g.default_power = p_nom;
  CalibrationSetup s;
  s.scan = prepare_scan(in, g, m);
  s.thermal = make_thermal_context(s.scan, m, BeamParams::from_spot(78e-6, 1.0));
  s.control.target_area = 1e-8;
  s.coefficients = preset_coefficients(m.name);
  s.p_nominal = p_nom;
  s.nominal_speed = speed;
  double const inf = std::numeric_limits<double>::infinity();
  s.bulk_window = {-inf, inf};
  return s;
}

TuningRun run(double f, double target, std::vector<double> areas)
{
  TuningRun r;
  r.f = f;
  r.target_area = target;
  r.areas = std::move(areas);
  r.epsilon = normalized_error(r.areas);
  return r;
}

} // namespace

TEST(NormalizedError, KnownValuesAndScaleInvariance)
{
  EXPECT_DOUBLE_EQ(normalized_error({1.0, 1.0, 4.0}), std::sqrt(6.0) / 2.0);
  EXPECT_EQ(normalized_error({3.0, 3.0}), 0.0);
  EXPECT_NEAR(normalized_error({2e-8, 2e-8, 8e-8}), std::sqrt(6.0) / 2.0, 1e-14);
  EXPECT_THROW(normalized_error({}), ConfigError);
  EXPECT_THROW(normalized_error({1.0, -1.0}), ConfigError);
}

TEST(Unimodal, StrictFallThenRise)
{
  std::vector<TuningRun> t;
  for (double e : {0.5, 0.3, 0.1, 0.2, 0.4})
  {
    t.push_back(run(1.0, 1.0, {1.0}));
    t.back().epsilon = e;
  }
  EXPECT_TRUE(is_unimodal(t));
  t[1].epsilon = 0.6;
  EXPECT_FALSE(is_unimodal(t));
  t[1].epsilon = 0.3;
  t[4].epsilon = 0.2;
  EXPECT_FALSE(is_unimodal(t));
}

TEST(Fixtures, PyramidHasThreeStepsOfDecreasingWidth)
{
  auto const spec = PyramidSpec::reduced(0.1, 5);
  std::istringstream in(stepped_pyramid_scanpath(spec));
  GridConfig g;
  g.dt = 1e-5;
  auto const file = parse_scanpath(in, g);
  EXPECT_EQ(file.substrate_layers, spec.substrate_layers);
  ASSERT_EQ(file.layers.size(), 1u);
  std::vector<double> lengths;
  for (auto const &v : file.layers[0].vectors)
    if (v.is_mark)
      lengths.push_back(v.length());
  ASSERT_EQ(lengths.size(), 15u);
  EXPECT_NEAR(lengths[0], 2e-3, 1e-9);
  EXPECT_NEAR(lengths[5], 1.34e-3, 1e-9);
  EXPECT_NEAR(lengths[14], 0.67e-3, 1e-9);
  for (int s = 0; s < 3; ++s)
  {
    auto const [lo, hi] = spec.step_range(s);
    EXPECT_NEAR(hi - lo, 5 * spec.hatch_spacing, 1e-12);
  }
  auto const [blo, bhi] = spec.bulk_window();
  EXPECT_GE(blo, spec.step_range(0).first);
  EXPECT_LE(bhi, spec.step_range(0).second);
}

TEST(Fixtures, SlabSecondLayerOverhangsTheFirst)
{
  SlabSpec spec;
  spec.base_lines = 4;
  spec.overhang_lines = 2;
  spec.line_length = 1e-3;
  std::istringstream in(overhang_slab_scanpath(spec));
  auto const m = ss316l();
  GridConfig g;
  auto const scan = prepare_scan(in, g, m);
  ASSERT_EQ(scan.layers.size(), 2u);
  int overhang = 0, marks = 0;
  for (auto const &v : scan.layers[1].vectors)
    if (v.is_mark)
    {
      ++marks;
      overhang += v.region == RegionTag::overhang ? 1 : 0;
    }
  EXPECT_EQ(marks, 6);
  EXPECT_EQ(overhang, 2);
  spec.base_lines = 0;
  EXPECT_THROW(overhang_slab_scanpath(spec), ConfigError);
}

TEST(TuneTarget, SingleVectorOnThePlateNeedsNoIteration)
{
  auto const m = ss316l();
  auto const s = setup_for("layer 1 z 0.04\nmark 0 0 1 0 1200\n", m, 290.0, 1.2);
  auto const r = tune_target(s, 2.5);
  double const expected = melt_area(290.0, 1.2, m.baseplate_temp, s.coefficients, m);
  EXPECT_NEAR(r.target_area / expected, 1.0, 1e-12);
  EXPECT_NEAR(r.bulk_mean_power, 290.0, 1e-6);
  EXPECT_EQ(r.evaluations, 1);
}

TEST(TuneTarget, BulkMeanMatchesNominalAndGrowsWithIt)
{
  auto const m = ss316l();
  std::string const text = "substrate 4\nlayer 1 z 0.04\n"
                           "mark 0 0 0.9 0 1200\njump 10\nmark 0.9 0.09 0 0.09 1200\n"
                           "jump 10\nmark 0 0.18 0.9 0.18 1200\n";
  double prev = 0.0;
  for (double p : {200.0, 250.0, 290.0})
  {
    auto s = setup_for(text, m, p, 1.2);
    auto const r = tune_target(s, 2.5);
    EXPECT_NEAR(r.bulk_mean_power / p, 1.0, s.power_tolerance);
    EXPECT_GT(r.target_area, prev);
    prev = r.target_area;
  }
}

TEST(Sweep, PredictedAreasAndMeasuredTables)
{
  auto const m = ss316l();
  std::string const text = "substrate 4\nlayer 1 z 0.04\n"
                           "mark 0 0 0.9 0 1200\njump 10\nmark 0.9 0.09 0 0.09 1200\n";
  auto s = setup_for(text, m, 250.0, 1.2);
  auto const sweep = sweep_f(s, {2.0, 3.0}, predicted_areas());
  ASSERT_EQ(sweep.trace.size(), 2u);
  // the controller holds its own predictions on target
  for (auto const &r : sweep.trace)
    EXPECT_LT(r.epsilon, 1e-8);

  std::istringstream table("# measured\nvector_id,area_mm2\n0,0.02\n2,0.03\n");
  auto const areas = read_measured_areas(table);
  ASSERT_EQ(areas.size(), 2u);
  EXPECT_NEAR(areas.at(2), 0.03e-6, 1e-18);
  auto const r = evaluate_f(s, 3.0, measured_areas(areas));
  EXPECT_NEAR(r.epsilon, normalized_error({0.02, 0.03}), 1e-12);

  std::istringstream bad("vector_id\n0\n");
  EXPECT_THROW(read_measured_areas(bad), ParseError);
  EXPECT_THROW(sweep_f(s, {}, predicted_areas()), ConfigError);
}
