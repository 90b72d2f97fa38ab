#include <lpbf/cli/commands.hpp>
#include <lpbf/cli/config.hpp>
#include <lpbf/error.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace lpbf;
using namespace lpbf::cli;
namespace fs = std::filesystem;

namespace
{

class CliTest : public ::testing::Test
{
protected:
  void SetUp() override
  {
    std::random_device rd;
    dir = fs::temp_directory_path() / ("lpbf_cli_" + std::to_string(rd()));
    fs::create_directories(dir);
    write("small.scan", "substrate 3\nlayer 1 z 0.04\n"
                        "mark 0 0 0.9 0 1000 200\njump 0.3\nmark 0.9 0.09 0 0.09 1000 200\n"
                        "layer 2 z 0.08\n"
                        "mark 0 0 0.9 0 1000 200\njump 0.3\nmark 0.9 0.09 0 0.09 1000 200\n");
  }
  void TearDown() override { fs::remove_all(dir); }

  fs::path write(std::string const &name, std::string const &text)
  {
    std::ofstream(dir / name) << text;
    return dir / name;
  }
  static std::string slurp(fs::path const &p)
  {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }
  int lpbf(std::vector<std::string> args)
  {
    out.str("");
    err.str("");
    return run(args, out, err);
  }

  fs::path dir;
  std::ostringstream out, err;
};

} // namespace

TEST_F(CliTest, UsageErrorsExitWithTwo)
{
  EXPECT_EQ(lpbf({}), 2);
  EXPECT_EQ(lpbf({"frobnicate"}), 2);
  EXPECT_EQ(lpbf({"--help"}), 0);
  EXPECT_NE(out.str().find("schedule"), std::string::npos);
  EXPECT_EQ(lpbf({"schedule", (dir / "missing.scan").string()}), 2);
  EXPECT_EQ(lpbf({"schedule", "x.scan", "--config", (dir / "none.ini").string()}), 2);
  EXPECT_EQ(lpbf({"--material", "Unobtainium", "gen-fixture", "slab", "--out-dir",
                  dir.string()}),
            2);
  EXPECT_EQ(lpbf({"gen-fixture", "cube", "--out-dir", dir.string()}), 2);
}

TEST_F(CliTest, ConfigErrorsNameTheKey)
{
  auto const bad = write("bad.ini", "[process]\npower_W = 200\nwarp_factor = 9\n");
  EXPECT_EQ(lpbf({"--config", bad.string(), "schedule", (dir / "small.scan").string()}), 2);
  EXPECT_NE(err.str().find("warp_factor"), std::string::npos) << err.str();
  auto const nan = write("nan.ini", "[process]\npower_W = lots\n");
  EXPECT_EQ(lpbf({"--config", nan.string(), "schedule", (dir / "small.scan").string()}), 2);
}

TEST_F(CliTest, NumericalFailureExitsWithThree)
{
  auto const ini = write("strict.ini", "[control]\ntolerance = 1e-300\nmax_iterations = 1\n");
  EXPECT_EQ(lpbf({"--config", ini.string(), "--out-dir", (dir / "o").string(), "schedule",
                  (dir / "small.scan").string()}),
            3);
}

TEST_F(CliTest, MissingMeasurementColumnIsAnInputError)
{
  auto const csv = write("tracks.csv", "P_W,v_mm_s,Tb_C,width_um\n200,1000,50,100\n");
  EXPECT_EQ(lpbf({"fit-meltpool", csv.string(), "--out-dir", dir.string()}), 2);
  EXPECT_NE(err.str().find("length_um"), std::string::npos);
  EXPECT_NE(err.str().find("tracks.csv:1"), std::string::npos);
}

TEST_F(CliTest, SingleTrackFixtureFitsBack)
{
  ASSERT_EQ(lpbf({"--material", "IN718", "--seed", "5", "--out-dir", dir.string(),
                  "gen-fixture", "single-tracks"}),
            0);
  ASSERT_EQ(lpbf({"--material", "IN718", "--out-dir", (dir / "fit").string(),
                  "fit-meltpool", (dir / "single_tracks.csv").string()}),
            0)
      << err.str();
  auto const report = slurp(dir / "fit" / "fit_report.csv");
  EXPECT_NE(report.find("c1_um,26"), std::string::npos) << report;
  EXPECT_TRUE(fs::exists(dir / "fit" / "fit_summary.txt"));

  // the fixture is all synthetic, so a camera-only fit has nothing to use
  auto const ini = write("camera.ini", "[fit]\nsource = camera\n");
  EXPECT_EQ(lpbf({"--config", ini.string(), "--out-dir", (dir / "cam").string(),
                  "fit-meltpool", (dir / "single_tracks.csv").string()}),
            2);
}

TEST_F(CliTest, ScheduleIsByteIdenticalAcrossRunsAndThreads)
{
  auto const scan = (dir / "small.scan").string();
  ASSERT_EQ(lpbf({"--out-dir", (dir / "a").string(), "schedule", scan}), 0) << err.str();
  ASSERT_EQ(lpbf({"--out-dir", (dir / "b").string(), "schedule", scan}), 0);
  ASSERT_EQ(lpbf({"--out-dir", (dir / "c").string(), "--threads", "3", "schedule", scan}), 0);
  auto const a = slurp(dir / "a" / "schedule.csv");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir / "b" / "schedule.csv"));
  EXPECT_EQ(a, slurp(dir / "c" / "schedule.csv"));
  EXPECT_EQ(slurp(dir / "a" / "layer_power.csv"), slurp(dir / "c" / "layer_power.csv"));
}

TEST_F(CliTest, SimulateReplaysAScheduleAndWritesSnapshots)
{
  auto const scan = (dir / "small.scan").string();
  ASSERT_EQ(lpbf({"--out-dir", (dir / "s").string(), "schedule", scan}), 0);
  auto const ini =
      write("sim.ini", "[simulate]\npowers_file = " + (dir / "s" / "schedule.csv").string() +
                           "\n");
  ASSERT_EQ(lpbf({"--config", ini.string(), "--out-dir", (dir / "p").string(), "simulate",
                  scan}),
            0)
      << err.str();
  EXPECT_TRUE(fs::exists(dir / "p" / "snapshots" / "layer_0001.bin"));
  EXPECT_TRUE(fs::exists(dir / "p" / "snapshots" / "layer_0002.bin"));
  // the replayed powers reproduce the scheduled areas
  std::ifstream sched(dir / "s" / "schedule.csv"), pred(dir / "p" / "predicted_areas.csv");
  std::string a, b;
  int rows = 0;
  std::getline(sched, a), std::getline(sched, a);
  std::getline(pred, b), std::getline(pred, b);
  while (std::getline(sched, a) && std::getline(pred, b))
  {
    auto field = [](std::string const &line, int n) {
      std::stringstream ss(line);
      std::string c;
      for (int i = 0; i <= n; ++i)
        std::getline(ss, c, ',');
      return std::stod(c);
    };
    EXPECT_NEAR(field(a, 9), field(b, 4), 1e-8 * field(a, 9));
    ++rows;
  }
  EXPECT_EQ(rows, 4);
}

TEST_F(CliTest, ResolvedConfigReloadsToTheSameConfig)
{
  auto const ini = write("run.ini", "[material]\npreset = IN718\n[process]\npower_W = 250\n"
                                    "[dwell]\ntime_s = 3\n[tune]\nf_values = 1,2,3\n");
  ASSERT_EQ(lpbf({"--config", ini.string(), "--out-dir", (dir / "g").string(), "gen-fixture",
                  "pyramid"}),
            0)
      << err.str();
  auto const first = slurp(dir / "g" / "resolved_config.ini");
  EXPECT_NE(first.find("power_W = 250"), std::string::npos) << first;
  ASSERT_EQ(lpbf({"--config", (dir / "g" / "resolved_config.ini").string(), "--out-dir",
                  (dir / "h").string(), "gen-fixture", "pyramid"}),
            0)
      << err.str();
  EXPECT_EQ(first, slurp(dir / "h" / "resolved_config.ini"));
  EXPECT_EQ(slurp(dir / "g" / "pyramid.scan"), slurp(dir / "h" / "pyramid.scan"));
}

TEST(Config, DefaultsFollowTheMaterialPreset)
{
  std::istringstream empty("");
  auto const a = parse_config(empty, std::string("IN718"));
  EXPECT_EQ(a.material.name, "IN718");
  EXPECT_DOUBLE_EQ(a.beam.tuning_factor, 4.0);
  std::istringstream e2("");
  auto const b = parse_config(e2, std::nullopt);
  EXPECT_EQ(b.material.name, "316LSS");
  EXPECT_DOUBLE_EQ(b.nominal.power, 290.0);
  EXPECT_NEAR(b.target_area(),
              melt_area(290.0, 1.2, b.material.baseplate_temp, b.coefficients, b.material),
              1e-20);
}

TEST(Config, FValueRangesAndLists)
{
  auto const r = parse_f_values("1:0.5:5");
  ASSERT_EQ(r.size(), 9u);
  EXPECT_DOUBLE_EQ(r[3], 2.5);
  EXPECT_EQ(parse_f_values("2, 3.5"), (std::vector<double>{2.0, 3.5}));
  EXPECT_THROW(parse_f_values("1:0:5"), ConfigError);
  EXPECT_THROW(parse_f_values(""), ConfigError);
}
