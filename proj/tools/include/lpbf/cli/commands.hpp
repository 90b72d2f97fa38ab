#pragma once

#include <lpbf/cli/config.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace lpbf::cli
{

struct CommandContext
{
  RunConfig config;
  std::filesystem::path out_dir = ".";
  std::ostream *log = nullptr; // progress and summaries
};

// Building blocks the commands share, resolved from the run configuration.
PreparedScan prepare_input(RunConfig const &cfg, std::istream &in,
                           std::string const &name);
ThermalContext thermal_context(RunConfig const &cfg, PreparedScan const &scan);
ControlConfig control_config(RunConfig const &cfg);
// Tuning setup on `scanpath`, or on the configured stepped pyramid when empty.
CalibrationSetup calibration_setup(RunConfig const &cfg,
                                   std::filesystem::path const &scanpath);

void cmd_fit_meltpool(CommandContext const &ctx,
                      std::filesystem::path const &measurements);
void cmd_schedule(CommandContext const &ctx, std::filesystem::path const &scanpath);
// Tunes on `scanpath`, or on the configured stepped pyramid when empty.
void cmd_tune_f(CommandContext const &ctx, std::filesystem::path const &scanpath);
void cmd_simulate(CommandContext const &ctx, std::filesystem::path const &scanpath);
// kind: pyramid, slab or single-tracks.
void cmd_gen_fixture(CommandContext const &ctx, std::string const &kind);

/// Parses arguments and runs one command. Returns the process exit code:
/// 0 success, 2 configuration or input error, 3 numerical failure.
int run(std::vector<std::string> const &args, std::ostream &out, std::ostream &err);

} // namespace lpbf::cli
