#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "lrtl/commands.hpp"

namespace {

void add_common(CLI::App* sub, lrtl::CommandOptions& opt, std::uint64_t& seed) {
  sub->add_option("--config", opt.config, "JSON config file")->check(CLI::ExistingFile);
  sub->add_option("--out", opt.out, "Output directory");
  sub->add_option("--seed", seed, "Root seed, overrides the config");
  sub->add_option("--format", opt.format, "Metric report format")->check(CLI::IsMember({"json", "csv"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motion segmentation by low-rank trajectory losses"};
  app.require_subcommand(1);
  lrtl::CommandOptions opt;
  std::uint64_t seed = 0;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene");
  add_common(synth, opt, seed);

  auto* segment = app.add_subcommand("segment", "Segment a scene with lrtl or a baseline");
  add_common(segment, opt, seed);
  segment->add_option("--scene", opt.scene, "Scene directory");
  segment->add_option("--method", opt.method, "lrtl, kmeans, ssc or lrr")
      ->check(CLI::IsMember({"lrtl", "kmeans", "ssc", "lrr"}));

  auto* sweep = app.add_subcommand("sweep", "Corruption sweep of the trajectory loss");
  add_common(sweep, opt, seed);
  sweep->add_option("--scene", opt.scene, "Scene directory");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  add_common(gradcheck, opt, seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(lrtl::ExitCode::config);
  }

  CLI::App* chosen = app.get_subcommands().front();
  if (chosen->count("--seed") > 0) opt.seed = seed;
  return lrtl::run_command(chosen->get_name(), opt, std::cout, std::cerr);
}
