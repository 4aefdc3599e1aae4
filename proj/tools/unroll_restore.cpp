#include <iostream>

#include <CLI11.hpp>

#include "unroll/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Image restoration with plug-and-play HQS solvers and unrolled networks"};
  app.require_subcommand(1);
  unroll::cli::Invocation inv;
  std::string config, input, output, truth;
  std::uint64_t seed = 0;

  const std::pair<const char*, const char*> commands[] = {
      {"degrade", "Apply the configured degradation to every image in --input"},
      {"restore", "Restore degraded images with the configured solver and denoiser"},
      {"train", "Train the unrolled network on patches from io.dataset"},
      {"eval", "Score restored images (--input) against ground truth (--truth)"},
      {"diagnose", "Check the descent conditions recorded in a trace CSV (--input)"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "JSON run configuration");
    sub->add_option("--input", input, "Input directory (trace file for diagnose)");
    sub->add_option("--output", output, "Output directory");
    sub->add_option("--truth", truth, "Ground-truth directory");
    sub->add_option("--seed", seed, "Overrides the config seed");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  inv.command = app.get_subcommands().front()->get_name();
  const CLI::App* sub = app.get_subcommands().front();
  if (sub->count("--config")) inv.config = config;
  if (sub->count("--input")) inv.input = input;
  if (sub->count("--output")) inv.output = output;
  if (sub->count("--truth")) inv.truth = truth;
  if (sub->count("--seed")) inv.seed = seed;
  return unroll::cli::run(inv, std::cout, std::cerr);
}
