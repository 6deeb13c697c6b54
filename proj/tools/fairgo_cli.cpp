#include "fairgo/pipeline.hpp"

#include <cstdlib>
#include <string>

#include <CLI11.hpp>
#include <Eigen/Core>

int main(int argc, char** argv) {
  if (const char* threads = std::getenv("FAIRGO_THREADS"))
    Eigen::setNbThreads(std::atoi(threads));

  CLI::App app{"Fairness-filtered recommendation pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::string stage;

  for (const char* name : {"ingest", "train-base", "train-fair", "audit",
                           "report", "synth"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "key=value run configuration")
        ->required();
    sub->add_option("--seed", seed, "override the configured seed");
    sub->add_option("--out", out_dir, "override the configured output directory");
    sub->callback([&stage, name] { stage = name; });
  }

  CLI11_PARSE(app, argc, argv);
  return fairgo::run_stage(stage, config_path, seed, out_dir);
}
