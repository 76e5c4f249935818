#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <iostream>
#include <optional>

#include "xai/config.hpp"
#include "xai/error.hpp"
#include "xai/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Explainable breast-cancer classification pipeline"};
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "run";
  std::string stage = "all";
  bool quiet = false;
  app.add_option("--config", config_path, "Configuration file (sectioned key = value)");
  app.add_option("--seed", seed, "Root seed, overrides [run] seed");
  app.add_option("--out", out, "Run directory")->capture_default_str();
  app.add_option("--stage", stage,
                 "ingest, preprocess, select, tune, train, evaluate, explain, report or all")
      ->capture_default_str();
  app.add_flag("--quiet", quiet, "Only log warnings and errors");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  spdlog::set_level(quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    xai::RunConfig cfg = config_path.empty() ? xai::RunConfig{} : xai::load_config(config_path);
    if (seed) cfg.seed = *seed;
    cfg.validate();
    xai::run(xai::parse_stage(stage), cfg, out);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return xai::exit_code_for(e);
  }
  return 0;
}
