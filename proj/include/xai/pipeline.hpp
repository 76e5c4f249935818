#pragma once

#include <nlohmann/json.hpp>

#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#include "xai/config.hpp"

namespace xai {

enum class Stage { Ingest, Preprocess, Select, Tune, Train, Evaluate, Explain, Report, All };

std::string to_string(Stage s);
/// Throws ConfigError for an unknown name.
Stage parse_stage(const std::string& name);
/// The eight real stages in execution order.
const std::vector<Stage>& stage_order();

/// Fixed layout of a run directory.
struct RunLayout {
  std::filesystem::path root;

  std::filesystem::path manifest() const { return root / "manifest"; }
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path plots() const { return root / "plots"; }
  std::filesystem::path tables() const { return root / "tables"; }
};

/// Seeds of every random stream in a run, all derived from the root seed.
struct DerivedSeeds {
  std::uint64_t root = 0;
  std::uint64_t split = 0;
  std::uint64_t cv = 0;
  std::uint64_t random_search = 0;
  std::uint64_t train = 0;
  std::uint64_t background = 0;
  std::uint64_t shap = 0;
  std::uint64_t lime = 0;
  std::uint64_t permutation = 0;

  static DerivedSeeds from(std::uint64_t root);
  nlohmann::json to_json() const;
};

/// Runs one stage (or all of them) against the run directory. Each stage
/// checks that the artifacts it consumes still carry the digests recorded by
/// the stage that produced them, writes its outputs atomically and updates the
/// manifest. `All` starts from an empty manifest. A failing stage is recorded
/// as failed in the manifest before the error propagates.
void run(Stage stage, const RunConfig& cfg, const std::filesystem::path& out);

/// Reads the manifest of a run directory; an empty object if there is none.
nlohmann::json load_manifest(const std::filesystem::path& out);

/// The manifest without its wall-clock section, for replay comparisons.
nlohmann::json comparable_manifest(nlohmann::json manifest);

/// Exit status for an error: 2 configuration, 3 input data, 4 any other stage
/// failure.
int exit_code_for(const std::exception& e);

/// Feature families the trained model is expected to lean on.
const std::vector<std::string>& plausible_top_features();

}  // namespace xai
