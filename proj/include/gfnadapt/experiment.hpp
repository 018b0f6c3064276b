#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfnadapt/baselines.hpp"
#include "gfnadapt/crop.hpp"
#include "gfnadapt/gflownet.hpp"
#include "gfnadapt/reward.hpp"

namespace gfnadapt {

/// Bad configuration or usage; the CLI exits with status 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A prior command's output is absent; the CLI exits with status 2.
class MissingArtifact : public std::runtime_error {
 public:
  explicit MissingArtifact(const std::filesystem::path& path)
      : std::runtime_error("missing upstream artifact: " + path.string()), path_(path) {}
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

struct ExperimentConfig {
  // [space]
  std::string space_file;  // empty: built-in definition
  int cycles = 1;
  double step_fraction = 0.3;
  // [data]
  double noise_rel = 0.03;
  std::uint64_t contexts_seed = 7;
  std::uint64_t noise_seed = 11;
  int days = kDefaultHorizon;
  std::string truth_key;  // empty: the space definition's truth key
  // [reward]
  RewardConfig reward;
  // [method]
  std::string method = "gflownet";
  // [gflownet]
  TrainConfig train;
  std::size_t samples = 5000;
  // [tpe]
  TpeConfig tpe;
  // [run]
  std::size_t budget = 2000;
  bool budget_unique = true;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::string out_dir = "runs";
  unsigned workers = 0;
  // [report]
  std::vector<std::size_t> topk = {1, 5, 10, 20, 50, 100};
  std::vector<std::string> methods = {"gflownet", "random", "tpe"};
  std::string hamming_source = "evaluated";

  /// Canonical "section.key=value" lines of every setting that shapes results
  /// (method, seeds, output directory and worker count excluded).
  [[nodiscard]] std::string canonical() const;
  /// Lowercase hex SHA-256 of canonical(), truncated to 16 characters.
  [[nodiscard]] std::string hash() const;
  /// Hash of the settings that determine reward values only; scopes the cache.
  [[nodiscard]] std::string reward_hash() const;

  /// Throws ConfigError when a field violates its module's preconditions.
  void validate() const;
};

/// Built-in defaults, overlaid by `path` (INI, may be empty) and then by
/// "section.key=value" overrides. Unknown keys are rejected.
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides);
ExperimentConfig parse_config(const std::string& ini_text, const std::vector<std::string>& overrides);

/// Every configurable key with its default value, as INI text.
std::string default_config_ini();

/// Resolved space, observation datasets and truth key of a configuration.
struct Problem {
  SpaceSpec space;
  StateKey truth_key;
  std::vector<ContextDataset> contexts;
};

Problem build_problem(const ExperimentConfig& config);

/// Output locations: <out>/<hash>/<command>/[<method>/]seed-N/.
struct RunPaths {
  std::filesystem::path root;   // <out>/<hash>
  std::filesystem::path cache;  // score cache directory

  [[nodiscard]] std::filesystem::path enumerate() const { return root / "enumerate"; }
  [[nodiscard]] std::filesystem::path train(std::uint64_t seed) const;
  [[nodiscard]] std::filesystem::path sample(std::uint64_t seed) const;
  [[nodiscard]] std::filesystem::path baseline(const std::string& method, std::uint64_t seed) const;
  [[nodiscard]] std::filesystem::path report() const { return root / "report"; }
};

/// The cache directory honours the GFNADAPT_CACHE_DIR environment variable.
RunPaths run_paths(const ExperimentConfig& config);

/// Reward model backed by the persistent cache, with the quantile table
/// loaded from the cache directory or fitted (and saved) on first use.
struct RewardEnvironment {
  Problem problem;
  std::unique_ptr<RewardModel> model;
  /// Single-context simulations spent fitting the quantile table.
  std::uint64_t fit_simulations = 0;

  [[nodiscard]] std::uint64_t simulator_calls() const {
    return fit_simulations + model->simulator_calls();
  }
};

RewardEnvironment open_reward(const ExperimentConfig& config);

struct CommandResult {
  /// Single-context simulator runs performed by the command.
  std::uint64_t simulator_calls = 0;
  std::vector<std::filesystem::path> outputs;
  /// One-line human summary per notable result.
  std::vector<std::string> messages;
};

CommandResult cmd_enumerate(const ExperimentConfig& config);
CommandResult cmd_train(const ExperimentConfig& config);
CommandResult cmd_sample(const ExperimentConfig& config);
CommandResult cmd_baseline(const ExperimentConfig& config);
CommandResult cmd_report(const ExperimentConfig& config);

/// The truth key padded with identity actions to the space's slot count.
StateKey lift_truth_key(const SpaceSpec& space, const StateKey& truth);

/// Evaluated keys of a GFlowNet run under the matched budget: distinct
/// training evaluations in first-seen order, topped up with distinct
/// post-training samples, truncated to `budget`.
std::vector<StateKey> gflownet_budget_keys(const std::vector<StateKey>& training_keys,
                                           const std::vector<StateKey>& sample_keys,
                                           std::size_t budget);

}  // namespace gfnadapt
