#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

#include "gfnadapt/crop.hpp"
#include "gfnadapt/score_cache.hpp"
#include "gfnadapt/space.hpp"

namespace gfnadapt {

/// Per-context lower/upper loss quantiles used to normalize raw losses.
struct QuantileTable {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
  double lo_level = 0.05;
  double hi_level = 0.95;
  double eps = 1e-8;

  [[nodiscard]] std::size_t contexts() const { return static_cast<std::size_t>(lo.size()); }
  [[nodiscard]] nlohmann::json to_json() const;
  static QuantileTable from_json(const nlohmann::json& j);
};

inline constexpr double kResidualGuard = 1e-6;

/// Mean relative absolute residual between simulated and observed values.
double context_loss(const SimTrajectory& sim, const ContextDataset& obs,
                    double eps_d = kResidualGuard);

/// Empirical quantile by linear interpolation of the sorted sample.
double empirical_quantile(std::vector<double> sample, double level);

QuantileTable fit_quantiles(const std::vector<std::vector<double>>& losses_per_context,
                            double lo_level = 0.05, double hi_level = 0.95, double eps = 1e-8);

/// Affine quantile normalization; results are not clamped.
Eigen::VectorXd normalize(const Eigen::Ref<const Eigen::VectorXd>& raw, const QuantileTable& q);

/// Blend of the context mean and the mean of the `k` largest values:
/// (1 - lambda) * mean + lambda * tail_k.
double aggregate(const Eigen::Ref<const Eigen::VectorXd>& normalized, double lambda, int k);

/// Boltzmann reward exp(-beta * aggregate).
double reward(double aggregate_loss, double beta);

struct RewardConfig {
  double beta = 4.0;
  double lambda = 0.25;
  int k = 2;
  double lo_level = 0.05;
  double hi_level = 0.95;
  double eps = 1e-8;
  double eps_d = kResidualGuard;
  /// Quantiles are fitted on the full enumeration when the terminal count is
  /// at most this cap, otherwise on `warmup` uniform terminals.
  std::uint64_t enumerable_cap = 100000;
  int warmup = 256;
  std::uint64_t warmup_seed = 0;
};

/// Raw per-context losses of terminals scored while fitting quantiles.
struct RawLossTable {
  std::vector<StateKey> keys;
  std::vector<Eigen::VectorXd> raw;
};

struct QuantileFit {
  QuantileTable table;
  RawLossTable samples;
  bool enumerated = false;
};

/// Scores terminal states: decode, simulate every context, normalize,
/// aggregate, exponentiate. Records go through a ScoreCache so repeated
/// keys never re-simulate. Safe for concurrent callers.
class RewardModel {
 public:
  RewardModel(SpaceSpec space, std::vector<ContextDataset> contexts, RewardConfig config,
              QuantileTable quantiles, std::shared_ptr<ScoreCache> cache = nullptr);

  [[nodiscard]] const SpaceSpec& space() const { return space_; }
  [[nodiscard]] const std::vector<ContextDataset>& contexts() const { return contexts_; }
  [[nodiscard]] const RewardConfig& config() const { return config_; }
  [[nodiscard]] const QuantileTable& quantiles() const { return quantiles_; }
  [[nodiscard]] ScoreCache& cache() const { return *cache_; }

  /// Simulates all contexts; throws std::runtime_error naming the failing context.
  [[nodiscard]] Eigen::VectorXd raw_losses(const StateKey& key) const;
  /// Builds the record for already-known raw losses (no simulation).
  [[nodiscard]] LossRecord finish(const StateKey& key, Eigen::VectorXd raw) const;

  /// Cached scoring of a terminal key.
  LossRecord score(const StateKey& key) const;
  /// Commits records for raw losses computed elsewhere (e.g. while fitting).
  void prime(const RawLossTable& table) const;

  /// Number of single-context simulator runs performed by this model.
  [[nodiscard]] std::uint64_t simulator_calls() const { return simulator_calls_.load(); }
  /// Number of terminal evaluations that required simulation.
  [[nodiscard]] std::uint64_t evaluations() const { return evaluations_.load(); }

 private:
  SpaceSpec space_;
  std::vector<ContextDataset> contexts_;
  RewardConfig config_;
  QuantileTable quantiles_;
  std::shared_ptr<ScoreCache> cache_;
  mutable std::atomic<std::uint64_t> simulator_calls_{0};
  mutable std::atomic<std::uint64_t> evaluations_{0};
};

/// Raw losses of one terminal, independent of any quantile table.
Eigen::VectorXd raw_context_losses(const SpaceSpec& space,
                                   const std::vector<ContextDataset>& contexts,
                                   const StateKey& key, double eps_d = kResidualGuard);

/// Fits the quantile table: on every terminal when the space is within the
/// enumerable cap, otherwise on a seeded warm-up sample of uniform terminals.
QuantileFit fit_reward_quantiles(const SpaceSpec& space,
                                 const std::vector<ContextDataset>& contexts,
                                 const RewardConfig& config, unsigned workers = 0);

/// Runs `fn(i)` for i in [0, n) over a bounded pool of threads.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn);

}  // namespace gfnadapt
