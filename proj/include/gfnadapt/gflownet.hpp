#pragma once

#include <cstdint>
#include <functional>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gfnadapt/policy.hpp"
#include "gfnadapt/space.hpp"

namespace gfnadapt {

using PolicyModel = PolicyNetwork<double>;
using Rng = std::mt19937_64;

/// log R(x) of a terminal key.
using LogRewardFn = std::function<double(const StateKey&)>;

struct TrajectoryRecord {
  StateKey key;
  std::vector<double> step_logps;  // chosen-action log-probabilities under the pure policy
  double log_reward = 0.0;
  double tb_residual = 0.0;  // log_z + sum(step_logps) - log_reward

  [[nodiscard]] double log_pf() const;
};

/// Size of the state encoding: one-hot per slot with an extra "undecided"
/// category, plus a one-hot of the current slot.
int feature_dim(const SpaceSpec& space);

/// Encodes a non-terminal key. Throws std::invalid_argument on a terminal key.
Eigen::VectorXd encode_state(const SpaceSpec& space, const StateKey& key);
void encode_state_into(const SpaceSpec& space, const StateKey& key,
                       Eigen::Ref<Eigen::VectorXd> column);

/// Policy with one head per decision slot, initialized per PolicyNetwork::initialize.
PolicyModel make_policy(const SpaceSpec& space, const std::vector<int>& hidden, Rng& rng);

/// Action log-probabilities at `slot` for one encoded state.
Eigen::VectorXd forward_policy(const PolicyModel& model, const Eigen::VectorXd& features,
                               std::size_t slot);

/// Log P_F of a terminal key along its unique construction path.
double trajectory_log_pf(const PolicyModel& model, const SpaceSpec& space, const StateKey& key);

/// Draws `n` trajectories in parallel lockstep. Each action comes from the
/// mixture (1 - explore_eps) * policy + explore_eps * uniform; step_logps
/// always record the pure-policy log-probability. log_reward and
/// tb_residual are left for the caller.
std::vector<TrajectoryRecord> sample_paths(const PolicyModel& model, const SpaceSpec& space,
                                           std::size_t n, Rng& rng, double explore_eps);

/// One scored trajectory.
TrajectoryRecord sample_trajectory(const PolicyModel& model, const SpaceSpec& space,
                                   const LogRewardFn& log_reward, Rng& rng, double explore_eps);

/// Mean squared trajectory-balance residual (log P_B = 0 on a tree).
double tb_loss(const PolicyModel& model, const SpaceSpec& space,
               const std::vector<TrajectoryRecord>& batch);

/// tb_loss and its gradient with respect to the flat parameter vector
/// (log_z included as the last coordinate).
std::pair<double, Eigen::VectorXd> tb_loss_gradient(const PolicyModel& model,
                                                     const SpaceSpec& space,
                                                     const std::vector<TrajectoryRecord>& batch);

struct TrainConfig {
  int steps = 1000;
  int batch = 16;
  double lr = 5e-4;
  /// Learning rate of log_z; non-positive means "same as lr".
  double log_z_lr = 0.0;
  std::vector<int> hidden = {256, 256, 256};
  double explore_eps = 0.05;
  /// Exploration decays linearly to zero over this fraction of the steps.
  double explore_decay_fraction = 0.5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
};

struct TrainLogRow {
  int step = 0;
  double tb_loss = 0.0;
  double log_z = 0.0;
  std::size_t unique_terminals = 0;
};

struct TrainResult {
  PolicyModel model;
  std::vector<TrainLogRow> log;
  /// Distinct terminals in order of first evaluation during training.
  std::vector<StateKey> first_seen;
  std::string rng_state;
};

/// Trajectory-balance training with Adam. Throws std::runtime_error when the
/// loss or any parameter becomes non-finite.
TrainResult train(const SpaceSpec& space, const LogRewardFn& log_reward, const TrainConfig& config);

inline constexpr std::uint64_t kDefaultEnumerableCap = 100000;

/// Exact terminal probabilities indexed by terminal_index (enumeration order).
Eigen::VectorXd exact_terminal_distribution(const PolicyModel& model, const SpaceSpec& space,
                                            std::uint64_t cap = kDefaultEnumerableCap);

/// `n` independent on-policy draws (no exploration).
std::vector<StateKey> sample_terminals(const PolicyModel& model, const SpaceSpec& space,
                                       std::size_t n, Rng& rng);

/// Binary model checkpoint:
///   "GFNCKPT\0" | u32 version | u32 hash_len | hash | u32 input_dim |
///   u32 n_hidden | n_hidden x u32 | u32 n_heads | n_heads x u32 |
///   u64 n_params | n_params x f64 (flat parameters, log_z last) |
///   u32 rng_len | rng state text
struct Checkpoint {
  PolicyModel model;
  std::string config_hash;
  std::string rng_state;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gfnadapt
