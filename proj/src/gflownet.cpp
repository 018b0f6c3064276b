#include "gfnadapt/gflownet.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace gfnadapt {

double TrajectoryRecord::log_pf() const {
  return std::accumulate(step_logps.begin(), step_logps.end(), 0.0);
}

int feature_dim(const SpaceSpec& space) {
  int dim = 0;
  for (std::size_t t = 0; t < space.slot_count(); ++t) dim += space.action_count(t) + 1;
  return dim + static_cast<int>(space.slot_count());
}

void encode_state_into(const SpaceSpec& space, const StateKey& key,
                       Eigen::Ref<Eigen::VectorXd> column) {
  if (key.size() >= space.slot_count())
    throw std::invalid_argument("encode_state: terminal key has no action to choose");
  space.validate(key);
  column.setZero();
  Eigen::Index offset = 0;
  for (std::size_t t = 0; t < space.slot_count(); ++t) {
    const int undecided = space.action_count(t);
    column[offset + (t < key.size() ? key[t] : undecided)] = 1.0;
    offset += undecided + 1;
  }
  column[offset + static_cast<Eigen::Index>(key.size())] = 1.0;
}

Eigen::VectorXd encode_state(const SpaceSpec& space, const StateKey& key) {
  Eigen::VectorXd out(feature_dim(space));
  encode_state_into(space, key, out);
  return out;
}

PolicyModel make_policy(const SpaceSpec& space, const std::vector<int>& hidden, Rng& rng) {
  PolicyModel model(feature_dim(space), hidden, space.radices());
  model.initialize(rng);
  return model;
}

Eigen::VectorXd forward_policy(const PolicyModel& model, const Eigen::VectorXd& features,
                               std::size_t slot) {
  if (slot >= model.heads().size()) throw std::invalid_argument("forward_policy: slot out of range");
  const Eigen::MatrixXd logits = model.forward(features);
  return log_softmax(logits.col(0).segment(model.head_offset(slot), model.head_size(slot)));
}

double trajectory_log_pf(const PolicyModel& model, const SpaceSpec& space, const StateKey& key) {
  if (!space.is_terminal(key)) throw std::invalid_argument("trajectory_log_pf needs a terminal key");
  const auto slots = space.slot_count();
  Eigen::MatrixXd features(feature_dim(space), static_cast<Eigen::Index>(slots));
  for (std::size_t t = 0; t < slots; ++t)
    encode_state_into(space, key.prefix(t), features.col(static_cast<Eigen::Index>(t)));
  const Eigen::MatrixXd logits = model.forward(features);
  double total = 0.0;
  for (std::size_t t = 0; t < slots; ++t) {
    auto logp = log_softmax(logits.col(static_cast<Eigen::Index>(t))
                                .segment(model.head_offset(t), model.head_size(t)));
    total += logp[key[t]];
  }
  return total;
}

std::vector<TrajectoryRecord> sample_paths(const PolicyModel& model, const SpaceSpec& space,
                                           std::size_t n, Rng& rng, double explore_eps) {
  if (!(explore_eps >= 0.0 && explore_eps < 1.0))
    throw std::invalid_argument("explore_eps must lie in [0, 1)");
  std::vector<TrajectoryRecord> paths(n);
  if (n == 0) return paths;
  const int dim = feature_dim(space);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXd features(dim, static_cast<Eigen::Index>(n));

  for (std::size_t t = 0; t < space.slot_count(); ++t) {
    for (std::size_t i = 0; i < n; ++i)
      encode_state_into(space, paths[i].key, features.col(static_cast<Eigen::Index>(i)));
    const Eigen::MatrixXd logits = model.forward(features);
    const int actions = space.action_count(t);
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::VectorXd logp = log_softmax(
          logits.col(static_cast<Eigen::Index>(i)).segment(model.head_offset(t), actions));
      const double u = unit(rng);
      double cumulative = 0.0;
      int choice = actions - 1;
      for (int a = 0; a < actions; ++a) {
        cumulative += (1.0 - explore_eps) * std::exp(logp[a]) + explore_eps / actions;
        if (u < cumulative) {
          choice = a;
          break;
        }
      }
      paths[i].key.push(choice);
      paths[i].step_logps.push_back(logp[choice]);
    }
  }
  return paths;
}

TrajectoryRecord sample_trajectory(const PolicyModel& model, const SpaceSpec& space,
                                   const LogRewardFn& log_reward, Rng& rng, double explore_eps) {
  auto record = std::move(sample_paths(model, space, 1, rng, explore_eps).front());
  record.log_reward = log_reward(record.key);
  record.tb_residual = model.log_z() + record.log_pf() - record.log_reward;
  return record;
}

namespace {

struct BatchForward {
  Eigen::MatrixXd logits;
  PolicyModel::Activations cache;
  Eigen::VectorXd residuals;
};

BatchForward forward_batch(const PolicyModel& model, const SpaceSpec& space,
                           const std::vector<TrajectoryRecord>& batch, bool keep_cache) {
  if (batch.empty()) throw std::invalid_argument("tb_loss: empty batch");
  const auto slots = space.slot_count();
  const auto n = batch.size();
  Eigen::MatrixXd features(feature_dim(space), static_cast<Eigen::Index>(n * slots));
  for (std::size_t i = 0; i < n; ++i) {
    if (!space.is_terminal(batch[i].key)) throw std::invalid_argument("tb_loss: non-terminal key");
    if (!std::isfinite(batch[i].log_reward)) throw std::invalid_argument("tb_loss: non-finite log_reward");
    for (std::size_t t = 0; t < slots; ++t)
      encode_state_into(space, batch[i].key.prefix(t),
                        features.col(static_cast<Eigen::Index>(i * slots + t)));
  }
  BatchForward out;
  out.logits = model.forward(features, keep_cache ? &out.cache : nullptr);
  out.residuals.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    double log_pf = 0.0;
    for (std::size_t t = 0; t < slots; ++t) {
      const auto col = static_cast<Eigen::Index>(i * slots + t);
      log_pf += log_softmax(out.logits.col(col).segment(model.head_offset(t), model.head_size(t)))
          [batch[i].key[t]];
    }
    out.residuals[static_cast<Eigen::Index>(i)] = model.log_z() + log_pf - batch[i].log_reward;
  }
  return out;
}

}  // namespace

double tb_loss(const PolicyModel& model, const SpaceSpec& space,
               const std::vector<TrajectoryRecord>& batch) {
  return forward_batch(model, space, batch, false).residuals.squaredNorm() /
         static_cast<double>(batch.size());
}

std::pair<double, Eigen::VectorXd> tb_loss_gradient(const PolicyModel& model,
                                                     const SpaceSpec& space,
                                                     const std::vector<TrajectoryRecord>& batch) {
  auto fwd = forward_batch(model, space, batch, true);
  const auto slots = space.slot_count();
  const auto n = static_cast<double>(batch.size());
  const double loss = fwd.residuals.squaredNorm() / n;

  // d loss / d logits: (2 r_i / n) * (onehot(a) - softmax) within each head.
  Eigen::MatrixXd grad_logits = Eigen::MatrixXd::Zero(fwd.logits.rows(), fwd.logits.cols());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double scale = 2.0 * fwd.residuals[static_cast<Eigen::Index>(i)] / n;
    for (std::size_t t = 0; t < slots; ++t) {
      const auto col = static_cast<Eigen::Index>(i * slots + t);
      const int off = model.head_offset(t);
      const int size = model.head_size(t);
      Eigen::VectorXd probs = log_softmax(fwd.logits.col(col).segment(off, size)).array().exp();
      probs = -probs;
      probs[batch[i].key[t]] += 1.0;
      grad_logits.col(col).segment(off, size) = scale * probs;
    }
  }
  Eigen::VectorXd grad = model.backward(fwd.cache, grad_logits);
  grad[grad.size() - 1] = 2.0 * fwd.residuals.sum() / n;
  return {loss, std::move(grad)};
}

TrainResult train(const SpaceSpec& space, const LogRewardFn& log_reward, const TrainConfig& config) {
  if (config.steps < 0 || config.batch < 1) throw std::invalid_argument("train: bad steps/batch");
  if (!(config.lr > 0.0)) throw std::invalid_argument("train: learning rate must be positive");
  Rng rng(config.seed);
  TrainResult result;
  result.model = make_policy(space, config.hidden, rng);

  Adam<double> adam(result.model.parameter_count(), config.lr, config.adam_beta1,
                    config.adam_beta2, config.adam_eps);
  if (config.log_z_lr > 0.0) adam.set_learning_rate(result.model.parameter_count() - 1, config.log_z_lr);

  std::unordered_set<StateKey, StateKeyHash> seen;
  const double decay_steps = config.explore_decay_fraction * config.steps;

  for (int step = 0; step < config.steps; ++step) {
    double eps = config.explore_eps;
    if (decay_steps > 0.0) eps *= std::max(0.0, 1.0 - step / decay_steps);
    else eps = 0.0;

    auto batch = sample_paths(result.model, space, static_cast<std::size_t>(config.batch), rng, eps);
    for (auto& tr : batch) {
      tr.log_reward = log_reward(tr.key);
      tr.tb_residual = result.model.log_z() + tr.log_pf() - tr.log_reward;
      if (seen.insert(tr.key).second) result.first_seen.push_back(tr.key);
    }

    auto [loss, grad] = tb_loss_gradient(result.model, space, batch);
    if (!std::isfinite(loss) || !grad.allFinite())
      throw std::runtime_error("training diverged at step " + std::to_string(step));
    result.log.push_back({step, loss, result.model.log_z(), seen.size()});
    adam.step(result.model.parameters(), grad);
    if (!result.model.all_finite())
      throw std::runtime_error("training produced non-finite parameters at step " +
                               std::to_string(step));
  }

  std::ostringstream rs;
  rs << rng;
  result.rng_state = rs.str();
  return result;
}

Eigen::VectorXd exact_terminal_distribution(const PolicyModel& model, const SpaceSpec& space,
                                            std::uint64_t cap) {
  auto count = space.terminal_count();
  if (!count || *count > cap)
    throw std::invalid_argument("space too large for exact terminal distribution");

  // Level-order sweep of the construction tree; prefixes at each level are
  // kept in lexicographic order, so the final level is in terminal_index order.
  std::vector<StateKey> level = {StateKey{}};
  Eigen::VectorXd mass = Eigen::VectorXd::Ones(1);
  const int dim = feature_dim(space);
  for (std::size_t t = 0; t < space.slot_count(); ++t) {
    const int actions = space.action_count(t);
    Eigen::MatrixXd features(dim, static_cast<Eigen::Index>(level.size()));
    for (std::size_t i = 0; i < level.size(); ++i)
      encode_state_into(space, level[i], features.col(static_cast<Eigen::Index>(i)));
    const Eigen::MatrixXd logits = model.forward(features);

    std::vector<StateKey> next;
    next.reserve(level.size() * static_cast<std::size_t>(actions));
    Eigen::VectorXd next_mass(static_cast<Eigen::Index>(level.size()) * actions);
    for (std::size_t i = 0; i < level.size(); ++i) {
      const Eigen::VectorXd p =
          log_softmax(logits.col(static_cast<Eigen::Index>(i)).segment(model.head_offset(t), actions))
              .array()
              .exp();
      for (int a = 0; a < actions; ++a) {
        next.push_back(level[i].child(a));
        next_mass[static_cast<Eigen::Index>(i) * actions + a] = mass[static_cast<Eigen::Index>(i)] * p[a];
      }
    }
    level = std::move(next);
    mass = std::move(next_mass);
  }
  return mass;
}

std::vector<StateKey> sample_terminals(const PolicyModel& model, const SpaceSpec& space,
                                       std::size_t n, Rng& rng) {
  std::vector<StateKey> out;
  out.reserve(n);
  // Chunked so very large draws keep feature matrices small.
  constexpr std::size_t kChunk = 4096;
  for (std::size_t done = 0; done < n; done += kChunk) {
    for (auto& p : sample_paths(model, space, std::min(kChunk, n - done), rng, 0.0))
      out.push_back(std::move(p.key));
  }
  return out;
}

namespace {

constexpr std::array<char, 8> kCheckpointMagic = {'G', 'F', 'N', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint truncated");
  return value;
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  auto n = read_pod<std::uint32_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw std::runtime_error("checkpoint truncated");
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  write_pod(out, kCheckpointVersion);
  write_string(out, ckpt.config_hash);
  const auto& m = ckpt.model;
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(m.input_dim()));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(m.hidden().size()));
  for (int w : m.hidden()) write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(w));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(m.heads().size()));
  for (int h : m.heads()) write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(h));
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.parameter_count()));
  out.write(reinterpret_cast<const char*>(m.parameters().data()),
            static_cast<std::streamsize>(m.parameter_count() * sizeof(double)));
  write_string(out, ckpt.rng_state);
  if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kCheckpointMagic) throw std::runtime_error("not a checkpoint: " + path.string());
  if (read_pod<std::uint32_t>(in) != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version");
  Checkpoint ckpt;
  ckpt.config_hash = read_string(in);
  const auto input_dim = static_cast<int>(read_pod<std::uint32_t>(in));
  std::vector<int> hidden(read_pod<std::uint32_t>(in));
  for (auto& w : hidden) w = static_cast<int>(read_pod<std::uint32_t>(in));
  std::vector<int> heads(read_pod<std::uint32_t>(in));
  for (auto& h : heads) h = static_cast<int>(read_pod<std::uint32_t>(in));
  ckpt.model = PolicyModel(input_dim, hidden, heads);
  const auto n = read_pod<std::uint64_t>(in);
  if (n != static_cast<std::uint64_t>(ckpt.model.parameter_count()))
    throw std::runtime_error("checkpoint parameter count does not match its dimensions");
  in.read(reinterpret_cast<char*>(ckpt.model.parameters().data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw std::runtime_error("checkpoint truncated");
  ckpt.rng_state = read_string(in);
  return ckpt;
}

}  // namespace gfnadapt
