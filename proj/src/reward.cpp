#include "gfnadapt/reward.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <mutex>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

namespace gfnadapt {

nlohmann::json QuantileTable::to_json() const {
  return {{"format", "gfnadapt-quantiles"},
          {"version", 1},
          {"lo_level", lo_level},
          {"hi_level", hi_level},
          {"eps", eps},
          {"lo", std::vector<double>(lo.begin(), lo.end())},
          {"hi", std::vector<double>(hi.begin(), hi.end())}};
}

QuantileTable QuantileTable::from_json(const nlohmann::json& j) {
  QuantileTable q;
  q.lo_level = j.at("lo_level").get<double>();
  q.hi_level = j.at("hi_level").get<double>();
  q.eps = j.at("eps").get<double>();
  auto lo = j.at("lo").get<std::vector<double>>();
  auto hi = j.at("hi").get<std::vector<double>>();
  if (lo.size() != hi.size()) throw std::invalid_argument("quantile table: lo/hi length mismatch");
  q.lo = Eigen::Map<Eigen::VectorXd>(lo.data(), static_cast<Eigen::Index>(lo.size()));
  q.hi = Eigen::Map<Eigen::VectorXd>(hi.data(), static_cast<Eigen::Index>(hi.size()));
  return q;
}

double context_loss(const SimTrajectory& sim, const ContextDataset& obs, double eps_d) {
  if (sim.values.size() != obs.obs_values.size())
    throw std::invalid_argument("context_loss: simulated and observed lengths differ");
  if (sim.values.empty()) throw std::invalid_argument("context_loss: no observations");
  double total = 0.0;
  for (std::size_t i = 0; i < sim.values.size(); ++i) {
    const double y_sim = sim.values[i];
    const double y_obs = obs.obs_values[i];
    if (!std::isfinite(y_sim) || !std::isfinite(y_obs))
      throw std::invalid_argument("context_loss: non-finite value");
    total += std::abs(y_sim - y_obs) / (std::abs(y_obs) + eps_d);
  }
  return total / static_cast<double>(sim.values.size());
}

double empirical_quantile(std::vector<double> sample, double level) {
  if (sample.empty()) throw std::invalid_argument("empirical_quantile: empty sample");
  std::sort(sample.begin(), sample.end());
  const double pos = level * static_cast<double>(sample.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= sample.size()) return sample.back();
  const double frac = pos - static_cast<double>(i);
  return sample[i] + frac * (sample[i + 1] - sample[i]);
}

QuantileTable fit_quantiles(const std::vector<std::vector<double>>& losses_per_context,
                            double lo_level, double hi_level, double eps) {
  if (!(0.0 < lo_level && lo_level < hi_level && hi_level < 1.0))
    throw std::invalid_argument("fit_quantiles: need 0 < lo_level < hi_level < 1");
  if (!(eps > 0.0)) throw std::invalid_argument("fit_quantiles: eps must be positive");
  QuantileTable q;
  q.lo_level = lo_level;
  q.hi_level = hi_level;
  q.eps = eps;
  const auto n = static_cast<Eigen::Index>(losses_per_context.size());
  q.lo.resize(n);
  q.hi.resize(n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto& sample = losses_per_context[static_cast<std::size_t>(c)];
    if (sample.empty()) throw std::invalid_argument("fit_quantiles: empty sample");
    q.lo[c] = empirical_quantile(sample, lo_level);
    q.hi[c] = empirical_quantile(sample, hi_level);
  }
  return q;
}

Eigen::VectorXd normalize(const Eigen::Ref<const Eigen::VectorXd>& raw, const QuantileTable& q) {
  if (raw.size() != q.lo.size()) throw std::invalid_argument("normalize: context count mismatch");
  return ((raw - q.lo).array() / ((q.hi - q.lo).array() + q.eps)).matrix();
}

double aggregate(const Eigen::Ref<const Eigen::VectorXd>& normalized, double lambda, int k) {
  const auto n = static_cast<int>(normalized.size());
  if (k < 1 || k > n) throw std::invalid_argument("aggregate: K out of range");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("aggregate: lambda outside [0,1]");
  std::vector<double> sorted(normalized.begin(), normalized.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / n;
  const double tail = std::accumulate(sorted.begin(), sorted.begin() + k, 0.0) / k;
  return (1.0 - lambda) * mean + lambda * tail;
}

double reward(double aggregate_loss, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("reward: beta must be positive");
  return std::exp(-beta * aggregate_loss);
}

Eigen::VectorXd raw_context_losses(const SpaceSpec& space,
                                   const std::vector<ContextDataset>& contexts,
                                   const StateKey& key, double eps_d) {
  if (!space.is_terminal(key)) throw std::invalid_argument("scoring needs a terminal key");
  const auto params = CropParameters::from(decode_state(space, key));
  Eigen::VectorXd raw(static_cast<Eigen::Index>(contexts.size()));
  for (std::size_t c = 0; c < contexts.size(); ++c) {
    try {
      raw[static_cast<Eigen::Index>(c)] = context_loss(simulate(params, contexts[c]), contexts[c], eps_d);
    } catch (const std::exception& e) {
      throw std::runtime_error("simulation failed in context " +
                               std::to_string(contexts[c].context_id) + ": " + e.what());
    }
  }
  return raw;
}

RewardModel::RewardModel(SpaceSpec space, std::vector<ContextDataset> contexts, RewardConfig config,
                         QuantileTable quantiles, std::shared_ptr<ScoreCache> cache)
    : space_(std::move(space)),
      contexts_(std::move(contexts)),
      config_(config),
      quantiles_(std::move(quantiles)),
      cache_(std::move(cache)) {
  if (contexts_.empty()) throw std::invalid_argument("reward model needs at least one context");
  if (quantiles_.contexts() != contexts_.size())
    throw std::invalid_argument("quantile table does not match context count");
  if (config_.k < 1 || config_.k > static_cast<int>(contexts_.size()))
    throw std::invalid_argument("K must lie in [1, contexts]");
  if (!(config_.beta > 0.0)) throw std::invalid_argument("beta must be positive");
  if (!(config_.lambda >= 0.0 && config_.lambda <= 1.0))
    throw std::invalid_argument("lambda must lie in [0, 1]");
  for (const auto& c : contexts_) c.validate();
  if (!cache_) cache_ = std::make_shared<ScoreCache>(space_.slot_count(), contexts_.size());
  if (cache_->slots() != space_.slot_count() || cache_->contexts() != contexts_.size())
    throw std::invalid_argument("score cache shape does not match the space");
}

Eigen::VectorXd RewardModel::raw_losses(const StateKey& key) const {
  auto raw = raw_context_losses(space_, contexts_, key, config_.eps_d);
  simulator_calls_ += contexts_.size();
  evaluations_ += 1;
  return raw;
}

LossRecord RewardModel::finish(const StateKey& key, Eigen::VectorXd raw) const {
  LossRecord rec;
  rec.key = key;
  rec.normalized = normalize(raw, quantiles_);
  rec.raw = std::move(raw);
  rec.aggregate = aggregate(rec.normalized, config_.lambda, config_.k);
  rec.reward = reward(rec.aggregate, config_.beta);
  return rec;
}

LossRecord RewardModel::score(const StateKey& key) const {
  if (auto hit = cache_->get(key)) return *hit;
  space_.validate(key);
  LossRecord rec = finish(key, raw_losses(key));
  if (!cache_->commit(rec)) return *cache_->get(key);
  return rec;
}

void RewardModel::prime(const RawLossTable& table) const {
  for (std::size_t i = 0; i < table.keys.size(); ++i)
    if (!cache_->get(table.keys[i])) cache_->commit(finish(table.keys[i], table.raw[i]));
}

void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(n, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            next = n;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

QuantileFit fit_reward_quantiles(const SpaceSpec& space,
                                 const std::vector<ContextDataset>& contexts,
                                 const RewardConfig& config, unsigned workers) {
  QuantileFit fit;
  auto count = space.terminal_count();
  if (count && *count <= config.enumerable_cap) {
    fit.enumerated = true;
    fit.samples.keys = enumerate_terminals(space);
  } else {
    if (config.warmup < 1) throw std::invalid_argument("warm-up sample must be non-empty");
    std::mt19937_64 rng(config.warmup_seed);
    for (int i = 0; i < config.warmup; ++i) {
      StateKey key;
      for (std::size_t t = 0; t < space.slot_count(); ++t)
        key.push(std::uniform_int_distribution<int>(0, space.action_count(t) - 1)(rng));
      fit.samples.keys.push_back(std::move(key));
    }
  }
  fit.samples.raw.resize(fit.samples.keys.size());
  parallel_for(fit.samples.keys.size(), workers, [&](std::size_t i) {
    fit.samples.raw[i] = raw_context_losses(space, contexts, fit.samples.keys[i], config.eps_d);
  });

  std::vector<std::vector<double>> per_context(contexts.size());
  for (const auto& raw : fit.samples.raw)
    for (std::size_t c = 0; c < contexts.size(); ++c)
      per_context[c].push_back(raw[static_cast<Eigen::Index>(c)]);
  fit.table = fit_quantiles(per_context, config.lo_level, config.hi_level, config.eps);
  return fit;
}

}  // namespace gfnadapt
