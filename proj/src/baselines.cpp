#include "gfnadapt/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace gfnadapt {

LossFn loss_function(const RewardModel& model) {
  return [&model](const StateKey& key) { return model.score(key).aggregate; };
}

namespace {

StateKey uniform_key(const SpaceSpec& space, std::mt19937_64& rng) {
  StateKey key;
  for (std::size_t t = 0; t < space.slot_count(); ++t)
    key.push(std::uniform_int_distribution<int>(0, space.action_count(t) - 1)(rng));
  return key;
}

int draw_categorical(const std::vector<double>& probs, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cumulative = 0.0;
  for (std::size_t a = 0; a < probs.size(); ++a) {
    cumulative += probs[a];
    if (u < cumulative) return static_cast<int>(a);
  }
  return static_cast<int>(probs.size()) - 1;
}

class TraceBuilder {
 public:
  TraceBuilder(std::string method, const SearchBudget& budget, std::uint64_t seed,
               const LossFn& loss)
      : budget_(budget), loss_(loss) {
    trace_.method = std::move(method);
    trace_.budget = budget.evaluations;
    trace_.seed = seed;
  }

  [[nodiscard]] bool open() const {
    return trace_.keys.size() < budget_.evaluations &&
           trace_.proposals < budget_.proposal_factor * std::max<std::size_t>(budget_.evaluations, 1);
  }
  [[nodiscard]] bool seen(const StateKey& key) const { return seen_.contains(key); }

  /// Records a proposal; returns false when it was skipped as a repeat.
  bool propose(const StateKey& key) {
    ++trace_.proposals;
    if (budget_.unique && seen_.contains(key)) return false;
    seen_.insert(key);
    trace_.keys.push_back(key);
    trace_.losses.push_back(loss_(key));
    return true;
  }

  SearchTrace finish() && { return std::move(trace_); }
  [[nodiscard]] const SearchTrace& trace() const { return trace_; }

 private:
  SearchBudget budget_;
  const LossFn& loss_;
  SearchTrace trace_;
  std::unordered_set<StateKey, StateKeyHash> seen_;
};

}  // namespace

SearchTrace random_search(const SpaceSpec& space, const LossFn& loss, const SearchBudget& budget,
                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TraceBuilder builder("random", budget, seed, loss);
  while (builder.open()) builder.propose(uniform_key(space, rng));
  return std::move(builder).finish();
}

TpeDensities tpe_densities(const SpaceSpec& space, const std::vector<StateKey>& keys,
                           const std::vector<double>& losses, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("tpe: gamma must lie in (0, 1)");
  if (keys.size() != losses.size() || keys.empty())
    throw std::invalid_argument("tpe: history must be non-empty and aligned");

  // Stable sort keeps evaluation order among equal losses.
  std::vector<std::size_t> order(keys.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });
  const auto n_good = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(gamma * static_cast<double>(keys.size()))));

  TpeDensities d;
  const auto slots = space.slot_count();
  d.good.resize(slots);
  d.bad.resize(slots);
  for (std::size_t t = 0; t < slots; ++t) {
    const auto actions = static_cast<std::size_t>(space.action_count(t));
    std::vector<double> good(actions, 1.0), bad(actions, 1.0);
    double n_bad = 0.0;
    for (std::size_t r = 0; r < order.size(); ++r) {
      const auto a = static_cast<std::size_t>(keys[order[r]][t]);
      if (r < n_good) {
        good[a] += 1.0;
      } else {
        bad[a] += 1.0;
        n_bad += 1.0;
      }
    }
    for (auto& v : good) v /= static_cast<double>(n_good + actions);
    for (auto& v : bad) v /= n_bad + static_cast<double>(actions);
    d.good[t] = std::move(good);
    d.bad[t] = std::move(bad);
  }
  return d;
}

SearchTrace tpe_search(const SpaceSpec& space, const LossFn& loss, const SearchBudget& budget,
                       std::uint64_t seed, const TpeConfig& config) {
  if (!(config.gamma > 0.0 && config.gamma < 1.0))
    throw std::invalid_argument("tpe: gamma must lie in (0, 1)");
  if (config.n_candidates < 1) throw std::invalid_argument("tpe: n_candidates must be >= 1");
  if (config.startup < 1) throw std::invalid_argument("tpe: startup must be >= 1");

  std::mt19937_64 rng(seed);
  TraceBuilder builder("tpe", budget, seed, loss);
  while (builder.open()) {
    const auto& history = builder.trace();
    if (history.keys.size() < static_cast<std::size_t>(config.startup)) {
      builder.propose(uniform_key(space, rng));
      continue;
    }
    const auto d = tpe_densities(space, history.keys, history.losses, config.gamma);

    // Best candidate by log l(x)/g(x); in unique mode, skip keys already
    // evaluated and fall back to the best repeat when every draw repeats.
    StateKey best, best_any;
    double best_score = -std::numeric_limits<double>::infinity();
    double best_any_score = best_score;
    for (int c = 0; c < config.n_candidates; ++c) {
      StateKey cand;
      double score = 0.0;
      for (std::size_t t = 0; t < space.slot_count(); ++t) {
        const int a = draw_categorical(d.good[t], rng);
        cand.push(a);
        score += std::log(d.good[t][static_cast<std::size_t>(a)]) -
                 std::log(d.bad[t][static_cast<std::size_t>(a)]);
      }
      if (score > best_any_score) {
        best_any_score = score;
        best_any = cand;
      }
      if (budget.unique && builder.seen(cand)) continue;
      if (score > best_score) {
        best_score = score;
        best = cand;
      }
    }
    builder.propose(best.empty() ? best_any : best);
  }
  return std::move(builder).finish();
}

void write_trace_csv(std::ostream& out, const SearchTrace& trace,
                     const std::vector<std::string>& preamble) {
  for (const auto& line : preamble) out << "# " << line << '\n';
  out << "# method=" << trace.method << " seed=" << trace.seed << " budget=" << trace.budget
      << " proposals=" << trace.proposals << '\n';
  out << "iteration,key,loss,best_so_far\n";
  out << std::setprecision(17);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < trace.keys.size(); ++i) {
    best = std::min(best, trace.losses[i]);
    out << i + 1 << ',' << trace.keys[i].str() << ',' << trace.losses[i] << ',' << best << '\n';
  }
}

SearchTrace read_trace_csv(std::istream& in) {
  SearchTrace trace;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ss(line.substr(1));
      std::string token;
      while (ss >> token) {
        auto eq = token.find('=');
        if (eq == std::string::npos) continue;
        auto k = token.substr(0, eq), v = token.substr(eq + 1);
        if (k == "method") trace.method = v;
        else if (k == "seed") trace.seed = std::stoull(v);
        else if (k == "budget") trace.budget = std::stoull(v);
        else if (k == "proposals") trace.proposals = std::stoull(v);
      }
      continue;
    }
    if (!header) {
      if (line != "iteration,key,loss,best_so_far") throw std::runtime_error("unexpected trace header");
      header = true;
      continue;
    }
    std::istringstream ss(line);
    std::string iter, key, loss;
    std::getline(ss, iter, ',');
    std::getline(ss, key, ',');
    std::getline(ss, loss, ',');
    trace.keys.push_back(StateKey::parse(key));
    trace.losses.push_back(std::stod(loss));
  }
  return trace;
}

}  // namespace gfnadapt
