// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fail.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

#include "../support/fixtures.hpp"
#include "gfnadapt/experiment.hpp"
#include "gfnadapt/landscape.hpp"
#include "gfnadapt/metrics.hpp"

using namespace gfnadapt;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Rows of a CSV file, skipping '#' comments and the header line.
std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

// 1 -------------------------------------------------------------------------

Outcome space_structure() {
  const auto start = Clock::now();
  const auto space = builtin_space_definition().space;
  const auto keys = enumerate_terminals(space);
  const auto radices = space.radices();
  const auto product = std::accumulate(radices.begin(), radices.end(), std::uint64_t{1},
                                       [](std::uint64_t a, int r) { return a * static_cast<std::uint64_t>(r); });
  const double elapsed = seconds_since(start);
  const bool ok = radices == std::vector<int>{3, 5, 5, 5, 7} && keys.size() == 2625 &&
                  space.terminal_count().value() == 2625 && product == 2625 &&
                  std::set<StateKey>(keys.begin(), keys.end()).size() == 2625 && elapsed < 1.0;
  return {ok, "terminals=" + std::to_string(keys.size()) + " runtime=" + fmt(elapsed) + "s"};
}

// 2 -------------------------------------------------------------------------

/// Straight-line update rule read from the raw space definition file.
struct RawSpace {
  struct Param {
    std::string name;
    double lower, upper, baseline;
  };
  std::vector<Param> params;
  std::vector<std::vector<std::map<std::string, int>>> actions;  // [group][action] -> signs

  explicit RawSpace(const fs::path& file) {
    const auto j = nlohmann::json::parse(slurp(file));
    for (const auto& p : j["parameters"])
      params.push_back({p["name"], p["lower"], p["upper"], p["baseline"]});
    auto groups = j["groups"];
    std::sort(groups.begin(), groups.end(),
              [](const auto& a, const auto& b) { return a["order"].template get<int>() < b["order"].template get<int>(); });
    for (const auto& g : groups) {
      actions.emplace_back();
      for (const auto& a : g["actions"]) actions.back().push_back(a["signs"].get<std::map<std::string, int>>());
    }
  }

  std::map<std::string, double> decode(const std::vector<int>& key, double sf) const {
    std::map<std::string, double> theta;
    for (const auto& p : params) theta[p.name] = p.baseline;
    const std::size_t groups = actions.size();
    for (std::size_t t = 0; t < key.size(); ++t) {
      const int cycle = static_cast<int>(t / groups) + 1;
      const double eta = std::pow(2.0, -(cycle - 1));
      for (const auto& [name, sign] : actions[t % groups][static_cast<std::size_t>(key[t])]) {
        const auto& p = *std::find_if(params.begin(), params.end(), [&](const Param& q) { return q.name == name; });
        theta[name] = std::clamp(theta[name] + eta * sf * sign * (p.upper - p.lower), p.lower, p.upper);
      }
    }
    return theta;
  }
};

Outcome update_rule_oracle() {
  const auto start = Clock::now();
  const RawSpace raw(fs::path(GFNADAPT_DATA_DIR) / "crop_space_v1.json");
  const auto base = builtin_space_definition().space;
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  std::size_t checked = 0;
  for (int cycles : {1, 2})
    for (double sf : {0.15, 0.3}) {
      const auto space = base.with_cycles(cycles).with_step_fraction(sf);
      for (int i = 0; i < 2500; ++i) {
        const auto key = fixtures::random_terminal(space, rng);
        std::vector<int> digits(key.size());
        for (std::size_t t = 0; t < key.size(); ++t) digits[t] = key[t];
        const auto want = raw.decode(digits, sf);
        const auto got = decode_state(space, key);
        for (const auto& [name, value] : want) worst = std::max(worst, fixtures::rel_err(got.at(name), value));
        ++checked;
      }
    }
  const double elapsed = seconds_since(start);
  return {worst <= 1e-12 && elapsed < 5.0,
          "keys=" + std::to_string(checked) + " max_rel_err=" + fmt(worst) + " runtime=" + fmt(elapsed) + "s"};
}

// 3 -------------------------------------------------------------------------

double hand_quantile(std::vector<double> v, double level) {
  std::sort(v.begin(), v.end());
  const double pos = level * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

Outcome reward_oracle() {
  const auto config = parse_config("", {});
  const auto problem = build_problem(config);
  const auto fit = fit_reward_quantiles(problem.space, problem.contexts, config.reward);
  const std::size_t contexts = problem.contexts.size();

  // Quantiles recomputed from the enumeration's raw losses.
  std::vector<double> q_lo(contexts), q_hi(contexts);
  for (std::size_t c = 0; c < contexts; ++c) {
    std::vector<double> column;
    for (const auto& r : fit.samples.raw) column.push_back(r[static_cast<Eigen::Index>(c)]);
    q_lo[c] = hand_quantile(column, 0.05);
    q_hi[c] = hand_quantile(column, 0.95);
  }

  std::mt19937_64 rng(99);
  double worst = 0.0;
  bool permutation_exact = true;
  const auto track = [&](double got, double want) {
    const double scale = std::max(std::abs(want), 1e-300);
    worst = std::max(worst, std::abs(got - want) / scale);
  };
  std::vector<StateKey> keys;
  for (int i = 0; i < 100; ++i) keys.push_back(fixtures::random_terminal(problem.space, rng));
  for (double beta : {2.0, 4.0, 8.0}) {
    auto rc = config.reward;
    rc.beta = beta;
    const RewardModel model(problem.space, problem.contexts, rc, fit.table);
    for (const auto& key : keys) {
      const auto rec = model.score(key);
      const auto params = decode_state(problem.space, key);
      std::vector<double> raw(contexts), norm(contexts);
      for (std::size_t c = 0; c < contexts; ++c) {
        const auto& obs = problem.contexts[c];
        const auto sim = simulate(params, obs).values;
        double sum = 0.0;
        for (std::size_t i = 0; i < sim.size(); ++i)
          sum += std::abs(sim[i] - obs.obs_values[i]) / (std::abs(obs.obs_values[i]) + 1e-6);
        raw[c] = sum / static_cast<double>(sim.size());
        norm[c] = (raw[c] - q_lo[c]) / (q_hi[c] - q_lo[c] + 1e-8);
        track(rec.raw[static_cast<Eigen::Index>(c)], raw[c]);
        track(rec.normalized[static_cast<Eigen::Index>(c)], norm[c]);
      }
      auto sorted = norm;
      std::sort(sorted.begin(), sorted.end(), std::greater<>());
      const double mean = std::accumulate(norm.begin(), norm.end(), 0.0) / static_cast<double>(contexts);
      const double tail = (sorted[0] + sorted[1]) / 2.0;
      const double agg = 0.75 * mean + 0.25 * tail;
      track(rec.aggregate, agg);
      track(rec.reward, std::exp(-beta * agg));

      if (beta == 4.0) {
        Eigen::VectorXd perm = rec.normalized;
        std::sort(perm.begin(), perm.end());
        const double reference = aggregate(rec.normalized, 0.25, 2);
        do {
          permutation_exact = permutation_exact && aggregate(perm, 0.25, 2) == reference;
        } while (std::next_permutation(perm.begin(), perm.end()));
      }
    }
  }
  return {worst <= 1e-10 && permutation_exact,
          "terminals=100 betas=2,4,8 max_rel_err=" + fmt(worst) +
              " permutation_invariant=" + (permutation_exact ? "yes" : "no")};
}

// 4 -------------------------------------------------------------------------

Outcome normalization(const LandscapeTable& landscape) {
  const auto space = builtin_space_definition().space;
  Rng rng(5);
  double worst = std::abs(landscape.target_prob.sum() - 1.0);
  for (int trial = 0; trial < 3; ++trial) {
    auto model = make_policy(space, {64, 64}, rng);
    if (trial > 0) model.randomize(rng);
    worst = std::max(worst, std::abs(exact_terminal_distribution(model, space).sum() - 1.0));
  }
  return {worst <= 1e-9 && landscape.size() == 2625, "max |sum - 1| = " + fmt(worst)};
}

// 5 -------------------------------------------------------------------------

Outcome gradient_check() {
  const auto start = Clock::now();
  const auto space = builtin_space_definition().space;
  Rng rng(42);
  auto model = make_policy(space, {8, 8, 8}, rng);
  model.randomize(rng);
  auto batch = sample_paths(model, space, 16, rng, 0.3);
  std::uniform_real_distribution<double> u(-4.0, 0.0);
  for (auto& tr : batch) tr.log_reward = u(rng);
  const auto [loss, grad] = tb_loss_gradient(model, space, batch);
  const double h = 1e-5;
  auto& theta = model.parameters();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + h;
    const double up = tb_loss(model, space, batch);
    theta[i] = saved - h;
    const double down = tb_loss(model, space, batch);
    theta[i] = saved;
    const double numeric = (up - down) / (2 * h);
    const double scale = std::max(std::abs(numeric), std::abs(grad[i]));
    // Coordinates whose true gradient is zero leave only rounding noise.
    if (scale > 1e-7) worst = std::max(worst, std::abs(numeric - grad[i]) / scale);
  }
  const double elapsed = seconds_since(start);
  return {worst <= 1e-4 && elapsed < 10.0,
          "parameters=" + std::to_string(theta.size()) + " max_rel_err=" + fmt(worst) +
              " runtime=" + fmt(elapsed) + "s"};
}

// 6 -------------------------------------------------------------------------

Outcome small_fidelity() {
  const auto start = Clock::now();
  const auto space = fixtures::counts_space({2, 3});
  // log Z = log 2.1 lies within the distance log_z can travel in 2000 steps at this lr.
  const std::vector<double> rewards = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  const double z = std::accumulate(rewards.begin(), rewards.end(), 0.0);
  Eigen::VectorXd target(6);
  for (int i = 0; i < 6; ++i) target[i] = rewards[static_cast<std::size_t>(i)] / z;
  const LogRewardFn log_reward = [&](const StateKey& k) { return std::log(rewards[terminal_index(space, k)]); };
  std::vector<double> l1s;
  for (std::uint64_t seed : {1, 2, 3}) {
    TrainConfig config;
    config.steps = 2000;
    config.batch = 16;
    config.lr = 5e-4;
    config.hidden = {64, 64};
    config.seed = seed;
    const auto trained = train(space, log_reward, config);
    l1s.push_back(l1_distance(exact_terminal_distribution(trained.model, space), target));
  }
  const double elapsed = seconds_since(start);
  const double m = median(l1s);
  return {m <= 0.05 && elapsed < 30.0,
          "median_l1=" + fmt(m) + " (seeds " + fmt(l1s[0]) + ", " + fmt(l1s[1]) + ", " + fmt(l1s[2]) +
              ") runtime=" + fmt(elapsed) + "s"};
}

// Shared pipeline -------------------------------------------------------------

struct Pipeline {
  ExperimentConfig config;
  RunPaths paths;
  double train_seconds = 0.0;
  double total_seconds = 0.0;
  std::string error;
};

std::vector<CommandResult> run_all(const ExperimentConfig& config) {
  std::vector<CommandResult> results;
  results.push_back(cmd_enumerate(config));
  results.push_back(cmd_train(config));
  results.push_back(cmd_sample(config));
  for (const char* m : {"random", "tpe"}) {
    auto c = config;
    c.method = m;
    results.push_back(cmd_baseline(c));
  }
  results.push_back(cmd_report(config));
  return results;
}

Pipeline run_pipeline(const fs::path& out) {
  Pipeline p;
  p.config = parse_config("", {"run.out_dir=" + out.string(), "run.seeds=1,2,3", "run.budget=2000",
                               "gflownet.steps=1000", "gflownet.batch=16", "gflownet.samples=5000"});
  p.paths = run_paths(p.config);
  const auto start = Clock::now();
  try {
    cmd_enumerate(p.config);
    const auto t = Clock::now();
    cmd_train(p.config);
    p.train_seconds = seconds_since(t);
    cmd_sample(p.config);
    for (const char* m : {"random", "tpe"}) {
      auto c = p.config;
      c.method = m;
      cmd_baseline(c);
    }
    cmd_report(p.config);
  } catch (const std::exception& e) {
    p.error = e.what();
  }
  p.total_seconds = seconds_since(start);
  return p;
}

// 7 -------------------------------------------------------------------------

Outcome full_fidelity(const Pipeline& p, const LandscapeTable& landscape) {
  if (!p.error.empty()) return {false, p.error};
  const auto space = build_problem(p.config).space;
  const auto top50 = top_k_indices(landscape.target_prob, 50);
  std::vector<double> l1s, fractions;
  for (auto seed : p.config.seeds) {
    const auto ckpt = load_checkpoint(p.paths.train(seed) / "checkpoint.bin");
    l1s.push_back(l1_distance(exact_terminal_distribution(ckpt.model, space), landscape.target_prob));
    std::set<std::size_t> drawn;
    const auto rows = csv_rows(p.paths.sample(seed) / "samples.csv");
    for (const auto& row : rows) drawn.insert(terminal_index(space, StateKey::parse(row[1])));
    std::size_t hit = 0;
    for (auto i : top50) hit += drawn.count(i);
    fractions.push_back(static_cast<double>(hit) / 50.0);
    if (rows.size() != 5000) return {false, "expected 5000 samples, found " + std::to_string(rows.size())};
  }
  const double l1 = median(l1s), rec = median(fractions);
  return {l1 <= 0.30 && rec >= 0.5 && p.train_seconds < 900.0,
          "median_l1=" + fmt(l1) + " median_top50_recovery=" + fmt(rec) +
              " training_runtime=" + fmt(p.train_seconds) + "s"};
}

// 8 -------------------------------------------------------------------------

std::size_t ascend(const SpaceSpec& space, const Eigen::VectorXd& prob, std::size_t i) {
  for (;;) {
    std::size_t best = i;
    for (const auto& n : neighbors(space, terminal_at(space, i))) {
      const auto j = terminal_index(space, n);
      if (prob[static_cast<Eigen::Index>(j)] > prob[static_cast<Eigen::Index>(best)]) best = j;
    }
    if (best == i) return i;
    i = best;
  }
}

Eigen::VectorXd peaks(const SpaceSpec& space, const std::vector<StateKey>& centers) {
  const auto keys = enumerate_terminals(space);
  Eigen::VectorXd p(static_cast<Eigen::Index>(keys.size()));
  for (std::size_t i = 0; i < keys.size(); ++i) {
    double v = 0.0;
    for (std::size_t c = 0; c < centers.size(); ++c)
      v += std::exp(-1.5 * hamming(keys[i], centers[c])) / static_cast<double>(c + 1);
    p[static_cast<Eigen::Index>(i)] = v;
  }
  return p / p.sum();
}

Outcome basin_analysis(const LandscapeTable& landscape) {
  const auto fixture = fixtures::counts_space({3, 5, 4, 3});
  bool memberships = true;
  std::vector<std::size_t> basin_counts;
  for (const auto& centers : std::vector<std::vector<StateKey>>{{StateKey{1, 2, 3, 0}},
                                                                {StateKey{0, 0, 0, 0}, StateKey{2, 4, 3, 2}}}) {
    const auto prob = peaks(fixture, centers);
    const auto basins = basin_map(prob, fixture);
    basin_counts.push_back(basins.basin_mass.size());
    for (std::size_t i = 0; i < static_cast<std::size_t>(prob.size()); ++i)
      memberships = memberships && basins.mode_of[i] == ascend(fixture, prob, i);
  }

  const auto space = builtin_space_definition().space;
  const auto basins = basin_map(landscape.target_prob, space);
  bool local_max = true;
  for (const auto& [mode, mass] : basins.basin_mass)
    for (auto n : neighbor_indices(space, mode))
      local_max = local_max && landscape.target_prob[static_cast<Eigen::Index>(n)] <=
                                   landscape.target_prob[static_cast<Eigen::Index>(mode)];
  double total = 0.0;
  for (const auto& [mode, mass] : basins.basin_mass) total += mass;
  std::vector<double> recomputed(landscape.size(), 0.0);
  for (std::size_t i = 0; i < landscape.size(); ++i) recomputed[basins.mode_of[i]] += landscape.target_prob[static_cast<Eigen::Index>(i)];
  double partition_err = std::abs(total - landscape.target_prob.sum());
  for (const auto& [mode, mass] : basins.basin_mass) partition_err = std::max(partition_err, std::abs(recomputed[mode] - mass));

  const bool ok = basin_counts == std::vector<std::size_t>{1, 2} && memberships && local_max && partition_err <= 1e-9;
  return {ok, "fixture_basins=" + std::to_string(basin_counts[0]) + "," + std::to_string(basin_counts[1]) +
                  " full_modes=" + std::to_string(basins.basin_mass.size()) +
                  " locally_maximal=" + (local_max ? "yes" : "no") + " partition_err=" + fmt(partition_err)};
}

// 9 -------------------------------------------------------------------------

Outcome harness(const Pipeline& p) {
  if (!p.error.empty()) return {false, p.error};
  const auto summary = p.paths.report() / "summary.csv";
  std::ifstream in(summary);
  std::string line, header;
  std::set<std::string> methods;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header.empty()) {
      header = line;
      continue;
    }
    methods.insert(line.substr(0, line.find(',')));
  }
  std::size_t traces = 0;
  bool budgets = true;
  for (const char* m : {"random", "tpe"})
    for (auto seed : p.config.seeds) {
      const auto path = p.paths.baseline(m, seed) / "trace.csv";
      traces += fs::exists(path);
      budgets = budgets && csv_rows(path).size() == 2000;
    }
  const auto runs = csv_rows(p.paths.report() / "runs.csv");
  const bool ok = header == "method,best_loss,median_top20,mean_hamming_top20,wall_clock" &&
                  methods == std::set<std::string>{"gflownet", "random", "tpe"} && traces == 6 && budgets &&
                  runs.size() == 9 && p.total_seconds < 1800.0;
  return {ok, "methods=" + std::to_string(methods.size()) + " runs=" + std::to_string(runs.size()) +
                  " runtime=" + fmt(p.total_seconds) + "s"};
}

// 10 ------------------------------------------------------------------------

Outcome cache_semantics(const Pipeline& p) {
  if (!p.error.empty()) return {false, p.error};
  std::map<fs::path, std::string> before;
  for (const auto& entry : fs::recursive_directory_iterator(p.paths.root))
    if (entry.is_regular_file()) before[entry.path()] = slurp(entry.path());
  std::uint64_t calls = 0;
  try {
    for (const auto& r : run_all(p.config)) calls += r.simulator_calls;
  } catch (const std::exception& e) {
    return {false, e.what()};
  }
  std::size_t changed = 0, after = 0;
  for (const auto& entry : fs::recursive_directory_iterator(p.paths.root))
    if (entry.is_regular_file()) {
      ++after;
      const auto it = before.find(entry.path());
      changed += it == before.end() || it->second != slurp(entry.path());
    }
  return {calls == 0 && changed == 0 && after == before.size(),
          "simulator_calls=" + std::to_string(calls) + " files=" + std::to_string(before.size()) +
              " changed=" + std::to_string(changed)};
}

// 11 ------------------------------------------------------------------------

Outcome truth_retrievability(const fs::path& out) {
  const auto config = parse_config("", {"run.out_dir=" + out.string(), "data.noise_rel=0"});
  const auto env = open_reward(config);
  const auto landscape = build_landscape(*env.model);
  const auto truth = terminal_index(env.problem.space, env.problem.truth_key);
  const auto top = top_k_indices(landscape.target_prob, 1);
  const double value = landscape.loss[static_cast<Eigen::Index>(truth)];
  const bool is_min = landscape.argmin_loss() == truth;
  const bool rank1 = top[0] == truth;
  const bool zero = std::abs(value) <= 1e-12;
  return {is_min && rank1 && zero, std::string("minimum=") + (is_min ? "yes" : "no") +
                                       " rank1=" + (rank1 ? "yes" : "no") +
                                       " truth_aggregate=" + fmt(value, 6) + " (|value| <= 1e-12: " +
                                       (zero ? "yes" : "no") + ")"};
}

}  // namespace

int main() {
  const auto work = fs::temp_directory_path() / "gfnadapt-acceptance";
  fs::remove_all(work);
  fs::create_directories(work);
  setenv("GFNADAPT_CACHE_DIR", (work / "cache").c_str(), 1);

  int failures = 0;
  const auto report = [&](int id, const std::string& name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " " << name << ": " << o.detail
              << std::endl;
  };

  report(1, "space structure", space_structure);
  report(2, "update rule oracle", update_rule_oracle);
  report(3, "reward pipeline oracle", reward_oracle);

  const auto pipeline = run_pipeline(work / "runs");
  LandscapeTable landscape;
  try {
    landscape = build_landscape(*open_reward(pipeline.config).model);
  } catch (const std::exception& e) {
    std::cerr << "landscape unavailable: " << e.what() << "\n";
  }

  report(4, "exact distribution normalization", [&] { return normalization(landscape); });
  report(5, "gradient check", gradient_check);
  report(6, "learning fidelity (small)", small_fidelity);
  report(7, "learning fidelity (full one-cycle)", [&] { return full_fidelity(pipeline, landscape); });
  report(8, "basin analysis", [&] { return basin_analysis(landscape); });
  report(9, "budget-matched harness", [&] { return harness(pipeline); });
  report(10, "cache semantics", [&] { return cache_semantics(pipeline); });
  report(11, "truth retrievability", [&] { return truth_retrievability(work / "truth"); });

  std::cout << (failures ? std::to_string(failures) + " criteria failed" : "all criteria passed") << std::endl;
  return failures ? 1 : 0;
}
