#include "gfnadapt/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <openssl/evp.h>

#include "json.hpp"

#include "gfnadapt/landscape.hpp"
#include "gfnadapt/metrics.hpp"

namespace gfnadapt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------- parsing

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw ConfigError("config: bad value for " + key + ": '" + value + "'");
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double x = std::stod(v, &used);
    if (used != v.size()) bad_value(key, v);
    return x;
  } catch (const std::logic_error&) {
    bad_value(key, v);
  }
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    long long x = std::stoll(v, &used);
    if (used != v.size()) bad_value(key, v);
    return x;
  } catch (const std::logic_error&) {
    bad_value(key, v);
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  const auto x = to_int(key, v);
  if (x < 0) bad_value(key, v);
  return static_cast<std::uint64_t>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v);
}

template <class T, class F>
std::vector<T> to_list(const std::string& key, const std::string& v, F convert) {
  std::vector<T> out;
  for (const auto& item : split(v, ',')) out.push_back(static_cast<T>(convert(key, item)));
  return out;
}

std::string fmt(double x) {
  std::ostringstream s;
  s << std::setprecision(17) << x;
  return s.str();
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::ostringstream s;
  for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
  return s.str();
}

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::ostringstream s;
  for (unsigned i = 0; i < len; ++i) s << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return s.str();
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact(path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---------------------------------------------------------------- key table

enum class Scope { reward, result, none };

struct Entry {
  const char* key;
  const char* fallback;
  Scope scope;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define GFN_DOUBLE(KEY, DEF, SCOPE, FIELD)                                                   \
  Entry {                                                                                    \
    KEY, DEF, SCOPE, [](ExperimentConfig& c, const std::string& v) { c.FIELD = to_double(KEY, v); }, \
        [](const ExperimentConfig& c) { return fmt(c.FIELD); }                               \
  }
#define GFN_INT(KEY, DEF, SCOPE, FIELD, TYPE)                                                \
  Entry {                                                                                    \
    KEY, DEF, SCOPE,                                                                         \
        [](ExperimentConfig& c, const std::string& v) { c.FIELD = static_cast<TYPE>(to_int(KEY, v)); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.FIELD); }                    \
  }
#define GFN_U64(KEY, DEF, SCOPE, FIELD)                                                      \
  Entry {                                                                                    \
    KEY, DEF, SCOPE, [](ExperimentConfig& c, const std::string& v) { c.FIELD = to_u64(KEY, v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.FIELD); }                    \
  }
#define GFN_STRING(KEY, DEF, SCOPE, FIELD)                                                   \
  Entry {                                                                                    \
    KEY, DEF, SCOPE, [](ExperimentConfig& c, const std::string& v) { c.FIELD = v; },         \
        [](const ExperimentConfig& c) { return c.FIELD; }                                    \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      {"space.file", "", Scope::reward,
       [](ExperimentConfig& c, const std::string& v) { c.space_file = v; },
       [](const ExperimentConfig& c) {
         // Content, not location, identifies the space.
         const std::string text =
             c.space_file.empty() ? std::string(builtin_space_json()) : read_text(c.space_file);
         return "sha256:" + sha256_hex(text);
       }},
      GFN_INT("space.cycles", "1", Scope::reward, cycles, int),
      GFN_DOUBLE("space.step_fraction", "0.3", Scope::reward, step_fraction),
      GFN_DOUBLE("data.noise_rel", "0.03", Scope::reward, noise_rel),
      GFN_U64("data.contexts_seed", "7", Scope::reward, contexts_seed),
      GFN_U64("data.noise_seed", "11", Scope::reward, noise_seed),
      GFN_INT("data.days", "180", Scope::reward, days, int),
      GFN_STRING("data.truth_key", "", Scope::reward, truth_key),
      GFN_DOUBLE("reward.beta", "4", Scope::reward, reward.beta),
      GFN_DOUBLE("reward.lambda", "0.25", Scope::reward, reward.lambda),
      GFN_INT("reward.k", "2", Scope::reward, reward.k, int),
      GFN_DOUBLE("reward.q_lo", "0.05", Scope::reward, reward.lo_level),
      GFN_DOUBLE("reward.q_hi", "0.95", Scope::reward, reward.hi_level),
      GFN_DOUBLE("reward.eps", "1e-8", Scope::reward, reward.eps),
      GFN_DOUBLE("reward.eps_d", "1e-6", Scope::reward, reward.eps_d),
      GFN_U64("reward.enumerable_cap", "100000", Scope::reward, reward.enumerable_cap),
      GFN_INT("reward.warmup", "256", Scope::reward, reward.warmup, int),
      GFN_U64("reward.warmup_seed", "0", Scope::reward, reward.warmup_seed),
      GFN_STRING("method.name", "gflownet", Scope::none, method),
      GFN_INT("gflownet.steps", "1000", Scope::result, train.steps, int),
      GFN_INT("gflownet.batch", "16", Scope::result, train.batch, int),
      GFN_DOUBLE("gflownet.lr", "5e-4", Scope::result, train.lr),
      GFN_DOUBLE("gflownet.log_z_lr", "0", Scope::result, train.log_z_lr),
      {"gflownet.hidden", "256,256,256", Scope::result,
       [](ExperimentConfig& c, const std::string& v) {
         c.train.hidden = to_list<int>("gflownet.hidden", v, to_int);
       },
       [](const ExperimentConfig& c) { return join(c.train.hidden); }},
      GFN_DOUBLE("gflownet.explore_eps", "0.05", Scope::result, train.explore_eps),
      GFN_DOUBLE("gflownet.explore_decay", "0.5", Scope::result, train.explore_decay_fraction),
      GFN_U64("gflownet.samples", "5000", Scope::result, samples),
      GFN_DOUBLE("tpe.gamma", "0.25", Scope::result, tpe.gamma),
      GFN_INT("tpe.n_candidates", "24", Scope::result, tpe.n_candidates, int),
      GFN_INT("tpe.startup", "10", Scope::result, tpe.startup, int),
      GFN_U64("run.budget", "2000", Scope::result, budget),
      {"run.budget_unique", "true", Scope::result,
       [](ExperimentConfig& c, const std::string& v) { c.budget_unique = to_bool("run.budget_unique", v); },
       [](const ExperimentConfig& c) { return std::string(c.budget_unique ? "true" : "false"); }},
      {"run.seeds", "1,2,3", Scope::none,
       [](ExperimentConfig& c, const std::string& v) {
         c.seeds = to_list<std::uint64_t>("run.seeds", v, to_u64);
       },
       [](const ExperimentConfig& c) { return join(c.seeds); }},
      GFN_STRING("run.out_dir", "runs", Scope::none, out_dir),
      GFN_INT("run.workers", "0", Scope::none, workers, unsigned),
      {"report.topk", "1,5,10,20,50,100", Scope::none,
       [](ExperimentConfig& c, const std::string& v) {
         c.topk = to_list<std::size_t>("report.topk", v, to_u64);
       },
       [](const ExperimentConfig& c) { return join(c.topk); }},
      {"report.methods", "gflownet,random,tpe", Scope::none,
       [](ExperimentConfig& c, const std::string& v) { c.methods = split(v, ','); },
       [](const ExperimentConfig& c) { return join(c.methods); }},
      GFN_STRING("report.hamming_source", "evaluated", Scope::none, hamming_source),
  };
  return table;
}

#undef GFN_DOUBLE
#undef GFN_INT
#undef GFN_U64
#undef GFN_STRING

const Entry* find_entry(const std::string& key) {
  for (const auto& e : entries())
    if (key == e.key) return &e;
  return nullptr;
}

std::string canonical_lines(const ExperimentConfig& c, bool reward_only) {
  std::ostringstream s;
  for (const auto& e : entries()) {
    if (e.scope == Scope::none || (reward_only && e.scope != Scope::reward)) continue;
    s << e.key << '=' << e.get(c) << '\n';
  }
  return s.str();
}

// ---------------------------------------------------------------- artifacts

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
    if (!out) throw std::runtime_error("write failed: " + path.string());
  }
  fs::rename(tmp, path);
}

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

/// Wall-clock sidecars are written once so reruns leave outputs untouched.
void record_timing(const fs::path& path, const std::string& hash, double seconds) {
  if (fs::exists(path)) return;
  write_json(path, {{"config_hash", hash}, {"seconds", seconds}});
}

double read_timing(const fs::path& path) {
  return json::parse(read_text(path)).at("seconds").get<double>();
}

std::vector<std::string> preamble(const ExperimentConfig& c, const std::string& command) {
  return {"config_hash=" + c.hash(), "command=" + command};
}

struct CsvTable {
  std::map<std::string, std::string> meta;  // k=v tokens from '#' lines
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  CsvTable t;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ss(line.substr(1));
      std::string token;
      while (ss >> token) {
        const auto eq = token.find('=');
        if (eq != std::string::npos) t.meta[token.substr(0, eq)] = token.substr(eq + 1);
      }
      continue;
    }
    std::vector<std::string> cells;
    std::istringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (t.header.empty()) t.header = std::move(cells);
    else t.rows.push_back(std::move(cells));
  }
  return t;
}

void require_hash(const CsvTable& t, const fs::path& path, const std::string& hash) {
  const auto it = t.meta.find("config_hash");
  if (it == t.meta.end() || it->second != hash)
    throw std::runtime_error("refusing to mix configurations: " + path.string() +
                             " was produced under config " +
                             (it == t.meta.end() ? std::string("<none>") : it->second) +
                             ", expected " + hash);
}

std::size_t column(const CsvTable& t, const std::string& name, const fs::path& path) {
  auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) throw std::runtime_error(path.string() + ": missing column " + name);
  return static_cast<std::size_t>(it - t.header.begin());
}

struct KeyedLosses {
  std::vector<StateKey> keys;
  std::vector<double> losses;
};

KeyedLosses read_keyed(const fs::path& path, const std::string& hash) {
  const auto t = read_csv(path);
  require_hash(t, path, hash);
  const auto k = column(t, "key", path), l = column(t, "loss", path);
  KeyedLosses out;
  for (const auto& row : t.rows) {
    out.keys.push_back(StateKey::parse(row.at(k)));
    out.losses.push_back(std::stod(row.at(l)));
  }
  return out;
}

std::string keyed_csv(const std::vector<std::string>& pre, const std::string& index_name,
                      const std::vector<StateKey>& keys, const std::vector<double>& losses) {
  std::ostringstream s;
  for (const auto& line : pre) s << "# " << line << '\n';
  s << index_name << ",key,loss\n" << std::setprecision(17);
  for (std::size_t i = 0; i < keys.size(); ++i)
    s << i + 1 << ',' << keys[i].str() << ',' << losses[i] << '\n';
  return s.str();
}

bool enumerable(const SpaceSpec& space, const RewardConfig& reward) {
  const auto n = space.terminal_count();
  return n && *n <= reward.enumerable_cap;
}

std::string seed_dir(std::uint64_t seed) { return "seed-" + std::to_string(seed); }

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Rng sampling_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    0x53414dU};
  return Rng(seq);
}

}  // namespace

// ---------------------------------------------------------------- config

std::string ExperimentConfig::canonical() const { return canonical_lines(*this, false); }

std::string ExperimentConfig::hash() const { return sha256_hex(canonical()).substr(0, 16); }

std::string ExperimentConfig::reward_hash() const {
  return sha256_hex(canonical_lines(*this, true)).substr(0, 16);
}

void ExperimentConfig::validate() const {
  const auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config: " + what);
  };
  require(cycles >= 1, "space.cycles must be >= 1");
  require(step_fraction > 0.0 && step_fraction <= 1.0, "space.step_fraction must lie in (0, 1]");
  require(noise_rel >= 0.0, "data.noise_rel must be >= 0");
  require(days >= kObservationInterval, "data.days must cover at least one observation");
  require(reward.beta > 0.0, "reward.beta must be positive");
  require(reward.lambda >= 0.0 && reward.lambda <= 1.0, "reward.lambda must lie in [0, 1]");
  require(reward.k >= 1 && reward.k <= kContextCount, "reward.k must lie in [1, contexts]");
  require(reward.lo_level >= 0.0 && reward.lo_level < reward.hi_level && reward.hi_level <= 1.0,
          "reward quantile levels must satisfy 0 <= q_lo < q_hi <= 1");
  require(reward.eps > 0.0 && reward.eps_d > 0.0, "reward guards must be positive");
  require(reward.warmup >= 1, "reward.warmup must be >= 1");
  require(method == "gflownet" || method == "random" || method == "tpe",
          "method.name must be gflownet, random or tpe");
  require(train.steps >= 0 && train.batch >= 1, "gflownet.steps >= 0 and gflownet.batch >= 1");
  require(train.lr > 0.0, "gflownet.lr must be positive");
  require(!train.hidden.empty(), "gflownet.hidden must list at least one width");
  for (int w : train.hidden) require(w >= 1, "gflownet.hidden widths must be positive");
  require(train.explore_eps >= 0.0 && train.explore_eps <= 1.0,
          "gflownet.explore_eps must lie in [0, 1]");
  require(tpe.gamma > 0.0 && tpe.gamma < 1.0, "tpe.gamma must lie in (0, 1)");
  require(tpe.n_candidates >= 1, "tpe.n_candidates must be >= 1");
  require(tpe.startup >= 1, "tpe.startup must be >= 1");
  require(!seeds.empty(), "run.seeds must list at least one seed");
  require(!out_dir.empty(), "run.out_dir must be set");
  for (const auto& m : methods)
    require(m == "gflownet" || m == "random" || m == "tpe", "report.methods: unknown method " + m);
  require(hamming_source == "evaluated" || hamming_source == "samples",
          "report.hamming_source must be evaluated or samples");
}

ExperimentConfig parse_config(const std::string& ini_text,
                              const std::vector<std::string>& overrides) {
  std::map<std::string, std::string> values;
  for (const auto& e : entries()) values[e.key] = e.fallback;

  boost::property_tree::ptree tree;
  try {
    std::istringstream in(ini_text);
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& err) {
    throw ConfigError(std::string("config: ") + err.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("config: key outside a section: " + section);
    for (const auto& [name, value] : body) {
      const auto key = section + "." + name;
      if (!find_entry(key)) throw ConfigError("config: unknown key " + key);
      values[key] = trim(value.data());
    }
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override must be section.key=value: " + o);
    const auto key = trim(o.substr(0, eq));
    if (!find_entry(key)) throw ConfigError("config: unknown key " + key);
    values[key] = trim(o.substr(eq + 1));
  }

  ExperimentConfig config;
  for (const auto& e : entries()) e.set(config, values[e.key]);
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::string text;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::ostringstream s;
    s << in.rdbuf();
    text = s.str();
  }
  return parse_config(text, overrides);
}

std::string default_config_ini() {
  std::ostringstream s;
  std::string section;
  for (const auto& e : entries()) {
    const std::string key = e.key;
    const auto dot = key.find('.');
    if (key.substr(0, dot) != section) {
      section = key.substr(0, dot);
      s << (s.tellp() > 0 ? "\n" : "") << '[' << section << "]\n";
    }
    s << key.substr(dot + 1) << " = " << e.fallback << '\n';
  }
  return s.str();
}

// ---------------------------------------------------------------- problem

StateKey lift_truth_key(const SpaceSpec& space, const StateKey& truth) {
  if (truth.size() > space.slot_count())
    throw std::invalid_argument("truth key " + truth.str() + " is longer than the slot count");
  StateKey lifted = truth;
  while (lifted.size() < space.slot_count()) lifted.push(0);
  space.validate(lifted);
  return lifted;
}

Problem build_problem(const ExperimentConfig& config) {
  SpaceDefinition def;
  try {
    def = config.space_file.empty() ? builtin_space_definition()
                                    : load_space_definition(config.space_file);
  } catch (const std::exception& err) {
    throw ConfigError(std::string("space definition: ") + err.what());
  }
  Problem p;
  try {
    p.space = def.space.with_cycles(config.cycles).with_step_fraction(config.step_fraction);
    const auto truth = config.truth_key.empty() ? def.truth_key : StateKey::parse(config.truth_key);
    p.truth_key = lift_truth_key(p.space, truth);
  } catch (const std::invalid_argument& err) {
    throw ConfigError(std::string("config: ") + err.what());
  }
  auto contexts = generate_contexts(config.contexts_seed, config.days);
  p.contexts = synthesize_observations(std::move(contexts), decode_state(p.space, p.truth_key),
                                       config.noise_rel, config.noise_seed);
  return p;
}

fs::path RunPaths::train(std::uint64_t seed) const { return root / "train" / seed_dir(seed); }
fs::path RunPaths::sample(std::uint64_t seed) const { return root / "sample" / seed_dir(seed); }
fs::path RunPaths::baseline(const std::string& method, std::uint64_t seed) const {
  return root / "baseline" / method / seed_dir(seed);
}

RunPaths run_paths(const ExperimentConfig& config) {
  RunPaths p;
  p.root = fs::path(config.out_dir) / config.hash();
  const char* env = std::getenv("GFNADAPT_CACHE_DIR");
  p.cache = (env && *env) ? fs::path(env) : fs::path(config.out_dir) / "cache";
  return p;
}

RewardEnvironment open_reward(const ExperimentConfig& config) {
  RewardEnvironment env;
  env.problem = build_problem(config);
  const auto paths = run_paths(config);
  fs::create_directories(paths.cache);
  const auto tag = config.reward_hash();
  const auto& space = env.problem.space;
  const auto contexts = env.problem.contexts.size();

  auto cache = std::make_shared<ScoreCache>(paths.cache / (tag + ".scores"), space.slot_count(),
                                            contexts, "gfnadapt-reward:" + tag);
  const auto qpath = paths.cache / (tag + ".quantiles.json");
  if (fs::exists(qpath)) {
    auto table = QuantileTable::from_json(json::parse(read_text(qpath)));
    env.model = std::make_unique<RewardModel>(space, env.problem.contexts, config.reward,
                                              std::move(table), cache);
  } else {
    auto fit = fit_reward_quantiles(space, env.problem.contexts, config.reward, config.workers);
    env.fit_simulations = fit.samples.keys.size() * contexts;
    env.model = std::make_unique<RewardModel>(space, env.problem.contexts, config.reward,
                                              fit.table, cache);
    env.model->prime(fit.samples);
    auto j = fit.table.to_json();
    j["config_hash"] = tag;
    j["enumerated"] = fit.enumerated;
    j["samples"] = fit.samples.keys.size();
    write_json(qpath, j);
  }
  return env;
}

std::vector<StateKey> gflownet_budget_keys(const std::vector<StateKey>& training_keys,
                                           const std::vector<StateKey>& sample_keys,
                                           std::size_t budget) {
  std::vector<StateKey> out;
  std::unordered_set<StateKey, StateKeyHash> seen;
  for (const auto* source : {&training_keys, &sample_keys})
    for (const auto& key : *source) {
      if (out.size() >= budget) return out;
      if (seen.insert(key).second) out.push_back(key);
    }
  return out;
}

// ---------------------------------------------------------------- commands

CommandResult cmd_enumerate(const ExperimentConfig& config) {
  auto env = open_reward(config);
  const auto& space = env.problem.space;
  if (!enumerable(space, config.reward))
    throw ConfigError("enumerate: terminal count exceeds reward.enumerable_cap (" +
                      std::to_string(config.reward.enumerable_cap) + ")");
  const auto paths = run_paths(config);
  const auto dir = paths.enumerate();
  const auto hash = config.hash();

  const auto table = build_landscape(*env.model, config.workers);
  const auto basins = basin_map(table.target_prob, space);
  const auto grid = project_grid(table.target_prob, space, &basins);

  CommandResult result;
  std::ostringstream landscape_csv, basin_csv;
  write_landscape_csv(landscape_csv, table, basins, preamble(config, "enumerate"));
  write_basin_csv(basin_csv, table, basins, preamble(config, "enumerate"));
  write_file(dir / "landscape.csv", landscape_csv.str());
  write_file(dir / "basins.csv", basin_csv.str());
  auto grid_json = grid.to_json(space);
  grid_json["config_hash"] = hash;
  write_json(dir / "grid.json", grid_json);

  const auto best = table.argmin_loss();
  const auto truth_index = terminal_index(space, env.problem.truth_key);
  const auto ranked = ranked_pairs(table.target_prob, table.target_prob);
  std::size_t truth_rank = 0;
  for (const auto& r : ranked)
    if (r.index == truth_index) truth_rank = r.rank;
  json top = json::array();
  for (std::size_t r = 0; r < std::min<std::size_t>(10, ranked.size()); ++r)
    top.push_back({{"key", table.keys[ranked[r].index].str()},
                   {"loss", table.loss[static_cast<Eigen::Index>(ranked[r].index)]},
                   {"target_prob", ranked[r].exact}});
  write_json(dir / "summary.json",
             {{"config_hash", hash},
              {"terminals", table.size()},
              {"z", table.z},
              {"l_star", table.loss[static_cast<Eigen::Index>(best)]},
              {"argmin_key", table.keys[best].str()},
              {"truth_key", env.problem.truth_key.str()},
              {"truth_loss", table.loss[static_cast<Eigen::Index>(truth_index)]},
              {"truth_rank", truth_rank},
              {"modes", basins.basin_mass.size()},
              {"grid_rows", grid.mass.rows()},
              {"grid_cols", grid.mass.cols()},
              {"top", top}});

  result.outputs = {dir / "landscape.csv", dir / "basins.csv", dir / "grid.json", dir / "summary.json"};
  result.messages.push_back(std::to_string(table.size()) + " terminals, " +
                            std::to_string(basins.basin_mass.size()) + " modes, best " +
                            table.keys[best].str() + " (loss " + fmt(table.loss[static_cast<Eigen::Index>(best)]) + ")");
  result.simulator_calls = env.simulator_calls();
  return result;
}

CommandResult cmd_train(const ExperimentConfig& config) {
  auto env = open_reward(config);
  const auto& space = env.problem.space;
  const auto paths = run_paths(config);
  const auto hash = config.hash();
  const double beta = config.reward.beta;
  const LogRewardFn log_reward = [&](const StateKey& key) {
    return -beta * env.model->score(key).aggregate;
  };

  CommandResult result;
  for (const auto seed : config.seeds) {
    const auto dir = paths.train(seed);
    auto train_config = config.train;
    train_config.seed = seed;
    const auto start = std::chrono::steady_clock::now();
    auto trained = train(space, log_reward, train_config);
    const double elapsed = seconds_since(start);

    save_checkpoint(dir / "checkpoint.bin", {trained.model, hash, trained.rng_state});

    std::ostringstream log;
    for (const auto& line : preamble(config, "train")) log << "# " << line << '\n';
    log << "# seed=" << seed << '\n' << "step,tb_loss,log_z,unique_terminals\n" << std::setprecision(17);
    for (const auto& row : trained.log)
      log << row.step << ',' << row.tb_loss << ',' << row.log_z << ',' << row.unique_terminals << '\n';
    write_file(dir / "train_log.csv", log.str());

    std::vector<double> losses;
    for (const auto& key : trained.first_seen) losses.push_back(env.model->score(key).aggregate);
    auto pre = preamble(config, "train");
    pre.push_back("seed=" + std::to_string(seed));
    write_file(dir / "train_evals.csv", keyed_csv(pre, "order", trained.first_seen, losses));
    record_timing(dir / "timing.json", hash, elapsed);

    result.outputs.push_back(dir / "checkpoint.bin");
    std::ostringstream msg;
    msg << "seed " << seed << ": final tb_loss "
        << (trained.log.empty() ? 0.0 : trained.log.back().tb_loss) << ", log_z "
        << trained.model.log_z() << ", " << trained.first_seen.size() << " distinct terminals";
    result.messages.push_back(msg.str());
  }
  result.simulator_calls = env.simulator_calls();
  return result;
}

CommandResult cmd_sample(const ExperimentConfig& config) {
  auto env = open_reward(config);
  const auto& space = env.problem.space;
  const auto paths = run_paths(config);
  const auto hash = config.hash();

  CommandResult result;
  for (const auto seed : config.seeds) {
    const auto ckpt_path = paths.train(seed) / "checkpoint.bin";
    if (!fs::exists(ckpt_path)) throw MissingArtifact(ckpt_path);
    const auto ckpt = load_checkpoint(ckpt_path);
    if (ckpt.config_hash != hash)
      throw std::runtime_error("refusing to mix configurations: " + ckpt_path.string() +
                               " was produced under config " + ckpt.config_hash);
    const auto start = std::chrono::steady_clock::now();
    auto rng = sampling_rng(seed);
    const auto keys = sample_terminals(ckpt.model, space, config.samples, rng);
    std::vector<double> losses(keys.size());
    parallel_for(keys.size(), config.workers,
                 [&](std::size_t i) { losses[i] = env.model->score(keys[i]).aggregate; });
    const double elapsed = seconds_since(start);

    const auto dir = paths.sample(seed);
    auto pre = preamble(config, "sample");
    pre.push_back("seed=" + std::to_string(seed));
    write_file(dir / "samples.csv", keyed_csv(pre, "draw", keys, losses));
    record_timing(dir / "timing.json", hash, elapsed);
    result.outputs.push_back(dir / "samples.csv");
    result.messages.push_back("seed " + std::to_string(seed) + ": " + std::to_string(keys.size()) +
                              " samples, best loss " +
                              fmt(keys.empty() ? 0.0 : *std::min_element(losses.begin(), losses.end())));
  }
  result.simulator_calls = env.simulator_calls();
  return result;
}

CommandResult cmd_baseline(const ExperimentConfig& config) {
  if (config.method == "gflownet")
    throw ConfigError("baseline: method.name must be random or tpe (use train for gflownet)");
  auto env = open_reward(config);
  const auto& space = env.problem.space;
  const auto paths = run_paths(config);
  const auto hash = config.hash();
  const auto loss = loss_function(*env.model);
  const SearchBudget budget{config.budget, config.budget_unique};

  CommandResult result;
  for (const auto seed : config.seeds) {
    const auto start = std::chrono::steady_clock::now();
    const auto trace = config.method == "random" ? random_search(space, loss, budget, seed)
                                                 : tpe_search(space, loss, budget, seed, config.tpe);
    const double elapsed = seconds_since(start);
    const auto dir = paths.baseline(config.method, seed);
    std::ostringstream csv;
    write_trace_csv(csv, trace, preamble(config, "baseline"));
    write_file(dir / "trace.csv", csv.str());
    record_timing(dir / "timing.json", hash, elapsed);
    result.outputs.push_back(dir / "trace.csv");
    result.messages.push_back(
        config.method + " seed " + std::to_string(seed) + ": " + std::to_string(trace.keys.size()) +
        " evaluations, best loss " +
        fmt(trace.losses.empty() ? 0.0 : *std::min_element(trace.losses.begin(), trace.losses.end())));
  }
  result.simulator_calls = env.simulator_calls();
  return result;
}

CommandResult cmd_report(const ExperimentConfig& config) {
  auto env = open_reward(config);
  const auto& space = env.problem.space;
  const auto paths = run_paths(config);
  const auto hash = config.hash();
  const auto dir = paths.report();
  CommandResult result;

  std::optional<LandscapeTable> landscape;
  std::optional<BasinAssignment> basins;
  if (enumerable(space, config.reward)) {
    const auto summary = paths.enumerate() / "summary.json";
    if (!fs::exists(summary)) throw MissingArtifact(summary);
    if (json::parse(read_text(summary)).at("config_hash") != hash)
      throw std::runtime_error("refusing to mix configurations: " + summary.string());
    landscape = build_landscape(*env.model, config.workers);
    basins = basin_map(landscape->target_prob, space);
  }

  struct Run {
    std::string method;
    std::uint64_t seed;
    KeyedLosses evaluated;
    KeyedLosses samples;  // gflownet only
    double wall_clock;
  };
  std::vector<Run> runs;
  for (const auto& method : config.methods) {
    for (const auto seed : config.seeds) {
      Run run{method, seed, {}, {}, 0.0};
      if (method == "gflownet") {
        const auto evals_path = paths.train(seed) / "train_evals.csv";
        const auto samples_path = paths.sample(seed) / "samples.csv";
        const auto training = read_keyed(evals_path, hash);
        run.samples = read_keyed(samples_path, hash);
        std::unordered_map<StateKey, double, StateKeyHash> loss_of;
        for (const KeyedLosses* src : {&training, static_cast<const KeyedLosses*>(&run.samples)})
          for (std::size_t i = 0; i < src->keys.size(); ++i) loss_of.try_emplace(src->keys[i], src->losses[i]);
        run.evaluated.keys = gflownet_budget_keys(training.keys, run.samples.keys, config.budget);
        for (const auto& key : run.evaluated.keys) run.evaluated.losses.push_back(loss_of.at(key));
        run.wall_clock = read_timing(paths.train(seed) / "timing.json") +
                         read_timing(paths.sample(seed) / "timing.json");
      } else {
        const auto trace_path = paths.baseline(method, seed) / "trace.csv";
        run.evaluated = read_keyed(trace_path, hash);
        run.wall_clock = read_timing(paths.baseline(method, seed) / "timing.json");
      }
      if (run.evaluated.keys.empty())
        throw std::runtime_error(method + " seed " + std::to_string(seed) + ": no evaluations");
      runs.push_back(std::move(run));
    }
  }

  // Exact minimum when enumerable, otherwise the best loss any run found.
  double l_star = std::numeric_limits<double>::infinity();
  if (landscape) {
    l_star = landscape->loss[static_cast<Eigen::Index>(landscape->argmin_loss())];
  } else {
    for (const auto& run : runs)
      for (double l : run.evaluated.losses) l_star = std::min(l_star, l);
  }

  std::vector<RetrievalReport> reports;
  const auto pre = preamble(config, "report");
  for (const auto& run : runs) {
    const bool use_samples = run.method == "gflownet" && config.hamming_source == "samples";
    auto report = make_report(run.method, run.seed, hash, run.evaluated.keys, run.evaluated.losses,
                              l_star, config.reward.beta, landscape ? &*landscape : nullptr,
                              config.topk, run.wall_clock);
    if (use_samples) {
      const auto s = top20_stats(run.samples.keys, run.samples.losses);
      report.median_top20_loss = s.median_loss;
      report.mean_hamming_top20 = s.mean_hamming;
      report.top20_deficient = s.deficient;
    }
    std::ostringstream bsf;
    write_best_so_far_csv(bsf, report, pre);
    write_file(dir / "best_so_far" / (run.method + "-" + seed_dir(run.seed) + ".csv"), bsf.str());
    reports.push_back(std::move(report));
  }

  const auto rows = compare_methods(reports);
  std::ostringstream summary;
  write_summary_csv(summary, rows, pre);
  write_file(dir / "summary.csv", summary.str());

  std::ostringstream per_run;
  for (const auto& line : pre) per_run << "# " << line << '\n';
  per_run << "method,seed,best_loss,median_top20,mean_hamming_top20,top20_deficient,wall_clock,"
             "evaluations,final_gap\n"
          << std::setprecision(17);
  for (const auto& r : reports)
    per_run << r.method << ',' << r.seed << ',' << r.best_loss << ',' << r.median_top20_loss << ','
            << r.mean_hamming_top20 << ',' << (r.top20_deficient ? 1 : 0) << ',' << r.wall_clock
            << ',' << r.best_so_far.size() << ',' << r.best_so_far.back().gap << '\n';
  write_file(dir / "runs.csv", per_run.str());

  auto manifest = summary_manifest(hash, reports, rows);
  manifest["seeds"] = config.seeds;
  manifest["l_star"] = l_star;
  manifest["l_star_exact"] = landscape.has_value();

  // Distribution fidelity of each trained policy against the exact target.
  if (landscape && std::find(config.methods.begin(), config.methods.end(), "gflownet") !=
                       config.methods.end()) {
    std::ostringstream l1_csv;
    for (const auto& line : pre) l1_csv << "# " << line << '\n';
    l1_csv << "seed,l1,top50_recovered,top50_fraction,samples\n" << std::setprecision(17);
    json fidelity = json::array();
    const std::size_t top = std::min<std::size_t>(50, landscape->size());
    for (const auto& run : runs) {
      if (run.method != "gflownet") continue;
      const auto ckpt_path = paths.train(run.seed) / "checkpoint.bin";
      if (!fs::exists(ckpt_path)) throw MissingArtifact(ckpt_path);
      const auto ckpt = load_checkpoint(ckpt_path);
      const auto learned = exact_terminal_distribution(ckpt.model, space, config.reward.enumerable_cap);
      const double l1 = l1_distance(learned, landscape->target_prob);
      const auto recovered = topk_recovery(run.samples.keys, *landscape, {top}).front().count;
      l1_csv << run.seed << ',' << l1 << ',' << recovered << ','
             << static_cast<double>(recovered) / static_cast<double>(top) << ','
             << run.samples.keys.size() << '\n';
      fidelity.push_back({{"seed", run.seed},
                          {"l1", l1},
                          {"top50_recovered", recovered},
                          {"top50_fraction", static_cast<double>(recovered) / static_cast<double>(top)}});

      std::ostringstream ranked;
      for (const auto& line : pre) ranked << "# " << line << '\n';
      ranked << "rank,key,exact,learned\n" << std::setprecision(17);
      for (const auto& p : ranked_pairs(landscape->target_prob, learned))
        ranked << p.rank << ',' << landscape->keys[p.index].str() << ',' << p.exact << ','
               << p.learned << '\n';
      write_file(dir / ("ranked_" + seed_dir(run.seed) + ".csv"), ranked.str());

      auto grid = project_grid(learned, space, &*basins).to_json(space);
      grid["config_hash"] = hash;
      grid["distribution"] = "learned";
      grid["seed"] = run.seed;
      write_json(dir / ("grid_" + seed_dir(run.seed) + ".json"), grid);
      result.messages.push_back("gflownet seed " + std::to_string(run.seed) + ": L1 " + fmt(l1) +
                                ", top-" + std::to_string(top) + " recovered " +
                                std::to_string(recovered));
    }
    write_file(dir / "l1.csv", l1_csv.str());
    manifest["fidelity"] = fidelity;
  }
  write_json(dir / "manifest.json", manifest);

  for (const auto& r : rows) {
    std::ostringstream msg;
    msg << r.method << ": best " << r.best_loss.mean << " ± " << r.best_loss.std << ", median top-20 "
        << r.median_top20.mean << ", hamming " << r.mean_hamming_top20.mean;
    result.messages.push_back(msg.str());
  }
  result.outputs = {dir / "summary.csv", dir / "runs.csv", dir / "manifest.json"};
  result.simulator_calls = env.simulator_calls();
  return result;
}

}  // namespace gfnadapt
