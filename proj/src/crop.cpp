#include "gfnadapt/crop.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace gfnadapt {

namespace {

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Initial masses, kg m-2.
constexpr double kLeafInit = 0.05;
constexpr double kStemInit = 0.02;
constexpr double kExtinction = 0.7;
constexpr double kLeafShare = 0.7;  // vegetative split leaf:stem = 0.7:0.3
constexpr double kBaseTemperature = 10.0;

struct Regime {
  double t_setpoint;  // degC, 24 h mean
  double day_offset;  // degC above the 24 h mean during the light period
  double light_mean;  // mol m-2 d-1
  double light_amp;
  double co2;         // ppm
};

// Each compartment follows its own control strategy.
constexpr Regime kRegimes[kContextCount] = {
    {19.0, 2.5, 14.0, 6.0, 450.0},  {21.0, 3.0, 16.0, 7.0, 650.0},
    {23.0, 3.5, 18.0, 8.0, 850.0},  {20.0, 4.0, 20.0, 9.0, 1000.0},
    {22.5, 2.0, 12.0, 5.0, 550.0},  {24.0, 3.0, 15.0, 6.0, 750.0},
};

}  // namespace

void ContextDataset::validate() const {
  if (days < 1) throw std::invalid_argument("context: horizon must be positive");
  if (static_cast<int>(forcing.size()) != days)
    throw std::invalid_argument("context " + std::to_string(context_id) +
                                ": forcing length differs from horizon");
  for (std::size_t i = 0; i < obs_times.size(); ++i) {
    if (obs_times[i] < 1 || obs_times[i] > days)
      throw std::invalid_argument("context: observation time outside horizon");
    if (i > 0 && obs_times[i] <= obs_times[i - 1])
      throw std::invalid_argument("context: observation times must increase strictly");
  }
  if (!obs_values.empty()) {
    if (obs_values.size() != obs_times.size())
      throw std::invalid_argument("context: obs_values and obs_times differ in length");
    for (std::size_t i = 0; i < obs_values.size(); ++i) {
      if (!(obs_values[i] >= 0.0)) throw std::invalid_argument("context: negative observation");
      if (i > 0 && obs_values[i] < obs_values[i - 1])
        throw std::invalid_argument("context: observations must be non-decreasing");
    }
  }
}

CropParameters CropParameters::from(const ParameterVector& params) {
  auto get = [&](std::string_view name) {
    auto i = params.index_of(name);
    if (!i) throw std::invalid_argument("simulator parameter missing: " + std::string(name));
    return params.values[static_cast<Eigen::Index>(*i)];
  };
  return CropParameters{
      get("LAI_max"),  get("SLA"),    get("n_plants"), get("P_max"),    get("alpha_light"),
      get("co2_half"), get("T_opt"),  get("T_width"),  get("s_sharp"),  get("TS_start"),
      get("TS_end"),   get("dev_rate"), get("rg_fruit"), get("c_maint"), get("Q10")};
}

double temperature_inhibition(double temperature, double t_opt, double t_width, double s_sharp) {
  return logistic(s_sharp * (temperature - (t_opt - t_width))) *
         logistic(-s_sharp * (temperature - (t_opt + t_width)));
}

SimTrajectory simulate(const CropParameters& p, const ContextDataset& context) {
  if (static_cast<int>(context.forcing.size()) < context.days)
    throw std::invalid_argument("context " + std::to_string(context.context_id) +
                                ": forcing shorter than horizon");

  double leaf = kLeafInit, stem = kStemInit, fruit = 0.0, thermal_sum = 0.0;
  SimTrajectory out;
  out.values.reserve(context.obs_times.size());
  std::size_t next_obs = 0;

  for (int day = 1; day <= context.days && next_obs < context.obs_times.size(); ++day) {
    const DayForcing& f = context.forcing[static_cast<std::size_t>(day - 1)];
    if (!std::isfinite(f.t_day) || !std::isfinite(f.t_24) || !std::isfinite(f.light) ||
        !std::isfinite(f.co2))
      throw std::invalid_argument("context " + std::to_string(context.context_id) +
                                  ": non-finite forcing on day " + std::to_string(day));

    const double lai = std::min(p.lai_max, p.sla * p.n_plants * leaf);
    const double f_light = 1.0 - std::exp(-kExtinction * lai);
    const double f_co2 = f.co2 / (f.co2 + p.co2_half);
    const double assimilation =
        p.p_max * (1.0 - std::exp(-p.alpha_light * f.light / p.p_max)) * f_light * f_co2 *
        temperature_inhibition(f.t_day, p.t_opt, p.t_width, p.s_sharp) *
        temperature_inhibition(f.t_24, p.t_opt, p.t_width, p.s_sharp);
    const double maintenance =
        p.c_maint * (fruit + leaf + stem) * std::pow(p.q10, (f.t_24 - 25.0) / 10.0);

    thermal_sum += p.dev_rate * std::max(0.0, f.t_24 - kBaseTemperature);
    double fruit_fraction = 0.0;
    if (thermal_sum >= p.ts_end) {
      fruit_fraction = p.rg_fruit;
    } else if (thermal_sum >= p.ts_start) {
      fruit_fraction = p.rg_fruit * (thermal_sum - p.ts_start) / (p.ts_end - p.ts_start);
    }

    const double net = std::max(0.0, assimilation - maintenance);
    fruit += fruit_fraction * net;
    leaf += kLeafShare * (1.0 - fruit_fraction) * net;
    stem += (1.0 - kLeafShare) * (1.0 - fruit_fraction) * net;

    while (next_obs < context.obs_times.size() && context.obs_times[next_obs] == day) {
      out.values.push_back(fruit);
      ++next_obs;
    }
  }
  if (out.values.size() != context.obs_times.size())
    throw std::invalid_argument("context " + std::to_string(context.context_id) +
                                ": observation time beyond horizon");
  return out;
}

SimTrajectory simulate(const ParameterVector& params, const ContextDataset& context) {
  return simulate(CropParameters::from(params), context);
}

std::vector<ContextDataset> generate_contexts(std::uint64_t seed, int days) {
  if (days < 1) throw std::invalid_argument("generate_contexts: horizon must be positive");
  std::vector<ContextDataset> out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  constexpr double two_pi = 2.0 * std::numbers::pi;

  for (int c = 0; c < kContextCount; ++c) {
    const Regime& r = kRegimes[c];
    ContextDataset ctx;
    ctx.context_id = c + 1;
    ctx.days = days;
    ctx.forcing.reserve(static_cast<std::size_t>(days));
    for (int d = 1; d <= days; ++d) {
      // Season runs from late winter into summer.
      const double season = std::sin(two_pi * (d - 45.0) / 365.0);
      DayForcing f;
      f.t_24 = r.t_setpoint + 1.5 * season + 0.8 * normal(rng);
      f.t_day = f.t_24 + r.day_offset + 0.5 * normal(rng);
      f.light = std::max(0.0, r.light_mean + r.light_amp * season +
                                  0.15 * r.light_mean * normal(rng));
      f.co2 = std::max(300.0, r.co2 + 30.0 * normal(rng));
      ctx.forcing.push_back(f);
    }
    for (int t = kObservationInterval; t <= days; t += kObservationInterval)
      ctx.obs_times.push_back(t);
    out.push_back(std::move(ctx));
  }
  return out;
}

std::vector<ContextDataset> synthesize_observations(std::vector<ContextDataset> contexts,
                                                    const ParameterVector& truth,
                                                    double noise_rel, std::uint64_t seed) {
  if (!(noise_rel >= 0.0)) throw std::invalid_argument("noise_rel must be non-negative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto params = CropParameters::from(truth);
  for (auto& ctx : contexts) {
    auto sim = simulate(params, ctx);
    ctx.obs_values.resize(sim.values.size());
    double running = 0.0;
    for (std::size_t i = 0; i < sim.values.size(); ++i) {
      double y = sim.values[i];
      if (noise_rel > 0.0) y *= 1.0 + noise_rel * normal(rng);
      running = std::max(running, std::max(0.0, y));
      ctx.obs_values[i] = running;
    }
  }
  return contexts;
}

nlohmann::json contexts_to_json(const std::vector<ContextDataset>& contexts) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& ctx : contexts) {
    nlohmann::json forcing = nlohmann::json::array();
    for (const auto& f : ctx.forcing) forcing.push_back({f.t_day, f.t_24, f.light, f.co2});
    arr.push_back({{"context_id", ctx.context_id},
                   {"days", ctx.days},
                   {"forcing_columns", {"t_day", "t_24", "light", "co2"}},
                   {"forcing", forcing},
                   {"obs_times", ctx.obs_times},
                   {"obs_values", ctx.obs_values}});
  }
  return {{"format", "gfnadapt-contexts"}, {"version", 1}, {"contexts", arr}};
}

std::vector<ContextDataset> contexts_from_json(const nlohmann::json& j) {
  std::vector<ContextDataset> out;
  for (const auto& item : j.at("contexts")) {
    ContextDataset ctx;
    ctx.context_id = item.at("context_id").get<int>();
    ctx.days = item.at("days").get<int>();
    for (const auto& row : item.at("forcing"))
      ctx.forcing.push_back({row.at(0).get<double>(), row.at(1).get<double>(),
                             row.at(2).get<double>(), row.at(3).get<double>()});
    ctx.obs_times = item.at("obs_times").get<std::vector<int>>();
    ctx.obs_values = item.at("obs_values").get<std::vector<double>>();
    ctx.validate();
    out.push_back(std::move(ctx));
  }
  return out;
}

SpaceDefinition parse_space_definition(std::string_view json_text) {
  const auto j = nlohmann::json::parse(json_text);
  if (j.value("format", "") != "gfnadapt-space")
    throw std::invalid_argument("not a gfnadapt space definition");

  std::vector<ParameterSpec> parameters;
  for (const auto& p : j.at("parameters"))
    parameters.push_back({p.at("name").get<std::string>(), p.at("lower").get<double>(),
                          p.at("upper").get<double>(), p.at("baseline").get<double>(),
                          p.at("group").get<int>()});

  std::vector<GroupSpec> groups;
  for (const auto& g : j.at("groups")) {
    GroupSpec group{g.at("order").get<int>(), g.at("name").get<std::string>(), {}};
    for (const auto& a : g.at("actions")) {
      ActionSpec action{a.at("name").get<std::string>(), {}};
      for (const auto& [pname, sign] : a.at("signs").items()) action.signs[pname] = sign.get<int>();
      group.actions.push_back(std::move(action));
    }
    groups.push_back(std::move(group));
  }

  SpaceDefinition def;
  def.name = j.value("name", "unnamed");
  def.version = j.value("version", 1);
  def.space = build_space(std::move(groups), std::move(parameters), j.value("cycles", 1),
                          j.value("step_fraction", 0.3));
  if (j.contains("truth_key")) {
    for (int a : j.at("truth_key").get<std::vector<int>>()) def.truth_key.push(a);
    if (def.truth_key.size() != def.space.group_count())
      throw std::invalid_argument("truth_key must assign one action per group");
  }
  return def;
}

SpaceDefinition load_space_definition(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open space definition " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_space_definition(ss.str());
}

SpaceDefinition builtin_space_definition() { return parse_space_definition(builtin_space_json()); }

}  // namespace gfnadapt
