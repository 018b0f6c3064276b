#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "gfnadapt/space.hpp"

namespace gfnadapt {

/// Daily climate forcing of one greenhouse compartment.
struct DayForcing {
  double t_day = 20.0;  // daytime temperature, degC
  double t_24 = 20.0;   // 24 h mean temperature, degC
  double light = 0.0;   // daily light integral, mol m-2 d-1
  double co2 = 400.0;   // ppm
};

struct ContextDataset {
  int context_id = 1;
  int days = 180;
  std::vector<DayForcing> forcing;  // forcing[d - 1] drives day d
  std::vector<int> obs_times;       // day indices, strictly increasing
  std::vector<double> obs_values;   // cumulative fruit dry mass, kg m-2

  /// Throws std::invalid_argument on a broken invariant.
  void validate() const;
};

/// Cumulative fruit dry mass (kg m-2) at a context's observation times.
struct SimTrajectory {
  std::vector<double> values;
};

/// Simulator parameters resolved by name from a ParameterVector.
struct CropParameters {
  double lai_max, sla, n_plants;
  double p_max, alpha_light, co2_half;
  double t_opt, t_width, s_sharp;
  double ts_start, ts_end, dev_rate;
  double rg_fruit, c_maint, q10;

  /// Throws std::invalid_argument naming the first missing parameter.
  static CropParameters from(const ParameterVector& params);
};

/// Double-logistic temperature response, in [0, 1], peaking at t_opt.
double temperature_inhibition(double temperature, double t_opt, double t_width, double s_sharp);

/// Runs the daily recurrence over the context horizon and samples cumulative
/// fruit dry mass at the observation times.
SimTrajectory simulate(const CropParameters& params, const ContextDataset& context);
SimTrajectory simulate(const ParameterVector& params, const ContextDataset& context);

inline constexpr int kContextCount = 6;
inline constexpr int kDefaultHorizon = 180;
inline constexpr int kObservationInterval = 14;

/// Six synthetic compartments with distinct climate regimes. Observation
/// values are left empty; see synthesize_observations.
std::vector<ContextDataset> generate_contexts(std::uint64_t seed, int days = kDefaultHorizon);

/// Fills obs_values with the truth trajectory under multiplicative Gaussian
/// noise, clamped at zero and made non-decreasing by a running maximum.
std::vector<ContextDataset> synthesize_observations(std::vector<ContextDataset> contexts,
                                                    const ParameterVector& truth,
                                                    double noise_rel, std::uint64_t seed);

nlohmann::json contexts_to_json(const std::vector<ContextDataset>& contexts);
std::vector<ContextDataset> contexts_from_json(const nlohmann::json& j);

/// A space definition file: the perturbation space plus its hidden truth key.
struct SpaceDefinition {
  std::string name;
  int version = 1;
  SpaceSpec space;
  StateKey truth_key;
};

SpaceDefinition parse_space_definition(std::string_view json_text);
SpaceDefinition load_space_definition(const std::string& path);
/// The versioned reduced tomato space shipped with the library.
std::string_view builtin_space_json();
SpaceDefinition builtin_space_definition();

}  // namespace gfnadapt
