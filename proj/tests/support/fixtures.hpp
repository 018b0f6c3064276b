#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "gfnadapt/space.hpp"

namespace fixtures {

/// One parameter per group on [0, 10] with baseline 5; action a > 0 moves it
/// by +1 for odd a and -1 for even a.
inline gfnadapt::SpaceSpec counts_space(const std::vector<int>& counts, int cycles = 1,
                                        double sf = 0.3) {
  std::vector<gfnadapt::GroupSpec> groups;
  std::vector<gfnadapt::ParameterSpec> params;
  for (std::size_t g = 0; g < counts.size(); ++g) {
    const std::string p = "p" + std::to_string(g + 1);
    params.push_back({p, 0.0, 10.0, 5.0, static_cast<int>(g + 1)});
    gfnadapt::GroupSpec group{static_cast<int>(g + 1), "g" + std::to_string(g + 1), {}};
    group.actions.push_back({"none", {}});
    for (int a = 1; a < counts[g]; ++a)
      group.actions.push_back({"a" + std::to_string(a), {{p, a % 2 ? 1 : -1}}});
    groups.push_back(group);
  }
  return gfnadapt::build_space(groups, params, cycles, sf);
}

inline gfnadapt::StateKey random_key(const gfnadapt::SpaceSpec& space, std::mt19937_64& rng,
                                     std::size_t length) {
  gfnadapt::StateKey key;
  for (std::size_t t = 0; t < length; ++t)
    key.push(std::uniform_int_distribution<int>(0, space.action_count(t) - 1)(rng));
  return key;
}

inline gfnadapt::StateKey random_terminal(const gfnadapt::SpaceSpec& space, std::mt19937_64& rng) {
  return random_key(space, rng, space.slot_count());
}

inline double rel_err(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

}  // namespace fixtures
