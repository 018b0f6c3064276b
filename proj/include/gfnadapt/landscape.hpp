#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

#include "gfnadapt/reward.hpp"
#include "gfnadapt/space.hpp"

namespace gfnadapt {

/// Exact reward landscape of an enumerable space, in enumeration order
/// (entry i belongs to terminal_at(space, i)).
struct LandscapeTable {
  std::vector<StateKey> keys;
  Eigen::VectorXd loss;    // aggregate adaptation loss
  Eigen::VectorXd reward;  // exp(-beta * loss)
  double z = 0.0;
  Eigen::VectorXd target_prob;

  [[nodiscard]] std::size_t size() const { return keys.size(); }
  /// Index of the minimum-loss terminal (first in key order on ties).
  [[nodiscard]] std::size_t argmin_loss() const;
};

/// Assembles a table from per-terminal losses and rewards (rewards must be
/// strictly positive).
LandscapeTable landscape_from_rewards(std::vector<StateKey> keys, Eigen::VectorXd loss,
                                      Eigen::VectorXd reward);

/// Scores every terminal through the reward model's cache.
/// Throws std::invalid_argument when the terminal count exceeds the cap.
LandscapeTable build_landscape(const RewardModel& model, unsigned workers = 0);

struct BasinAssignment {
  std::vector<std::size_t> mode_of;          // terminal index -> mode terminal index
  std::map<std::size_t, double> basin_mass;  // mode index -> summed probability
  std::vector<int> ascent_length;            // steps taken from each terminal

  /// Modes ordered by decreasing basin mass (ties by index).
  [[nodiscard]] std::vector<std::size_t> modes_by_mass() const;
};

/// Steepest probability ascent on the one-slot neighborhood graph. From each
/// terminal, move to the neighbor of largest probability if it is strictly
/// larger than the current one (ties go to the smaller key), until no
/// neighbor improves. `prob` is indexed by terminal_index.
BasinAssignment basin_map(const Eigen::VectorXd& prob, const SpaceSpec& space);

/// Terminal indices adjacent to `index` (one-slot substitutions), ascending.
std::vector<std::size_t> neighbor_indices(const SpaceSpec& space, std::size_t index);

/// Sum of absolute differences over a shared support.
double l1_distance(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

/// Probabilities sorted in decreasing order.
std::vector<double> ranked_profile(const Eigen::VectorXd& dist);

struct RankedPair {
  std::size_t rank;   // 1-based
  std::size_t index;  // terminal index
  double exact;
  double learned;
};

/// Both distributions in the exact distribution's rank order (ties by index).
std::vector<RankedPair> ranked_pairs(const Eigen::VectorXd& exact, const Eigen::VectorXd& learned);

/// Mixed-radix projection of a terminal distribution onto a 2-D grid.
struct ProjectedGrid {
  std::size_t row_slots = 0;  // slots [0, row_slots) form the row digits
  std::vector<int> row_radices;
  std::vector<int> col_radices;
  Eigen::MatrixXd mass;
  /// Mode index of the basin holding the largest share of each cell, or -1
  /// when no basin assignment was supplied.
  Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic> dominant_basin;

  [[nodiscard]] nlohmann::json to_json(const SpaceSpec& space) const;
};

/// Number of leading slots used as row digits: the split whose row and
/// column extents are closest to square.
std::size_t grid_row_slots(const SpaceSpec& space);

ProjectedGrid project_grid(const Eigen::VectorXd& dist, const SpaceSpec& space,
                           const BasinAssignment* basins = nullptr);

/// CSV with columns key,loss,reward,target_prob,mode_key; `preamble` lines are
/// written first as '#' comments.
void write_landscape_csv(std::ostream& out, const LandscapeTable& table,
                         const BasinAssignment& basins, const std::vector<std::string>& preamble);

/// CSV with columns mode_key,basin_mass,members,mode_loss, modes by decreasing mass.
void write_basin_csv(std::ostream& out, const LandscapeTable& table, const BasinAssignment& basins,
                     const std::vector<std::string>& preamble);

}  // namespace gfnadapt
