#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "gfnadapt/reward.hpp"
#include "gfnadapt/space.hpp"

namespace gfnadapt {

/// Aggregate adaptation loss of a terminal key.
using LossFn = std::function<double(const StateKey&)>;

LossFn loss_function(const RewardModel& model);

/// Ordered evaluations of one search run.
struct SearchTrace {
  std::string method;
  std::vector<StateKey> keys;
  std::vector<double> losses;
  std::size_t budget = 0;
  std::uint64_t seed = 0;
  /// Proposals drawn, including repeats that did not consume budget.
  std::size_t proposals = 0;
};

struct SearchBudget {
  std::size_t evaluations = 0;
  /// true: budget counts distinct keys and repeated proposals are skipped.
  /// false: every proposal counts and repeats appear in the trace.
  bool unique = true;
  /// Hard stop on proposals, as a multiple of the budget, for spaces that
  /// hold fewer distinct keys than the budget asks for.
  std::size_t proposal_factor = 50;
};

SearchTrace random_search(const SpaceSpec& space, const LossFn& loss, const SearchBudget& budget,
                          std::uint64_t seed);

struct TpeConfig {
  double gamma = 0.25;
  int n_candidates = 24;
  int startup = 10;
};

/// Per-slot categorical density densities over good/bad splits, with
/// Laplace smoothing: l(a) = (count_good(a) + 1) / (|good| + |actions|).
struct TpeDensities {
  std::vector<std::vector<double>> good;
  std::vector<std::vector<double>> bad;
};

TpeDensities tpe_densities(const SpaceSpec& space, const std::vector<StateKey>& keys,
                           const std::vector<double>& losses, double gamma);

SearchTrace tpe_search(const SpaceSpec& space, const LossFn& loss, const SearchBudget& budget,
                       std::uint64_t seed, const TpeConfig& config = {});

/// CSV with columns iteration,key,loss,best_so_far.
void write_trace_csv(std::ostream& out, const SearchTrace& trace,
                     const std::vector<std::string>& preamble);
SearchTrace read_trace_csv(std::istream& in);

}  // namespace gfnadapt
