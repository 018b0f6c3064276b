#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gfnadapt/landscape.hpp"
#include "gfnadapt/space.hpp"

namespace gfnadapt {

struct BestSoFarPoint {
  std::size_t n;  // evaluations so far, 1-based
  double gap;     // best loss so far minus l_star
  double reward;  // exp(-beta * best loss so far)
};

/// Throws std::invalid_argument on an empty series.
std::vector<BestSoFarPoint> best_so_far(const std::vector<double>& losses, double l_star,
                                        double beta);

/// Indices of the k most probable terminals (ties by key order).
std::vector<std::size_t> top_k_indices(const Eigen::VectorXd& prob, std::size_t k);

struct RecoveryPoint {
  std::size_t k;
  std::size_t count;
};

/// For each k, how many of the k most probable target states appear in `found`.
std::vector<RecoveryPoint> topk_recovery(const std::vector<StateKey>& found,
                                         const LandscapeTable& landscape,
                                         const std::vector<std::size_t>& ks);

struct Top20Stats {
  double median_loss = 0.0;
  double mean_hamming = 0.0;
  std::size_t distinct = 0;
  bool deficient = false;  // fewer than 20 distinct keys were available
};

/// Statistics over the 20 distinct lowest-loss keys (ties by key order).
Top20Stats top20_stats(const std::vector<StateKey>& keys, const std::vector<double>& losses,
                       std::size_t top = 20);

struct RetrievalReport {
  std::string method;
  std::uint64_t seed = 0;
  std::string config_hash;
  double best_loss = 0.0;
  double median_top20_loss = 0.0;
  double mean_hamming_top20 = 0.0;
  bool top20_deficient = false;
  double wall_clock = 0.0;  // seconds
  std::vector<BestSoFarPoint> best_so_far;
  std::vector<RecoveryPoint> topk_recovery;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// Report of one evaluated-key sequence. `landscape` may be null when the
/// space is not enumerable, in which case no recovery series is produced.
RetrievalReport make_report(std::string method, std::uint64_t seed, std::string config_hash,
                            const std::vector<StateKey>& keys, const std::vector<double>& losses,
                            double l_star, double beta, const LandscapeTable* landscape,
                            const std::vector<std::size_t>& ks, double wall_clock);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
};

MeanStd mean_std(const std::vector<double>& values);

struct MethodSummary {
  std::string method;
  std::size_t seeds = 0;
  MeanStd best_loss;
  MeanStd median_top20;
  MeanStd mean_hamming_top20;
  MeanStd wall_clock;
};

/// One row per method in first-appearance order. Throws std::invalid_argument
/// when reports carry different config hashes or the list is empty.
std::vector<MethodSummary> compare_methods(const std::vector<RetrievalReport>& reports);

/// CSV with columns method,best_loss,median_top20,mean_hamming_top20,wall_clock;
/// each metric cell is "mean ± std".
void write_summary_csv(std::ostream& out, const std::vector<MethodSummary>& rows,
                       const std::vector<std::string>& preamble);

/// Per-seed CSV of the best-so-far series: n,gap,reward.
void write_best_so_far_csv(std::ostream& out, const RetrievalReport& report,
                           const std::vector<std::string>& preamble);

nlohmann::json summary_manifest(const std::string& config_hash,
                                const std::vector<RetrievalReport>& reports,
                                const std::vector<MethodSummary>& rows);

}  // namespace gfnadapt
