#include "gfnadapt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace gfnadapt {

std::vector<BestSoFarPoint> best_so_far(const std::vector<double>& losses, double l_star,
                                        double beta) {
  if (losses.empty()) throw std::invalid_argument("best_so_far: empty trace");
  std::vector<BestSoFarPoint> out;
  out.reserve(losses.size());
  double best = losses.front();
  for (std::size_t i = 0; i < losses.size(); ++i) {
    best = std::min(best, losses[i]);
    out.push_back({i + 1, best - l_star, std::exp(-beta * best)});
  }
  return out;
}

std::vector<std::size_t> top_k_indices(const Eigen::VectorXd& prob, std::size_t k) {
  if (k > static_cast<std::size_t>(prob.size()))
    throw std::invalid_argument("top-k: k exceeds the terminal count");
  std::vector<std::size_t> order(static_cast<std::size_t>(prob.size()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return prob[static_cast<Eigen::Index>(a)] > prob[static_cast<Eigen::Index>(b)];
  });
  order.resize(k);
  return order;
}

std::vector<RecoveryPoint> topk_recovery(const std::vector<StateKey>& found,
                                         const LandscapeTable& landscape,
                                         const std::vector<std::size_t>& ks) {
  std::size_t k_max = 0;
  for (auto k : ks) k_max = std::max(k_max, k);
  const auto ranked = top_k_indices(landscape.target_prob, k_max);

  std::vector<char> hit(landscape.size(), 0);
  // Enumeration order is sorted, so membership is a binary search.
  for (const auto& key : found) {
    auto it = std::lower_bound(landscape.keys.begin(), landscape.keys.end(), key);
    if (it != landscape.keys.end() && *it == key)
      hit[static_cast<std::size_t>(it - landscape.keys.begin())] = 1;
  }
  std::vector<std::size_t> prefix(k_max + 1, 0);
  for (std::size_t r = 0; r < k_max; ++r) prefix[r + 1] = prefix[r] + (hit[ranked[r]] ? 1 : 0);

  std::vector<RecoveryPoint> out;
  for (auto k : ks) out.push_back({k, prefix[k]});
  return out;
}

Top20Stats top20_stats(const std::vector<StateKey>& keys, const std::vector<double>& losses,
                       std::size_t top) {
  if (keys.empty()) throw std::invalid_argument("top20_stats: empty input");
  if (keys.size() != losses.size()) throw std::invalid_argument("top20_stats: size mismatch");

  std::map<StateKey, double> distinct;
  for (std::size_t i = 0; i < keys.size(); ++i) distinct.try_emplace(keys[i], losses[i]);
  std::vector<std::pair<double, StateKey>> ranked;
  ranked.reserve(distinct.size());
  for (const auto& [key, loss] : distinct) ranked.emplace_back(loss, key);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });

  Top20Stats s;
  s.distinct = std::min(top, ranked.size());
  s.deficient = ranked.size() < top;
  ranked.resize(s.distinct);

  std::vector<double> l;
  for (const auto& r : ranked) l.push_back(r.first);
  const auto m = l.size();
  s.median_loss = m % 2 ? l[m / 2] : 0.5 * (l[m / 2 - 1] + l[m / 2]);

  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j, ++pairs) total += hamming(ranked[i].second, ranked[j].second);
  s.mean_hamming = pairs ? total / static_cast<double>(pairs) : 0.0;
  return s;
}

nlohmann::json RetrievalReport::to_json() const {
  nlohmann::json bsf = nlohmann::json::array();
  for (const auto& p : best_so_far) bsf.push_back({p.n, p.gap, p.reward});
  nlohmann::json rec = nlohmann::json::array();
  for (const auto& p : topk_recovery) rec.push_back({p.k, p.count});
  return {{"method", method},
          {"seed", seed},
          {"config_hash", config_hash},
          {"best_loss", best_loss},
          {"median_top20_loss", median_top20_loss},
          {"mean_hamming_top20", mean_hamming_top20},
          {"top20_deficient", top20_deficient},
          {"wall_clock", wall_clock},
          {"evaluations", best_so_far.size()},
          {"final_gap", best_so_far.empty() ? 0.0 : best_so_far.back().gap},
          {"topk_recovery", rec}};
}

RetrievalReport make_report(std::string method, std::uint64_t seed, std::string config_hash,
                            const std::vector<StateKey>& keys, const std::vector<double>& losses,
                            double l_star, double beta, const LandscapeTable* landscape,
                            const std::vector<std::size_t>& ks, double wall_clock) {
  RetrievalReport r;
  r.method = std::move(method);
  r.seed = seed;
  r.config_hash = std::move(config_hash);
  r.best_so_far = best_so_far(losses, l_star, beta);
  r.best_loss = *std::min_element(losses.begin(), losses.end());
  const auto s = top20_stats(keys, losses);
  r.median_top20_loss = s.median_loss;
  r.mean_hamming_top20 = s.mean_hamming;
  r.top20_deficient = s.deficient;
  r.wall_clock = wall_clock;
  if (landscape) {
    std::vector<std::size_t> valid;
    for (auto k : ks)
      if (k <= landscape->size()) valid.push_back(k);
    r.topk_recovery = topk_recovery(keys, *landscape, valid);
  }
  return r;
}

MeanStd mean_std(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("mean_std: empty input");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

std::vector<MethodSummary> compare_methods(const std::vector<RetrievalReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("compare_methods: no reports");
  for (const auto& r : reports)
    if (r.config_hash != reports.front().config_hash)
      throw std::invalid_argument("compare_methods: reports mix configurations (" +
                                  reports.front().config_hash + " vs " + r.config_hash + ")");

  std::vector<std::string> order;
  std::map<std::string, std::vector<const RetrievalReport*>> by_method;
  for (const auto& r : reports) {
    if (!by_method.contains(r.method)) order.push_back(r.method);
    by_method[r.method].push_back(&r);
  }
  std::vector<MethodSummary> rows;
  for (const auto& method : order) {
    const auto& group = by_method[method];
    const auto column = [&](auto field) {
      std::vector<double> v;
      for (const auto* r : group) v.push_back(r->*field);
      return mean_std(v);
    };
    rows.push_back({method, group.size(), column(&RetrievalReport::best_loss),
                    column(&RetrievalReport::median_top20_loss),
                    column(&RetrievalReport::mean_hamming_top20),
                    column(&RetrievalReport::wall_clock)});
  }
  return rows;
}

namespace {

std::string cell(const MeanStd& m, int precision) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << m.mean << " ± " << m.std;
  return s.str();
}

void write_preamble(std::ostream& out, const std::vector<std::string>& preamble) {
  for (const auto& line : preamble) out << "# " << line << '\n';
}

}  // namespace

void write_summary_csv(std::ostream& out, const std::vector<MethodSummary>& rows,
                       const std::vector<std::string>& preamble) {
  write_preamble(out, preamble);
  out << "method,best_loss,median_top20,mean_hamming_top20,wall_clock\n";
  for (const auto& r : rows)
    out << r.method << ',' << cell(r.best_loss, 6) << ',' << cell(r.median_top20, 6) << ','
        << cell(r.mean_hamming_top20, 3) << ',' << cell(r.wall_clock, 2) << '\n';
}

void write_best_so_far_csv(std::ostream& out, const RetrievalReport& report,
                           const std::vector<std::string>& preamble) {
  write_preamble(out, preamble);
  out << "n,gap,reward\n" << std::setprecision(17);
  for (const auto& p : report.best_so_far) out << p.n << ',' << p.gap << ',' << p.reward << '\n';
}

nlohmann::json summary_manifest(const std::string& config_hash,
                                const std::vector<RetrievalReport>& reports,
                                const std::vector<MethodSummary>& rows) {
  const auto ms = [](const MeanStd& m) { return nlohmann::json{{"mean", m.mean}, {"std", m.std}}; };
  nlohmann::json methods = nlohmann::json::array();
  for (const auto& r : rows)
    methods.push_back({{"method", r.method},
                       {"seeds", r.seeds},
                       {"best_loss", ms(r.best_loss)},
                       {"median_top20", ms(r.median_top20)},
                       {"mean_hamming_top20", ms(r.mean_hamming_top20)},
                       {"wall_clock", ms(r.wall_clock)}});
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : reports) runs.push_back(r.to_json());
  return {{"format", "gfnadapt-report"},
          {"version", 1},
          {"config_hash", config_hash},
          {"methods", methods},
          {"runs", runs}};
}

}  // namespace gfnadapt
