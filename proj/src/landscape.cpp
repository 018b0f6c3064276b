#include "gfnadapt/landscape.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <stdexcept>

namespace gfnadapt {

std::size_t LandscapeTable::argmin_loss() const {
  if (keys.empty()) throw std::invalid_argument("empty landscape");
  Eigen::Index best = 0;
  loss.minCoeff(&best);
  return static_cast<std::size_t>(best);
}

LandscapeTable landscape_from_rewards(std::vector<StateKey> keys, Eigen::VectorXd loss,
                                      Eigen::VectorXd reward) {
  if (static_cast<Eigen::Index>(keys.size()) != loss.size() || loss.size() != reward.size())
    throw std::invalid_argument("landscape: size mismatch");
  if (keys.empty()) throw std::invalid_argument("landscape: empty");
  if (!((reward.array() > 0.0).all())) throw std::invalid_argument("landscape: rewards must be positive");
  LandscapeTable t;
  t.keys = std::move(keys);
  t.loss = std::move(loss);
  t.reward = std::move(reward);
  t.z = t.reward.sum();
  t.target_prob = t.reward / t.z;
  return t;
}

LandscapeTable build_landscape(const RewardModel& model, unsigned workers) {
  const auto& space = model.space();
  auto count = space.terminal_count();
  if (!count || *count > model.config().enumerable_cap)
    throw std::invalid_argument("landscape: terminal count exceeds the enumerable cap");
  auto keys = enumerate_terminals(space);
  Eigen::VectorXd loss(static_cast<Eigen::Index>(keys.size()));
  Eigen::VectorXd rew(static_cast<Eigen::Index>(keys.size()));
  parallel_for(keys.size(), workers, [&](std::size_t i) {
    const auto rec = model.score(keys[i]);
    loss[static_cast<Eigen::Index>(i)] = rec.aggregate;
    rew[static_cast<Eigen::Index>(i)] = rec.reward;
  });
  return landscape_from_rewards(std::move(keys), std::move(loss), std::move(rew));
}

std::vector<std::size_t> BasinAssignment::modes_by_mass() const {
  std::vector<std::size_t> modes;
  for (const auto& [mode, mass] : basin_mass) modes.push_back(mode);
  std::stable_sort(modes.begin(), modes.end(), [&](std::size_t a, std::size_t b) {
    return basin_mass.at(a) > basin_mass.at(b);
  });
  return modes;
}

std::vector<std::size_t> neighbor_indices(const SpaceSpec& space, std::size_t index) {
  const auto radices = space.radices();
  std::vector<std::size_t> out;
  std::size_t weight = 1;
  for (std::size_t t = radices.size(); t-- > 0;) {
    const auto radix = static_cast<std::size_t>(radices[t]);
    const std::size_t digit = (index / weight) % radix;
    const std::size_t base = index - digit * weight;
    for (std::size_t a = 0; a < radix; ++a)
      if (a != digit) out.push_back(base + a * weight);
    weight *= radix;
  }
  std::sort(out.begin(), out.end());
  return out;
}

BasinAssignment basin_map(const Eigen::VectorXd& prob, const SpaceSpec& space) {
  auto count = space.terminal_count();
  if (!count || *count != static_cast<std::uint64_t>(prob.size()))
    throw std::invalid_argument("basin_map: distribution does not cover the space");
  const auto n = static_cast<std::size_t>(prob.size());

  // Index order equals canonical key order, so scanning neighbors in
  // ascending index with a strict comparison keeps the smallest key on ties.
  std::vector<std::size_t> next(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = i;
    double best_p = prob[static_cast<Eigen::Index>(i)];
    for (std::size_t j : neighbor_indices(space, i)) {
      const double p = prob[static_cast<Eigen::Index>(j)];
      if (p > best_p) {
        best_p = p;
        best = j;
      }
    }
    next[i] = best;
  }

  BasinAssignment out;
  out.mode_of.assign(n, n);
  out.ascent_length.assign(n, -1);
  std::vector<std::size_t> path;
  for (std::size_t i = 0; i < n; ++i) {
    if (out.ascent_length[i] >= 0) continue;
    path.clear();
    std::size_t cur = i;
    while (out.ascent_length[cur] < 0 && next[cur] != cur) {
      path.push_back(cur);
      cur = next[cur];
      if (path.size() > n) throw std::logic_error("basin_map: ascent did not terminate");
    }
    if (out.ascent_length[cur] < 0) {  // fixed point
      out.mode_of[cur] = cur;
      out.ascent_length[cur] = 0;
    }
    const std::size_t mode = out.mode_of[cur];
    int length = out.ascent_length[cur];
    for (auto it = path.rbegin(); it != path.rend(); ++it) {
      out.mode_of[*it] = mode;
      out.ascent_length[*it] = ++length;
    }
  }
  for (std::size_t i = 0; i < n; ++i) out.basin_mass[out.mode_of[i]] += prob[static_cast<Eigen::Index>(i)];
  return out;
}

double l1_distance(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size()) throw std::invalid_argument("l1_distance: support mismatch");
  return (p - q).cwiseAbs().sum();
}

std::vector<double> ranked_profile(const Eigen::VectorXd& dist) {
  std::vector<double> out(dist.begin(), dist.end());
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

std::vector<RankedPair> ranked_pairs(const Eigen::VectorXd& exact, const Eigen::VectorXd& learned) {
  if (exact.size() != learned.size()) throw std::invalid_argument("ranked_pairs: support mismatch");
  std::vector<std::size_t> order(static_cast<std::size_t>(exact.size()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return exact[static_cast<Eigen::Index>(a)] > exact[static_cast<Eigen::Index>(b)];
  });
  std::vector<RankedPair> out;
  out.reserve(order.size());
  for (std::size_t r = 0; r < order.size(); ++r)
    out.push_back({r + 1, order[r], exact[static_cast<Eigen::Index>(order[r])],
                   learned[static_cast<Eigen::Index>(order[r])]});
  return out;
}

std::size_t grid_row_slots(const SpaceSpec& space) {
  const auto radices = space.radices();
  double total = 0.0;
  for (int r : radices) total += std::log(static_cast<double>(r));
  std::size_t best = 0;
  double best_gap = std::abs(total);
  double rows = 0.0;
  for (std::size_t s = 1; s <= radices.size(); ++s) {
    rows += std::log(static_cast<double>(radices[s - 1]));
    const double gap = std::abs(rows - (total - rows));
    if (gap < best_gap - 1e-12) {
      best_gap = gap;
      best = s;
    }
  }
  return best;
}

ProjectedGrid project_grid(const Eigen::VectorXd& dist, const SpaceSpec& space,
                           const BasinAssignment* basins) {
  auto count = space.terminal_count();
  if (!count || *count != static_cast<std::uint64_t>(dist.size()))
    throw std::invalid_argument("project_grid: distribution does not cover the space");
  ProjectedGrid grid;
  grid.row_slots = grid_row_slots(space);
  const auto radices = space.radices();
  grid.row_radices.assign(radices.begin(), radices.begin() + static_cast<std::ptrdiff_t>(grid.row_slots));
  grid.col_radices.assign(radices.begin() + static_cast<std::ptrdiff_t>(grid.row_slots), radices.end());
  const auto prod = [](const std::vector<int>& v) {
    return std::accumulate(v.begin(), v.end(), Eigen::Index{1}, std::multiplies<>());
  };
  const Eigen::Index rows = prod(grid.row_radices);
  const Eigen::Index cols = prod(grid.col_radices);
  grid.mass = Eigen::MatrixXd::Zero(rows, cols);
  grid.dominant_basin = decltype(grid.dominant_basin)::Constant(rows, cols, -1);

  // Terminal index = row * cols + col under lexicographic mixed radix.
  std::vector<std::map<std::size_t, double>> shares;
  if (basins) shares.resize(static_cast<std::size_t>(rows * cols));
  for (Eigen::Index i = 0; i < dist.size(); ++i) {
    const Eigen::Index r = i / cols, c = i % cols;
    grid.mass(r, c) += dist[i];
    if (basins) shares[static_cast<std::size_t>(i)][basins->mode_of[static_cast<std::size_t>(i)]] += dist[i];
  }
  if (basins) {
    for (Eigen::Index cell = 0; cell < rows * cols; ++cell) {
      const auto& s = shares[static_cast<std::size_t>(cell)];
      if (s.empty()) continue;
      auto best = s.begin();
      for (auto it = s.begin(); it != s.end(); ++it)
        if (it->second > best->second) best = it;
      grid.dominant_basin(cell / cols, cell % cols) = static_cast<long long>(best->first);
    }
  }
  return grid;
}

nlohmann::json ProjectedGrid::to_json(const SpaceSpec& space) const {
  nlohmann::json mass_rows = nlohmann::json::array();
  nlohmann::json basin_rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < mass.rows(); ++r) {
    std::vector<double> m(static_cast<std::size_t>(mass.cols()));
    std::vector<long long> b(static_cast<std::size_t>(mass.cols()));
    for (Eigen::Index c = 0; c < mass.cols(); ++c) {
      m[static_cast<std::size_t>(c)] = mass(r, c);
      b[static_cast<std::size_t>(c)] = dominant_basin(r, c);
    }
    mass_rows.push_back(m);
    basin_rows.push_back(b);
  }
  std::vector<std::string> row_groups, col_groups;
  for (std::size_t t = 0; t < space.slot_count(); ++t) {
    const auto label = space.groups()[space.group_of_slot(t)].name + "@" +
                       std::to_string(space.cycle_of_slot(t));
    (t < row_slots ? row_groups : col_groups).push_back(label);
  }
  return {{"format", "gfnadapt-grid"},
          {"version", 1},
          {"projection", "mixed-radix; terminal index = row * n_cols + col"},
          {"row_slots", row_slots},
          {"row_radices", row_radices},
          {"col_radices", col_radices},
          {"row_digits", row_groups},
          {"col_digits", col_groups},
          {"n_rows", mass.rows()},
          {"n_cols", mass.cols()},
          {"mass", mass_rows},
          {"dominant_basin", basin_rows}};
}

namespace {

void write_preamble(std::ostream& out, const std::vector<std::string>& preamble) {
  for (const auto& line : preamble) out << "# " << line << '\n';
}

}  // namespace

void write_landscape_csv(std::ostream& out, const LandscapeTable& table,
                         const BasinAssignment& basins, const std::vector<std::string>& preamble) {
  write_preamble(out, preamble);
  out << "key,loss,reward,target_prob,mode_key\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto e = static_cast<Eigen::Index>(i);
    out << table.keys[i].str() << ',' << table.loss[e] << ',' << table.reward[e] << ','
        << table.target_prob[e] << ',' << table.keys[basins.mode_of[i]].str() << '\n';
  }
}

void write_basin_csv(std::ostream& out, const LandscapeTable& table, const BasinAssignment& basins,
                     const std::vector<std::string>& preamble) {
  write_preamble(out, preamble);
  std::map<std::size_t, std::size_t> members;
  for (auto m : basins.mode_of) ++members[m];
  out << "mode_key,basin_mass,members,mode_loss\n";
  out << std::setprecision(17);
  for (auto mode : basins.modes_by_mass())
    out << table.keys[mode].str() << ',' << basins.basin_mass.at(mode) << ',' << members[mode]
        << ',' << table.loss[static_cast<Eigen::Index>(mode)] << '\n';
}

}  // namespace gfnadapt
