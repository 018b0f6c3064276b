#include "gfnadapt/space.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace gfnadapt {

StateKey::StateKey(std::initializer_list<int> actions) {
  actions_.reserve(actions.size());
  for (int a : actions) push(a);
}

void StateKey::push(int action) {
  if (action < 0 || action > 255) throw std::invalid_argument("action index out of byte range");
  actions_.push_back(static_cast<std::uint8_t>(action));
}

void StateKey::set(std::size_t slot, int action) {
  if (action < 0 || action > 255) throw std::invalid_argument("action index out of byte range");
  actions_.at(slot) = static_cast<std::uint8_t>(action);
}

StateKey StateKey::prefix(std::size_t length) const {
  if (length > actions_.size()) throw std::invalid_argument("prefix longer than key");
  return StateKey(std::vector<std::uint8_t>(actions_.begin(), actions_.begin() + length));
}

StateKey StateKey::child(int action) const {
  StateKey out = *this;
  out.push(action);
  return out;
}

StateKey StateKey::from_bytes(std::string_view bytes) {
  return StateKey(std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
}

std::string StateKey::str() const {
  std::string out;
  for (std::size_t i = 0; i < actions_.size(); ++i) {
    if (i) out += '.';
    out += std::to_string(actions_[i]);
  }
  return out;
}

StateKey StateKey::parse(std::string_view text) {
  StateKey key;
  if (text.empty()) return key;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find_first_of(".,", pos);
    if (end == std::string_view::npos) end = text.size();
    int value = -1;
    auto piece = text.substr(pos, end - pos);
    auto [ptr, ec] = std::from_chars(piece.data(), piece.data() + piece.size(), value);
    if (ec != std::errc{} || ptr != piece.data() + piece.size())
      throw std::invalid_argument("malformed state key: " + std::string(text));
    key.push(value);
    pos = end + 1;
  }
  return key;
}

std::size_t StateKeyHash::operator()(const StateKey& key) const noexcept {
  return std::hash<std::string>{}(key.bytes());
}

std::optional<std::size_t> ParameterVector::index_of(std::string_view name) const {
  if (!names) return std::nullopt;
  for (std::size_t i = 0; i < names->size(); ++i)
    if ((*names)[i] == name) return i;
  return std::nullopt;
}

double ParameterVector::at(std::string_view name) const {
  auto i = index_of(name);
  if (!i) throw std::out_of_range("unknown parameter: " + std::string(name));
  return values[static_cast<Eigen::Index>(*i)];
}

std::vector<int> SpaceSpec::radices() const {
  std::vector<int> out(slot_count());
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = action_count(t);
  return out;
}

double SpaceSpec::cycle_magnitude(int cycle) { return std::ldexp(1.0, -(cycle - 1)); }

std::optional<std::uint64_t> SpaceSpec::terminal_count() const {
  std::uint64_t count = 1;
  for (std::size_t t = 0; t < slot_count(); ++t) {
    auto radix = static_cast<std::uint64_t>(action_count(t));
    if (count > std::numeric_limits<std::uint64_t>::max() / radix) return std::nullopt;
    count *= radix;
  }
  return count;
}

std::size_t SpaceSpec::parameter_index(std::string_view name) const {
  for (std::size_t i = 0; i < parameters_.size(); ++i)
    if (parameters_[i].name == name) return i;
  throw std::out_of_range("unknown parameter: " + std::string(name));
}

void SpaceSpec::validate(const StateKey& key) const {
  if (key.size() > slot_count())
    throw std::invalid_argument("state key has " + std::to_string(key.size()) +
                                " slots, space has " + std::to_string(slot_count()));
  for (std::size_t t = 0; t < key.size(); ++t)
    if (key[t] >= action_count(t))
      throw std::invalid_argument("action " + std::to_string(key[t]) + " out of range for slot " +
                                  std::to_string(t));
}

SpaceSpec SpaceSpec::with_cycles(int cycles) const {
  return build_space(groups_, parameters_, cycles, step_fraction_);
}

SpaceSpec SpaceSpec::with_step_fraction(double step_fraction) const {
  return build_space(groups_, parameters_, cycles_, step_fraction);
}

SpaceSpec build_space(std::vector<GroupSpec> groups, std::vector<ParameterSpec> parameters,
                      int cycles, double step_fraction) {
  if (cycles < 1) throw std::invalid_argument("cycles must be >= 1");
  if (!(step_fraction > 0.0 && step_fraction <= 1.0))
    throw std::invalid_argument("step_fraction must lie in (0, 1]");
  if (groups.empty()) throw std::invalid_argument("space needs at least one group");

  std::sort(groups.begin(), groups.end(),
            [](const GroupSpec& a, const GroupSpec& b) { return a.order < b.order; });
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (g > 0 && groups[g].order == groups[g - 1].order)
      throw std::invalid_argument("duplicate group order " + std::to_string(groups[g].order));
    if (groups[g].order != static_cast<int>(g) + 1)
      throw std::invalid_argument("group orders must be contiguous from 1");
    if (groups[g].actions.empty())
      throw std::invalid_argument("group '" + groups[g].name + "' has no actions");
    if (groups[g].actions.size() > 256)
      throw std::invalid_argument("group '" + groups[g].name + "' has more than 256 actions");
  }

  std::set<std::string> seen;
  for (const auto& p : parameters) {
    if (!seen.insert(p.name).second) throw std::invalid_argument("duplicate parameter " + p.name);
    if (!(p.lower < p.upper))
      throw std::invalid_argument("parameter " + p.name + ": lower must be < upper");
    if (!(p.lower <= p.baseline && p.baseline <= p.upper))
      throw std::invalid_argument("parameter " + p.name + ": baseline outside bounds");
    if (p.group < 1 || p.group > static_cast<int>(groups.size()))
      throw std::invalid_argument("parameter " + p.name + ": unknown group");
  }

  SpaceSpec space;
  auto names = std::make_shared<std::vector<std::string>>();
  for (const auto& p : parameters) names->push_back(p.name);

  space.resolved_.resize(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t a = 0; a < groups[g].actions.size(); ++a) {
      const auto& action = groups[g].actions[a];
      std::vector<SpaceSpec::SignEntry> entries;
      for (const auto& [pname, sign] : action.signs) {
        auto it = std::find(names->begin(), names->end(), pname);
        if (it == names->end())
          throw std::invalid_argument("action '" + action.name + "' references unknown parameter " +
                                      pname);
        auto index = static_cast<std::size_t>(it - names->begin());
        if (parameters[index].group != groups[g].order)
          throw std::invalid_argument("action '" + action.name +
                                      "' references foreign parameter " + pname);
        if (sign < -1 || sign > 1)
          throw std::invalid_argument("action '" + action.name + "': sign must be -1, 0 or +1");
        if (sign != 0) entries.push_back({index, sign});
      }
      if (a == 0 && !entries.empty())
        throw std::invalid_argument("group '" + groups[g].name +
                                    "': action 0 must be the identity");
      std::sort(entries.begin(), entries.end(),
                [](const auto& x, const auto& y) { return x.parameter < y.parameter; });
      space.resolved_[g].push_back(std::move(entries));
    }
  }

  space.groups_ = std::move(groups);
  space.parameters_ = std::move(parameters);
  space.names_ = std::move(names);
  space.cycles_ = cycles;
  space.step_fraction_ = step_fraction;
  return space;
}

void apply_slot(const SpaceSpec& space, std::size_t slot, int action, Eigen::VectorXd& values) {
  const double scale = SpaceSpec::cycle_magnitude(space.cycle_of_slot(slot)) * space.step_fraction();
  for (const auto& [index, sign] : space.signs(space.group_of_slot(slot), action)) {
    const auto& p = space.parameters()[index];
    const auto i = static_cast<Eigen::Index>(index);
    values[i] = std::clamp(values[i] + scale * sign * (p.upper - p.lower), p.lower, p.upper);
  }
}

ParameterVector decode_state(const SpaceSpec& space, const StateKey& key) {
  space.validate(key);
  ParameterVector out;
  out.names = space.parameter_names();
  out.values.resize(static_cast<Eigen::Index>(space.parameters().size()));
  for (std::size_t i = 0; i < space.parameters().size(); ++i)
    out.values[static_cast<Eigen::Index>(i)] = space.parameters()[i].baseline;
  for (std::size_t t = 0; t < key.size(); ++t) apply_slot(space, t, key[t], out.values);
  return out;
}

TerminalEnumerator::TerminalEnumerator(const SpaceSpec& space)
    : radices_(space.radices()), current_(radices_.size(), 0) {}

bool TerminalEnumerator::next(StateKey& key) {
  if (done_) return false;
  if (!started_) {
    started_ = true;
  } else {
    // Odometer increment, last slot fastest.
    std::size_t t = current_.size();
    while (t > 0) {
      --t;
      if (current_[t] + 1 < radices_[t]) {
        ++current_[t];
        break;
      }
      current_[t] = 0;
      if (t == 0) {
        done_ = true;
        return false;
      }
    }
    if (current_.empty()) {
      done_ = true;
      return false;
    }
  }
  key = StateKey(current_);
  return true;
}

std::vector<StateKey> enumerate_terminals(const SpaceSpec& space) {
  std::vector<StateKey> out;
  if (auto n = space.terminal_count()) out.reserve(static_cast<std::size_t>(*n));
  TerminalEnumerator it(space);
  StateKey key;
  while (it.next(key)) out.push_back(key);
  return out;
}

std::uint64_t terminal_index(const SpaceSpec& space, const StateKey& key) {
  if (!space.is_terminal(key)) throw std::invalid_argument("terminal_index needs a terminal key");
  space.validate(key);
  std::uint64_t index = 0;
  for (std::size_t t = 0; t < key.size(); ++t)
    index = index * static_cast<std::uint64_t>(space.action_count(t)) + key[t];
  return index;
}

StateKey terminal_at(const SpaceSpec& space, std::uint64_t index) {
  std::vector<std::uint8_t> actions(space.slot_count());
  for (std::size_t t = actions.size(); t-- > 0;) {
    auto radix = static_cast<std::uint64_t>(space.action_count(t));
    actions[t] = static_cast<std::uint8_t>(index % radix);
    index /= radix;
  }
  if (index != 0) throw std::out_of_range("terminal index out of range");
  return StateKey(std::move(actions));
}

std::vector<StateKey> neighbors(const SpaceSpec& space, const StateKey& key) {
  if (!space.is_terminal(key)) throw std::invalid_argument("neighbors needs a terminal key");
  space.validate(key);
  std::vector<StateKey> out;
  for (std::size_t t = 0; t < key.size(); ++t) {
    for (int a = 0; a < space.action_count(t); ++a) {
      if (a == key[t]) continue;
      StateKey n = key;
      n.set(t, a);
      out.push_back(std::move(n));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

int hamming(const StateKey& a, const StateKey& b) {
  if (a.size() != b.size()) throw std::invalid_argument("hamming: key length mismatch");
  int d = 0;
  for (std::size_t t = 0; t < a.size(); ++t) d += a[t] != b[t];
  return d;
}

}  // namespace gfnadapt
