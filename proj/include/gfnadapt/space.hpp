#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace gfnadapt {

struct ParameterSpec {
  std::string name;
  double lower = 0.0;
  double upper = 1.0;
  double baseline = 0.5;
  int group = 1;  // 1-based group order
};

struct ActionSpec {
  std::string name;
  std::map<std::string, int> signs;  // parameter name -> {-1, 0, +1}
};

struct GroupSpec {
  int order = 1;  // 1-based
  std::string name;
  std::vector<ActionSpec> actions;  // actions[0] is the identity
};

/// Sequence of chosen action indices, one per decided slot.
///
/// Partial keys are valid states of the construction tree; a key is terminal
/// once every slot of its space is decided. The byte encoding (one unsigned
/// byte per slot) is the canonical cache key.
class StateKey {
 public:
  StateKey() = default;
  explicit StateKey(std::vector<std::uint8_t> actions) : actions_(std::move(actions)) {}
  StateKey(std::initializer_list<int> actions);

  [[nodiscard]] std::size_t size() const { return actions_.size(); }
  [[nodiscard]] bool empty() const { return actions_.empty(); }
  [[nodiscard]] int operator[](std::size_t slot) const { return actions_[slot]; }
  [[nodiscard]] const std::vector<std::uint8_t>& actions() const { return actions_; }

  void push(int action);
  void set(std::size_t slot, int action);
  [[nodiscard]] StateKey prefix(std::size_t length) const;
  [[nodiscard]] StateKey child(int action) const;

  [[nodiscard]] std::string bytes() const {
    return {actions_.begin(), actions_.end()};
  }
  static StateKey from_bytes(std::string_view bytes);

  /// Dot-separated action indices, e.g. "1.3.0.2.4".
  [[nodiscard]] std::string str() const;
  static StateKey parse(std::string_view text);

  auto operator<=>(const StateKey&) const = default;

 private:
  std::vector<std::uint8_t> actions_;
};

struct StateKeyHash {
  std::size_t operator()(const StateKey& key) const noexcept;
};

/// Parameter values decoded from a state key, in the space's parameter order.
struct ParameterVector {
  std::shared_ptr<const std::vector<std::string>> names;
  Eigen::VectorXd values;

  [[nodiscard]] std::optional<std::size_t> index_of(std::string_view name) const;
  [[nodiscard]] double at(std::string_view name) const;
};

/// Validated grouped perturbation space.
///
/// Slot t addresses group (t mod G) in cycle floor(t / G) + 1; the per-cycle
/// magnitude is 2^-(cycle - 1).
class SpaceSpec {
 public:
  struct SignEntry {
    std::size_t parameter;
    int sign;
  };

  [[nodiscard]] const std::vector<GroupSpec>& groups() const { return groups_; }
  [[nodiscard]] const std::vector<ParameterSpec>& parameters() const { return parameters_; }
  [[nodiscard]] const std::shared_ptr<const std::vector<std::string>>& parameter_names() const {
    return names_;
  }
  [[nodiscard]] int cycles() const { return cycles_; }
  [[nodiscard]] double step_fraction() const { return step_fraction_; }

  [[nodiscard]] std::size_t group_count() const { return groups_.size(); }
  [[nodiscard]] std::size_t slot_count() const { return groups_.size() * cycles_; }
  [[nodiscard]] std::size_t group_of_slot(std::size_t slot) const { return slot % groups_.size(); }
  [[nodiscard]] int cycle_of_slot(std::size_t slot) const {
    return static_cast<int>(slot / groups_.size()) + 1;
  }
  [[nodiscard]] int action_count(std::size_t slot) const {
    return static_cast<int>(groups_[group_of_slot(slot)].actions.size());
  }
  /// Action counts per slot (the mixed radix of terminal indices).
  [[nodiscard]] std::vector<int> radices() const;
  [[nodiscard]] static double cycle_magnitude(int cycle);

  /// Exact terminal count, or nullopt when it does not fit in 64 bits.
  [[nodiscard]] std::optional<std::uint64_t> terminal_count() const;

  [[nodiscard]] const std::vector<SignEntry>& signs(std::size_t group, int action) const {
    return resolved_[group][static_cast<std::size_t>(action)];
  }
  [[nodiscard]] std::size_t parameter_index(std::string_view name) const;

  [[nodiscard]] bool is_terminal(const StateKey& key) const { return key.size() == slot_count(); }
  /// Throws std::invalid_argument when the key is longer than the slot count
  /// or carries an action index outside its slot's group.
  void validate(const StateKey& key) const;

  [[nodiscard]] SpaceSpec with_cycles(int cycles) const;
  [[nodiscard]] SpaceSpec with_step_fraction(double step_fraction) const;

  friend SpaceSpec build_space(std::vector<GroupSpec>, std::vector<ParameterSpec>, int, double);

 private:
  std::vector<GroupSpec> groups_;
  std::vector<ParameterSpec> parameters_;
  std::shared_ptr<const std::vector<std::string>> names_;
  std::vector<std::vector<std::vector<SignEntry>>> resolved_;
  int cycles_ = 1;
  double step_fraction_ = 0.3;
};

/// Validates and assembles a space. Groups are sorted by their order field.
SpaceSpec build_space(std::vector<GroupSpec> groups, std::vector<ParameterSpec> parameters,
                      int cycles, double step_fraction);

/// Applies the clipped, cycle-annealed update of every decided slot to the
/// baselines. Partial keys decode only their decided slots.
ParameterVector decode_state(const SpaceSpec& space, const StateKey& key);

/// Applies the update of a single slot to `values` in place.
void apply_slot(const SpaceSpec& space, std::size_t slot, int action, Eigen::VectorXd& values);

/// Streams terminal keys in lexicographic action order.
class TerminalEnumerator {
 public:
  explicit TerminalEnumerator(const SpaceSpec& space);
  /// Writes the next terminal into `key`; false once exhausted.
  bool next(StateKey& key);

 private:
  std::vector<int> radices_;
  std::vector<std::uint8_t> current_;
  bool started_ = false;
  bool done_ = false;
};

std::vector<StateKey> enumerate_terminals(const SpaceSpec& space);

/// Mixed-radix rank of a terminal key in enumeration order, and its inverse.
std::uint64_t terminal_index(const SpaceSpec& space, const StateKey& key);
StateKey terminal_at(const SpaceSpec& space, std::uint64_t index);

/// Terminals that differ from `key` in exactly one slot, in key order.
std::vector<StateKey> neighbors(const SpaceSpec& space, const StateKey& key);

int hamming(const StateKey& a, const StateKey& b);

}  // namespace gfnadapt
