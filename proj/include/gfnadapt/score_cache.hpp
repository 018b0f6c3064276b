#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include <Eigen/Core>

#include "gfnadapt/space.hpp"

namespace gfnadapt {

struct LossRecord {
  StateKey key;
  Eigen::VectorXd raw;         // per-context losses
  Eigen::VectorXd normalized;  // per-context quantile-normalized losses
  double aggregate = 0.0;
  double reward = 0.0;

  bool operator==(const LossRecord& other) const {
    return key == other.key && raw == other.raw && normalized == other.normalized &&
           aggregate == other.aggregate && reward == other.reward;
  }
};

/// Append-only terminal score log with an in-memory index.
///
/// File layout (host byte order, IEEE-754 doubles):
///
///   header  : "GFNRWC\0\0" | u32 schema | u32 slots | u32 contexts | u32 tag_len | tag bytes
///   record  : slots x u8 action indices
///             contexts x f64 raw | contexts x f64 normalized | f64 aggregate | f64 reward
///
/// Records are fixed-size, so a torn trailing record from an interrupted write
/// is detected and truncated on open. Duplicate keys resolve to the first
/// record written. The tag identifies the scoring configuration; opening a
/// file with a different tag, slot count or context count fails.
class ScoreCache {
 public:
  static constexpr std::uint32_t kSchemaVersion = 1;

  /// Memory-only cache.
  ScoreCache(std::size_t slots, std::size_t contexts);
  /// Persistent cache backed by `path` (created when absent).
  ScoreCache(std::filesystem::path path, std::size_t slots, std::size_t contexts,
             std::string tag);

  ScoreCache(const ScoreCache&) = delete;
  ScoreCache& operator=(const ScoreCache&) = delete;

  [[nodiscard]] std::optional<LossRecord> get(const StateKey& key) const;
  /// Stores `record` unless its key is already present. Returns true when the
  /// record was committed.
  bool commit(const LossRecord& record);

  [[nodiscard]] std::size_t size() const;
  [[nodiscard]] std::size_t slots() const { return slots_; }
  [[nodiscard]] std::size_t contexts() const { return contexts_; }
  [[nodiscard]] const std::optional<std::filesystem::path>& path() const { return path_; }

 private:
  void load();
  [[nodiscard]] std::size_t record_size() const { return slots_ + (2 * contexts_ + 2) * 8; }

  std::size_t slots_;
  std::size_t contexts_;
  std::string tag_;
  std::optional<std::filesystem::path> path_;
  std::ofstream out_;
  mutable std::mutex mutex_;
  std::unordered_map<StateKey, LossRecord, StateKeyHash> index_;
};

}  // namespace gfnadapt
