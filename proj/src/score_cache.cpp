#include "gfnadapt/score_cache.hpp"

#include <array>
#include <cstring>
#include <stdexcept>
#include <vector>

namespace gfnadapt {

namespace {

constexpr std::array<char, 8> kMagic = {'G', 'F', 'N', 'R', 'W', 'C', '\0', '\0'};

template <class T>
void put(std::string& buf, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  buf.append(bytes, sizeof(T));
}

template <class T>
T take(const char*& p) {
  T value;
  std::memcpy(&value, p, sizeof(T));
  p += sizeof(T);
  return value;
}

}  // namespace

ScoreCache::ScoreCache(std::size_t slots, std::size_t contexts)
    : slots_(slots), contexts_(contexts) {}

ScoreCache::ScoreCache(std::filesystem::path path, std::size_t slots, std::size_t contexts,
                       std::string tag)
    : slots_(slots), contexts_(contexts), tag_(std::move(tag)), path_(std::move(path)) {
  if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
  load();
  out_.open(*path_, std::ios::binary | std::ios::app);
  if (!out_) throw std::runtime_error("cannot open score cache " + path_->string());
}

void ScoreCache::load() {
  std::string header;
  header.append(kMagic.data(), kMagic.size());
  put<std::uint32_t>(header, kSchemaVersion);
  put<std::uint32_t>(header, static_cast<std::uint32_t>(slots_));
  put<std::uint32_t>(header, static_cast<std::uint32_t>(contexts_));
  put<std::uint32_t>(header, static_cast<std::uint32_t>(tag_.size()));
  header += tag_;

  if (!std::filesystem::exists(*path_) || std::filesystem::file_size(*path_) == 0) {
    std::ofstream init(*path_, std::ios::binary | std::ios::trunc);
    init.write(header.data(), static_cast<std::streamsize>(header.size()));
    if (!init) throw std::runtime_error("cannot write score cache " + path_->string());
    return;
  }

  std::ifstream in(*path_, std::ios::binary);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < header.size() || data.compare(0, header.size(), header) != 0)
    throw std::runtime_error("score cache " + path_->string() +
                             " has an incompatible header (schema, shape or configuration tag)");

  const std::size_t rsize = record_size();
  const std::size_t body = data.size() - header.size();
  const std::size_t complete = body / rsize;
  const char* p = data.data() + header.size();
  for (std::size_t r = 0; r < complete; ++r) {
    LossRecord rec;
    rec.key = StateKey::from_bytes(std::string_view(p, slots_));
    p += slots_;
    rec.raw.resize(static_cast<Eigen::Index>(contexts_));
    rec.normalized.resize(static_cast<Eigen::Index>(contexts_));
    for (auto& v : rec.raw) v = take<double>(p);
    for (auto& v : rec.normalized) v = take<double>(p);
    rec.aggregate = take<double>(p);
    rec.reward = take<double>(p);
    index_.try_emplace(rec.key, std::move(rec));
  }
  if (complete * rsize != body) {
    // Torn tail from an interrupted append.
    in.close();
    std::filesystem::resize_file(*path_, header.size() + complete * rsize);
  }
}

std::optional<LossRecord> ScoreCache::get(const StateKey& key) const {
  std::lock_guard lock(mutex_);
  auto it = index_.find(key);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool ScoreCache::commit(const LossRecord& record) {
  if (record.key.size() != slots_ || static_cast<std::size_t>(record.raw.size()) != contexts_ ||
      static_cast<std::size_t>(record.normalized.size()) != contexts_)
    throw std::invalid_argument("score cache: record shape mismatch");
  std::lock_guard lock(mutex_);
  auto [it, inserted] = index_.try_emplace(record.key, record);
  if (!inserted || !path_) return inserted;

  std::string buf = record.key.bytes();
  for (double v : record.raw) put(buf, v);
  for (double v : record.normalized) put(buf, v);
  put(buf, record.aggregate);
  put(buf, record.reward);
  out_.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  out_.flush();
  if (!out_) throw std::runtime_error("score cache append failed");
  return true;
}

std::size_t ScoreCache::size() const {
  std::lock_guard lock(mutex_);
  return index_.size();
}

}  // namespace gfnadapt
