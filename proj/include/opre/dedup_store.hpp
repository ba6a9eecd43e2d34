#pragma once

// The online patch memory: an append-only dictionary of quantized patches in
// which every pair of stored patches is at least epsilon apart.

#include <opre/detail/block_index.hpp>
#include <opre/detail/kd_index.hpp>
#include <opre/errors.hpp>
#include <opre/patch_codec.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace opre {

using detail::PatchId;

/// Ids are 32-bit and UINT32_MAX is reserved as the index's end-of-chain marker.
inline constexpr std::uint64_t kMaxPatches = std::numeric_limits<PatchId>::max();

struct Match {
  PatchId id = 0;
  double distance = 0.0;

  friend bool operator==(const Match&, const Match&) = default;
};

enum class IndexKind { kNone, kBlockHash, kKdTree };

/// Index used for a discard limit: exact block hashing when the pigeonhole
/// split yields radius-0 blocks of at least 8 coordinates, else the k-d tree.
inline IndexKind choose_index(int levels, std::int64_t discard_limit) {
  if (discard_limit < 0) return IndexKind::kNone;
  const detail::BlockIndex probe(levels, discard_limit);
  if (probe.block_radius() == 0 && kPatchDim / probe.block_count() >= 8) return IndexKind::kBlockHash;
  return IndexKind::kKdTree;
}

/// Append-only, epsilon-separated dictionary of quantized patches.
///
/// A patch is stored iff its distance to every stored patch is >= epsilon;
/// otherwise the id of its nearest stored patch (lowest id on ties) stands in
/// for it. Search is exact. Insertions are single-writer; const members may be
/// called concurrently between insertions once the index is built (any
/// insertion or a call to `build_index()` builds it).
class PatchMemory {
 public:
  explicit PatchMemory(QualitySetting setting, std::uint64_t capacity = kMaxPatches)
      : setting_(setting), capacity_(std::min(capacity, kMaxPatches)) {
    setting_.validate();
    discard_limit_ = max_squared_below(setting_.epsilon, setting_.levels);
  }

  /// Rebuilds a memory from stored code vectors without re-deduplicating.
  static PatchMemory from_codes(QualitySetting setting, std::vector<PatchCodes> codes) {
    PatchMemory m(setting);
    if (codes.size() > m.capacity_) throw CapacityError("too many patches for 32-bit ids");
    for (const auto& c : codes) {
      for (const auto v : c) {
        if (v >= setting.levels) throw EncodingError("code out of range for the setting");
      }
    }
    m.codes_ = std::move(codes);
    return m;
  }

  const QualitySetting& setting() const { return setting_; }
  std::size_t size() const { return codes_.size(); }
  std::uint64_t capacity() const { return capacity_; }

  /// Largest squared code distance that counts as redundant (-1 when epsilon is 0).
  std::int64_t discard_limit() const { return discard_limit_; }

  const PatchCodes& codes(PatchId id) const { return codes_.at(id); }
  const std::vector<PatchCodes>& all_codes() const { return codes_; }
  QuantizedPatch patch(PatchId id) const { return {codes_.at(id), setting_.levels}; }

  /// Exact nearest stored patch at distance < eps, lowest id on ties.
  std::optional<Match> nearest_within(const QuantizedPatch& q, double eps) const {
    check_levels(q);
    const std::int64_t bound = max_squared_below(eps, setting_.levels);
    if (bound < 0 || codes_.empty()) return std::nullopt;
    if (const auto* kd = std::get_if<detail::KdIndex>(&index_)) return to_match(kd->nearest(q.codes, bound));
    if (const auto* bi = std::get_if<detail::BlockIndex>(&index_); bi && bound <= bi->limit()) {
      return to_match(bi->nearest(codes_, q.codes, bound));
    }
    return to_match(linear_nearest(q.codes, bound));
  }

  PatchId insert_one(const QuantizedPatch& q) {
    check_levels(q);
    build_index();
    if (discard_limit_ >= 0 && !codes_.empty()) {
      const auto hit = std::holds_alternative<detail::KdIndex>(index_)
                           ? std::get<detail::KdIndex>(index_).nearest(q.codes, discard_limit_)
                           : std::get<detail::BlockIndex>(index_).nearest(codes_, q.codes, discard_limit_);
      if (hit) return hit->first;
    }
    if (codes_.size() >= capacity_) {
      throw CapacityError("patch memory is full (" + std::to_string(capacity_) + " patches)");
    }
    const auto id = static_cast<PatchId>(codes_.size());
    codes_.push_back(q.codes);
    std::visit([&](auto& index) { add_to(index, id); }, index_);
    return id;
  }

  /// Same ids and final state as calling insert_one on each element in order.
  std::vector<PatchId> insert_batch(std::span<const QuantizedPatch> qs) {
    for (const auto& q : qs) check_levels(q);
    std::vector<PatchId> ids;
    ids.reserve(qs.size());
    for (const auto& q : qs) ids.push_back(insert_one(q));
    return ids;
  }

  /// Builds the search index over the current contents; later insertions keep it current.
  void build_index() {
    if (index_built_) return;
    switch (choose_index(setting_.levels, discard_limit_)) {
      case IndexKind::kBlockHash:
        index_ = detail::BlockIndex(setting_.levels, discard_limit_);
        break;
      case IndexKind::kKdTree:
        index_ = detail::KdIndex();
        break;
      case IndexKind::kNone:
        index_ = std::monostate{};
        break;
    }
    for (PatchId id = 0; id < codes_.size(); ++id) std::visit([&](auto& index) { add_to(index, id); }, index_);
    index_built_ = true;
  }

  IndexKind index_kind() const { return choose_index(setting_.levels, discard_limit_); }

  friend bool operator==(const PatchMemory& a, const PatchMemory& b) {
    return a.setting_ == b.setting_ && a.codes_ == b.codes_;
  }

 private:
  void check_levels(const QuantizedPatch& q) const {
    if (q.levels != setting_.levels) {
      throw EncodingError("patch has " + std::to_string(q.levels) + " levels, memory uses " +
                          std::to_string(setting_.levels));
    }
  }

  void add_to(std::monostate&, PatchId) {}
  void add_to(detail::BlockIndex& index, PatchId id) { index.add(codes_, id); }
  void add_to(detail::KdIndex& index, PatchId id) { index.add(codes_, id); }

  std::optional<detail::Hit> linear_nearest(const PatchCodes& q, std::int64_t bound) const {
    std::optional<detail::Hit> best;
    for (PatchId id = 0; id < codes_.size(); ++id) {
      const std::uint32_t d2 = squared_code_distance(codes_[id], q);
      if (d2 <= bound && (!best || d2 < best->second)) {
        best = detail::Hit{id, d2};
        if (d2 == 0) break;
      }
    }
    return best;
  }

  std::optional<Match> to_match(const std::optional<detail::Hit>& hit) const {
    if (!hit) return std::nullopt;
    return Match{hit->first, distance_from_squared(hit->second, setting_.levels)};
  }

  QualitySetting setting_;
  std::uint64_t capacity_;
  std::int64_t discard_limit_ = -1;
  std::vector<PatchCodes> codes_;
  std::variant<std::monostate, detail::BlockIndex, detail::KdIndex> index_;
  bool index_built_ = false;
};

}  // namespace opre
