#pragma once

#include <opre/patch_codec.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace opre::detail {

using PatchId = std::uint32_t;
using Hit = std::pair<PatchId, std::uint32_t>;  // id, squared code distance

inline std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

// Exact fixed-radius search over integer code vectors by pigeonhole.
//
// The 48 coordinates are split into m disjoint blocks. If the squared code
// distance between q and a stored patch is at most `limit`, the squared
// distances restricted to the blocks sum to at most `limit`, so at least one
// block is within floor(limit / m) of q. Each block keeps a hash table from
// block contents to ids; a query probes every block vector within that radius
// of q's block and verifies the ids it finds on all 48 coordinates. Hash
// collisions only add candidates, so results are exact.
//
// Block 0 is always the whole vector with radius 0, a fast path for exact
// repeats. Queries must use bound <= limit().
class BlockIndex {
 public:
  static constexpr PatchId kEnd = std::numeric_limits<PatchId>::max();

  BlockIndex() = default;

  BlockIndex(int levels, std::int64_t limit) : levels_(levels), limit_(limit) {
    blocks_.push_back(make_block(all_coordinates(), 0));
    if (limit_ < 0) return;
    const int m = choose_block_count(levels_, limit_);
    const auto radius = static_cast<int>(limit_ / m);
    for (int j = 0; j < m; ++j) {
      std::vector<std::uint8_t> coords;
      for (std::size_t i = static_cast<std::size_t>(j); i < kPatchDim; i += static_cast<std::size_t>(m)) {
        coords.push_back(static_cast<std::uint8_t>(i));
      }
      blocks_.push_back(make_block(std::move(coords), radius));
    }
  }

  std::int64_t limit() const { return limit_; }
  std::size_t block_count() const { return blocks_.size() - 1; }
  int block_radius() const { return blocks_.size() > 1 ? blocks_[1].radius : 0; }

  // Registers codes[id]; ids must arrive densely in order.
  void add(const std::vector<PatchCodes>& codes, PatchId id) {
    const std::size_t n = static_cast<std::size_t>(id) + 1;
    if (n * 2 > table_size_) {
      table_size_ = std::max<std::size_t>(1024, table_size_ * 2);
      while (n * 2 > table_size_) table_size_ *= 2;
      for (auto& b : blocks_) {
        b.heads.assign(table_size_, kEnd);
        b.next.resize(n);
        b.tags.resize(n);
      }
      for (PatchId i = 0; i < id; ++i) link(codes[i], i);
    } else {
      for (auto& b : blocks_) {
        b.next.resize(n);
        b.tags.resize(n);
      }
    }
    link(codes[id], id);
  }

  // Nearest stored patch with squared distance <= bound (bound <= limit),
  // ties by lowest id. Returns (id, squared distance).
  std::optional<Hit> nearest(const std::vector<PatchCodes>& codes,
                                                           const PatchCodes& q,
                                                           std::int64_t bound) const {
    if (codes.empty() || bound < 0) return std::nullopt;

    // Exact repeat: distance 0 is minimal, lowest such id wins.
    {
      const Block& full = blocks_[0];
      const std::uint64_t h = hash_block(full, q);
      std::optional<PatchId> best;
      for (PatchId id = full.heads[h & (table_size_ - 1)]; id != kEnd; id = full.next[id]) {
        if (full.tags[id] == tag_of(h) && codes[id] == q && (!best || id < *best)) best = id;
      }
      if (best) return std::pair{*best, 0u};
    }
    if (blocks_.size() == 1) return std::nullopt;

    std::vector<PatchId> candidates;
    for (std::size_t j = 1; j < blocks_.size(); ++j) collect(blocks_[j], q, candidates);
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    std::optional<Hit> best;
    auto cutoff = static_cast<std::uint32_t>(bound);
    for (const PatchId id : candidates) {
      // Ascending ids: a later candidate must be strictly closer to win.
      const std::uint32_t d2 = squared_code_distance(codes[id], q);
      if (d2 <= cutoff && (!best || d2 < best->second)) {
        best = std::pair{id, d2};
        if (d2 == 0) break;
        cutoff = d2 - 1;
      }
    }
    return best;
  }

 private:
  struct Delta {
    std::uint8_t slot;
    std::int16_t step;
  };

  struct Block {
    std::vector<std::uint8_t> coords;
    int radius = 0;
    // Every nonzero offset vector with squared norm <= radius, as sparse deltas.
    std::vector<std::vector<Delta>> offsets;
    std::vector<PatchId> heads;
    std::vector<PatchId> next;
    std::vector<std::uint32_t> tags;
  };

  static std::vector<std::uint8_t> all_coordinates() {
    std::vector<std::uint8_t> c(kPatchDim);
    for (std::size_t i = 0; i < kPatchDim; ++i) c[i] = static_cast<std::uint8_t>(i);
    return c;
  }

  static void enumerate_offsets(std::size_t k, int budget, std::size_t from, std::vector<Delta>& cur,
                                std::vector<std::vector<Delta>>& out) {
    for (std::size_t s = from; s < k; ++s) {
      for (int step = 1; step * step <= budget; ++step) {
        for (const int sign : {1, -1}) {
          cur.push_back({static_cast<std::uint8_t>(s), static_cast<std::int16_t>(sign * step)});
          out.push_back(cur);
          enumerate_offsets(k, budget - step * step, s + 1, cur, out);
          cur.pop_back();
        }
      }
    }
  }

  static std::uint64_t offset_count(std::size_t k, int budget) {
    // Vectors in Z^k with squared norm <= budget, by dynamic programming over coordinates.
    std::vector<std::uint64_t> ways(static_cast<std::size_t>(budget) + 1, 0);
    ways[0] = 1;
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<std::uint64_t> nxt(ways.size(), 0);
      for (int used = 0; used <= budget; ++used) {
        if (ways[used] == 0) continue;
        nxt[used] += ways[used];
        for (int step = 1; used + step * step <= budget; ++step) nxt[used + step * step] += 2 * ways[used];
      }
      ways = std::move(nxt);
    }
    std::uint64_t total = 0;
    for (auto w : ways) total += w;
    return total;
  }

  // Picks the block count minimizing probes plus expected verifications for a
  // reference store of 2^21 patches with uniformly spread block contents.
  static int choose_block_count(int levels, std::int64_t limit) {
    constexpr double kReferenceSize = 2097152.0;
    constexpr int kMaxOffsets = 1 << 14;
    int best_m = static_cast<int>(kPatchDim);
    double best_cost = std::numeric_limits<double>::infinity();
    for (int m = 1; m <= static_cast<int>(kPatchDim); ++m) {
      const std::size_t k = (kPatchDim + static_cast<std::size_t>(m) - 1) / static_cast<std::size_t>(m);
      if (k > 1 && limit / m > 2000) continue;
      const auto radius = static_cast<int>(limit / m);
      const std::uint64_t probes = offset_count(k, radius);
      if (probes > static_cast<std::uint64_t>(kMaxOffsets)) continue;
      const std::size_t k_min = kPatchDim / static_cast<std::size_t>(m);
      const double keys = std::pow(static_cast<double>(levels), static_cast<double>(k_min));
      const double load = kReferenceSize / keys;
      const double cost = static_cast<double>(m) * static_cast<double>(probes) * (1.0 + 8.0 * load);
      if (cost < best_cost) {
        best_cost = cost;
        best_m = m;
      }
    }
    return best_m;
  }

  static Block make_block(std::vector<std::uint8_t> coords, int radius) {
    Block b;
    b.radius = radius;
    std::vector<Delta> cur;
    enumerate_offsets(coords.size(), radius, 0, cur, b.offsets);
    b.coords = std::move(coords);
    return b;
  }

  static std::uint32_t tag_of(std::uint64_t h) { return static_cast<std::uint32_t>(h >> 32); }

  template <typename Codes>
  static std::uint64_t hash_block(const Block& b, const Codes& codes) {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL ^ b.coords.size();
    for (const auto c : b.coords) h = (h ^ codes[c]) * 0x100000001b3ULL;
    return mix64(h);
  }

  static std::uint64_t hash_values(std::span<const int> values) {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL ^ values.size();
    for (const int v : values) h = (h ^ static_cast<std::uint64_t>(v)) * 0x100000001b3ULL;
    return mix64(h);
  }

  void link(const PatchCodes& c, PatchId id) {
    for (auto& b : blocks_) {
      const std::uint64_t h = hash_block(b, c);
      const std::size_t slot = h & (table_size_ - 1);
      b.tags[id] = tag_of(h);
      b.next[id] = b.heads[slot];
      b.heads[slot] = id;
    }
  }

  void scan_bucket(const Block& b, std::uint64_t h, std::vector<PatchId>& out) const {
    const std::uint32_t tag = tag_of(h);
    for (PatchId id = b.heads[h & (table_size_ - 1)]; id != kEnd; id = b.next[id]) {
      if (b.tags[id] == tag) out.push_back(id);
    }
  }

  void collect(const Block& b, const PatchCodes& q, std::vector<PatchId>& out) const {
    int values[kPatchDim];
    const std::size_t k = b.coords.size();
    for (std::size_t s = 0; s < k; ++s) values[s] = q[b.coords[s]];
    const std::span<const int> view(values, k);
    scan_bucket(b, hash_values(view), out);
    for (const auto& offset : b.offsets) {
      bool in_range = true;
      for (const Delta& d : offset) {
        const int v = values[d.slot] + d.step;
        if (v < 0 || v >= levels_) {
          in_range = false;
          break;
        }
      }
      if (!in_range) continue;
      for (const Delta& d : offset) values[d.slot] += d.step;
      scan_bucket(b, hash_values(view), out);
      for (const Delta& d : offset) values[d.slot] -= d.step;
    }
  }

  int levels_ = 2;
  std::int64_t limit_ = -1;
  std::size_t table_size_ = 0;
  std::vector<Block> blocks_;
};

}  // namespace opre::detail
