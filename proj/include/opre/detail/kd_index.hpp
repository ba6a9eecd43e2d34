#pragma once

#include <opre/detail/block_index.hpp>
#include <opre/patch_codec.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

namespace opre::detail {

using Coefficients = std::array<double, kPatchDim>;

// Orthonormal basis: (luma, two chroma axes) x separable 4x4 Haar, rows
// ordered roughly by expected energy on natural images. Orthonormality makes
// coefficient-space distances equal code-space distances.
inline const std::array<Coefficients, kPatchDim>& patch_basis() {
  static const auto basis = [] {
    const double r2 = std::sqrt(2.0), r3 = std::sqrt(3.0), r6 = std::sqrt(6.0);
    const double haar[4][4] = {{0.5, 0.5, 0.5, 0.5},
                               {0.5, 0.5, -0.5, -0.5},
                               {1 / r2, -1 / r2, 0, 0},
                               {0, 0, 1 / r2, -1 / r2}};
    const double color[3][3] = {{1 / r3, 1 / r3, 1 / r3}, {1 / r2, -1 / r2, 0}, {1 / r6, 1 / r6, -2 / r6}};
    std::vector<std::array<int, 3>> rows;  // color, vertical, horizontal
    for (int c = 0; c < 3; ++c) {
      for (int u = 0; u < 4; ++u) {
        for (int v = 0; v < 4; ++v) rows.push_back({c, u, v});
      }
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const auto& a, const auto& b) { return a[0] + a[1] + a[2] < b[0] + b[1] + b[2]; });
    std::array<Coefficients, kPatchDim> out{};
    for (std::size_t r = 0; r < kPatchDim; ++r) {
      const auto [c, u, v] = rows[r];
      for (std::size_t ch = 0; ch < kChannels; ++ch) {
        for (std::size_t y = 0; y < kPatchSide; ++y) {
          for (std::size_t x = 0; x < kPatchSide; ++x) {
            out[r][ch * 16 + y * 4 + x] = color[c][ch] * haar[u][y] * haar[v][x];
          }
        }
      }
    }
    return out;
  }();
  return basis;
}

inline Coefficients to_coefficients(const PatchCodes& codes) {
  const auto& basis = patch_basis();
  Coefficients out{};
  for (std::size_t r = 0; r < kPatchDim; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < kPatchDim; ++i) s += basis[r][i] * codes[i];
    out[r] = s;
  }
  return out;
}

// Dynamic bucket k-d tree over transformed code vectors.
//
// Leaves split at the median of their highest-variance coefficient once they
// exceed kLeafSize. A range query prunes a subtree when the accumulated
// per-axis lower bound exceeds the cutoff by more than a rounding slack, then
// verifies leaf entries on the integer codes, so answers are exact for any
// bound. Leaves keep copies of their codes for sequential scans.
class KdIndex {
 public:
  static constexpr std::size_t kLeafSize = 32;

  KdIndex() {
    nodes_.push_back(Node{});
    nodes_[0].leaf = 0;
    leaves_.emplace_back();
  }

  void add(const std::vector<PatchCodes>& codes, PatchId id) {
    const Coefficients t = to_coefficients(codes[id]);
    int n = 0;
    while (nodes_[n].leaf < 0) n = t[nodes_[n].axis] <= nodes_[n].split ? nodes_[n].left : nodes_[n].right;
    Leaf& leaf = leaves_[nodes_[n].leaf];
    leaf.ids.push_back(id);
    leaf.codes.push_back(codes[id]);
    if (leaf.ids.size() > kLeafSize) split(n);
  }

  std::optional<Hit> nearest(const PatchCodes& q, std::int64_t bound) const {
    if (bound < 0) return std::nullopt;
    Query query{q, to_coefficients(q), {}, std::nullopt, static_cast<std::uint32_t>(bound)};
    search(0, 0.0, query);
    return query.best;
  }

 private:
  struct Node {
    double split = 0.0;
    int axis = -1;
    int left = -1;
    int right = -1;
    int leaf = -1;
  };

  struct Leaf {
    std::vector<PatchId> ids;
    std::vector<PatchCodes> codes;
  };

  struct Query {
    const PatchCodes& codes;
    Coefficients coeffs;
    Coefficients offsets;
    std::optional<Hit> best;
    std::uint32_t cutoff;
  };

  void split(int n) {
    Leaf full = std::move(leaves_[nodes_[n].leaf]);
    std::vector<Coefficients> ts;
    ts.reserve(full.codes.size());
    for (const auto& c : full.codes) ts.push_back(to_coefficients(c));

    int axis = -1;
    double best_var = 1e-9;
    for (std::size_t d = 0; d < kPatchDim; ++d) {
      double mean = 0.0, sq = 0.0;
      for (const auto& t : ts) {
        mean += t[d];
        sq += t[d] * t[d];
      }
      mean /= static_cast<double>(ts.size());
      const double var = sq / static_cast<double>(ts.size()) - mean * mean;
      if (var > best_var) {
        best_var = var;
        axis = static_cast<int>(d);
      }
    }
    if (axis < 0) {  // identical vectors cannot be separated
      leaves_[nodes_[n].leaf] = std::move(full);
      return;
    }

    std::vector<double> values;
    values.reserve(ts.size());
    for (const auto& t : ts) values.push_back(t[axis]);
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2), values.end());
    double split = values[values.size() / 2];
    if (std::all_of(ts.begin(), ts.end(), [&](const auto& t) { return t[axis] <= split; })) {
      double below = -INFINITY;
      for (const auto& t : ts) {
        if (t[axis] < split) below = std::max(below, t[axis]);
      }
      split = below;
    }

    const int left_leaf = nodes_[n].leaf;
    const int right_leaf = static_cast<int>(leaves_.size());
    leaves_.emplace_back();
    leaves_[left_leaf] = Leaf{};
    for (std::size_t i = 0; i < ts.size(); ++i) {
      Leaf& dst = leaves_[ts[i][axis] <= split ? left_leaf : right_leaf];
      dst.ids.push_back(full.ids[i]);
      dst.codes.push_back(full.codes[i]);
    }
    const int left = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{0.0, -1, -1, -1, left_leaf});
    const int right = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{0.0, -1, -1, -1, right_leaf});
    nodes_[n] = Node{split, axis, left, right, -1};
  }

  void search(int n, double lower_bound, Query& q) const {
    const Node& node = nodes_[n];
    if (node.leaf >= 0) {
      const Leaf& leaf = leaves_[node.leaf];
      for (std::size_t i = 0; i < leaf.ids.size(); ++i) {
        const std::uint32_t d2 = squared_code_distance(leaf.codes[i], q.codes);
        if (d2 > q.cutoff) continue;
        const PatchId id = leaf.ids[i];
        if (!q.best || d2 < q.best->second || (d2 == q.best->second && id < q.best->first)) {
          q.best = Hit{id, d2};
          q.cutoff = d2;
        }
      }
      return;
    }
    const double diff = q.coeffs[node.axis] - node.split;
    const bool go_left = diff <= 0.0;
    search(go_left ? node.left : node.right, lower_bound, q);
    const double old = q.offsets[node.axis];
    const double far_bound = lower_bound - old * old + diff * diff;
    if (far_bound <= q.cutoff + 1e-6 * (1.0 + q.cutoff)) {
      q.offsets[node.axis] = diff;
      search(go_left ? node.right : node.left, far_bound, q);
      q.offsets[node.axis] = old;
    }
  }

  std::vector<Node> nodes_;
  std::vector<Leaf> leaves_;
};

}  // namespace opre::detail
