#pragma once

// Patch geometry, scalar quantization and fixed-width mixed-radix packing
// for 3x4x4 tiles of 3x32x32 images.

#include <opre/errors.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#if defined(__SSE2__)
#include <emmintrin.h>
#endif

namespace opre {

inline constexpr std::size_t kChannels = 3;
inline constexpr std::size_t kImageSide = 32;
inline constexpr std::size_t kPatchSide = 4;
inline constexpr std::size_t kTilesPerSide = kImageSide / kPatchSide;
inline constexpr std::size_t kPatchesPerImage = kTilesPerSide * kTilesPerSide;
inline constexpr std::size_t kPatchDim = kChannels * kPatchSide * kPatchSide;
inline constexpr std::size_t kImageSize = kChannels * kImageSide * kImageSide;

/// Largest packed block the codec supports (levels <= 255 needs at most 384 bits).
inline constexpr int kMaxBitsPerPatch = 512;

/// Channel-major 3x32x32 pixels: index = c*1024 + row*32 + col.
using Image = std::array<float, kImageSize>;

/// Channel-major 3x4x4 tile: index = c*16 + row*4 + col.
using RawPatch = std::array<float, kPatchDim>;

using PatchCodes = std::array<std::uint8_t, kPatchDim>;

namespace detail {

// Little-endian 64-bit limbs, wide enough for kMaxBitsPerPatch.
using WideUint = std::array<std::uint64_t, kMaxBitsPerPatch / 64>;

// x = x * mul + add. Returns the carry out of the top limb.
inline std::uint64_t mul_add(WideUint& x, std::uint32_t mul, std::uint32_t add) {
  unsigned __int128 carry = add;
  for (auto& limb : x) {
    const unsigned __int128 t = static_cast<unsigned __int128>(limb) * mul + carry;
    limb = static_cast<std::uint64_t>(t);
    carry = t >> 64;
  }
  return static_cast<std::uint64_t>(carry);
}

// x = x / div. Returns the remainder.
inline std::uint32_t div_mod(WideUint& x, std::uint32_t div) {
  unsigned __int128 rem = 0;
  for (std::size_t i = x.size(); i-- > 0;) {
    const unsigned __int128 cur = (rem << 64) | x[i];
    x[i] = static_cast<std::uint64_t>(cur / div);
    rem = cur % div;
  }
  return static_cast<std::uint32_t>(rem);
}

inline int bit_length(const WideUint& x) {
  for (std::size_t i = x.size(); i-- > 0;) {
    if (x[i] != 0) {
      return static_cast<int>(i * 64) + (64 - __builtin_clzll(x[i]));
    }
  }
  return 0;
}

}  // namespace detail

/// Number of bits needed to hold every code vector at `levels`, i.e. the
/// bit length of levels^48 - 1.
inline int code_space_bits(int levels) {
  detail::WideUint n{};
  n[0] = 1;
  for (std::size_t i = 0; i < kPatchDim; ++i) detail::mul_add(n, static_cast<std::uint32_t>(levels), 0);
  // levels^48 - 1; levels >= 2 so n > 0 and the borrow stops early.
  for (auto& limb : n) {
    if (limb-- != 0) break;
  }
  return detail::bit_length(n);
}

/// Distance threshold, quantizer resolution and packed width.
struct QualitySetting {
  double epsilon = 0.3;
  int levels = 6;
  int bits_per_patch = 128;

  static QualitySetting low() { return {0.3, 6, 128}; }
  static QualitySetting high() { return {0.2, 20, 256}; }

  std::size_t bytes_per_patch() const { return static_cast<std::size_t>(bits_per_patch) / 8; }

  /// Throws ConfigError unless the setting is usable by the codec.
  void validate() const {
    if (!std::isfinite(epsilon) || epsilon < 0.0) {
      throw ConfigError("epsilon must be a finite value >= 0");
    }
    if (levels < 2 || levels > 255) {
      throw ConfigError("levels must be in [2, 255], got " + std::to_string(levels));
    }
    if (bits_per_patch <= 0 || bits_per_patch % 8 != 0 || bits_per_patch > kMaxBitsPerPatch) {
      throw ConfigError("bits_per_patch must be a positive multiple of 8 <= " +
                        std::to_string(kMaxBitsPerPatch));
    }
    if (code_space_bits(levels) > bits_per_patch) {
      throw ConfigError(std::to_string(levels) + " levels need " +
                        std::to_string(code_space_bits(levels)) + " bits per patch, budget is " +
                        std::to_string(bits_per_patch));
    }
  }

  friend bool operator==(const QualitySetting&, const QualitySetting&) = default;
};

struct QuantizedPatch {
  PatchCodes codes{};
  int levels = 2;

  friend bool operator==(const QuantizedPatch&, const QuantizedPatch&) = default;
};

/// Canonical little-endian encoding of a code vector; equal blocks mean equal patches.
struct PackedPatch {
  std::vector<std::uint8_t> block;

  friend bool operator==(const PackedPatch&, const PackedPatch&) = default;
};

/// Splits an image into its 64 tiles, tile row outer, tile column inner.
inline std::array<RawPatch, kPatchesPerImage> subdivide(std::span<const float> image) {
  if (image.size() != kImageSize) {
    throw ShapeError("image must have 3x32x32 = 3072 values, got " + std::to_string(image.size()));
  }
  std::array<RawPatch, kPatchesPerImage> patches{};
  for (std::size_t ty = 0; ty < kTilesPerSide; ++ty) {
    for (std::size_t tx = 0; tx < kTilesPerSide; ++tx) {
      RawPatch& p = patches[ty * kTilesPerSide + tx];
      std::size_t k = 0;
      for (std::size_t c = 0; c < kChannels; ++c) {
        for (std::size_t y = 0; y < kPatchSide; ++y) {
          const std::size_t row = c * kImageSide * kImageSide + (ty * kPatchSide + y) * kImageSide;
          for (std::size_t x = 0; x < kPatchSide; ++x) {
            p[k++] = image[row + tx * kPatchSide + x];
          }
        }
      }
    }
  }
  return patches;
}

/// Inverse of subdivide.
inline Image reassemble(std::span<const RawPatch> patches) {
  if (patches.size() != kPatchesPerImage) {
    throw ShapeError("reassemble needs 64 patches, got " + std::to_string(patches.size()));
  }
  Image image{};
  for (std::size_t ty = 0; ty < kTilesPerSide; ++ty) {
    for (std::size_t tx = 0; tx < kTilesPerSide; ++tx) {
      const RawPatch& p = patches[ty * kTilesPerSide + tx];
      std::size_t k = 0;
      for (std::size_t c = 0; c < kChannels; ++c) {
        for (std::size_t y = 0; y < kPatchSide; ++y) {
          const std::size_t row = c * kImageSide * kImageSide + (ty * kPatchSide + y) * kImageSide;
          for (std::size_t x = 0; x < kPatchSide; ++x) {
            image[row + tx * kPatchSide + x] = p[k++];
          }
        }
      }
    }
  }
  return image;
}

/// Nearest level index for one value; halves round up, out-of-range input is clamped.
inline std::uint8_t quantize_value(float value, int levels) {
  // NaN has no nearest level; treat it as the lower endpoint.
  const double v = std::isnan(value) ? 0.0 : std::clamp(static_cast<double>(value), 0.0, 1.0);
  // v*(levels-1) is exact in double for a float v and levels <= 255.
  return static_cast<std::uint8_t>(std::floor(v * (levels - 1) + 0.5));
}

inline QuantizedPatch quantize(const RawPatch& p, int levels) {
  if (levels < 2 || levels > 255) {
    throw ConfigError("levels must be in [2, 255], got " + std::to_string(levels));
  }
  QuantizedPatch q;
  q.levels = levels;
  for (std::size_t i = 0; i < kPatchDim; ++i) q.codes[i] = quantize_value(p[i], levels);
  return q;
}

inline float level_value(std::uint8_t code, int levels) {
  return static_cast<float>(static_cast<double>(code) / (levels - 1));
}

inline RawPatch dequantize(const QuantizedPatch& q) {
  RawPatch p{};
  for (std::size_t i = 0; i < kPatchDim; ++i) p[i] = level_value(q.codes[i], q.levels);
  return p;
}

/// Mixed-radix encoding: N = sum codes[i] * levels^i, serialized little-endian.
inline PackedPatch pack(const QuantizedPatch& q, const QualitySetting& setting) {
  if (q.levels != setting.levels) {
    throw EncodingError("patch has " + std::to_string(q.levels) + " levels, setting has " +
                        std::to_string(setting.levels));
  }
  detail::WideUint n{};
  for (std::size_t i = kPatchDim; i-- > 0;) {
    if (q.codes[i] >= setting.levels) {
      throw EncodingError("code " + std::to_string(q.codes[i]) + " at coordinate " +
                          std::to_string(i) + " is out of range");
    }
    detail::mul_add(n, static_cast<std::uint32_t>(setting.levels), q.codes[i]);
  }
  if (detail::bit_length(n) > setting.bits_per_patch) {
    throw EncodingError("code vector does not fit in " + std::to_string(setting.bits_per_patch) +
                        " bits");
  }
  PackedPatch out;
  out.block.resize(setting.bytes_per_patch());
  for (std::size_t b = 0; b < out.block.size(); ++b) {
    out.block[b] = static_cast<std::uint8_t>(n[b / 8] >> (8 * (b % 8)));
  }
  return out;
}

/// Inverse of pack. Throws CorruptionError when the block encodes N >= levels^48.
inline QuantizedPatch unpack(std::span<const std::uint8_t> block, const QualitySetting& setting) {
  if (block.size() != setting.bytes_per_patch()) {
    throw CorruptionError("patch", "block is " + std::to_string(block.size()) +
                                       " bytes, expected " +
                                       std::to_string(setting.bytes_per_patch()));
  }
  detail::WideUint n{};
  for (std::size_t b = 0; b < block.size(); ++b) {
    n[b / 8] |= static_cast<std::uint64_t>(block[b]) << (8 * (b % 8));
  }
  QuantizedPatch q;
  q.levels = setting.levels;
  for (std::size_t i = 0; i < kPatchDim; ++i) {
    q.codes[i] = static_cast<std::uint8_t>(detail::div_mod(n, static_cast<std::uint32_t>(setting.levels)));
  }
  if (detail::bit_length(n) != 0) {
    throw CorruptionError("patch", "block value exceeds the code space of " +
                                       std::to_string(setting.levels) + " levels");
  }
  return q;
}

inline QuantizedPatch unpack(const PackedPatch& b, const QualitySetting& setting) {
  return unpack(std::span<const std::uint8_t>(b.block), setting);
}

/// Sum of squared code differences; the distance in level steps, squared.
inline std::uint32_t squared_code_distance(const PatchCodes& a, const PatchCodes& b) {
#if defined(__SSE2__)
  const __m128i zero = _mm_setzero_si128();
  __m128i acc = zero;
  for (std::size_t o = 0; o < kPatchDim; o += 16) {
    const __m128i va = _mm_loadu_si128(reinterpret_cast<const __m128i*>(a.data() + o));
    const __m128i vb = _mm_loadu_si128(reinterpret_cast<const __m128i*>(b.data() + o));
    const __m128i lo = _mm_sub_epi16(_mm_unpacklo_epi8(va, zero), _mm_unpacklo_epi8(vb, zero));
    const __m128i hi = _mm_sub_epi16(_mm_unpackhi_epi8(va, zero), _mm_unpackhi_epi8(vb, zero));
    acc = _mm_add_epi32(acc, _mm_add_epi32(_mm_madd_epi16(lo, lo), _mm_madd_epi16(hi, hi)));
  }
  acc = _mm_add_epi32(acc, _mm_shuffle_epi32(acc, 0x4e));
  acc = _mm_add_epi32(acc, _mm_shuffle_epi32(acc, 0xb1));
  return static_cast<std::uint32_t>(_mm_cvtsi128_si32(acc));
#else
  std::uint32_t sum = 0;
  for (std::size_t i = 0; i < kPatchDim; ++i) {
    const int d = static_cast<int>(a[i]) - static_cast<int>(b[i]);
    sum += static_cast<std::uint32_t>(d * d);
  }
  return sum;
#endif
}

/// Euclidean distance in level units from an exact integer squared distance.
/// Monotone in `squared`, so thresholds can be decided on integers.
inline double distance_from_squared(std::uint32_t squared, int levels) {
  return std::sqrt(static_cast<double>(squared)) / (levels - 1);
}

/// Euclidean distance between the dequantized patches.
inline double patch_distance(const QuantizedPatch& a, const QuantizedPatch& b) {
  if (a.levels != b.levels) {
    throw EncodingError("cannot compare patches with different level counts");
  }
  return distance_from_squared(squared_code_distance(a.codes, b.codes), a.levels);
}

/// Largest squared code distance whose distance is strictly below eps, or -1
/// when no distance qualifies (eps <= 0).
inline std::int64_t max_squared_below(double eps, int levels) {
  const std::int64_t top = static_cast<std::int64_t>(kPatchDim) * (levels - 1) * (levels - 1);
  if (!(distance_from_squared(0, levels) < eps)) return -1;
  std::int64_t lo = 0, hi = top;
  while (lo < hi) {
    const std::int64_t mid = lo + (hi - lo + 1) / 2;
    if (distance_from_squared(static_cast<std::uint32_t>(mid), levels) < eps) {
      lo = mid;
    } else {
      hi = mid - 1;
    }
  }
  return lo;
}

/// Per-coordinate bound on |dequantize(quantize(p)) - clamp(p)|.
inline double quantization_step_bound(int levels) { return 1.0 / (2.0 * (levels - 1)); }

/// L2 bound on a whole patch's quantization error: sqrt(48) / (2 (levels - 1)).
inline double quantization_patch_bound(int levels) {
  return std::sqrt(static_cast<double>(kPatchDim)) * quantization_step_bound(levels);
}

}  // namespace opre
