#pragma once

// Dataset ingestion: CIFAR-10/100 binary batches, class-incremental ordering
// and the synthetic hyperplane dataset.

#include <opre/errors.hpp>
#include <opre/patch_codec.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace opre {

struct LabeledImage {
  Image pixels{};
  std::uint32_t label = 0;
  std::size_t source_index = 0;

  friend bool operator==(const LabeledImage&, const LabeledImage&) = default;
};

struct CifarLayout {
  std::size_t label_bytes;  // bytes preceding the pixels in each record
  std::size_t label_offset; // which of them is the label we keep
  std::uint32_t classes;
};

inline constexpr CifarLayout kCifar10Layout{1, 0, 10};
inline constexpr CifarLayout kCifar100Layout{2, 1, 100};  // coarse, then fine

/// Reads every record of one CIFAR binary file, appending to `out`.
inline void read_cifar_file(const std::filesystem::path& path, const CifarLayout& layout,
                            std::vector<LabeledImage>& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::size_t record = layout.label_bytes + kImageSize;
  in.seekg(0, std::ios::end);
  const auto length = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  if (length == 0 || length % record != 0) {
    throw CorruptionError("cifar", path.string() + " is " + std::to_string(length) +
                                       " bytes, not a multiple of the " + std::to_string(record) +
                                       "-byte record");
  }
  std::vector<unsigned char> buf(record);
  const std::size_t n = length / record;
  out.reserve(out.size() + n);
  for (std::size_t r = 0; r < n; ++r) {
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(record))) {
      throw IoError("short read from " + path.string());
    }
    LabeledImage img;
    img.label = buf[layout.label_offset];
    if (img.label >= layout.classes) {
      throw CorruptionError("cifar", path.string() + " record " + std::to_string(r) + " has label " +
                                         std::to_string(img.label));
    }
    img.source_index = out.size();
    for (std::size_t i = 0; i < kImageSize; ++i) {
      img.pixels[i] = static_cast<float>(buf[layout.label_bytes + i]) / 255.0f;
    }
    out.push_back(img);
  }
}

/// The 50,000 CIFAR-10 training images from data_batch_1.bin .. data_batch_5.bin.
inline std::vector<LabeledImage> read_cifar10(const std::filesystem::path& dir) {
  std::vector<LabeledImage> images;
  for (int b = 1; b <= 5; ++b) {
    const auto path = dir / ("data_batch_" + std::to_string(b) + ".bin");
    const auto before = images.size();
    read_cifar_file(path, kCifar10Layout, images);
    if (images.size() - before != 10000) {
      throw CorruptionError("cifar", path.string() + " must hold 10000 records");
    }
  }
  return images;
}

inline std::vector<LabeledImage> read_cifar10_test(const std::filesystem::path& dir) {
  std::vector<LabeledImage> images;
  read_cifar_file(dir / "test_batch.bin", kCifar10Layout, images);
  return images;
}

/// The 50,000 CIFAR-100 training images from train.bin, labelled by fine class.
inline std::vector<LabeledImage> read_cifar100(const std::filesystem::path& dir) {
  std::vector<LabeledImage> images;
  const auto path = dir / "train.bin";
  read_cifar_file(path, kCifar100Layout, images);
  if (images.size() != 50000) throw CorruptionError("cifar", path.string() + " must hold 50000 records");
  return images;
}

inline std::vector<LabeledImage> read_cifar100_test(const std::filesystem::path& dir) {
  std::vector<LabeledImage> images;
  read_cifar_file(dir / "test.bin", kCifar100Layout, images);
  return images;
}

/// Permutation that lists images class by class, keeping dataset order inside a class.
inline std::vector<std::size_t> class_incremental_permutation(std::span<const std::uint32_t> labels) {
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return labels[a] < labels[b]; });
  return order;
}

inline std::vector<LabeledImage> order_class_incremental(std::vector<LabeledImage> images) {
  std::stable_sort(images.begin(), images.end(),
                   [](const LabeledImage& a, const LabeledImage& b) { return a.label < b.label; });
  return images;
}

/// Standard normal deviates from mt19937_64 via the Box-Muller transform.
///
/// Each pair of engine outputs u, v (53-bit uniforms) yields
/// sqrt(-2 ln(1 - u)) * cos(2 pi v) followed by the matching sin term.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u = uniform();
    const double v = uniform();
    const double radius = std::sqrt(-2.0 * std::log(1.0 - u));
    const double angle = 2.0 * std::numbers::pi * v;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

struct HyperplaneSpec {
  std::uint64_t seed = 0;
  /// Flattened channel-major normal vector; its three 1024-value channel blocks are identical.
  std::vector<float> v_hyperplane;

  friend bool operator==(const HyperplaneSpec&, const HyperplaneSpec&) = default;
};

struct SyntheticDataset {
  std::vector<LabeledImage> images;
  HyperplaneSpec spec;
  std::size_t n_train = 0;  // the first n_train images are the training split
};

/// 1 when the scalar product with the hyperplane normal is >= 0, else 0.
inline std::uint32_t hyperplane_label(std::span<const float> pixels, std::span<const float> normal) {
  double dot = 0.0;
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    dot += static_cast<double>(pixels[i]) * static_cast<double>(normal[i]);
  }
  return dot >= 0.0 ? 1u : 0u;
}

/// Linearly separable standard-normal images (unclamped). The normal pattern is
/// drawn first (1024 values, row-major), then each image's 3072 values in
/// channel-major order. The split is 80% train, 20% test.
inline SyntheticDataset gen_hyperplane_dataset(std::uint64_t seed, std::size_t n) {
  if (n == 0) throw ConfigError("synthetic dataset needs at least one image");
  NormalStream normal(seed);
  SyntheticDataset out;
  out.spec.seed = seed;
  const std::size_t plane = kImageSide * kImageSide;
  std::vector<float> pattern(plane);
  for (auto& v : pattern) v = static_cast<float>(normal.next());
  out.spec.v_hyperplane.resize(kImageSize);
  for (std::size_t c = 0; c < kChannels; ++c) {
    std::copy(pattern.begin(), pattern.end(), out.spec.v_hyperplane.begin() + static_cast<std::ptrdiff_t>(c * plane));
  }
  out.images.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    LabeledImage& img = out.images[i];
    for (auto& v : img.pixels) v = static_cast<float>(normal.next());
    img.label = hyperplane_label(img.pixels, out.spec.v_hyperplane);
    img.source_index = i;
  }
  out.n_train = n * 4 / 5;
  return out;
}

}  // namespace opre
