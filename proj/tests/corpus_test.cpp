#include <opre/corpus.hpp>

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <fstream>

namespace opre {
namespace {

using testing::Rng;
using testing::TempDir;

// Writes `n` CIFAR records; record r has label bytes (r % 10) or (r % 20, r % 100)
// and pixel byte i equal to (r + i) % 256.
void write_cifar(const std::filesystem::path& path, std::size_t n, std::size_t label_bytes) {
  std::ofstream out(path, std::ios::binary);
  for (std::size_t r = 0; r < n; ++r) {
    if (label_bytes == 1) {
      out.put(static_cast<char>(r % 10));
    } else {
      out.put(static_cast<char>(r % 20));
      out.put(static_cast<char>(r % 100));
    }
    for (std::size_t i = 0; i < 3072; ++i) out.put(static_cast<char>((r + i) % 256));
  }
}

TEST(Cifar, RecordsDecode) {
  TempDir dir;
  write_cifar(dir / "b.bin", 3, 1);
  std::vector<LabeledImage> images;
  read_cifar_file(dir / "b.bin", kCifar10Layout, images);
  ASSERT_EQ(images.size(), 3u);
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(images[r].label, r);
    for (std::size_t i = 0; i < 3072; ++i) {
      ASSERT_EQ(images[r].pixels[i], static_cast<float>((r + i) % 256) / 255.0f);
    }
  }
  EXPECT_EQ(images[0].pixels[255], 1.0f);
  EXPECT_EQ(images[0].pixels[0], 0.0f);
}

TEST(Cifar, FineLabelOfCifar100) {
  TempDir dir;
  write_cifar(dir / "b.bin", 150, 2);
  std::vector<LabeledImage> images;
  read_cifar_file(dir / "b.bin", kCifar100Layout, images);
  ASSERT_EQ(images.size(), 150u);
  EXPECT_EQ(images[99].label, 99u);
  EXPECT_EQ(images[120].label, 20u);
}

TEST(Cifar, WrongLengthIsCorrupt) {
  TempDir dir;
  write_cifar(dir / "b.bin", 2, 1);
  std::filesystem::resize_file(dir / "b.bin", 3073 + 100);
  std::vector<LabeledImage> images;
  EXPECT_THROW(read_cifar_file(dir / "b.bin", kCifar10Layout, images), CorruptionError);
  // A CIFAR-10 record is not a whole number of CIFAR-100 records.
  write_cifar(dir / "c.bin", 1, 1);
  EXPECT_THROW(read_cifar_file(dir / "c.bin", kCifar100Layout, images), CorruptionError);
}

TEST(Cifar, LabelOutOfRangeIsCorrupt) {
  TempDir dir;
  {
    std::ofstream out(dir / "b.bin", std::ios::binary);
    out.put(10);
    out << std::string(3072, '\0');
  }
  std::vector<LabeledImage> images;
  EXPECT_THROW(read_cifar_file(dir / "b.bin", kCifar10Layout, images), CorruptionError);
}

TEST(Cifar, MissingFileIsAnIoError) {
  TempDir dir;
  EXPECT_THROW(read_cifar10(dir.path()), IoError);
  EXPECT_THROW(read_cifar100(dir.path()), IoError);
}

TEST(Cifar, FullTrainingDirectory) {
  TempDir dir;
  for (int b = 1; b <= 5; ++b) write_cifar(dir / ("data_batch_" + std::to_string(b) + ".bin"), 10000, 1);
  const auto images = read_cifar10(dir.path());
  ASSERT_EQ(images.size(), 50000u);
  EXPECT_EQ(images[10003].label, 3u);
  EXPECT_EQ(images[10003].source_index, 10003u);
  float lo = 1.0f, hi = 0.0f;
  for (const auto& img : images) {
    ASSERT_LT(img.label, 10u);
    lo = std::min(lo, *std::min_element(img.pixels.begin(), img.pixels.end()));
    hi = std::max(hi, *std::max_element(img.pixels.begin(), img.pixels.end()));
  }
  EXPECT_EQ(lo, 0.0f);
  EXPECT_EQ(hi, 1.0f);

  std::filesystem::resize_file(dir / "data_batch_4.bin", 3073 * 9999);
  EXPECT_THROW(read_cifar10(dir.path()), CorruptionError);
}

TEST(ClassIncremental, StableOrder) {
  const std::vector<std::uint32_t> labels = {2, 0, 1, 0};
  EXPECT_EQ(class_incremental_permutation(labels), (std::vector<std::size_t>{1, 3, 2, 0}));
  std::vector<LabeledImage> images(4);
  for (std::size_t i = 0; i < 4; ++i) {
    images[i].label = labels[i];
    images[i].source_index = i;
  }
  const auto ordered = order_class_incremental(images);
  std::vector<std::size_t> idx;
  for (const auto& img : ordered) idx.push_back(img.source_index);
  EXPECT_EQ(idx, (std::vector<std::size_t>{1, 3, 2, 0}));
}

TEST(ClassIncremental, SortedInputUnchanged) {
  const std::vector<std::uint32_t> labels = {0, 0, 1, 4, 4, 9};
  EXPECT_EQ(class_incremental_permutation(labels), (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));
}

TEST(ClassIncremental, IsAStablePermutation) {
  Rng rng(1);
  std::uniform_int_distribution<std::uint32_t> d(0, 9);
  std::vector<std::uint32_t> labels(5000);
  for (auto& l : labels) l = d(rng);
  const auto order = class_incremental_permutation(labels);
  // Reference: bucket by label in one pass.
  std::vector<std::size_t> expect;
  for (std::uint32_t c = 0; c < 10; ++c) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) expect.push_back(i);
    }
  }
  EXPECT_EQ(order, expect);
}

TEST(Hyperplane, Deterministic) {
  const auto a = gen_hyperplane_dataset(7, 50);
  const auto b = gen_hyperplane_dataset(7, 50);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.spec, b.spec);
  EXPECT_NE(gen_hyperplane_dataset(8, 50).images, a.images);
}

TEST(Hyperplane, PrefixIsStable) {
  const auto a = gen_hyperplane_dataset(3, 10);
  const auto b = gen_hyperplane_dataset(3, 20);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(a.images[i], b.images[i]);
}

TEST(Hyperplane, NormalIsReplicatedAcrossChannels) {
  const auto ds = gen_hyperplane_dataset(11, 1);
  ASSERT_EQ(ds.spec.v_hyperplane.size(), 3072u);
  for (std::size_t i = 0; i < 1024; ++i) {
    EXPECT_EQ(ds.spec.v_hyperplane[i], ds.spec.v_hyperplane[1024 + i]);
    EXPECT_EQ(ds.spec.v_hyperplane[i], ds.spec.v_hyperplane[2048 + i]);
  }
}

TEST(Hyperplane, SignDefinesTheLabel) {
  const auto ds = gen_hyperplane_dataset(12, 1);
  const auto& v = ds.spec.v_hyperplane;
  std::vector<float> neg(v.size());
  std::transform(v.begin(), v.end(), neg.begin(), [](float x) { return -x; });
  EXPECT_EQ(hyperplane_label(v, v), 1u);
  EXPECT_EQ(hyperplane_label(neg, v), 0u);
  EXPECT_EQ(hyperplane_label(std::vector<float>(3072, 0.0f), v), 1u);
  const auto other = gen_hyperplane_dataset(13, 200);
  for (const auto& img : other.images) {
    double dot = 0.0;
    for (std::size_t i = 0; i < 3072; ++i) dot += static_cast<double>(img.pixels[i]) * other.spec.v_hyperplane[i];
    EXPECT_EQ(img.label, dot >= 0.0 ? 1u : 0u);
  }
}

TEST(Hyperplane, ValuesLookStandardNormal) {
  const auto ds = gen_hyperplane_dataset(14, 200);
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0, outside = 0;
  for (const auto& img : ds.images) {
    for (const float v : img.pixels) {
      sum += v;
      sq += static_cast<double>(v) * v;
      outside += v < 0.0f || v > 1.0f;
      ++n;
    }
  }
  const double mean = sum / n, var = sq / n - mean * mean;
  EXPECT_NEAR(mean, 0.0, 0.01);
  EXPECT_NEAR(var, 1.0, 0.01);
  EXPECT_GT(outside, n / 2);  // unclamped
}

TEST(Hyperplane, LabelsAreBalanced) {
  const auto ds = gen_hyperplane_dataset(0, 50000);
  std::size_t ones = 0;
  for (const auto& img : ds.images) ones += img.label;
  EXPECT_NEAR(static_cast<double>(ones) / 50000.0, 0.5, 0.01);
  EXPECT_EQ(ds.n_train, 40000u);
}

TEST(Hyperplane, NeedsAtLeastOneImage) {
  EXPECT_THROW(gen_hyperplane_dataset(0, 0), ConfigError);
}

}  // namespace
}  // namespace opre
