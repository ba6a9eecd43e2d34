#include <opre/archive.hpp>

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace opre {
namespace {

using testing::Rng;
using testing::TempDir;

// Images with broad gradients and mild noise, so neighbouring tiles often collapse.
Image smooth_image(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double fx = u(rng) * 0.3, fy = u(rng) * 0.3, phase = u(rng) * 6.28;
  Image img{};
  for (std::size_t c = 0; c < 3; ++c) {
    const double base = u(rng);
    for (std::size_t y = 0; y < 32; ++y) {
      for (std::size_t x = 0; x < 32; ++x) {
        const double v = base * 0.6 + 0.3 * std::sin(fx * x + fy * y + phase) + 0.05 * u(rng);
        img[c * 1024 + y * 32 + x] = static_cast<float>(v);
      }
    }
  }
  return img;
}

std::vector<LabeledImage> smooth_images(Rng& rng, std::size_t n) {
  std::vector<LabeledImage> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].pixels = smooth_image(rng);
    out[i].label = static_cast<std::uint32_t>(i % 10);
    out[i].source_index = i;
  }
  return out;
}

Archive build(const QualitySetting& s, const std::vector<LabeledImage>& images) {
  Archive a(s);
  a.compress_batch(images);
  return a;
}

double tile_error(const Image& original, const Image& reconstructed, std::size_t tile) {
  const auto p = subdivide(original), r = subdivide(reconstructed);
  double sq = 0.0;
  for (std::size_t k = 0; k < kPatchDim; ++k) {
    const double d = static_cast<double>(r[tile][k]) - std::clamp(static_cast<double>(p[tile][k]), 0.0, 1.0);
    sq += d * d;
  }
  return std::sqrt(sq);
}

TEST(Archive, SameImageTwiceReusesIds) {
  Rng rng(1);
  Archive a(QualitySetting::high());
  const Image img = testing::random_image(rng);
  const auto first = a.compress_image(img, 3);
  const auto stored = a.patch_memory().size();
  const auto second = a.compress_image(img, 3);
  EXPECT_EQ(first.patch_ids, second.patch_ids);
  EXPECT_EQ(a.patch_memory().size(), stored);
}

TEST(Archive, ConstantImageUsesOneId) {
  Image img;
  img.fill(0.37f);
  Archive a(QualitySetting::low());
  const auto c = a.compress_image(img, 0);
  for (const auto id : c.patch_ids) EXPECT_EQ(id, 0u);
  EXPECT_EQ(a.patch_memory().size(), 1u);
}

TEST(Archive, OneChangedTileAddsOnePatch) {
  Rng rng(2);
  const Image img = testing::random_image(rng);
  Image other = img;
  // Push tile 27 (row 3, column 3) far away in the red channel.
  for (std::size_t y = 12; y < 16; ++y) {
    for (std::size_t x = 12; x < 16; ++x) other[y * 32 + x] = img[y * 32 + x] > 0.5f ? 0.0f : 1.0f;
  }
  const auto s = QualitySetting::low();
  ASSERT_GE(patch_distance(quantize(subdivide(img)[27], 6), quantize(subdivide(other)[27], 6)), s.epsilon);

  Archive a(s);
  const auto first = a.compress_image(img, 0);
  const auto before = a.patch_memory().size();
  const auto second = a.compress_image(other, 0);
  std::size_t shared = 0;
  for (std::size_t t = 0; t < kPatchesPerImage; ++t) shared += first.patch_ids[t] == second.patch_ids[t];
  EXPECT_EQ(shared, 63u);
  EXPECT_EQ(a.patch_memory().size(), before + 1);
  EXPECT_EQ(second.patch_ids[27], before);
}

TEST(Archive, FirstImageReconstructsToItsQuantization) {
  Rng rng(3);
  const Image img = testing::random_image(rng);
  for (const auto& s : {QualitySetting::low(), QualitySetting::high()}) {
    Archive a(s);
    a.compress_image(img, 0);
    // Tiles of one random image are far apart at both presets, so nothing is merged.
    ASSERT_EQ(a.patch_memory().size(), 64u);
    std::array<RawPatch, kPatchesPerImage> expect;
    const auto patches = subdivide(img);
    for (std::size_t t = 0; t < kPatchesPerImage; ++t) expect[t] = dequantize(quantize(patches[t], s.levels));
    EXPECT_EQ(a.reconstruct_image(0), reassemble(expect));
  }
}

TEST(Archive, ZeroImageReconstructsToZero) {
  Archive a(QualitySetting::high());
  a.compress_image(Image{}, 0);
  const Image r = a.reconstruct_image(0);
  EXPECT_TRUE(std::all_of(r.begin(), r.end(), [](float v) { return v == 0.0f; }));
}

TEST(Archive, ReconstructOutOfRangeThrows) {
  Archive a(QualitySetting::low());
  EXPECT_THROW(a.reconstruct_image(0), ConfigError);
}

TEST(Archive, ReconstructionErrorStaysWithinBound) {
  Rng rng(4);
  const auto images = smooth_images(rng, 300);
  for (const auto& s : {QualitySetting::low(), QualitySetting::high()}) {
    const Archive a = build(s, images);
    EXPECT_LT(a.patch_memory().size(), 300u * 64u);  // some merging happened
    const double bound = s.epsilon + quantization_patch_bound(s.levels);
    for (std::size_t i = 0; i < images.size(); ++i) {
      const Image r = a.reconstruct_image(i);
      for (std::size_t t = 0; t < kPatchesPerImage; ++t) ASSERT_LE(tile_error(images[i].pixels, r, t), bound + 1e-6);
    }
  }
}

TEST(Archive, BatchAndSingleCompressionAgree) {
  Rng rng(5);
  const auto images = smooth_images(rng, 50);
  Archive single(QualitySetting::low());
  for (const auto& img : images) single.compress_image(img.pixels, img.label);
  EXPECT_EQ(single, build(QualitySetting::low(), images));
}

TEST(Archive, ByteLayoutOfATinyArchive) {
  Archive a(QualitySetting::low());
  a.compress_image(Image{}, 7);
  std::vector<std::uint8_t> expect = {'O', 'P', 'R', 'E', 1, 0, 3, 4, 4, 6, 128, 0};
  const auto eps = std::bit_cast<std::uint64_t>(0.3);
  for (int i = 0; i < 8; ++i) expect.push_back(static_cast<std::uint8_t>(eps >> (8 * i)));
  for (const std::uint8_t b : {32, 0, 32, 0}) expect.push_back(b);
  for (const std::uint64_t n : {1u, 1u}) {
    for (int i = 0; i < 8; ++i) expect.push_back(static_cast<std::uint8_t>(n >> (8 * i)));
  }
  expect.insert(expect.end(), 16, 0);  // the all-zero patch
  expect.insert(expect.end(), {7, 0, 0, 0});
  expect.insert(expect.end(), 64 * 4, 0);
  EXPECT_EQ(a.serialize(), expect);
  EXPECT_EQ(expect.size(), kArchiveHeaderBytes + 16 + 4 + 256);
}

TEST(Archive, FileRoundTrip) {
  Rng rng(6);
  TempDir dir;
  for (const auto& s : {QualitySetting::low(), QualitySetting::high()}) {
    const Archive a = build(s, smooth_images(rng, 100));
    write_archive(a, dir / "a.opre");
    const Archive b = read_archive(dir / "a.opre");
    EXPECT_EQ(a, b);
    EXPECT_EQ(b.serialize(), a.serialize());
    for (std::size_t i = 0; i < a.size(); i += 17) EXPECT_EQ(a.reconstruct_image(i), b.reconstruct_image(i));
  }
}

TEST(Archive, EmptyRoundTrip) {
  const Archive a(QualitySetting::high());
  EXPECT_EQ(a.serialize().size(), kArchiveHeaderBytes);
  EXPECT_EQ(Archive::deserialize(a.serialize()), a);
}

TEST(Archive, ReloadedArchiveKeepsCompressing) {
  Rng rng(7);
  const auto images = smooth_images(rng, 80);
  const std::span<const LabeledImage> all(images);
  Archive whole = build(QualitySetting::high(), images);
  Archive part(QualitySetting::high());
  part.compress_batch(all.first(40));
  Archive resumed = Archive::deserialize(part.serialize());
  resumed.compress_batch(all.subspan(40));
  EXPECT_EQ(resumed, whole);
}

std::string section_of(const std::vector<std::uint8_t>& bytes) {
  try {
    Archive::deserialize(bytes);
  } catch (const CorruptionError& e) {
    return e.section();
  }
  return "none";
}

TEST(Archive, CorruptInputsNameTheirSection) {
  Rng rng(8);
  const auto good = build(QualitySetting::low(), smooth_images(rng, 5)).serialize();
  const std::size_t n_patches = Archive::deserialize(good).patch_memory().size();

  auto truncated = good;
  truncated.resize(kArchiveHeaderBytes + 16 * n_patches / 2);
  EXPECT_EQ(section_of(truncated), "patches");
  EXPECT_THROW(Archive::deserialize(truncated), TruncationError);

  auto short_images = good;
  short_images.pop_back();
  EXPECT_EQ(section_of(short_images), "images");

  auto magic = good;
  magic[0] ^= 0x01;
  EXPECT_THROW(Archive::deserialize(magic), MagicError);
  EXPECT_EQ(section_of(magic), "magic");

  auto version = good;
  version[4] = 2;
  EXPECT_THROW(Archive::deserialize(version), VersionError);

  auto header = good;
  header.resize(20);
  EXPECT_EQ(section_of(header), "header");

  auto geometry = good;
  geometry[6] = 1;
  EXPECT_EQ(section_of(geometry), "header");

  auto bad_setting = good;
  bad_setting[9] = 7;  // 7 levels do not fit 128 bits
  EXPECT_EQ(section_of(bad_setting), "header");

  auto trailer = good;
  trailer.push_back(0);
  EXPECT_EQ(section_of(trailer), "trailer");

  auto bad_patch = good;
  std::fill_n(bad_patch.begin() + kArchiveHeaderBytes, 16, 0xff);
  EXPECT_EQ(section_of(bad_patch), "patches");

  auto bad_id = good;
  const std::size_t first_id = kArchiveHeaderBytes + 16 * n_patches + 4;
  bad_id[first_id + 3] = 0x7f;
  EXPECT_EQ(section_of(bad_id), "images");

  EXPECT_EQ(section_of(good), "none");
}

TEST(Archive, MissingFileIsAnIoError) {
  TempDir dir;
  EXPECT_THROW(read_archive(dir / "nope.opre"), IoError);
}

TEST(MemoryReport, DataSizesAtTargetCounts) {
  const auto high10 = make_memory_report(1807000, 50000, 256);
  EXPECT_EQ(high10.patch_bytes, 57824000u);
  EXPECT_EQ(high10.id_bytes, 12800000u);
  EXPECT_NEAR(high10.data_mb, 70.62, 0.005);
  EXPECT_NEAR(make_memory_report(1423000, 50000, 128).data_mb, 35.57, 0.005);
  EXPECT_NEAR(make_memory_report(1455000, 50000, 128).data_mb, 36.08, 0.005);
  EXPECT_NEAR(make_memory_report(1828000, 50000, 256).data_mb, 71.30, 0.005);
  EXPECT_DOUBLE_EQ(high10.raw_mb(), 153.6);
}

TEST(MemoryReport, ModelSizeAddsToTotal) {
  const auto r = make_memory_report(1423000, 50000, 128, 39.88);
  ASSERT_TRUE(r.model_mb);
  EXPECT_NEAR(r.total_mb, 75.45, 0.005);
  EXPECT_DOUBLE_EQ(make_memory_report(10, 1, 128).total_mb, make_memory_report(10, 1, 128).data_mb);
}

TEST(MemoryReport, EmptyArchiveIsZero) {
  const auto r = Archive(QualitySetting::low()).memory_report();
  EXPECT_EQ(r.data_mb, 0.0);
  EXPECT_EQ(r.patch_bytes, 0u);
  EXPECT_EQ(r.retention(), 0.0);
}

TEST(MemoryReport, MatchesArchiveContents) {
  Rng rng(9);
  const Archive a = build(QualitySetting::high(), smooth_images(rng, 20));
  const auto r = a.memory_report();
  EXPECT_EQ(r.n_patches, a.patch_memory().size());
  EXPECT_EQ(r.patch_bytes, a.patch_memory().size() * 32);
  EXPECT_EQ(r.id_bytes, 20u * 256u);
  EXPECT_DOUBLE_EQ(r.retention(), static_cast<double>(a.patch_memory().size()) / (20.0 * 64.0));
}

TEST(Export, ReadBackEqualsReconstruction) {
  Rng rng(10);
  TempDir dir;
  const Archive a = build(QualitySetting::low(), smooth_images(rng, 12));
  export_reconstructed(a, dir / "x.oprx");
  const auto images = read_export(dir / "x.oprx");
  ASSERT_EQ(images.size(), 12u);
  for (std::size_t i = 0; i < images.size(); ++i) {
    EXPECT_EQ(images[i].label, a.images()[i].label);
    EXPECT_EQ(images[i].pixels, a.reconstruct_image(i));
  }
  EXPECT_EQ(std::filesystem::file_size(dir / "x.oprx"), 14u + 12u * (4u + 3072u * 4u));
}

TEST(Export, EmptyArchiveIsHeaderOnly) {
  TempDir dir;
  export_reconstructed(Archive(QualitySetting::high()), dir / "e.oprx");
  EXPECT_EQ(std::filesystem::file_size(dir / "e.oprx"), 14u);
  EXPECT_TRUE(read_export(dir / "e.oprx").empty());
}

TEST(Export, PayloadArithmetic) {
  EXPECT_EQ(50000u * (4u + 3072u * 4u), 614600000u);
}

TEST(Export, RawImagesRoundTrip) {
  Rng rng(11);
  TempDir dir;
  auto images = smooth_images(rng, 5);
  images[2].pixels[0] = -1.5f;  // unclamped values survive
  write_export(images, dir / "r.oprx");
  EXPECT_EQ(read_export(dir / "r.oprx"), images);
}

TEST(Export, CorruptFilesAreRejected) {
  TempDir dir;
  std::vector<LabeledImage> images(2);
  write_export(images, dir / "r.oprx");
  auto bytes = io::read_file(dir / "r.oprx");
  bytes.pop_back();
  io::write_file(dir / "t.oprx", bytes);
  EXPECT_THROW(read_export(dir / "t.oprx"), TruncationError);
  bytes[0] = 'X';
  io::write_file(dir / "m.oprx", bytes);
  EXPECT_THROW(read_export(dir / "m.oprx"), MagicError);
}

TEST(Ppm, HeaderAndRoundedPixels) {
  TempDir dir;
  Image img{};
  img[0] = 1.0f;          // red of pixel (0,0)
  img[1024 + 1] = 0.5f;   // green of pixel (0,1)
  img[2048 + 32] = 2.0f;  // blue of pixel (1,0), clamped
  write_ppm(img, dir / "p.ppm");
  std::ifstream in(dir / "p.ppm", std::ios::binary);
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string header = "P6\n32 32\n255\n";
  ASSERT_EQ(data.size(), header.size() + 3072);
  EXPECT_EQ(data.substr(0, header.size()), header);
  const auto px = [&](std::size_t i) { return static_cast<unsigned char>(data[header.size() + i]); };
  EXPECT_EQ(px(0), 255);
  EXPECT_EQ(px(4), 128);  // 0.5 * 255 = 127.5 rounds up
  EXPECT_EQ(px(32 * 3 + 2), 255);
  EXPECT_EQ(px(1), 0);
}

TEST(HyperplaneSidecar, RoundTrip) {
  TempDir dir;
  const auto ds = gen_hyperplane_dataset(42, 10);
  write_hyperplane_sidecar(ds, dir / "s.hyperplane");
  const auto s = read_hyperplane_sidecar(dir / "s.hyperplane");
  EXPECT_EQ(s.spec, ds.spec);
  EXPECT_EQ(s.n_images, 10u);
  EXPECT_EQ(s.n_train, 8u);
  EXPECT_EQ(std::filesystem::file_size(dir / "s.hyperplane"), 4u + 2u + 24u + 3072u * 4u);
}

}  // namespace
}  // namespace opre
