#pragma once

// Compressed-image memory: per-image patch id arrays over a shared patch
// memory, with persistence, reconstruction, export and memory accounting.

#include <opre/byte_io.hpp>
#include <opre/corpus.hpp>
#include <opre/dedup_store.hpp>
#include <opre/errors.hpp>
#include <opre/patch_codec.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace opre {

struct CompressedImage {
  std::uint32_t label = 0;
  std::array<PatchId, kPatchesPerImage> patch_ids{};

  friend bool operator==(const CompressedImage&, const CompressedImage&) = default;
};

/// Storage cost of an archive. Sizes in MB use 1 MB = 10^6 bytes; labels are not counted.
struct MemoryReport {
  std::uint64_t n_patches = 0;
  std::uint64_t n_images = 0;
  int bits_per_patch = 0;
  std::uint64_t patch_bytes = 0;  // n_patches * bits_per_patch / 8
  std::uint64_t id_bytes = 0;     // n_images * 64 * 4
  double data_mb = 0.0;
  std::optional<double> model_mb;
  double total_mb = 0.0;          // data_mb + model_mb (when supplied)

  /// 8-bit pixels of the same images without compression.
  double raw_mb() const { return static_cast<double>(n_images * kImageSize) / 1e6; }

  /// Stored patches over all input patches; 0 for an empty archive.
  double retention() const {
    return n_images == 0 ? 0.0
                         : static_cast<double>(n_patches) / static_cast<double>(n_images * kPatchesPerImage);
  }

  friend bool operator==(const MemoryReport&, const MemoryReport&) = default;
};

inline MemoryReport make_memory_report(std::uint64_t n_patches, std::uint64_t n_images, int bits_per_patch,
                                       std::optional<double> model_mb = std::nullopt) {
  MemoryReport r;
  r.n_patches = n_patches;
  r.n_images = n_images;
  r.bits_per_patch = bits_per_patch;
  r.patch_bytes = n_patches * static_cast<std::uint64_t>(bits_per_patch) / 8;
  r.id_bytes = n_images * kPatchesPerImage * sizeof(PatchId);
  r.data_mb = static_cast<double>(r.patch_bytes + r.id_bytes) / 1e6;
  r.model_mb = model_mb;
  r.total_mb = r.data_mb + model_mb.value_or(0.0);
  return r;
}

inline constexpr std::uint16_t kArchiveVersion = 1;
inline constexpr std::uint16_t kExportVersion = 1;
inline constexpr std::size_t kArchiveHeaderBytes = 40;

class Archive {
 public:
  explicit Archive(QualitySetting setting) : memory_(setting) {}
  Archive(PatchMemory memory, std::vector<CompressedImage> images)
      : memory_(std::move(memory)), images_(std::move(images)) {}

  const QualitySetting& setting() const { return memory_.setting(); }
  const PatchMemory& patch_memory() const { return memory_; }
  const std::vector<CompressedImage>& images() const { return images_; }
  std::size_t size() const { return images_.size(); }

  /// Subdivide, quantize, deduplicate against the patch memory, and append.
  const CompressedImage& compress_image(std::span<const float> image, std::uint32_t label) {
    const auto patches = subdivide(image);
    std::array<QuantizedPatch, kPatchesPerImage> qs;
    for (std::size_t i = 0; i < kPatchesPerImage; ++i) qs[i] = quantize(patches[i], setting().levels);
    const auto ids = memory_.insert_batch(qs);
    CompressedImage c;
    c.label = label;
    std::copy(ids.begin(), ids.end(), c.patch_ids.begin());
    images_.push_back(c);
    return images_.back();
  }

  /// Compresses several images with one batch insertion; same result as one at a time.
  void compress_batch(std::span<const LabeledImage> batch) {
    std::vector<QuantizedPatch> qs;
    qs.reserve(batch.size() * kPatchesPerImage);
    for (const auto& img : batch) {
      for (const auto& p : subdivide(img.pixels)) qs.push_back(quantize(p, setting().levels));
    }
    const auto ids = memory_.insert_batch(qs);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      CompressedImage c;
      c.label = batch[i].label;
      std::copy_n(ids.begin() + static_cast<std::ptrdiff_t>(i * kPatchesPerImage), kPatchesPerImage,
                  c.patch_ids.begin());
      images_.push_back(c);
    }
  }

  Image reconstruct_image(std::size_t index) const {
    if (index >= images_.size()) {
      throw ConfigError("image index " + std::to_string(index) + " out of range (archive has " +
                        std::to_string(images_.size()) + ")");
    }
    std::array<RawPatch, kPatchesPerImage> patches;
    for (std::size_t i = 0; i < kPatchesPerImage; ++i) {
      patches[i] = dequantize(memory_.patch(images_[index].patch_ids[i]));
    }
    return reassemble(patches);
  }

  MemoryReport memory_report(std::optional<double> model_mb = std::nullopt) const {
    return make_memory_report(memory_.size(), images_.size(), setting().bits_per_patch, model_mb);
  }

  /// The archive file format, little-endian throughout:
  /// "OPRE" | u16 version | u8 channels, patch_h, patch_w | u8 levels |
  /// u16 bits_per_patch | f64 epsilon | u16 image_h, image_w | u64 n_patches |
  /// u64 n_images | packed patches in id order | per image: u32 label, 64 x u32 ids.
  std::vector<std::uint8_t> serialize() const {
    const QualitySetting& s = setting();
    io::ByteWriter w;
    w.reserve(kArchiveHeaderBytes + memory_.size() * s.bytes_per_patch() +
              images_.size() * (4 + 4 * kPatchesPerImage));
    w.tag("OPRE");
    w.u16(kArchiveVersion);
    w.u8(kChannels);
    w.u8(kPatchSide);
    w.u8(kPatchSide);
    w.u8(static_cast<std::uint8_t>(s.levels));
    w.u16(static_cast<std::uint16_t>(s.bits_per_patch));
    w.f64(s.epsilon);
    w.u16(kImageSide);
    w.u16(kImageSide);
    w.u64(memory_.size());
    w.u64(images_.size());
    for (const auto& codes : memory_.all_codes()) w.bytes(pack({codes, s.levels}, s).block);
    for (const auto& img : images_) {
      w.u32(img.label);
      for (const auto id : img.patch_ids) w.u32(id);
    }
    return w.take();
  }

  static Archive deserialize(std::span<const std::uint8_t> data) {
    io::ByteReader r(data);
    io::expect_tag(r, "OPRE");
    r.section("version");
    if (const auto v = r.u16(); v != kArchiveVersion) {
      throw VersionError("unsupported archive version " + std::to_string(v));
    }
    r.section("header");
    const auto channels = r.u8();
    const auto patch_h = r.u8();
    const auto patch_w = r.u8();
    QualitySetting s;
    s.levels = r.u8();
    s.bits_per_patch = r.u16();
    s.epsilon = r.f64();
    const auto image_h = r.u16();
    const auto image_w = r.u16();
    const auto n_patches = r.u64();
    const auto n_images = r.u64();
    if (channels != kChannels || patch_h != kPatchSide || patch_w != kPatchSide || image_h != kImageSide ||
        image_w != kImageSide) {
      throw CorruptionError("header", "unsupported geometry");
    }
    try {
      s.validate();
    } catch (const ConfigError& e) {
      throw CorruptionError("header", e.what());
    }
    if (n_patches > kMaxPatches) throw CorruptionError("header", "patch count exceeds 32-bit ids");

    r.section("patches");
    const std::size_t width = s.bytes_per_patch();
    if (n_patches > r.remaining() / width) {
      r.need(static_cast<std::size_t>(std::min<std::uint64_t>(n_patches * width, SIZE_MAX)));
    }
    std::vector<PatchCodes> codes;
    codes.reserve(static_cast<std::size_t>(n_patches));
    for (std::uint64_t i = 0; i < n_patches; ++i) {
      try {
        codes.push_back(unpack(r.bytes(width), s).codes);
      } catch (const CorruptionError& e) {
        throw CorruptionError("patches", "patch " + std::to_string(i) + ": " + e.what());
      }
    }

    r.section("images");
    const std::size_t record = 4 + 4 * kPatchesPerImage;
    if (n_images > r.remaining() / record) r.need(static_cast<std::size_t>(n_images) * record);
    std::vector<CompressedImage> images(static_cast<std::size_t>(n_images));
    for (auto& img : images) {
      img.label = r.u32();
      for (auto& id : img.patch_ids) {
        id = r.u32();
        if (id >= n_patches) {
          throw CorruptionError("images", "patch id " + std::to_string(id) + " >= " + std::to_string(n_patches));
        }
      }
    }
    if (r.remaining() != 0) {
      throw CorruptionError("trailer", std::to_string(r.remaining()) + " unexpected trailing bytes");
    }
    return Archive(PatchMemory::from_codes(s, std::move(codes)), std::move(images));
  }

  friend bool operator==(const Archive& a, const Archive& b) {
    return a.memory_ == b.memory_ && a.images_ == b.images_;
  }

 private:
  PatchMemory memory_;
  std::vector<CompressedImage> images_;
};

inline void write_archive(const Archive& archive, const std::filesystem::path& path) {
  io::write_file(path, archive.serialize());
}

inline Archive read_archive(const std::filesystem::path& path) {
  return Archive::deserialize(io::read_file(path));
}

/// Export format: "OPRX" | u16 version | u64 n_images | per image: u32 label,
/// 3072 f32 pixels (channel-major). Little-endian.
inline void write_export(std::span<const LabeledImage> images, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  io::ByteWriter head;
  head.tag("OPRX");
  head.u16(kExportVersion);
  head.u64(images.size());
  out.write(reinterpret_cast<const char*>(head.data().data()), static_cast<std::streamsize>(head.data().size()));
  for (const auto& img : images) {
    io::ByteWriter w;
    w.reserve(4 + 4 * kImageSize);
    w.u32(img.label);
    for (const float v : img.pixels) w.f32(v);
    out.write(reinterpret_cast<const char*>(w.data().data()), static_cast<std::streamsize>(w.data().size()));
  }
  if (!out) throw IoError("write failed for " + path.string());
}

/// Reconstructs every image of the archive and writes them with their labels.
inline void export_reconstructed(const Archive& archive, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  io::ByteWriter head;
  head.tag("OPRX");
  head.u16(kExportVersion);
  head.u64(archive.size());
  out.write(reinterpret_cast<const char*>(head.data().data()), static_cast<std::streamsize>(head.data().size()));
  for (std::size_t i = 0; i < archive.size(); ++i) {
    io::ByteWriter w;
    w.reserve(4 + 4 * kImageSize);
    w.u32(archive.images()[i].label);
    for (const float v : archive.reconstruct_image(i)) w.f32(v);
    out.write(reinterpret_cast<const char*>(w.data().data()), static_cast<std::streamsize>(w.data().size()));
  }
  if (!out) throw IoError("write failed for " + path.string());
}

inline std::vector<LabeledImage> read_export(const std::filesystem::path& path) {
  const auto data = io::read_file(path);
  io::ByteReader r(data);
  io::expect_tag(r, "OPRX");
  r.section("version");
  if (const auto v = r.u16(); v != kExportVersion) {
    throw VersionError("unsupported export version " + std::to_string(v));
  }
  r.section("header");
  const auto n = r.u64();
  r.section("images");
  const std::size_t record = 4 + 4 * kImageSize;
  if (n > r.remaining() / record) r.need(static_cast<std::size_t>(n) * record);
  std::vector<LabeledImage> images(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < images.size(); ++i) {
    images[i].label = r.u32();
    images[i].source_index = i;
    for (auto& v : images[i].pixels) v = r.f32();
  }
  if (r.remaining() != 0) {
    throw CorruptionError("trailer", std::to_string(r.remaining()) + " unexpected trailing bytes");
  }
  return images;
}

/// Binary PPM (P6) of one image; values are rounded to 8 bits for viewing.
inline void write_ppm(const Image& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P6\n" << kImageSide << ' ' << kImageSide << "\n255\n";
  const std::size_t plane = kImageSide * kImageSide;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < kChannels; ++c) {
      const double v = std::clamp(static_cast<double>(image[c * plane + i]), 0.0, 1.0);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  }
  if (!out) throw IoError("write failed for " + path.string());
}

/// Sidecar for synthetic exports: "OPRH" | u16 version | u64 seed | u64 n_images |
/// u64 n_train | 3072 f32 hyperplane normal. Little-endian.
inline void write_hyperplane_sidecar(const SyntheticDataset& ds, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.tag("OPRH");
  w.u16(1);
  w.u64(ds.spec.seed);
  w.u64(ds.images.size());
  w.u64(ds.n_train);
  for (const float v : ds.spec.v_hyperplane) w.f32(v);
  io::write_file(path, w.data());
}

struct HyperplaneSidecar {
  HyperplaneSpec spec;
  std::uint64_t n_images = 0;
  std::uint64_t n_train = 0;
};

inline HyperplaneSidecar read_hyperplane_sidecar(const std::filesystem::path& path) {
  const auto data = io::read_file(path);
  io::ByteReader r(data);
  io::expect_tag(r, "OPRH");
  r.section("version");
  if (const auto v = r.u16(); v != 1) throw VersionError("unsupported sidecar version " + std::to_string(v));
  r.section("header");
  HyperplaneSidecar s;
  s.spec.seed = r.u64();
  s.n_images = r.u64();
  s.n_train = r.u64();
  r.section("hyperplane");
  s.spec.v_hyperplane.resize(kImageSize);
  for (auto& v : s.spec.v_hyperplane) v = r.f32();
  return s;
}

}  // namespace opre
