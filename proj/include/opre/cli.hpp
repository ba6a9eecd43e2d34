#pragma once

// Command implementations behind the `opre` tool. Each command is a plain
// function so it can be driven from tests as well as from main().

#include <opre/archive.hpp>
#include <opre/corpus.hpp>
#include <opre/errors.hpp>
#include <opre/ncm.hpp>
#include <opre/patch_codec.hpp>

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace opre::cli {

enum class Dataset { kCifar10, kCifar100, kSynth, kExportFile };
enum class Ordering { kClassIncremental, kOriginal };

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,
  kIoError = 3,
  kFormatError = 4,
  kCapacityError = 5,
  kInternalError = 70,
};

struct RunConfig {
  Dataset dataset = Dataset::kCifar10;
  std::filesystem::path data_path;
  QualitySetting setting = QualitySetting::low();
  Ordering ordering = Ordering::kClassIncremental;
  std::filesystem::path archive_out;
  std::filesystem::path stats_out;
  std::uint64_t seed = 0;
  std::size_t count = 5000;        // synthetic dataset size
  std::optional<std::size_t> limit;  // compress only the first N images of the stream
  std::size_t batch_images = 64;

  void validate() const {
    setting.validate();
    if (batch_images == 0) throw ConfigError("batch size must be >= 1");
    if (dataset == Dataset::kSynth && count == 0) throw ConfigError("synthetic count must be >= 1");
    if (dataset != Dataset::kSynth && data_path.empty()) throw ConfigError("a data path is required");
    if (archive_out.empty()) throw ConfigError("an archive output path is required");
  }
};

inline Dataset parse_dataset(const std::string& s) {
  if (s == "cifar10") return Dataset::kCifar10;
  if (s == "cifar100") return Dataset::kCifar100;
  if (s == "synth") return Dataset::kSynth;
  if (s == "export-file") return Dataset::kExportFile;
  throw ConfigError("unknown dataset \"" + s + "\" (cifar10 | cifar100 | synth | export-file)");
}

inline QualitySetting parse_preset(const std::string& s) {
  if (s == "low") return QualitySetting::low();
  if (s == "high") return QualitySetting::high();
  throw ConfigError("unknown quality preset \"" + s + "\" (low | high)");
}

inline Ordering parse_ordering(const std::string& s) {
  if (s == "class-incremental") return Ordering::kClassIncremental;
  if (s == "original") return Ordering::kOriginal;
  throw ConfigError("unknown ordering \"" + s + "\" (class-incremental | original)");
}

/// Stats keys shared by `compress` and `stats`; `compress` adds wall_seconds.
inline nlohmann::ordered_json stats_json(const Archive& archive, std::optional<double> model_mb = std::nullopt) {
  const MemoryReport r = archive.memory_report(model_mb);
  nlohmann::ordered_json j;
  j["epsilon"] = archive.setting().epsilon;
  j["levels"] = archive.setting().levels;
  j["bits_per_patch"] = archive.setting().bits_per_patch;
  j["n_images"] = r.n_images;
  j["n_patches"] = r.n_patches;
  j["total_patches"] = r.n_images * kPatchesPerImage;
  j["retention"] = r.retention();
  j["patch_bytes"] = r.patch_bytes;
  j["id_bytes"] = r.id_bytes;
  j["data_mb"] = r.data_mb;
  j["raw_mb"] = r.raw_mb();
  if (r.model_mb) {
    j["model_mb"] = *r.model_mb;
    j["total_mb"] = r.total_mb;
  }
  return j;
}

inline std::vector<LabeledImage> load_stream(const RunConfig& config) {
  std::vector<LabeledImage> images;
  switch (config.dataset) {
    case Dataset::kCifar10:
      images = read_cifar10(config.data_path);
      break;
    case Dataset::kCifar100:
      images = read_cifar100(config.data_path);
      break;
    case Dataset::kSynth:
      images = gen_hyperplane_dataset(config.seed, config.count).images;
      break;
    case Dataset::kExportFile:
      images = read_export(config.data_path);
      break;
  }
  if (config.ordering == Ordering::kClassIncremental) images = order_class_incremental(std::move(images));
  if (config.limit && *config.limit < images.size()) images.resize(*config.limit);
  return images;
}

inline void write_json(const nlohmann::ordered_json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

struct CompressResult {
  Archive archive;
  nlohmann::ordered_json stats;
};

/// Runs the stream end to end, writing the archive and (when configured) the stats file.
inline CompressResult cmd_compress(const RunConfig& config) {
  config.validate();
  const auto images = load_stream(config);
  const auto start = std::chrono::steady_clock::now();
  Archive archive(config.setting);
  const std::span<const LabeledImage> all(images);
  for (std::size_t i = 0; i < all.size(); i += config.batch_images) {
    archive.compress_batch(all.subspan(i, std::min(config.batch_images, all.size() - i)));
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_archive(archive, config.archive_out);
  auto stats = stats_json(archive);
  stats["wall_seconds"] = seconds;
  if (!config.stats_out.empty()) write_json(stats, config.stats_out);
  return {std::move(archive), std::move(stats)};
}

inline nlohmann::ordered_json cmd_stats(const std::filesystem::path& archive_path,
                                        std::optional<double> model_mb = std::nullopt) {
  return stats_json(read_archive(archive_path), model_mb);
}

/// True when every key of `stats` other than wall_seconds has the same value in `compress_stats`.
inline bool stats_consistent(const nlohmann::ordered_json& stats, const nlohmann::ordered_json& compress_stats) {
  for (const auto& [key, value] : stats.items()) {
    if (key == "wall_seconds") continue;
    if (!compress_stats.contains(key) || compress_stats.at(key) != value) return false;
  }
  return true;
}

inline void cmd_export(const std::filesystem::path& archive_path, const std::filesystem::path& out) {
  export_reconstructed(read_archive(archive_path), out);
}

inline void cmd_reconstruct(const std::filesystem::path& archive_path, std::size_t index,
                            const std::filesystem::path& out) {
  write_ppm(read_archive(archive_path).reconstruct_image(index), out);
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& export_path) {
  return std::filesystem::path(export_path.string() + ".hyperplane");
}

/// Writes the synthetic dataset as an export file plus its hyperplane sidecar.
inline SyntheticDataset cmd_synth_gen(std::uint64_t seed, std::size_t n, const std::filesystem::path& out) {
  auto ds = gen_hyperplane_dataset(seed, n);
  write_export(ds.images, out);
  write_hyperplane_sidecar(ds, sidecar_path(out));
  return ds;
}

inline nlohmann::ordered_json cmd_ncm(const std::filesystem::path& train, const std::filesystem::path& test) {
  const NcmReport r = evaluate_ncm(train, test);
  nlohmann::ordered_json j;
  j["d"] = r.dim;
  j["classes"] = r.classes;
  j["n_train"] = r.n_train;
  j["n_test"] = r.n_test;
  j["accuracy"] = r.accuracy();
  auto per_class = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < r.classes; ++c) {
    const auto a = r.class_accuracy(c);
    per_class.push_back(a ? nlohmann::ordered_json(*a) : nlohmann::ordered_json(nullptr));
  }
  j["per_class_accuracy"] = per_class;
  return j;
}

/// Exit code for an exception escaping a command.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kConfigError;
  if (dynamic_cast<const IoError*>(&e)) return kIoError;
  if (dynamic_cast<const CapacityError*>(&e)) return kCapacityError;
  if (dynamic_cast<const CorruptionError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
      dynamic_cast<const ShapeError*>(&e) || dynamic_cast<const EncodingError*>(&e)) {
    return kFormatError;
  }
  return kInternalError;
}

}  // namespace opre::cli
