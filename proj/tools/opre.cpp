#include <opre/cli.hpp>

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

using opre::cli::RunConfig;

void print_json(const nlohmann::ordered_json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    opre::cli::write_json(j, out);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"opre: online patch-redundancy dataset compressor"};
  app.require_subcommand(1);

  // compress
  auto* compress = app.add_subcommand("compress", "Compress a dataset stream into an archive");
  std::string dataset = "cifar10", preset = "low", ordering = "class-incremental";
  std::optional<double> epsilon;
  std::optional<int> levels, bits;
  std::optional<std::size_t> limit;
  RunConfig config;
  std::string data_path, archive_out, stats_out;
  compress->add_option("--dataset", dataset, "cifar10 | cifar100 | synth | export-file")->capture_default_str();
  compress->add_option("--data", data_path, "Dataset directory (CIFAR) or export file");
  compress->add_option("--preset", preset, "Quality preset: low | high")->capture_default_str();
  compress->add_option("--epsilon", epsilon, "Explicit distance threshold (with --levels and --bits)");
  compress->add_option("--levels", levels, "Explicit quantization levels");
  compress->add_option("--bits", bits, "Explicit bits per packed patch");
  compress->add_option("--ordering", ordering, "class-incremental | original")->capture_default_str();
  compress->add_option("--archive", archive_out, "Output archive path")->required();
  compress->add_option("--stats", stats_out, "Output stats JSON path");
  compress->add_option("--seed", config.seed, "Seed for the synthetic dataset")->capture_default_str();
  compress->add_option("--count", config.count, "Synthetic dataset size")->capture_default_str();
  compress->add_option("--limit", limit, "Compress only the first N images of the ordered stream");
  compress->add_option("--batch-size", config.batch_images, "Images per insertion batch")->capture_default_str();

  // stats
  auto* stats = app.add_subcommand("stats", "Recompute the memory report of an archive");
  std::string stats_archive, stats_json_out;
  std::optional<double> model_mb;
  stats->add_option("archive", stats_archive, "Archive file")->required();
  stats->add_option("--model-mb", model_mb, "Model size in MB to include in total_mb");
  stats->add_option("--out", stats_json_out, "Write JSON here instead of stdout");

  // export
  auto* exp = app.add_subcommand("export", "Write every reconstructed image with its label");
  std::string export_archive, export_out;
  exp->add_option("archive", export_archive, "Archive file")->required();
  exp->add_option("out", export_out, "Output export file")->required();

  // reconstruct
  auto* rec = app.add_subcommand("reconstruct", "Write one reconstructed image as PPM");
  std::string rec_archive, rec_out;
  std::size_t rec_index = 0;
  rec->add_option("archive", rec_archive, "Archive file")->required();
  rec->add_option("index", rec_index, "Image index")->required();
  rec->add_option("out", rec_out, "Output .ppm path")->required();

  // synth-gen
  auto* synth = app.add_subcommand("synth-gen", "Generate the synthetic hyperplane dataset");
  std::uint64_t synth_seed = 0;
  std::size_t synth_count = 50000;
  std::string synth_out;
  synth->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();
  synth->add_option("--count", synth_count, "Number of images")->capture_default_str();
  synth->add_option("out", synth_out, "Output export file (sidecar written to <out>.hyperplane)")->required();

  // ncm
  auto* ncm = app.add_subcommand("ncm", "Nearest-class-mean evaluation over feature files");
  std::string ncm_train, ncm_test, ncm_out;
  ncm->add_option("train", ncm_train, "Training feature file")->required();
  ncm->add_option("test", ncm_test, "Test feature file")->required();
  ncm->add_option("--out", ncm_out, "Write JSON here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return opre::cli::kConfigError;
  }

  try {
    if (*compress) {
      config.dataset = opre::cli::parse_dataset(dataset);
      config.ordering = opre::cli::parse_ordering(ordering);
      config.setting = opre::cli::parse_preset(preset);
      if (epsilon || levels || bits) {
        if (!(epsilon && levels && bits)) {
          throw opre::ConfigError("--epsilon, --levels and --bits must be given together");
        }
        config.setting = {*epsilon, *levels, *bits};
      }
      config.data_path = data_path;
      config.archive_out = archive_out;
      config.stats_out = stats_out;
      config.limit = limit;
      const auto result = opre::cli::cmd_compress(config);
      std::cout << result.stats.dump(2) << '\n';
    } else if (*stats) {
      print_json(opre::cli::cmd_stats(stats_archive, model_mb), stats_json_out);
    } else if (*exp) {
      opre::cli::cmd_export(export_archive, export_out);
    } else if (*rec) {
      opre::cli::cmd_reconstruct(rec_archive, rec_index, rec_out);
    } else if (*synth) {
      const auto ds = opre::cli::cmd_synth_gen(synth_seed, synth_count, synth_out);
      std::cout << "wrote " << ds.images.size() << " images (" << ds.n_train << " train) to " << synth_out << '\n';
    } else if (*ncm) {
      print_json(opre::cli::cmd_ncm(ncm_train, ncm_test), ncm_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "opre: " << e.what() << '\n';
    return opre::cli::exit_code_for(e);
  }
  return opre::cli::kOk;
}
