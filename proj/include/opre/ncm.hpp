#pragma once

// Streaming nearest-class-mean classifier over precomputed feature vectors.

#include <opre/errors.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace opre {

/// Per-class feature sums (Neumaier-compensated) and counts.
class NcmClassifier {
 public:
  explicit NcmClassifier(std::size_t dim, std::size_t classes = 0) : dim_(dim) { ensure_class(classes); }

  std::size_t dim() const { return dim_; }
  std::size_t classes() const { return counts_.size(); }
  std::uint64_t count(std::size_t label) const { return label < counts_.size() ? counts_[label] : 0; }

  void update(std::span<const double> feature, std::size_t label) {
    if (feature.size() != dim_) {
      throw ConfigError("feature has dimension " + std::to_string(feature.size()) + ", classifier expects " +
                        std::to_string(dim_));
    }
    if (label + 1 > counts_.size()) ensure_class(label + 1);
    double* sum = &sums_[label * dim_];
    double* comp = &comps_[label * dim_];
    for (std::size_t i = 0; i < dim_; ++i) {
      const double x = feature[i];
      const double t = sum[i] + x;
      comp[i] += std::abs(sum[i]) >= std::abs(x) ? (sum[i] - t) + x : (x - t) + sum[i];
      sum[i] = t;
    }
    ++counts_[label];
  }

  /// Mean feature of a class; empty when the class has no samples.
  std::vector<double> mean(std::size_t label) const {
    if (count(label) == 0) return {};
    std::vector<double> m(dim_);
    const auto n = static_cast<double>(counts_[label]);
    for (std::size_t i = 0; i < dim_; ++i) m[i] = (sums_[label * dim_ + i] + comps_[label * dim_ + i]) / n;
    return m;
  }

  /// Squared Euclidean distances to every trained class mean (unset for empty classes).
  std::vector<std::optional<double>> distances(std::span<const double> feature) const {
    if (feature.size() != dim_) {
      throw ConfigError("feature has dimension " + std::to_string(feature.size()) + ", classifier expects " +
                        std::to_string(dim_));
    }
    std::vector<std::optional<double>> out(counts_.size());
    for (std::size_t c = 0; c < counts_.size(); ++c) {
      if (counts_[c] == 0) continue;
      const auto m = mean(c);
      double d = 0.0;
      for (std::size_t i = 0; i < dim_; ++i) {
        const double diff = feature[i] - m[i];
        d += diff * diff;
      }
      out[c] = d;
    }
    return out;
  }

  /// Class with the nearest mean; ties go to the lowest class index.
  std::size_t predict(std::span<const double> feature) const {
    const auto ds = distances(feature);
    std::optional<std::size_t> best;
    for (std::size_t c = 0; c < ds.size(); ++c) {
      if (ds[c] && (!best || *ds[c] < *ds[*best])) best = c;
    }
    if (!best) throw ConfigError("no class has been trained");
    return *best;
  }

 private:
  void ensure_class(std::size_t n) {
    if (n <= counts_.size()) return;
    counts_.resize(n, 0);
    sums_.resize(n * dim_, 0.0);
    comps_.resize(n * dim_, 0.0);
  }

  std::size_t dim_;
  std::vector<std::uint64_t> counts_;
  std::vector<double> sums_;
  std::vector<double> comps_;
};

struct FeatureHeader {
  std::size_t dim = 0;
  std::size_t classes = 0;
};

/// Reader for feature files: a "d=<int>,classes=<int>" header line, then one
/// "label,f1,...,fd" row per sample.
class FeatureReader {
 public:
  explicit FeatureReader(const std::filesystem::path& path) : path_(path), in_(path) {
    if (!in_) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in_, line)) throw FormatError(where() + "missing header");
    ++line_no_;
    strip_cr(line);
    const std::string_view v(line);
    if (!v.starts_with("d=")) throw FormatError(where() + "header must look like d=<int>,classes=<int>");
    const auto comma = v.find(",classes=");
    if (comma == std::string_view::npos) throw FormatError(where() + "header must look like d=<int>,classes=<int>");
    header_.dim = parse_uint(v.substr(2, comma - 2));
    header_.classes = parse_uint(v.substr(comma + 9));
    if (header_.dim == 0) throw FormatError(where() + "d must be positive");
    row_.resize(header_.dim);
  }

  const FeatureHeader& header() const { return header_; }

  /// Reads the next row; false at end of file. Blank lines are skipped.
  bool next(std::size_t& label, std::span<const double>& feature) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      strip_cr(line);
      if (line.empty()) continue;
      std::string_view v(line);
      auto comma = v.find(',');
      label = parse_uint(v.substr(0, comma));
      if (label >= header_.classes) {
        throw FormatError(where() + "label " + std::to_string(label) + " >= classes " +
                          std::to_string(header_.classes));
      }
      std::size_t i = 0;
      while (comma != std::string_view::npos) {
        v.remove_prefix(comma + 1);
        comma = v.find(',');
        if (i >= header_.dim) throw FormatError(where() + "row has more than d=" + std::to_string(header_.dim) + " values");
        row_[i++] = parse_double(v.substr(0, comma));
      }
      if (i != header_.dim) {
        throw FormatError(where() + "row has " + std::to_string(i) + " values, expected " +
                          std::to_string(header_.dim));
      }
      feature = row_;
      return true;
    }
    return false;
  }

 private:
  static void strip_cr(std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
  }

  std::string where() const { return path_.string() + ":" + std::to_string(line_no_) + ": "; }

  std::size_t parse_uint(std::string_view s) const {
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) {
      throw FormatError(where() + "expected an integer, got \"" + std::string(s) + "\"");
    }
    return v;
  }

  double parse_double(std::string_view s) const {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) {
      throw FormatError(where() + "expected a number, got \"" + std::string(s) + "\"");
    }
    return v;
  }

  std::filesystem::path path_;
  std::ifstream in_;
  FeatureHeader header_;
  std::vector<double> row_;
  std::size_t line_no_ = 0;
};

struct NcmReport {
  std::size_t dim = 0;
  std::size_t classes = 0;
  std::uint64_t n_train = 0;
  std::uint64_t n_test = 0;
  std::uint64_t n_correct = 0;
  std::vector<std::uint64_t> test_per_class;
  std::vector<std::uint64_t> correct_per_class;

  double accuracy() const { return n_test == 0 ? 0.0 : static_cast<double>(n_correct) / static_cast<double>(n_test); }

  /// Accuracy on one class's test rows; unset when the class has none.
  std::optional<double> class_accuracy(std::size_t c) const {
    if (c >= test_per_class.size() || test_per_class[c] == 0) return std::nullopt;
    return static_cast<double>(correct_per_class[c]) / static_cast<double>(test_per_class[c]);
  }
};

/// Trains on every row of `train_file`, then classifies every row of `test_file`.
inline NcmReport evaluate_ncm(const std::filesystem::path& train_file, const std::filesystem::path& test_file) {
  FeatureReader train(train_file);
  NcmReport report;
  report.dim = train.header().dim;
  report.classes = train.header().classes;
  NcmClassifier ncm(report.dim, report.classes);
  std::size_t label = 0;
  std::span<const double> feature;
  while (train.next(label, feature)) {
    ncm.update(feature, label);
    ++report.n_train;
  }

  FeatureReader test(test_file);
  if (test.header().dim != report.dim) {
    throw FormatError("test features have d=" + std::to_string(test.header().dim) + ", training features d=" +
                      std::to_string(report.dim));
  }
  report.classes = std::max(report.classes, test.header().classes);
  report.test_per_class.assign(report.classes, 0);
  report.correct_per_class.assign(report.classes, 0);
  while (test.next(label, feature)) {
    const std::size_t predicted = ncm.predict(feature);
    ++report.n_test;
    ++report.test_per_class[label];
    if (predicted == label) {
      ++report.n_correct;
      ++report.correct_per_class[label];
    }
  }
  return report;
}

}  // namespace opre
