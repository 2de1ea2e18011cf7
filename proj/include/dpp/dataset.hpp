#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "dpp/matrix.hpp"

namespace dpp {

using Label = std::uint32_t;

/// Read-only view of one training example.
struct Sample {
  std::size_t id;
  std::span<const double> features;
  Label observed_label;
  Label true_label;
  bool is_noisy;
};

/// N labelled feature vectors plus their ground-truth labels.
///
/// Ground truth travels with the data so noise metrics need no joins. The
/// trainer and scorer only ever read observed labels. Feature values are kept
/// representable in f32 by every producer so the binary format round-trips.
class Dataset {
 public:
  /// Validates: N >= 1, C >= 2, label vectors of length N with entries < C,
  /// finite features. Errors name the offending row.
  Dataset(std::size_t num_classes, Matrix features, std::vector<Label> observed_labels,
          std::vector<Label> true_labels);

  std::size_t size() const { return features_.rows(); }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t feature_dim() const { return features_.cols(); }

  std::span<const double> features(std::size_t i) const { return features_.row(i); }
  const Matrix& feature_matrix() const { return features_; }
  Label observed_label(std::size_t i) const { return observed_[i]; }
  Label true_label(std::size_t i) const { return true_[i]; }
  bool is_noisy(std::size_t i) const { return observed_[i] != true_[i]; }
  Sample sample(std::size_t i) const;

  std::span<const Label> observed_labels() const { return observed_; }
  std::span<const Label> true_labels() const { return true_; }
  std::size_t noisy_count() const;

  /// Copy with a replaced observed-label column.
  Dataset with_observed_labels(std::vector<Label> observed) const;

  bool operator==(const Dataset&) const = default;

 private:
  std::size_t num_classes_;
  Matrix features_;
  std::vector<Label> observed_;
  std::vector<Label> true_;
};

/// Loads a DPDS binary file (detected by its magic bytes) or a CSV file with
/// header `f0,...,f{d-1},label,true_label`. CSV carries no class count, so it
/// is taken from num_classes when given and otherwise inferred as
/// max(label) + 1 (at least 2).
Dataset load_dataset(const std::filesystem::path& path,
                     std::optional<std::size_t> num_classes = std::nullopt);

/// Writes DPDS, or CSV when the path ends in ".csv". Output is a pure function of ds.
void save_dataset(const Dataset& ds, const std::filesystem::path& path);

std::vector<std::uint8_t> encode_dpds(const Dataset& ds);

struct BlobConfig {
  std::size_t n_per_class = 500;
  std::size_t num_classes = 10;
  std::size_t feature_dim = 32;
  double class_separation = 6.0;
  double noise_std = 1.0;
  std::uint64_t seed = 0;
};

/// Isotropic Gaussian clusters, one per class, with class means pairwise at
/// least class_separation apart. Samples are ordered class by class.
Dataset generate_gaussian_blobs(const BlobConfig& config);

/// Symmetric label noise: exactly round(rate * N) samples, chosen uniformly
/// without replacement, get an observed label drawn uniformly from the C - 1
/// classes other than their true label.
Dataset inject_label_noise(const Dataset& ds, double rate, std::uint64_t seed);

/// round-half-away-from-zero of ratio * n; the single rounding convention for counts.
std::size_t count_from_ratio(double ratio, std::size_t n);

}  // namespace dpp
