#pragma once

#include <cstdint>
#include <filesystem>

#include "dpp/dataset.hpp"
#include "dpp/matrix.hpp"

namespace dpp {

/// Frozen cross-modal features: one image embedding per sample and one text
/// embedding per class (the "A photo of [CLASS]" prompt, embedded upstream).
struct EmbeddingTable {
  Matrix image;  // N x d_e
  Matrix text;   // C x d_e

  std::size_t dim() const { return image.cols(); }

  /// Throws ValidationError on dimension mismatch, non-finite entries or zero-norm rows.
  void validate(std::size_t expected_n, std::size_t expected_c) const;

  bool operator==(const EmbeddingTable&) const = default;
};

EmbeddingTable load_embeddings(const std::filesystem::path& image_path,
                               const std::filesystem::path& text_path, std::size_t expected_n,
                               std::size_t expected_c);

/// DPEM (image) and DPTE (text) writers.
void save_image_embeddings(const Matrix& image, const std::filesystem::path& path);
void save_text_embeddings(const Matrix& text, const std::filesystem::path& path);

struct EmbeddingSynthConfig {
  std::size_t dim = 32;
  double anchor_scale = 1.0;
  double jitter_std = 0.1;
  std::uint64_t seed = 0;
};

/// Stand-in for precomputed CLIP features. Class c's text row is anchor_scale
/// times a unit anchor direction (orthonormal anchors when dim >= C). Each image
/// row is its TRUE class's anchor plus isotropic Gaussian jitter, so a
/// mislabelled sample disagrees with the text row of its observed label.
EmbeddingTable synthesize_embeddings(const Dataset& ds, const EmbeddingSynthConfig& config);

}  // namespace dpp
