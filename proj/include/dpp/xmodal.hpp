#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dpp/dataset.hpp"
#include "dpp/embeddings.hpp"
#include "dpp/matrix.hpp"

namespace dpp::xmodal {

/// Similarity temperature, ln(1/0.07). Used both for consistency scores and inside InfoNCE.
inline const double kTau = std::log(1.0 / 0.07);

/// Linear maps (no bias) applied to the frozen image and text embeddings.
struct AdapterPair {
  Matrix image_map;  // d_e x d_e
  Matrix text_map;   // d_e x d_e

  static AdapterPair identity(std::size_t dim) { return {Matrix::identity(dim), Matrix::identity(dim)}; }
  std::size_t dim() const { return image_map.rows(); }

  bool operator==(const AdapterPair&) const = default;
};

struct ConsistencyScores {
  std::vector<double> values;  // s_C, one per sample, each within [-tau, tau]
  double tau = kTau;
};

/// tau * cos(angle(image, text)). DomainError on a zero-norm input,
/// ValidationError on a length mismatch.
double scaled_cosine(std::span<const double> image, std::span<const double> text);

/// Row-wise map * row. ValidationError unless map is square with side embeddings.cols().
Matrix apply_adapter(const Matrix& map, const Matrix& embeddings);

/// s_C[i] = scaled_cosine(adapted image[i], adapted text[observed_labels[i]]).
/// Scored against the observed label, which is what exposes mislabelled samples.
ConsistencyScores consistency_scores(const EmbeddingTable& table, std::span<const Label> observed_labels,
                                     const AdapterPair& adapters);

/// Symmetric contrastive loss over the B x B scaled-cosine matrix with matched
/// rows as positives: half the mean row-wise cross-entropy plus half the mean
/// column-wise cross-entropy.
double infonce_loss(const Matrix& image_batch, const Matrix& text_batch);

struct InfoNceGradient {
  double loss = 0.0;
  Matrix image_map;  // dLoss / d(image_map)
  Matrix text_map;   // dLoss / d(text_map)
};

/// Loss of the adapted batch and its analytic gradient with respect to both maps.
/// Batches are raw (un-adapted) embeddings.
InfoNceGradient infonce_adapter_gradient(const AdapterPair& adapters, const Matrix& image_batch,
                                         const Matrix& text_batch);

struct AdapterTrainConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 64;
  double learn_rate = 0.05;
  std::uint64_t seed = 0;
};

/// Mini-batch gradient descent on InfoNCE, starting from identity maps. Pairs
/// are (image[i], text[observed_labels[i]]); each epoch visits every sample
/// once in a seeded shuffled order.
AdapterPair train_adapters(const EmbeddingTable& table, std::span<const Label> observed_labels,
                           const AdapterTrainConfig& config);

/// Mean InfoNCE over the batches of one seeded shuffle of the whole table.
/// Shuffled because tables are usually stored class-major, and a batch of a
/// single class measures nothing.
double mean_infonce_loss(const EmbeddingTable& table, std::span<const Label> observed_labels,
                         const AdapterPair& adapters, std::size_t batch_size, std::uint64_t seed = 0);

/// DPAD file: magic, version, u32 d_e, image map then text map, row-major f32.
void save_adapters(const AdapterPair& adapters, const std::filesystem::path& path);
AdapterPair load_adapters(const std::filesystem::path& path);

}  // namespace dpp::xmodal
