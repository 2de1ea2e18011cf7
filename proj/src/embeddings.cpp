#include "dpp/embeddings.hpp"

#include <cmath>
#include <string>

#include "dpp/binary_io.hpp"
#include "dpp/error.hpp"
#include "dpp/rng.hpp"
#include "unit_directions.hpp"

namespace dpp {

namespace {

constexpr std::string_view kImageMagic = "DPEM";
constexpr std::string_view kTextMagic = "DPTE";

void validate_rows(const Matrix& m, const std::string& what) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double sq = 0.0;
    for (double v : m.row(r)) {
      if (!std::isfinite(v)) throw ValidationError(what + " row " + std::to_string(r) + ": non-finite entry");
      sq += v * v;
    }
    if (!(sq > 0.0)) throw ValidationError(what + " row " + std::to_string(r) + ": zero norm");
  }
}

Matrix load_matrix(const std::filesystem::path& path, std::string_view magic) {
  auto r = binio::Reader::open(path);
  r.expect_header(magic);
  const std::size_t rows = r.u32();
  const std::size_t cols = r.u32();
  Matrix m(rows, cols);
  auto values = r.f32_array(rows * cols);
  std::copy(values.begin(), values.end(), m.data().begin());
  r.expect_end();
  return m;
}

void save_matrix(const Matrix& m, std::string_view magic, const std::filesystem::path& path) {
  binio::Writer w;
  w.magic(magic);
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  w.f32_array(m.data());
  w.save(path);
}

}  // namespace

void EmbeddingTable::validate(std::size_t expected_n, std::size_t expected_c) const {
  if (image.rows() != expected_n) {
    throw ValidationError("image embeddings have " + std::to_string(image.rows()) + " rows, expected " +
                          std::to_string(expected_n));
  }
  if (text.rows() != expected_c) {
    throw ValidationError("text embeddings have " + std::to_string(text.rows()) + " rows, expected " +
                          std::to_string(expected_c));
  }
  if (image.cols() == 0) throw ValidationError("embedding dimension must be at least 1");
  if (image.cols() != text.cols()) {
    throw ValidationError("embedding dimension mismatch: image " + std::to_string(image.cols()) + ", text " +
                          std::to_string(text.cols()));
  }
  validate_rows(image, "image embedding");
  validate_rows(text, "text embedding");
}

EmbeddingTable load_embeddings(const std::filesystem::path& image_path,
                               const std::filesystem::path& text_path, std::size_t expected_n,
                               std::size_t expected_c) {
  EmbeddingTable table{load_matrix(image_path, kImageMagic), load_matrix(text_path, kTextMagic)};
  try {
    table.validate(expected_n, expected_c);
  } catch (const ValidationError& e) {
    throw ValidationError("'" + image_path.string() + "'/'" + text_path.string() + "': " + e.what());
  }
  return table;
}

void save_image_embeddings(const Matrix& image, const std::filesystem::path& path) {
  save_matrix(image, kImageMagic, path);
}

void save_text_embeddings(const Matrix& text, const std::filesystem::path& path) {
  save_matrix(text, kTextMagic, path);
}

EmbeddingTable synthesize_embeddings(const Dataset& ds, const EmbeddingSynthConfig& config) {
  if (config.dim < 2) throw ValidationError("embedding dimension must be >= 2");
  if (!(config.anchor_scale > 0.0) || !std::isfinite(config.anchor_scale)) {
    throw ValidationError("anchor_scale must be positive");
  }
  if (!(config.jitter_std >= 0.0) || !std::isfinite(config.jitter_std)) {
    throw ValidationError("jitter_std must be non-negative");
  }

  Rng rng = make_rng(config.seed, StreamTag::kEmbeddings);
  const Matrix anchors = unit_directions(ds.num_classes(), config.dim, rng);

  EmbeddingTable table{Matrix(ds.size(), config.dim), Matrix(ds.num_classes(), config.dim)};
  for (std::size_t c = 0; c < ds.num_classes(); ++c) {
    for (std::size_t j = 0; j < config.dim; ++j) {
      table.text(c, j) = static_cast<float>(config.anchor_scale * anchors(c, j));
    }
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Label truth = ds.true_label(i);
    for (std::size_t j = 0; j < config.dim; ++j) {
      const double jitter = config.jitter_std > 0.0 ? config.jitter_std * gauss(rng) : 0.0;
      table.image(i, j) = static_cast<float>(config.anchor_scale * anchors(truth, j) + jitter);
    }
  }
  table.validate(ds.size(), ds.num_classes());
  return table;
}

}  // namespace dpp
