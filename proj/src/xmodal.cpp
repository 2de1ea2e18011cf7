#include "dpp/xmodal.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "dpp/binary_io.hpp"
#include "dpp/error.hpp"
#include "dpp/rng.hpp"
#include "dpp/simd/kernels.hpp"

namespace dpp::xmodal {

namespace {

constexpr std::string_view kAdapterMagic = "DPAD";

double norm_or_throw(std::span<const double> v, const char* what) {
  const double n = std::sqrt(simd::dot(v, v));
  if (!(n > 0.0)) throw DomainError(std::string("scaled_cosine: zero-norm ") + what + " vector");
  return n;
}

/// Row-normalized copy; DomainError naming the first zero-norm row.
Matrix unit_rows(const Matrix& m, const char* what, std::vector<double>& norms) {
  Matrix out = m;
  norms.assign(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double n = std::sqrt(simd::dot(m.row(r), m.row(r)));
    if (!(n > 0.0)) throw DomainError(std::string(what) + " row " + std::to_string(r) + " has zero norm");
    norms[r] = n;
    for (auto& v : out.row(r)) v /= n;
  }
  return out;
}

void check_batches(const Matrix& image_batch, const Matrix& text_batch) {
  if (image_batch.rows() == 0) throw ValidationError("InfoNCE batch must be non-empty");
  if (image_batch.rows() != text_batch.rows() || image_batch.cols() != text_batch.cols()) {
    throw ValidationError("InfoNCE image and text batches differ in shape");
  }
}

/// Scaled-cosine logits of unit rows.
Matrix similarity_logits(const Matrix& unit_image, const Matrix& unit_text) {
  const std::size_t b = unit_image.rows();
  Matrix logits(b, b);
  for (std::size_t a = 0; a < b; ++a) {
    for (std::size_t t = 0; t < b; ++t) logits(a, t) = kTau * simd::dot(unit_image.row(a), unit_text.row(t));
  }
  return logits;
}

struct SoftmaxTables {
  double loss = 0.0;
  Matrix row_prob;  // softmax over each row
  Matrix col_prob;  // softmax over each column
};

SoftmaxTables symmetric_cross_entropy(const Matrix& logits) {
  const std::size_t b = logits.rows();
  SoftmaxTables out{0.0, Matrix(b, b), Matrix(b, b)};
  double row_loss = 0.0;
  double col_loss = 0.0;
  for (std::size_t a = 0; a < b; ++a) {
    double mx = logits(a, 0);
    for (std::size_t t = 1; t < b; ++t) mx = std::max(mx, logits(a, t));
    double z = 0.0;
    for (std::size_t t = 0; t < b; ++t) z += std::exp(logits(a, t) - mx);
    for (std::size_t t = 0; t < b; ++t) out.row_prob(a, t) = std::exp(logits(a, t) - mx) / z;
    row_loss += mx + std::log(z) - logits(a, a);
  }
  for (std::size_t t = 0; t < b; ++t) {
    double mx = logits(0, t);
    for (std::size_t a = 1; a < b; ++a) mx = std::max(mx, logits(a, t));
    double z = 0.0;
    for (std::size_t a = 0; a < b; ++a) z += std::exp(logits(a, t) - mx);
    for (std::size_t a = 0; a < b; ++a) out.col_prob(a, t) = std::exp(logits(a, t) - mx) / z;
    col_loss += mx + std::log(z) - logits(t, t);
  }
  out.loss = 0.5 * (row_loss + col_loss) / static_cast<double>(b);
  return out;
}

Matrix gather_rows(const Matrix& src, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), src.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) std::ranges::copy(src.row(rows[r]), out.row(r).begin());
  return out;
}

Matrix gather_text_rows(const Matrix& text, std::span<const Label> labels, std::span<const std::size_t> ids) {
  Matrix out(ids.size(), text.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) std::ranges::copy(text.row(labels[ids[r]]), out.row(r).begin());
  return out;
}

void check_labels(const EmbeddingTable& table, std::span<const Label> observed_labels) {
  if (observed_labels.size() != table.image.rows()) {
    throw ValidationError("label count " + std::to_string(observed_labels.size()) + " does not match " +
                          std::to_string(table.image.rows()) + " image embeddings");
  }
  for (std::size_t i = 0; i < observed_labels.size(); ++i) {
    if (observed_labels[i] >= table.text.rows()) {
      throw ValidationError("sample " + std::to_string(i) + ": label " + std::to_string(observed_labels[i]) +
                            " has no text embedding");
    }
  }
}

}  // namespace

double scaled_cosine(std::span<const double> image, std::span<const double> text) {
  if (image.size() != text.size()) {
    throw ValidationError("scaled_cosine: length mismatch " + std::to_string(image.size()) + " vs " +
                          std::to_string(text.size()));
  }
  const double ni = norm_or_throw(image, "image");
  const double nt = norm_or_throw(text, "text");
  const double cosine = std::clamp(simd::dot(image, text) / (ni * nt), -1.0, 1.0);
  return kTau * cosine;
}

Matrix apply_adapter(const Matrix& map, const Matrix& embeddings) {
  if (map.rows() != map.cols() || map.cols() != embeddings.cols()) {
    throw ValidationError("adapter is " + std::to_string(map.rows()) + "x" + std::to_string(map.cols()) +
                          " but embeddings have dimension " + std::to_string(embeddings.cols()));
  }
  Matrix out(embeddings.rows(), map.rows());
  for (std::size_t r = 0; r < embeddings.rows(); ++r) {
    const auto in = embeddings.row(r);
    auto dst = out.row(r);
    for (std::size_t i = 0; i < map.rows(); ++i) dst[i] = simd::dot(map.row(i), in);
  }
  return out;
}

ConsistencyScores consistency_scores(const EmbeddingTable& table, std::span<const Label> observed_labels,
                                     const AdapterPair& adapters) {
  check_labels(table, observed_labels);
  const Matrix image = apply_adapter(adapters.image_map, table.image);
  const Matrix text = apply_adapter(adapters.text_map, table.text);
  ConsistencyScores out;
  out.values.resize(observed_labels.size());
  for (std::size_t i = 0; i < observed_labels.size(); ++i) {
    out.values[i] = scaled_cosine(image.row(i), text.row(observed_labels[i]));
  }
  return out;
}

double infonce_loss(const Matrix& image_batch, const Matrix& text_batch) {
  check_batches(image_batch, text_batch);
  std::vector<double> ni;
  std::vector<double> nt;
  const Matrix ui = unit_rows(image_batch, "image", ni);
  const Matrix ut = unit_rows(text_batch, "text", nt);
  return symmetric_cross_entropy(similarity_logits(ui, ut)).loss;
}

InfoNceGradient infonce_adapter_gradient(const AdapterPair& adapters, const Matrix& image_batch,
                                         const Matrix& text_batch) {
  check_batches(image_batch, text_batch);
  const std::size_t b = image_batch.rows();
  const std::size_t dim = image_batch.cols();
  const Matrix u = apply_adapter(adapters.image_map, image_batch);
  const Matrix v = apply_adapter(adapters.text_map, text_batch);
  std::vector<double> nu;
  std::vector<double> nv;
  const Matrix uhat = unit_rows(u, "adapted image", nu);
  const Matrix vhat = unit_rows(v, "adapted text", nv);
  const Matrix logits = similarity_logits(uhat, vhat);
  const SoftmaxTables sm = symmetric_cross_entropy(logits);

  // dLoss/dlogit[a][t]
  Matrix g(b, b);
  const double half_over_b = 0.5 / static_cast<double>(b);
  for (std::size_t a = 0; a < b; ++a) {
    for (std::size_t t = 0; t < b; ++t) {
      const double delta = a == t ? 1.0 : 0.0;
      g(a, t) = half_over_b * ((sm.row_prob(a, t) - delta) + (sm.col_prob(a, t) - delta));
    }
  }

  // logit[a][t] = tau * uhat_a . vhat_t, and d(uhat)/du = (I - uhat uhat^T) / |u|.
  Matrix grad_u(b, dim);
  Matrix grad_v(b, dim);
  for (std::size_t a = 0; a < b; ++a) {
    for (std::size_t t = 0; t < b; ++t) {
      const double w = kTau * g(a, t);
      if (w == 0.0) continue;
      const double cosine = logits(a, t) / kTau;
      auto gu = grad_u.row(a);
      auto gv = grad_v.row(t);
      const double su = w / nu[a];
      const double sv = w / nv[t];
      for (std::size_t j = 0; j < dim; ++j) {
        gu[j] += su * (vhat(t, j) - cosine * uhat(a, j));
        gv[j] += sv * (uhat(a, j) - cosine * vhat(t, j));
      }
    }
  }

  // u_a = A x_a  =>  dA = sum_a grad_u[a] x_a^T
  InfoNceGradient out{sm.loss, Matrix(dim, dim), Matrix(dim, dim)};
  for (std::size_t a = 0; a < b; ++a) {
    for (std::size_t i = 0; i < dim; ++i) {
      simd::axpy(grad_u(a, i), image_batch.row(a), out.image_map.row(i));
      simd::axpy(grad_v(a, i), text_batch.row(a), out.text_map.row(i));
    }
  }
  return out;
}

AdapterPair train_adapters(const EmbeddingTable& table, std::span<const Label> observed_labels,
                           const AdapterTrainConfig& config) {
  check_labels(table, observed_labels);
  if (config.batch_size < 2) throw ValidationError("adapter batch size must be >= 2");
  if (!(config.learn_rate > 0.0) || !std::isfinite(config.learn_rate)) {
    throw ValidationError("adapter learning rate must be positive");
  }
  AdapterPair adapters = AdapterPair::identity(table.dim());
  const std::size_t n = table.image.rows();
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_rng(config.seed, StreamTag::kAdapterShuffle, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::span<const std::size_t> ids(order.data() + start, std::min(config.batch_size, n - start));
      const Matrix images = gather_rows(table.image, ids);
      const Matrix texts = gather_text_rows(table.text, observed_labels, ids);
      const InfoNceGradient grad = infonce_adapter_gradient(adapters, images, texts);
      simd::axpy(-config.learn_rate, grad.image_map.data(), adapters.image_map.data());
      simd::axpy(-config.learn_rate, grad.text_map.data(), adapters.text_map.data());
    }
  }
  return adapters;
}

double mean_infonce_loss(const EmbeddingTable& table, std::span<const Label> observed_labels,
                         const AdapterPair& adapters, std::size_t batch_size, std::uint64_t seed) {
  check_labels(table, observed_labels);
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  const Matrix image = apply_adapter(adapters.image_map, table.image);
  const Matrix text = apply_adapter(adapters.text_map, table.text);
  const std::size_t n = image.rows();
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  Rng rng = make_rng(seed, StreamTag::kAdapterShuffle);
  std::shuffle(ids.begin(), ids.end(), rng);
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::span<const std::size_t> chunk(ids.data() + start, std::min(batch_size, n - start));
    total += infonce_loss(gather_rows(image, chunk), gather_text_rows(text, observed_labels, chunk));
    ++batches;
  }
  return total / static_cast<double>(batches);
}

void save_adapters(const AdapterPair& adapters, const std::filesystem::path& path) {
  const std::size_t d = adapters.dim();
  if (adapters.image_map.cols() != d || adapters.text_map.rows() != d || adapters.text_map.cols() != d) {
    throw ValidationError("adapter maps must both be square with the same side");
  }
  binio::Writer w;
  w.magic(kAdapterMagic);
  w.u32(static_cast<std::uint32_t>(d));
  w.f32_array(adapters.image_map.data());
  w.f32_array(adapters.text_map.data());
  w.save(path);
}

AdapterPair load_adapters(const std::filesystem::path& path) {
  auto r = binio::Reader::open(path);
  r.expect_header(kAdapterMagic);
  const std::size_t d = r.u32();
  AdapterPair out{Matrix(d, d), Matrix(d, d)};
  const auto image = r.f32_array(d * d);
  const auto text = r.f32_array(d * d);
  r.expect_end();
  std::ranges::copy(image, out.image_map.data().begin());
  std::ranges::copy(text, out.text_map.data().begin());
  for (double v : image) {
    if (!std::isfinite(v)) throw FormatError("'" + path.string() + "': non-finite adapter weight");
  }
  for (double v : text) {
    if (!std::isfinite(v)) throw FormatError("'" + path.string() + "': non-finite adapter weight");
  }
  return out;
}

}  // namespace dpp::xmodal
