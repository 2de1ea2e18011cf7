#include <cmath>
#include <random>

#include "doctest.h"
#include "dpp/error.hpp"
#include "dpp/xmodal.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace dpp;
using xmodal::kTau;
using testing::random_matrix;
using testing::reference_infonce;

namespace {

Matrix rows_of(std::initializer_list<std::vector<double>> rows) {
  Matrix m(rows.size(), rows.begin()->size());
  std::size_t r = 0;
  for (const auto& row : rows) std::ranges::copy(row, m.row(r++).begin());
  return m;
}

}  // namespace

TEST_CASE("temperature is ln(1/0.07)") {
  CHECK(kTau == doctest::Approx(2.65926).epsilon(1e-6));
  CHECK(std::exp(-kTau) == doctest::Approx(0.07).epsilon(1e-14));
}

TEST_CASE("scaled_cosine examples") {
  CHECK(xmodal::scaled_cosine(std::vector<double>{1, 0}, std::vector<double>{1, 0}) ==
        doctest::Approx(2.65926).epsilon(1e-5));
  CHECK(xmodal::scaled_cosine(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
  // (3,4).(0,5) = 20, norms 5 and 5
  CHECK(xmodal::scaled_cosine(std::vector<double>{3, 4}, std::vector<double>{0, 5}) ==
        doctest::Approx(kTau * 20.0 / 25.0).epsilon(1e-12));
  CHECK(xmodal::scaled_cosine(std::vector<double>{3, 4}, std::vector<double>{0, 5}) ==
        doctest::Approx(2.12741).epsilon(1e-5));
}

TEST_CASE("scaled_cosine errors") {
  CHECK_THROWS_AS(xmodal::scaled_cosine(std::vector<double>{0, 0}, std::vector<double>{1, 0}), DomainError);
  CHECK_THROWS_AS(xmodal::scaled_cosine(std::vector<double>{1, 0}, std::vector<double>{0, 0}), DomainError);
  CHECK_THROWS_AS(xmodal::scaled_cosine(std::vector<double>{1, 0}, std::vector<double>{1, 0, 0}), ValidationError);
}

TEST_CASE("scaled_cosine properties: bounded, self-similarity, scale invariance") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + trial % 9;
    auto a = testing::random_vector(n, rng, -5, 5);
    auto b = testing::random_vector(n, rng, -5, 5);
    const double sim = xmodal::scaled_cosine(a, b);
    CHECK(std::fabs(sim) <= kTau);
    CHECK(xmodal::scaled_cosine(a, a) == doctest::Approx(kTau).epsilon(1e-12));
    const double alpha = scale(rng);
    const double beta = scale(rng);
    auto sa = a;
    auto sb = b;
    for (auto& v : sa) v *= alpha;
    for (auto& v : sb) v *= beta;
    CHECK(std::fabs(xmodal::scaled_cosine(sa, sb) - sim) < 1e-9);
  }
}

TEST_CASE("apply_adapter examples") {
  std::mt19937_64 rng(3);
  const Matrix table = random_matrix(5, 3, rng);
  CHECK(xmodal::apply_adapter(Matrix::identity(3), table) == table);
  const Matrix zeroed = xmodal::apply_adapter(Matrix(3, 3), table);
  for (double v : zeroed.data()) CHECK(v == 0.0);
  CHECK_THROWS_AS(xmodal::scaled_cosine(zeroed.row(0), table.row(0)), DomainError);

  const Matrix swap = rows_of({{0, 1}, {1, 0}});
  const Matrix out = xmodal::apply_adapter(swap, rows_of({{2.5, -7}}));
  CHECK(out(0, 0) == -7);
  CHECK(out(0, 1) == 2.5);
  CHECK_THROWS_AS(xmodal::apply_adapter(Matrix(2, 2), table), ValidationError);
  CHECK_THROWS_AS(xmodal::apply_adapter(Matrix(3, 2), table), ValidationError);
}

TEST_CASE("consistency_scores examples") {
  EmbeddingTable t{rows_of({{1, 0}, {0, 1}, {0, 2}}), rows_of({{1, 0}, {0, 3}})};
  const std::vector<Label> labels{0, 0, 1};
  const auto scores = xmodal::consistency_scores(t, labels, xmodal::AdapterPair::identity(2));
  CHECK(scores.tau == kTau);
  CHECK(scores.values[0] == doctest::Approx(kTau).epsilon(1e-15));
  CHECK(scores.values[1] == 0.0);
  CHECK(scores.values[2] == doctest::Approx(kTau).epsilon(1e-15));

  const std::vector<Label> short_labels{0};
  CHECK_THROWS_AS(xmodal::consistency_scores(t, short_labels, xmodal::AdapterPair::identity(2)), ValidationError);
  const std::vector<Label> bad_labels{0, 0, 2};
  CHECK_THROWS_AS(xmodal::consistency_scores(t, bad_labels, xmodal::AdapterPair::identity(2)), ValidationError);
}

TEST_CASE("zero-jitter synthesized table separates every noisy sample from every clean one") {
  Dataset ds = generate_gaussian_blobs({.n_per_class = 50, .num_classes = 5, .feature_dim = 3, .seed = 6});
  ds = inject_label_noise(ds, 0.2, 6);
  const auto table = synthesize_embeddings(ds, {.dim = 8, .jitter_std = 0.0, .seed = 6});
  const auto scores = xmodal::consistency_scores(table, ds.observed_labels(), xmodal::AdapterPair::identity(8));
  double max_noisy = -1e300;
  double min_clean = 1e300;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.is_noisy(i)) {
      max_noisy = std::max(max_noisy, scores.values[i]);
      CHECK(std::fabs(scores.values[i]) < 1e-6);
    } else {
      min_clean = std::min(min_clean, scores.values[i]);
      CHECK(scores.values[i] == doctest::Approx(kTau).epsilon(1e-6));
    }
  }
  CHECK(max_noisy < min_clean);

  const auto again = xmodal::consistency_scores(table, ds.observed_labels(), xmodal::AdapterPair::identity(8));
  CHECK(again.values == scores.values);
}

TEST_CASE("infonce_loss anchors") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix x = random_matrix(1, 4, rng);
    const Matrix t = random_matrix(1, 4, rng);
    CHECK(std::fabs(xmodal::infonce_loss(x, t)) < 1e-12);
  }
  // Every image row equal and every text row equal: all similarities equal.
  for (std::size_t b : {2u, 3u, 7u}) {
    Matrix x(b, 3);
    Matrix t(b, 3);
    for (std::size_t r = 0; r < b; ++r) {
      x(r, 0) = 1.0;
      x(r, 1) = 2.0;
      t(r, 1) = -1.0;
      t(r, 2) = 0.5;
    }
    CHECK(std::fabs(xmodal::infonce_loss(x, t) - std::log(static_cast<double>(b))) < 1e-9);
  }
}

TEST_CASE("infonce_loss on an orthonormal pair") {
  const Matrix eye = rows_of({{1, 0}, {0, 1}});
  // -ln(e^tau / (e^tau + 1)) = ln(1 + e^-tau)
  const double expected = std::log1p(std::exp(-std::log(1.0 / 0.07)));
  CHECK(xmodal::infonce_loss(eye, eye) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(0.0677).epsilon(1e-3));
}

TEST_CASE("infonce_loss is non-negative and validates its input") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t b = 1 + trial % 6;
    CHECK(xmodal::infonce_loss(random_matrix(b, 4, rng), random_matrix(b, 4, rng)) >= 0.0);
  }
  CHECK_THROWS_AS(xmodal::infonce_loss(Matrix(0, 2), Matrix(0, 2)), ValidationError);
  CHECK_THROWS_AS(xmodal::infonce_loss(Matrix(2, 2), Matrix(3, 2)), ValidationError);
  CHECK_THROWS_AS(xmodal::infonce_loss(rows_of({{0, 0}, {1, 0}}), rows_of({{1, 0}, {0, 1}})), DomainError);
}

TEST_CASE("adapter gradient matches central finite differences on 3x3 maps") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t b = 2 + trial % 5;
    const Matrix x = random_matrix(b, 3, rng);
    const Matrix t = random_matrix(b, 3, rng);
    xmodal::AdapterPair adapters{random_matrix(3, 3, rng), random_matrix(3, 3, rng)};
    for (std::size_t i = 0; i < 3; ++i) {
      adapters.image_map(i, i) += 1.5;
      adapters.text_map(i, i) += 1.5;
    }
    const auto grad = xmodal::infonce_adapter_gradient(adapters, x, t);
    CHECK(grad.loss == doctest::Approx(reference_infonce(adapters.image_map, adapters.text_map, x, t)).epsilon(1e-12));

    const std::vector<double> a0(adapters.image_map.data().begin(), adapters.image_map.data().end());
    const std::vector<double> b0(adapters.text_map.data().begin(), adapters.text_map.data().end());
    const auto fd_image = testing::central_differences(
        [&](std::span<const double> p) {
          Matrix a(3, 3);
          std::ranges::copy(p, a.data().begin());
          return reference_infonce(a, adapters.text_map, x, t);
        },
        a0, 1e-6);
    const auto fd_text = testing::central_differences(
        [&](std::span<const double> p) {
          Matrix m(3, 3);
          std::ranges::copy(p, m.data().begin());
          return reference_infonce(adapters.image_map, m, x, t);
        },
        b0, 1e-6);
    CHECK(testing::relative_error(grad.image_map.data(), fd_image) < 1e-5);
    CHECK(testing::relative_error(grad.text_map.data(), fd_text) < 1e-5);
  }
}

TEST_CASE("train_adapters") {
  Dataset ds = generate_gaussian_blobs({.n_per_class = 40, .num_classes = 4, .feature_dim = 2, .seed = 12});
  ds = inject_label_noise(ds, 0.1, 12);
  const auto table = synthesize_embeddings(ds, {.dim = 6, .jitter_std = 0.5, .seed = 12});

  const auto identity = xmodal::train_adapters(table, ds.observed_labels(), {.epochs = 0});
  CHECK(identity == xmodal::AdapterPair::identity(6));

  const xmodal::AdapterTrainConfig cfg{.epochs = 5, .batch_size = 16, .learn_rate = 0.05, .seed = 3};
  const auto trained = xmodal::train_adapters(table, ds.observed_labels(), cfg);
  CHECK(trained == xmodal::train_adapters(table, ds.observed_labels(), cfg));
  CHECK_FALSE(trained == identity);

  const double before = xmodal::mean_infonce_loss(table, ds.observed_labels(), identity, 16);
  const double after = xmodal::mean_infonce_loss(table, ds.observed_labels(), trained, 16);
  CHECK(after <= before);

  CHECK_THROWS_AS(xmodal::train_adapters(table, ds.observed_labels(), {.batch_size = 1}), ValidationError);
  CHECK_THROWS_AS(xmodal::train_adapters(table, ds.observed_labels(), {.learn_rate = 0.0}), ValidationError);
}

TEST_CASE("DPAD round trip") {
  testing::TempDir dir;
  std::mt19937_64 rng(2);
  xmodal::AdapterPair adapters{random_matrix(4, 4, rng), random_matrix(4, 4, rng)};
  for (auto& v : adapters.image_map.data()) v = static_cast<float>(v);
  for (auto& v : adapters.text_map.data()) v = static_cast<float>(v);
  xmodal::save_adapters(adapters, dir / "a.dpad");
  CHECK(xmodal::load_adapters(dir / "a.dpad") == adapters);
  CHECK(testing::read_bytes(dir / "a.dpad").size() == 12 + 2 * 16 * 4);
  CHECK_THROWS_AS(xmodal::load_adapters(dir / "missing.dpad"), IoError);
}
