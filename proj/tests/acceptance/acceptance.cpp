// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dpp/cli.hpp"
#include "dpp/dataset.hpp"
#include "dpp/embeddings.hpp"
#include "dpp/harness.hpp"
#include "dpp/scorer.hpp"
#include "dpp/trainer.hpp"
#include "dpp/xmodal.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace dpp;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c);
  return buf;
}

double median3(std::vector<double> v) {
  std::ranges::sort(v);
  return v[v.size() / 2];
}

const std::uint64_t kSeeds[] = {0, 1, 2};

// ---------------------------------------------------------------------------

Verdict score_gradient_oracle() {
  const auto start = Clock::now();
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    // Entries bounded away from zero on both signs so no coordinate crosses the L0 threshold.
    auto s = testing::random_vector(32, rng, 0.2, 2.0);
    std::bernoulli_distribution flip(0.3);
    for (auto& v : s) v = flip(rng) ? -v : v;
    const auto task = scorer::znormalize(testing::random_vector(32, rng, 0.0, 5.0));
    const auto cons = scorer::znormalize(testing::random_vector(32, rng, -3.0, 3.0));
    const double lambda = 0.5 + trial * 0.02;
    const auto g = scorer::score_gradient(s, task, cons, lambda);
    const auto fd = testing::central_differences(
        [&](std::span<const double> x) { return scorer::score_loss(x, task, cons, lambda); }, s, 1e-6);
    worst = std::max(worst, testing::relative_error(g, fd));
  }
  const double t = seconds_since(start);
  return {worst < 1e-6 && t < 1.0, fmt("max rel err %.2e, %.3f s", worst, t)};
}

Verdict classifier_gradient_oracle() {
  const auto start = Clock::now();
  double worst = 0.0;
  for (auto hidden : {std::optional<std::size_t>{}, std::optional<std::size_t>{8}}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Dataset ds = testing::random_dataset(24, 6, 4, 500 + seed);
      const auto model = trainer::init_model(6, 4, hidden, 0.5, seed);
      std::vector<std::size_t> ids;
      for (std::size_t i = seed % 3; i < ds.size(); i += 2) ids.push_back(i);
      const auto g = trainer::batch_gradient(model, ds, ids);
      const std::vector<double> theta(model.params.values().begin(), model.params.values().end());
      const auto fd = testing::central_differences(
          [&](std::span<const double> p) {
            trainer::ParameterBlock block(model.shape());
            std::ranges::copy(p, block.values().begin());
            return testing::reference_batch_loss(block, ds, ids);
          },
          theta, 1e-5);
      worst = std::max(worst, testing::relative_error(g.values.values(), fd));
    }
  }
  const double t = seconds_since(start);
  return {worst < 1e-4 && t < 5.0, fmt("max rel err %.2e over 40 instances, %.3f s", worst, t)};
}

Verdict selection_oracle() {
  const auto start = Clock::now();
  std::mt19937_64 rng(77);
  std::size_t mismatches = 0;
  std::size_t tied = 0;
  std::size_t even = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 64)(rng);
    std::vector<double> s(n);
    if (trial % 2 == 0) {
      // Few distinct values: guarantees tied distances.
      std::uniform_int_distribution<int> level(-3, 3);
      for (auto& v : s) v = 0.5 * level(rng);
    } else {
      s = testing::random_vector(n, rng, -2.0, 2.0);
    }
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, n)(rng);
    const auto got = scorer::select_median_band(s, k, 0).selected_ids;
    mismatches += got == testing::brute_force_median_band(s, k) ? 0 : 1;
    std::vector<double> sorted = s;
    std::ranges::sort(sorted);
    tied += std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end() ? 1 : 0;
    even += n % 2 == 0 ? 1 : 0;
  }
  const double t = seconds_since(start);
  const bool coverage = tied > 0 && even > 0 && even < 1000;
  return {mismatches == 0 && coverage && t < 1.0,
          fmt("%.0f mismatches, %.0f vectors with ties, %.0f even length", static_cast<double>(mismatches),
              static_cast<double>(tied), static_cast<double>(even)) +
              fmt(", %.3f s", t)};
}

Verdict temperature_constant() {
  std::mt19937_64 rng(9);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = std::uniform_int_distribution<std::size_t>(1, 64)(rng);
    auto u = testing::random_vector(d, rng, -10.0, 10.0);
    if (std::ranges::all_of(u, [](double v) { return v == 0.0; })) u[0] = 1.0;
    worst = std::max(worst, std::fabs(xmodal::scaled_cosine(u, u) - std::log(1.0 / 0.07)));
  }
  return {worst <= 1e-9, fmt("max |sim(u,u) - ln(1/0.07)| = %.2e", worst)};
}

Verdict cost_arithmetic() {
  const auto closed = harness::cost_savings(50000, 35000, 100, 128);
  bool pass = closed == harness::CostSavings{1500000, 11719};
  std::string detail = fmt("closed form (%.0f, %.0f)", static_cast<double>(closed.forward_saved),
                           static_cast<double>(closed.backward_saved));

  const Dataset ds = generate_gaussian_blobs({.n_per_class = 50, .num_classes = 10, .feature_dim = 32, .seed = 5});
  const auto table = synthesize_embeddings(ds, {.dim = 32, .seed = 5});
  const auto adapters = xmodal::AdapterPair::identity(32);
  harness::TrainConfig c;
  c.epochs = 10;
  c.batch_size = 50;
  c.selection_ratio = 0.7;
  c.warmup_epochs = 0;
  c.refresh_every = 0;
  c.seed = 5;
  const auto init = trainer::init_model(32, 10, std::nullopt, c.init_scale, c.seed);
  std::vector<std::size_t> ids(ds.size());
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  const auto cache = trainer::per_sample_losses(init, ds, ids);

  c.strategy = harness::Strategy::kFullData;
  const auto full = harness::run_experiment(c, ds, table, adapters).report;
  c.strategy = harness::Strategy::kDual;
  const auto dual = harness::run_experiment(c, ds, table, adapters, cache).report;
  const auto measured_fwd = full.total_forward_passes - dual.total_forward_passes;
  const auto measured_bwd = full.total_backward_updates - dual.total_backward_updates;
  const auto expected = harness::cost_savings(ds.size(), dual.selected_per_epoch, c.epochs, c.batch_size);
  pass = pass && measured_fwd == expected.forward_saved && measured_bwd == expected.backward_saved;
  detail += fmt("; measured on N=500 (%.0f, %.0f)", static_cast<double>(measured_fwd),
                static_cast<double>(measured_bwd)) +
            fmt(" vs closed form (%.0f, %.0f)", static_cast<double>(expected.forward_saved),
                static_cast<double>(expected.backward_saved));
  return {pass, detail};
}

// ---------------------------------------------------------------------------

struct Scenario {
  Dataset ds;
  EmbeddingTable table;
};

Scenario blobs_scenario(std::uint64_t seed, double label_noise) {
  Dataset ds = generate_gaussian_blobs(
      {.n_per_class = 500, .num_classes = 10, .feature_dim = 32, .class_separation = 6.0, .seed = seed});
  if (label_noise > 0.0) ds = inject_label_noise(ds, label_noise, seed);
  EmbeddingTable table = synthesize_embeddings(ds, {.dim = 32, .jitter_std = 0.1, .seed = seed});
  return {std::move(ds), std::move(table)};
}

struct TimedRun {
  harness::RunReport report;
  double seconds = 0.0;
};

TimedRun timed_run(const Scenario& sc, harness::Strategy strategy, double ratio, std::uint64_t seed) {
  harness::TrainConfig c;
  c.strategy = strategy;
  c.selection_ratio = ratio;
  c.epochs = 30;
  c.batch_size = 64;
  c.learn_rate = 0.5;
  c.lr_decay = 0.98;
  c.seed = seed;
  const auto start = Clock::now();
  auto report = harness::run_experiment(c, sc.ds, sc.table, xmodal::AdapterPair::identity(sc.table.dim())).report;
  return {std::move(report), seconds_since(start)};
}

double mean_post_warmup_noisy_fraction(const harness::RunReport& r) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& m : r.epochs) {
    if (static_cast<std::size_t>(m.epoch) < r.config.warmup_epochs) continue;
    sum += m.selected_noisy_fraction;
    ++count;
  }
  return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

Verdict lossless_pruning() {
  std::vector<double> gaps;
  std::string detail;
  double slowest = 0.0;
  for (auto seed : kSeeds) {
    const auto sc = blobs_scenario(seed, 0.0);
    const auto full = timed_run(sc, harness::Strategy::kFullData, 1.0, seed);
    const auto dual = timed_run(sc, harness::Strategy::kDual, 0.7, seed);
    slowest = std::max({slowest, full.seconds, dual.seconds});
    gaps.push_back(dual.report.final_accuracy - full.report.final_accuracy);
    detail += fmt("seed %.0f dual %.4f full %.4f; ", static_cast<double>(seed), dual.report.final_accuracy,
                  full.report.final_accuracy);
  }
  const double gap = median3(gaps);
  detail += fmt("median gap %+.4f, slowest run %.2f s", gap, slowest);
  return {gap >= -0.015 && slowest < 60.0, detail};
}

struct NoiseRuns {
  std::vector<double> dual20, dual50, random20, random50;
  std::vector<double> dual_acc50, loss_acc50;
  double slowest = 0.0;
};

const NoiseRuns& noise_runs() {
  static const NoiseRuns runs = [] {
    NoiseRuns r;
    for (auto seed : kSeeds) {
      const auto sc = blobs_scenario(seed, 0.20);
      const auto d20 = timed_run(sc, harness::Strategy::kDual, 0.2, seed);
      const auto d50 = timed_run(sc, harness::Strategy::kDual, 0.5, seed);
      const auto r20 = timed_run(sc, harness::Strategy::kRandomDynamic, 0.2, seed);
      const auto r50 = timed_run(sc, harness::Strategy::kRandomDynamic, 0.5, seed);
      const auto l50 = timed_run(sc, harness::Strategy::kLossOnly, 0.5, seed);
      r.dual20.push_back(mean_post_warmup_noisy_fraction(d20.report));
      r.dual50.push_back(mean_post_warmup_noisy_fraction(d50.report));
      r.random20.push_back(mean_post_warmup_noisy_fraction(r20.report));
      r.random50.push_back(mean_post_warmup_noisy_fraction(r50.report));
      r.dual_acc50.push_back(d50.report.final_accuracy);
      r.loss_acc50.push_back(l50.report.final_accuracy);
      r.slowest = std::max({r.slowest, d20.seconds, d50.seconds, r20.seconds, r50.seconds, l50.seconds});
    }
    return r;
  }();
  return runs;
}

Verdict noise_filtering() {
  const auto& r = noise_runs();
  const double d20 = median3(r.dual20);
  const double d50 = median3(r.dual50);
  bool random_ok = true;
  double random_lo = 1.0;
  double random_hi = 0.0;
  for (const auto* v : {&r.random20, &r.random50}) {
    for (double f : *v) {
      random_ok = random_ok && std::fabs(f - 0.20) <= 0.03;
      random_lo = std::min(random_lo, f);
      random_hi = std::max(random_hi, f);
    }
  }
  return {d20 < 0.10 && d50 < 0.10 && random_ok && r.slowest < 60.0,
          fmt("dual noisy fraction median %.4f at 0.2, %.4f at 0.5", d20, d50) +
              fmt("; random_dynamic in [%.4f, %.4f]", random_lo, random_hi) +
              fmt("; slowest run %.2f s", r.slowest)};
}

Verdict dual_beats_loss_only() {
  const auto& r = noise_runs();
  bool pass = true;
  std::string detail;
  for (std::size_t i = 0; i < r.dual_acc50.size(); ++i) {
    pass = pass && r.dual_acc50[i] >= r.loss_acc50[i];
    detail += fmt("seed %.0f dual %.4f loss_only %.4f", static_cast<double>(kSeeds[i]), r.dual_acc50[i],
                  r.loss_acc50[i]);
    if (i + 1 < r.dual_acc50.size()) detail += "; ";
  }
  return {pass, detail};
}

Verdict infonce_anchors() {
  std::mt19937_64 rng(31);
  const double single = xmodal::infonce_loss(testing::random_matrix(1, 5, rng), testing::random_matrix(1, 5, rng));

  double worst_equal = 0.0;
  for (std::size_t b : {2u, 3u, 8u, 17u}) {
    Matrix img(b, 4);
    Matrix txt(b, 4);
    const auto u = testing::random_vector(4, rng);
    const auto v = testing::random_vector(4, rng);
    for (std::size_t r = 0; r < b; ++r) {
      std::ranges::copy(u, img.row(r).begin());
      std::ranges::copy(v, txt.row(r).begin());
    }
    worst_equal = std::max(worst_equal, std::fabs(xmodal::infonce_loss(img, txt) - std::log(static_cast<double>(b))));
  }

  double worst_grad = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix x = testing::random_matrix(5, 3, rng);
    const Matrix t = testing::random_matrix(5, 3, rng);
    xmodal::AdapterPair adapters = xmodal::AdapterPair::identity(3);
    for (auto& v : adapters.image_map.data()) v += 0.3 * std::uniform_real_distribution<double>(-1, 1)(rng);
    for (auto& v : adapters.text_map.data()) v += 0.3 * std::uniform_real_distribution<double>(-1, 1)(rng);
    const auto g = xmodal::infonce_adapter_gradient(adapters, x, t);
    std::vector<double> params(adapters.image_map.data().begin(), adapters.image_map.data().end());
    params.insert(params.end(), adapters.text_map.data().begin(), adapters.text_map.data().end());
    const auto fd = testing::central_differences(
        [&](std::span<const double> p) {
          Matrix a(3, 3);
          Matrix b(3, 3);
          std::copy(p.begin(), p.begin() + 9, a.data().begin());
          std::copy(p.begin() + 9, p.end(), b.data().begin());
          return testing::reference_infonce(a, b, x, t);
        },
        params, 1e-6);
    std::vector<double> analytic(g.image_map.data().begin(), g.image_map.data().end());
    analytic.insert(analytic.end(), g.text_map.data().begin(), g.text_map.data().end());
    worst_grad = std::max(worst_grad, testing::relative_error(analytic, fd));
  }
  return {std::fabs(single) <= 1e-12 && worst_equal <= 1e-9 && worst_grad < 1e-5,
          fmt("B=1 loss %.2e, max |L - ln B| %.2e, 3x3 gradient rel err %.2e", std::fabs(single), worst_equal,
              worst_grad)};
}

Verdict determinism() {
  testing::TempDir dir;
  std::ostringstream sink;
  auto cli = [&](std::vector<std::string> args) { return cli::run(args, sink, sink); };
  const auto p = [&](const char* name) { return (dir / name).string(); };
  if (cli({"gen", "--n-per-class", "60", "--classes", "5", "--dim", "8", "--embed-dim", "8", "--label-noise", "0.2",
           "--seed", "4", "--out-prefix", p("d")}) != 0) {
    return {false, "gen failed: " + sink.str()};
  }
  auto run = [&](const char* seed, const char* out) {
    return cli({"run", "--data", p("d.dpds"), "--image-emb", p("d.dpem"), "--text-emb", p("d.dpte"), "--strategy",
                "dual", "--ratio", "0.5", "--epochs", "8", "--seed", seed, "--out", p(out)});
  };
  if (run("7", "a.jsonl") != 0 || run("7", "b.jsonl") != 0 || run("8", "c.jsonl") != 0) {
    return {false, "run failed: " + sink.str()};
  }
  const auto a = testing::read_bytes(dir / "a.jsonl");
  const bool same = a == testing::read_bytes(dir / "b.jsonl");
  const bool differs = a != testing::read_bytes(dir / "c.jsonl");
  return {same && differs && !a.empty(),
          std::string("identical flags ") + (same ? "byte-identical" : "DIFFER") + ", changed seed " +
              (differs ? "differs" : "IDENTICAL")};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Verdict()>> criteria[] = {
      {"score gradient matches finite differences", score_gradient_oracle},
      {"classifier gradient matches finite differences", classifier_gradient_oracle},
      {"median-band selection matches brute force", selection_oracle},
      {"self-similarity equals the temperature", temperature_constant},
      {"cost savings arithmetic and measured counters", cost_arithmetic},
      {"pruning at ratio 0.7 is lossless on blobs", lossless_pruning},
      {"dual selection filters label noise", noise_filtering},
      {"dual beats loss-only under noise", dual_beats_loss_only},
      {"InfoNCE anchors and adapter gradient", infonce_anchors},
      {"CLI runs are deterministic", determinism},
  };
  int failures = 0;
  int index = 0;
  for (const auto& [name, check] : criteria) {
    ++index;
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failures += v.pass ? 0 : 1;
    std::printf("%s  %2d  %s: %s\n", v.pass ? "PASS" : "FAIL", index, name, v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", index - failures, index);
  return failures == 0 ? 0 : 1;
}
