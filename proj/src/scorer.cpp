#include "dpp/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dpp/binary_io.hpp"
#include "dpp/error.hpp"
#include "dpp/simd/kernels.hpp"

namespace dpp::scorer {

namespace {

constexpr std::string_view kStateMagic = "DPSC";

void check_lengths(std::span<const double> s, std::span<const double> task, std::span<const double> consistency) {
  if (task.size() != s.size() || consistency.size() != s.size()) {
    throw ValidationError("score vectors differ in length: s=" + std::to_string(s.size()) +
                          " s_T=" + std::to_string(task.size()) + " s_C=" + std::to_string(consistency.size()));
  }
}

std::size_t nonzero_or_throw(std::span<const double> s) {
  const std::size_t nnz = l0_count(s);
  if (nnz == 0) throw DomainError("score vector is all zero; ||s||_0 = 0");
  return nnz;
}

}  // namespace

void ScoreState::record_losses(std::span<const std::size_t> ids, std::span<const double> losses,
                               std::int32_t epoch) {
  if (ids.size() != losses.size()) throw ValidationError("record_losses: ids and losses differ in length");
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (ids[j] >= task_loss.size()) throw ValidationError("record_losses: id " + std::to_string(ids[j]) + " out of range");
    task_loss[ids[j]] = losses[j];
    last_updated_epoch[ids[j]] = epoch;
  }
}

ScoreState init_scores(std::size_t n, std::vector<double> consistency, double lambda, double learn_rate,
                       std::uint32_t steps_per_epoch) {
  if (n == 0) throw ValidationError("score state needs at least one sample");
  if (consistency.size() != n) {
    throw ValidationError("consistency vector has " + std::to_string(consistency.size()) + " entries, expected " +
                          std::to_string(n));
  }
  if (!std::isfinite(lambda)) throw ValidationError("lambda must be finite");
  if (!(learn_rate >= 0.0) || !std::isfinite(learn_rate)) throw ValidationError("score learning rate must be >= 0");
  ScoreState state;
  state.s.assign(n, 1.0);
  state.task_loss.assign(n, 0.0);
  state.last_updated_epoch.assign(n, kNeverObserved);
  state.consistency = std::move(consistency);
  state.lambda = lambda;
  state.learn_rate = learn_rate;
  state.steps_per_epoch = steps_per_epoch;
  return state;
}

std::vector<double> znormalize(std::span<const double> v) {
  if (v.empty()) throw ValidationError("znormalize: empty input");
  const double n = static_cast<double>(v.size());
  const double mean = simd::sum(v) / n;
  std::vector<double> centered(v.begin(), v.end());
  for (auto& x : centered) x -= mean;
  const double stddev = std::sqrt(simd::dot(centered, centered) / n);
  if (!(stddev > kMinSpread)) return std::vector<double>(v.size(), 0.0);
  for (auto& x : centered) x /= stddev;
  return centered;
}

std::size_t l0_count(std::span<const double> s) {
  return static_cast<std::size_t>(std::ranges::count_if(s, [](double x) { return std::fabs(x) > kL0Threshold; }));
}

double score_loss(std::span<const double> s, std::span<const double> task, std::span<const double> consistency,
                  double lambda) {
  check_lengths(s, task, consistency);
  const std::size_t nnz = nonzero_or_throw(s);
  std::vector<double> target(consistency.begin(), consistency.end());
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = lambda * consistency[i] - task[i];
  return simd::dot(s, target) / static_cast<double>(nnz);
}

std::vector<double> score_gradient(std::span<const double> s, std::span<const double> task,
                                   std::span<const double> consistency, double lambda) {
  check_lengths(s, task, consistency);
  const double inv = 1.0 / static_cast<double>(nonzero_or_throw(s));
  std::vector<double> grad(s.size());
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = (lambda * consistency[i] - task[i]) * inv;
  return grad;
}

std::vector<double> descend_scores(std::vector<double> s, std::span<const double> task,
                                   std::span<const double> consistency, double lambda, double learn_rate,
                                   std::uint32_t steps) {
  for (std::uint32_t step = 0; step < steps; ++step) {
    const auto grad = score_gradient(s, task, consistency, lambda);
    simd::axpy(-learn_rate, grad, s);
  }
  return s;
}

ScoreState score_step(ScoreState state, std::int32_t current_epoch) {
  const auto task = znormalize(state.task_loss);
  const auto consistency = znormalize(state.consistency);
  try {
    state.s = descend_scores(std::move(state.s), task, consistency, state.lambda, state.learn_rate,
                             state.steps_per_epoch);
    if (l0_count(state.s) == 0) throw DomainError("score vector collapsed to zero");
  } catch (const DomainError& e) {
    throw DomainError("score step at epoch " + std::to_string(current_epoch) + ": " + e.what());
  }
  return state;
}

double median(std::span<const double> v) {
  if (v.empty()) throw ValidationError("median of an empty vector");
  std::vector<double> work(v.begin(), v.end());
  const std::size_t mid = work.size() / 2;
  std::nth_element(work.begin(), work.begin() + static_cast<std::ptrdiff_t>(mid), work.end());
  const double upper = work[mid];
  if (work.size() % 2 == 1) return upper;
  const double lower = *std::max_element(work.begin(), work.begin() + static_cast<std::ptrdiff_t>(mid));
  return (lower + upper) / 2.0;
}

SelectionResult select_median_band(std::span<const double> s, std::size_t k, std::int32_t epoch) {
  if (k < 1 || k > s.size()) {
    throw ValidationError("selection size k=" + std::to_string(k) + " outside [1, " + std::to_string(s.size()) + "]");
  }
  SelectionResult result;
  result.epoch = epoch;
  result.k = k;
  result.median_value = median(s);

  std::vector<double> distance(s.size());
  simd::abs_deviation(s, result.median_value, distance);
  std::vector<std::size_t> ids(s.size());
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  const auto closer = [&](std::size_t a, std::size_t b) {
    return distance[a] < distance[b] || (distance[a] == distance[b] && a < b);
  };
  if (k < ids.size()) {
    std::nth_element(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(), closer);
    ids.resize(k);
  }
  std::ranges::sort(ids);
  result.selected_ids = std::move(ids);
  return result;
}

void save_state(const ScoreState& state, const std::filesystem::path& path) {
  const std::size_t n = state.size();
  if (state.task_loss.size() != n || state.consistency.size() != n || state.last_updated_epoch.size() != n) {
    throw ValidationError("score state vectors differ in length");
  }
  binio::Writer w;
  w.magic(kStateMagic);
  w.u32(static_cast<std::uint32_t>(n));
  w.f32_array(state.s);
  w.f32_array(state.task_loss);
  w.f32_array(state.consistency);
  for (std::int32_t e : state.last_updated_epoch) w.i32(e);
  w.f32(static_cast<float>(state.lambda));
  w.f32(static_cast<float>(state.learn_rate));
  w.u32(state.steps_per_epoch);
  w.save(path);
}

ScoreState load_state(const std::filesystem::path& path) {
  auto r = binio::Reader::open(path);
  r.expect_header(kStateMagic);
  const std::size_t n = r.u32();
  ScoreState state;
  state.s = r.f32_array(n);
  state.task_loss = r.f32_array(n);
  state.consistency = r.f32_array(n);
  state.last_updated_epoch.resize(n);
  for (auto& e : state.last_updated_epoch) e = r.i32();
  state.lambda = r.f32();
  state.learn_rate = r.f32();
  state.steps_per_epoch = r.u32();
  r.expect_end();
  return state;
}

}  // namespace dpp::scorer
