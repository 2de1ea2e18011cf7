#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace dpp::scorer {

/// Entries with |s_i| above this count toward the l0 norm.
inline constexpr double kL0Threshold = 1e-12;

/// Below this population standard deviation, znormalize returns zeros.
inline constexpr double kMinSpread = 1e-12;

/// Marks a cache entry that has never been written.
inline constexpr std::int32_t kNeverObserved = -1;

/// Learnable per-sample selection scores plus the two supervision signals.
/// O(N) state.
struct ScoreState {
  std::vector<double> s;                       // learnable scores, start at 1
  std::vector<double> task_loss;               // s_T cache, last observed per-sample loss
  std::vector<std::int32_t> last_updated_epoch;
  std::vector<double> consistency;             // s_C, fixed for the whole run
  double lambda = 1.0;
  double learn_rate = 0.1;
  std::uint32_t steps_per_epoch = 1;

  std::size_t size() const { return s.size(); }

  /// Writes observed losses for ids at the given epoch.
  void record_losses(std::span<const std::size_t> ids, std::span<const double> losses, std::int32_t epoch);

  bool operator==(const ScoreState&) const = default;
};

ScoreState init_scores(std::size_t n, std::vector<double> consistency, double lambda = 1.0,
                       double learn_rate = 0.1, std::uint32_t steps_per_epoch = 1);

/// Zero mean, unit population std; all zeros when the spread is below kMinSpread.
std::vector<double> znormalize(std::span<const double> v);

/// Number of entries with |s_i| > kL0Threshold.
std::size_t l0_count(std::span<const double> s);

/// (1/||s||_0) * sum_i s_i * (lambda * consistency_i - task_i).
/// DomainError if s is all zero.
double score_loss(std::span<const double> s, std::span<const double> task, std::span<const double> consistency,
                  double lambda);

/// (lambda * consistency - task) / ||s||_0, with ||s||_0 held fixed.
std::vector<double> score_gradient(std::span<const double> s, std::span<const double> task,
                                   std::span<const double> consistency, double lambda);

/// steps gradient-descent steps on score_loss with fixed (already normalized)
/// signals: s <- s - learn_rate * score_gradient(s, task, consistency, lambda).
std::vector<double> descend_scores(std::vector<double> s, std::span<const double> task,
                                   std::span<const double> consistency, double lambda, double learn_rate,
                                   std::uint32_t steps);

/// steps_per_epoch gradient-descent steps on score_loss using z-normalized
/// task and consistency signals (normalized once per call). Only s changes.
ScoreState score_step(ScoreState state, std::int32_t current_epoch);

/// Odd length: middle order statistic. Even: mean of the two middle ones.
double median(std::span<const double> v);

struct SelectionResult {
  std::int32_t epoch = 0;
  std::vector<std::size_t> selected_ids;  // ascending
  double median_value = 0.0;
  std::size_t k = 0;
};

/// The k indices with smallest |s_i - median(s)|, ties broken by lower index,
/// returned in ascending order.
SelectionResult select_median_band(std::span<const double> s, std::size_t k, std::int32_t epoch);

/// DPSC snapshot: magic, version, u32 N, s / task_loss / consistency as f32,
/// N i32 epochs, f32 lambda, f32 learn_rate, u32 steps_per_epoch.
void save_state(const ScoreState& state, const std::filesystem::path& path);
ScoreState load_state(const std::filesystem::path& path);

}  // namespace dpp::scorer
