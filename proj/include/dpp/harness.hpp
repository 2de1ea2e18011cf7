#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dpp/dataset.hpp"
#include "dpp/embeddings.hpp"
#include "dpp/scorer.hpp"
#include "dpp/trainer.hpp"
#include "dpp/xmodal.hpp"

namespace dpp::harness {

enum class Strategy {
  kDual,           // learnable score driven by task loss and cross-modal consistency
  kLossOnly,       // top-k by cached task loss
  kRandomDynamic,  // fresh uniform subset each epoch
  kFullData,
};

std::string_view strategy_name(Strategy s);
std::optional<Strategy> parse_strategy(std::string_view name);

struct TrainConfig {
  double selection_ratio = 0.7;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double learn_rate = 0.5;
  double lr_decay = 0.98;
  double lambda = 1.0;
  double score_learn_rate = 0.1;
  std::uint32_t steps_per_epoch = 1;
  std::size_t refresh_every = 10;  // 0 disables full-loss refreshes
  std::size_t warmup_epochs = 1;
  Strategy strategy = Strategy::kDual;
  std::size_t hidden = 0;  // 0 = softmax regression
  double init_scale = 0.01;
  std::uint64_t seed = 0;

  /// ValidationError naming the first bad field.
  void validate(bool cache_prepopulated = false) const;
};

struct EpochMetrics {
  std::int32_t epoch = 0;
  std::size_t selected_count = 0;
  double mean_train_loss = 0.0;
  double eval_accuracy = 0.0;
  std::size_t selected_noisy_count = 0;
  double selected_noisy_fraction = 0.0;
  std::uint64_t forward_passes = 0;
  std::uint64_t backward_updates = 0;
  double median_score = 0.0;

  bool operator==(const EpochMetrics&) const = default;
};

struct RunReport {
  TrainConfig config;
  std::size_t num_samples = 0;
  std::size_t selected_per_epoch = 0;  // k
  std::vector<EpochMetrics> epochs;
  double final_accuracy = 0.0;
  std::uint64_t total_forward_passes = 0;
  std::uint64_t total_backward_updates = 0;
  // Relative to training on all N samples every epoch without refreshes;
  // negative when refreshes cost more than pruning saved.
  std::int64_t forward_saved = 0;
  std::int64_t backward_saved = 0;
};

struct RunOutcome {
  RunReport report;
  trainer::ClassifierModel model;
  scorer::ScoreState scores;
};

/// Dynamic-pruning training loop. Per epoch t:
///   1. warmup (t < warmup_epochs) or full_data: train on every sample;
///   2. otherwise pick D_t by strategy (dual: score_step then median band);
///   3. shuffle D_t, train in mini-batches, caching each forward-passed loss;
///   4. full loss refresh when refresh_every > 0 and t % refresh_every == 0;
///   5. record metrics.
/// initial_losses, when given, pre-populates the task-loss cache so pruning
/// can start at epoch 0 with warmup disabled.
RunOutcome run_experiment(const TrainConfig& config, const Dataset& ds, const EmbeddingTable& table,
                          const xmodal::AdapterPair& adapters,
                          std::optional<std::span<const double>> initial_losses = std::nullopt);

/// Recomputes every cached task loss with the current model and stamps it with epoch.
scorer::ScoreState refresh_losses(const trainer::ClassifierModel& model, const Dataset& ds,
                                  scorer::ScoreState state, std::int32_t epoch,
                                  trainer::CostCounters* counters = nullptr);

struct CostSavings {
  std::uint64_t forward_saved = 0;
  std::uint64_t backward_saved = 0;
  bool operator==(const CostSavings&) const = default;
};

/// forward = (n - k) * epochs, backward = ceil((n - k) * epochs / batch_size).
CostSavings cost_savings(std::uint64_t n, std::uint64_t k, std::uint64_t epochs, std::uint64_t batch_size);

struct NoiseFilterMetrics {
  std::size_t selected_noisy_count = 0;
  double selected_noisy_fraction = 0.0;
  double base_noise_rate = 0.0;
  double filtering_ratio = 0.0;  // selected fraction / base rate; 0 when the base rate is 0
};

NoiseFilterMetrics noise_filter_metrics(const scorer::SelectionResult& selection, const Dataset& ds);

/// One JSON object per epoch (EpochMetrics fields in declaration order), then a summary object.
std::string to_jsonl(const RunReport& report);
void write_jsonl(const RunReport& report, const std::filesystem::path& path);

/// What the report command needs from a metrics stream.
struct RunSummary {
  std::string name;
  std::string strategy;
  double selection_ratio = 0.0;
  std::size_t warmup_epochs = 0;
  double final_accuracy = 0.0;
  std::uint64_t total_forward_passes = 0;
  std::uint64_t total_backward_updates = 0;
  double mean_post_warmup_noisy_fraction = 0.0;
};

/// FormatError with the line number for malformed streams; IoError when unreadable.
RunSummary read_run_summary(const std::filesystem::path& path);

}  // namespace dpp::harness
