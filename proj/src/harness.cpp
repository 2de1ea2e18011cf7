#include "dpp/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dpp/error.hpp"
#include "dpp/rng.hpp"
#include "json.hpp"

namespace dpp::harness {

namespace {

using json = nlohmann::ordered_json;

constexpr std::pair<Strategy, std::string_view> kStrategyNames[] = {
    {Strategy::kDual, "dual"},
    {Strategy::kLossOnly, "loss_only"},
    {Strategy::kRandomDynamic, "random_dynamic"},
    {Strategy::kFullData, "full_data"},
};

bool needs_loss_cache(Strategy s) { return s == Strategy::kDual || s == Strategy::kLossOnly; }

/// Re-throws the active exception with epoch/phase context, keeping its category.
[[noreturn]] void rethrow_with_context(std::int32_t epoch, std::string_view phase) {
  const std::string ctx = "epoch " + std::to_string(epoch) + " (" + std::string(phase) + "): ";
  try {
    throw;
  } catch (const ValidationError& e) {
    throw ValidationError(ctx + e.what());
  } catch (const DomainError& e) {
    throw DomainError(ctx + e.what());
  }
}

std::vector<std::size_t> all_ids(std::size_t n) {
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  return ids;
}

std::vector<std::size_t> top_k_by_loss(std::span<const double> losses, std::size_t k) {
  auto ids = all_ids(losses.size());
  const auto harder = [&](std::size_t a, std::size_t b) {
    return losses[a] > losses[b] || (losses[a] == losses[b] && a < b);
  };
  if (k < ids.size()) {
    std::nth_element(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(), harder);
    ids.resize(k);
  }
  std::ranges::sort(ids);
  return ids;
}

std::vector<std::size_t> random_subset(std::size_t n, std::size_t k, std::uint64_t seed, std::int32_t epoch) {
  auto ids = all_ids(n);
  Rng rng = make_rng(seed, StreamTag::kRandomSelection, static_cast<std::uint64_t>(epoch));
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(k);
  std::ranges::sort(ids);
  return ids;
}

json config_to_json(const TrainConfig& c) {
  json j;
  j["strategy"] = strategy_name(c.strategy);
  j["selection_ratio"] = c.selection_ratio;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["learn_rate"] = c.learn_rate;
  j["lr_decay"] = c.lr_decay;
  j["lambda"] = c.lambda;
  j["score_learn_rate"] = c.score_learn_rate;
  j["steps_per_epoch"] = c.steps_per_epoch;
  j["refresh_every"] = c.refresh_every;
  j["warmup_epochs"] = c.warmup_epochs;
  j["hidden"] = c.hidden;
  j["init_scale"] = c.init_scale;
  j["seed"] = c.seed;
  return j;
}

json epoch_to_json(const EpochMetrics& m) {
  json j;
  j["epoch"] = m.epoch;
  j["selected_count"] = m.selected_count;
  j["mean_train_loss"] = m.mean_train_loss;
  j["eval_accuracy"] = m.eval_accuracy;
  j["selected_noisy_count"] = m.selected_noisy_count;
  j["selected_noisy_fraction"] = m.selected_noisy_fraction;
  j["forward_passes"] = m.forward_passes;
  j["backward_updates"] = m.backward_updates;
  j["median_score"] = m.median_score;
  return j;
}

}  // namespace

std::string_view strategy_name(Strategy s) {
  for (const auto& [value, name] : kStrategyNames) {
    if (value == s) return name;
  }
  return "unknown";
}

std::optional<Strategy> parse_strategy(std::string_view name) {
  for (const auto& [value, text] : kStrategyNames) {
    if (text == name) return value;
  }
  return std::nullopt;
}

void TrainConfig::validate(bool cache_prepopulated) const {
  if (!(selection_ratio > 0.0 && selection_ratio <= 1.0)) throw ValidationError("selection_ratio must lie in (0, 1]");
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(learn_rate > 0.0) || !std::isfinite(learn_rate)) throw ValidationError("learn_rate must be positive");
  if (!(lr_decay > 0.0) || !std::isfinite(lr_decay)) throw ValidationError("lr_decay must be positive");
  if (!std::isfinite(lambda)) throw ValidationError("lambda must be finite");
  if (!(score_learn_rate >= 0.0) || !std::isfinite(score_learn_rate)) {
    throw ValidationError("score_learn_rate must be >= 0");
  }
  if (steps_per_epoch < 1) throw ValidationError("steps_per_epoch must be >= 1");
  if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) throw ValidationError("init_scale must be >= 0");
  if (needs_loss_cache(strategy) && warmup_epochs < 1 && !cache_prepopulated) {
    throw ValidationError("strategy " + std::string(strategy_name(strategy)) +
                          " needs warmup_epochs >= 1 to populate the loss cache");
  }
}

scorer::ScoreState refresh_losses(const trainer::ClassifierModel& model, const Dataset& ds,
                                  scorer::ScoreState state, std::int32_t epoch, trainer::CostCounters* counters) {
  if (state.size() != ds.size()) {
    throw ValidationError("score state has " + std::to_string(state.size()) + " entries, dataset " +
                          std::to_string(ds.size()));
  }
  const auto ids = all_ids(ds.size());
  const auto losses = trainer::per_sample_losses(model, ds, ids, counters);
  state.record_losses(ids, losses, epoch);
  return state;
}

CostSavings cost_savings(std::uint64_t n, std::uint64_t k, std::uint64_t epochs, std::uint64_t batch_size) {
  if (k < 1 || k > n) throw ValidationError("cost_savings: k must lie in [1, n]");
  if (epochs < 1) throw ValidationError("cost_savings: epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("cost_savings: batch_size must be >= 1");
  const std::uint64_t skipped = (n - k) * epochs;
  return CostSavings{skipped, (skipped + batch_size - 1) / batch_size};
}

NoiseFilterMetrics noise_filter_metrics(const scorer::SelectionResult& selection, const Dataset& ds) {
  NoiseFilterMetrics m;
  for (std::size_t id : selection.selected_ids) {
    if (id >= ds.size()) throw ValidationError("selected id " + std::to_string(id) + " out of range");
    m.selected_noisy_count += ds.is_noisy(id) ? 1 : 0;
  }
  if (!selection.selected_ids.empty()) {
    m.selected_noisy_fraction =
        static_cast<double>(m.selected_noisy_count) / static_cast<double>(selection.selected_ids.size());
  }
  m.base_noise_rate = static_cast<double>(ds.noisy_count()) / static_cast<double>(ds.size());
  m.filtering_ratio = m.base_noise_rate > 0.0 ? m.selected_noisy_fraction / m.base_noise_rate : 0.0;
  return m;
}

RunOutcome run_experiment(const TrainConfig& config, const Dataset& ds, const EmbeddingTable& table,
                          const xmodal::AdapterPair& adapters, std::optional<std::span<const double>> initial_losses) {
  config.validate(initial_losses.has_value());
  const std::size_t n = ds.size();
  table.validate(n, ds.num_classes());
  if (initial_losses && initial_losses->size() != n) {
    throw ValidationError("initial loss cache has " + std::to_string(initial_losses->size()) + " entries, expected " +
                          std::to_string(n));
  }
  const std::size_t k = std::clamp<std::size_t>(count_from_ratio(config.selection_ratio, n), 1, n);

  // Only the dual strategy reads the consistency signal.
  std::vector<double> consistency(n, 0.0);
  if (config.strategy == Strategy::kDual) {
    consistency = xmodal::consistency_scores(table, ds.observed_labels(), adapters).values;
  }
  scorer::ScoreState scores =
      scorer::init_scores(n, std::move(consistency), config.lambda, config.score_learn_rate, config.steps_per_epoch);
  if (initial_losses) {
    scores.task_loss.assign(initial_losses->begin(), initial_losses->end());
  }

  trainer::ClassifierModel model = trainer::init_model(
      ds.feature_dim(), ds.num_classes(),
      config.hidden > 0 ? std::optional<std::size_t>(config.hidden) : std::nullopt, config.init_scale, config.seed);

  RunReport report;
  report.config = config;
  report.num_samples = n;
  report.selected_per_epoch = k;
  double learn_rate = config.learn_rate;

  for (std::size_t t = 0; t < config.epochs; ++t) {
    const auto epoch = static_cast<std::int32_t>(t);
    trainer::CostCounters counters;
    scorer::SelectionResult selection;
    selection.epoch = epoch;

    try {
      const bool train_all = t < config.warmup_epochs || config.strategy == Strategy::kFullData;
      if (train_all) {
        selection.selected_ids = all_ids(n);
      } else {
        switch (config.strategy) {
          case Strategy::kDual:
            scores = scorer::score_step(std::move(scores), epoch);
            selection = scorer::select_median_band(scores.s, k, epoch);
            break;
          case Strategy::kLossOnly:
            selection.selected_ids = top_k_by_loss(scores.task_loss, k);
            break;
          case Strategy::kRandomDynamic:
            selection.selected_ids = random_subset(n, k, config.seed, epoch);
            break;
          case Strategy::kFullData:
            break;
        }
      }
      selection.k = selection.selected_ids.size();
    } catch (...) {
      rethrow_with_context(epoch, "selection");
    }

    double loss_sum = 0.0;
    try {
      std::vector<std::size_t> order = selection.selected_ids;
      Rng rng = make_rng(config.seed, StreamTag::kEpochShuffle, t);
      std::shuffle(order.begin(), order.end(), rng);
      std::vector<double> losses;
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::span<const std::size_t> batch(order.data() + start, std::min(config.batch_size, order.size() - start));
        losses.resize(batch.size());
        const auto grad = trainer::batch_gradient(model, ds, batch, losses);
        counters.forward_passes += batch.size();
        scores.record_losses(batch, losses, epoch);
        for (double l : losses) loss_sum += l;
        model = trainer::sgd_step(std::move(model), grad, learn_rate);
        counters.backward_updates += 1;
      }
      if (config.refresh_every > 0 && t % config.refresh_every == 0) {
        scores = refresh_losses(model, ds, std::move(scores), epoch, &counters);
      }
    } catch (...) {
      rethrow_with_context(epoch, "training");
    }

    const NoiseFilterMetrics noise = noise_filter_metrics(selection, ds);
    EpochMetrics m;
    m.epoch = epoch;
    m.selected_count = selection.selected_ids.size();
    m.mean_train_loss = loss_sum / static_cast<double>(selection.selected_ids.size());
    m.eval_accuracy = trainer::evaluate(model, ds, /*use_true_labels=*/true);
    m.selected_noisy_count = noise.selected_noisy_count;
    m.selected_noisy_fraction = noise.selected_noisy_fraction;
    m.forward_passes = counters.forward_passes;
    m.backward_updates = counters.backward_updates;
    m.median_score = scorer::median(scores.s);
    report.epochs.push_back(m);
    report.total_forward_passes += m.forward_passes;
    report.total_backward_updates += m.backward_updates;

    learn_rate *= config.lr_decay;
  }

  report.final_accuracy = report.epochs.back().eval_accuracy;
  const auto full_forward = static_cast<std::int64_t>(n * config.epochs);
  const auto full_backward =
      static_cast<std::int64_t>(((n + config.batch_size - 1) / config.batch_size) * config.epochs);
  report.forward_saved = full_forward - static_cast<std::int64_t>(report.total_forward_passes);
  report.backward_saved = full_backward - static_cast<std::int64_t>(report.total_backward_updates);
  return RunOutcome{std::move(report), std::move(model), std::move(scores)};
}

std::string to_jsonl(const RunReport& report) {
  std::string out;
  for (const auto& m : report.epochs) {
    out += epoch_to_json(m).dump();
    out += '\n';
  }
  json summary;
  summary["config"] = config_to_json(report.config);
  summary["num_samples"] = report.num_samples;
  summary["selected_per_epoch"] = report.selected_per_epoch;
  summary["final_accuracy"] = report.final_accuracy;
  summary["total_forward_passes"] = report.total_forward_passes;
  summary["total_backward_updates"] = report.total_backward_updates;
  summary["forward_saved"] = report.forward_saved;
  summary["backward_saved"] = report.backward_saved;
  out += summary.dump();
  out += '\n';
  return out;
}

void write_jsonl(const RunReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << to_jsonl(report);
  out.close();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

RunSummary read_run_summary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  const std::string origin = "'" + path.string() + "'";

  static constexpr std::string_view kEpochKeys[] = {
      "epoch", "selected_count", "mean_train_loss", "eval_accuracy", "selected_noisy_count",
      "selected_noisy_fraction", "forward_passes", "backward_updates", "median_score"};

  std::vector<std::pair<std::size_t, json>> lines;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      lines.emplace_back(line_no, json::parse(line));
    } catch (const json::parse_error& e) {
      throw FormatError(origin + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (lines.empty()) throw FormatError(origin + ": empty metrics stream");

  RunSummary summary;
  summary.name = path.filename().string();
  const auto& [summary_line, tail] = lines.back();
  try {
    if (!tail.is_object() || !tail.contains("config")) throw FormatError("missing summary object");
    summary.strategy = tail.at("config").at("strategy").get<std::string>();
    summary.selection_ratio = tail.at("config").at("selection_ratio").get<double>();
    summary.warmup_epochs = tail.at("config").at("warmup_epochs").get<std::size_t>();
    summary.final_accuracy = tail.at("final_accuracy").get<double>();
    summary.total_forward_passes = tail.at("total_forward_passes").get<std::uint64_t>();
    summary.total_backward_updates = tail.at("total_backward_updates").get<std::uint64_t>();
  } catch (const std::exception& e) {
    throw FormatError(origin + " line " + std::to_string(summary_line) + ": bad summary: " + e.what());
  }

  double fraction_sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i + 1 < lines.size(); ++i) {
    const auto& [no, obj] = lines[i];
    try {
      if (!obj.is_object()) throw FormatError("not an object");
      for (auto key : kEpochKeys) {
        if (!obj.contains(key)) throw FormatError("missing key '" + std::string(key) + "'");
      }
      if (obj.at("epoch").get<std::size_t>() >= summary.warmup_epochs) {
        fraction_sum += obj.at("selected_noisy_fraction").get<double>();
        ++counted;
      }
    } catch (const std::exception& e) {
      throw FormatError(origin + " line " + std::to_string(no) + ": bad epoch record: " + e.what());
    }
  }
  summary.mean_post_warmup_noisy_fraction = counted > 0 ? fraction_sum / static_cast<double>(counted) : 0.0;
  return summary;
}

}  // namespace dpp::harness
