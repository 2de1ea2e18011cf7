#include <algorithm>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "dpp/cli.hpp"
#include "dpp/dataset.hpp"
#include "dpp/embeddings.hpp"
#include "dpp/error.hpp"
#include "dpp/harness.hpp"
#include "dpp/xmodal.hpp"

namespace dpp::cli {

namespace {

struct GenArgs {
  BlobConfig blobs;
  double label_noise = 0.0;
  EmbeddingSynthConfig embed;
  std::uint64_t seed = 0;
  std::string out_prefix;
};

struct AdaptArgs {
  std::string data;
  std::string image_emb;
  std::string text_emb;
  xmodal::AdapterTrainConfig train;
  std::string out;
};

struct RunArgs {
  std::string data;
  std::string image_emb;
  std::string text_emb;
  std::string adapters;
  std::string strategy = "dual";
  harness::TrainConfig config;
  std::string out;
};

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string format = "table";
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  BlobConfig blobs = a.blobs;
  blobs.seed = a.seed;
  Dataset ds = generate_gaussian_blobs(blobs);
  ds = inject_label_noise(ds, a.label_noise, a.seed);
  EmbeddingSynthConfig embed = a.embed;
  embed.seed = a.seed;
  const EmbeddingTable table = synthesize_embeddings(ds, embed);

  save_dataset(ds, a.out_prefix + ".dpds");
  save_image_embeddings(table.image, a.out_prefix + ".dpem");
  save_text_embeddings(table.text, a.out_prefix + ".dpte");
  out << "wrote " << ds.size() << " samples (" << ds.noisy_count() << " noisy) to " << a.out_prefix
      << ".{dpds,dpem,dpte}\n";
  return kSuccess;
}

int cmd_adapt(const AdaptArgs& a, std::ostream& out) {
  const Dataset ds = load_dataset(a.data);
  const EmbeddingTable table = load_embeddings(a.image_emb, a.text_emb, ds.size(), ds.num_classes());
  const double before = xmodal::mean_infonce_loss(table, ds.observed_labels(),
                                                  xmodal::AdapterPair::identity(table.dim()), a.train.batch_size,
                                                  a.train.seed);
  const auto adapters = xmodal::train_adapters(table, ds.observed_labels(), a.train);
  const double after =
      xmodal::mean_infonce_loss(table, ds.observed_labels(), adapters, a.train.batch_size, a.train.seed);
  xmodal::save_adapters(adapters, a.out);
  out << "InfoNCE " << before << " -> " << after << ", adapters written to " << a.out << "\n";
  return kSuccess;
}

int cmd_run(RunArgs a, std::ostream& out) {
  const auto strategy = harness::parse_strategy(a.strategy);
  if (!strategy) throw ValidationError("--strategy: unknown strategy '" + a.strategy + "'");
  a.config.strategy = *strategy;
  a.config.validate();

  const Dataset ds = load_dataset(a.data);
  const EmbeddingTable table = load_embeddings(a.image_emb, a.text_emb, ds.size(), ds.num_classes());
  const xmodal::AdapterPair adapters =
      a.adapters.empty() ? xmodal::AdapterPair::identity(table.dim()) : xmodal::load_adapters(a.adapters);
  if (adapters.dim() != table.dim()) {
    throw ValidationError("--adapters: dimension " + std::to_string(adapters.dim()) +
                          " does not match embeddings " + std::to_string(table.dim()));
  }

  const auto outcome = harness::run_experiment(a.config, ds, table, adapters);
  harness::write_jsonl(outcome.report, a.out);
  out << harness::strategy_name(a.config.strategy) << ": final accuracy " << outcome.report.final_accuracy
      << ", forward " << outcome.report.total_forward_passes << ", backward "
      << outcome.report.total_backward_updates << " -> " << a.out << "\n";
  return kSuccess;
}

int cmd_report(const ReportArgs& a, std::ostream& out) {
  std::vector<harness::RunSummary> rows;
  std::vector<std::string> inputs = a.inputs;
  std::ranges::sort(inputs, [](const std::string& x, const std::string& y) {
    const auto fx = std::filesystem::path(x).filename().string();
    const auto fy = std::filesystem::path(y).filename().string();
    return fx != fy ? fx < fy : x < y;
  });
  for (const auto& path : inputs) rows.push_back(harness::read_run_summary(path));

  if (a.format == "csv") {
    out << "run,strategy,selection_ratio,final_accuracy,total_forward,total_backward,mean_noisy_fraction\n";
    for (const auto& r : rows) {
      out << r.name << ',' << r.strategy << ',' << r.selection_ratio << ',' << r.final_accuracy << ','
          << r.total_forward_passes << ',' << r.total_backward_updates << ',' << r.mean_post_warmup_noisy_fraction
          << '\n';
    }
    return kSuccess;
  }
  std::size_t name_width = 3;
  for (const auto& r : rows) name_width = std::max(name_width, r.name.size());
  out << std::left << std::setw(static_cast<int>(name_width)) << "run" << "  " << std::setw(14) << "strategy"
      << std::right << std::setw(7) << "ratio" << std::setw(10) << "accuracy" << std::setw(12) << "forward"
      << std::setw(10) << "backward" << std::setw(8) << "noisy" << '\n';
  for (const auto& r : rows) {
    out << std::left << std::setw(static_cast<int>(name_width)) << r.name << "  " << std::setw(14) << r.strategy
        << std::right << std::fixed << std::setprecision(2) << std::setw(7) << r.selection_ratio
        << std::setprecision(4) << std::setw(10) << r.final_accuracy << std::setw(12) << r.total_forward_passes
        << std::setw(10) << r.total_backward_updates << std::setw(8) << r.mean_post_warmup_noisy_fraction << '\n';
    out.unsetf(std::ios::fixed);
  }
  return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dynamic dataset pruning with task-loss and cross-modal consistency supervision", "dpp"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic blob dataset with matching embeddings");
  gen_cmd->add_option("--n-per-class", gen.blobs.n_per_class, "Samples per class")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--classes", gen.blobs.num_classes, "Number of classes")->check(CLI::Range(2, 1 << 20));
  gen_cmd->add_option("--dim", gen.blobs.feature_dim, "Feature dimension")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--separation", gen.blobs.class_separation, "Minimum distance between class means")
      ->check(CLI::PositiveNumber);
  gen_cmd->add_option("--noise-std", gen.blobs.noise_std, "Per-coordinate feature noise")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--label-noise", gen.label_noise, "Fraction of labels to flip")->check(CLI::Range(0.0, 1.0));
  gen_cmd->add_option("--embed-dim", gen.embed.dim, "Embedding dimension")->check(CLI::Range(2, 1 << 20));
  gen_cmd->add_option("--embed-jitter", gen.embed.jitter_std, "Image embedding jitter")
      ->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--seed", gen.seed, "RNG seed");
  gen_cmd->add_option("--out-prefix", gen.out_prefix, "Output prefix for .dpds/.dpem/.dpte")->required();

  AdaptArgs adapt;
  auto* adapt_cmd = app.add_subcommand("adapt", "Fine-tune linear adapters with InfoNCE");
  adapt_cmd->add_option("--data", adapt.data, "Dataset (.dpds or .csv)")->required();
  adapt_cmd->add_option("--image-emb", adapt.image_emb, "Image embeddings (.dpem)")->required();
  adapt_cmd->add_option("--text-emb", adapt.text_emb, "Text embeddings (.dpte)")->required();
  adapt_cmd->add_option("--epochs", adapt.train.epochs, "Adapter training epochs");
  adapt_cmd->add_option("--batch-size", adapt.train.batch_size, "Contrastive batch size")->check(CLI::Range(2, 1 << 30));
  adapt_cmd->add_option("--lr", adapt.train.learn_rate, "Learning rate")->check(CLI::PositiveNumber);
  adapt_cmd->add_option("--seed", adapt.train.seed, "RNG seed");
  adapt_cmd->add_option("--out", adapt.out, "Output adapter file (.dpad)")->required();

  RunArgs run_args;
  auto& c = run_args.config;
  auto* run_cmd = app.add_subcommand("run", "Train with dynamic pruning and write a JSONL metrics stream");
  run_cmd->add_option("--data", run_args.data, "Dataset (.dpds or .csv)")->required();
  run_cmd->add_option("--image-emb", run_args.image_emb, "Image embeddings (.dpem)")->required();
  run_cmd->add_option("--text-emb", run_args.text_emb, "Text embeddings (.dpte)")->required();
  run_cmd->add_option("--adapters", run_args.adapters, "Adapter file (.dpad); identity when absent");
  run_cmd->add_option("--strategy", run_args.strategy, "dual | loss_only | random_dynamic | full_data");
  run_cmd->add_option("--ratio", c.selection_ratio, "Selection ratio in (0, 1]")->check(CLI::Range(0.0, 1.0));
  run_cmd->add_option("--epochs", c.epochs, "Training epochs")->check(CLI::PositiveNumber);
  run_cmd->add_option("--batch-size", c.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
  run_cmd->add_option("--lr", c.learn_rate, "Learning rate")->check(CLI::PositiveNumber);
  run_cmd->add_option("--lr-decay", c.lr_decay, "Per-epoch learning-rate multiplier")->check(CLI::PositiveNumber);
  run_cmd->add_option("--lambda", c.lambda, "Consistency weight");
  run_cmd->add_option("--score-lr", c.score_learn_rate, "Score learning rate")->check(CLI::NonNegativeNumber);
  run_cmd->add_option("--score-steps", c.steps_per_epoch, "Score descent steps per epoch")->check(CLI::PositiveNumber);
  run_cmd->add_option("--refresh-every", c.refresh_every, "Full loss refresh period in epochs (0 = never)");
  run_cmd->add_option("--warmup", c.warmup_epochs, "Full-data warmup epochs");
  run_cmd->add_option("--hidden", c.hidden, "Hidden layer width (0 = softmax regression)");
  run_cmd->add_option("--init-scale", c.init_scale, "Initial weight scale")->check(CLI::NonNegativeNumber);
  run_cmd->add_option("--seed", c.seed, "RNG seed");
  run_cmd->add_option("--out", run_args.out, "Output metrics stream (.jsonl)")->required();

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "Summarize one or more JSONL metrics streams");
  report_cmd->add_option("--in", report.inputs, "Metrics stream (repeatable)")->required();
  report_cmd->add_option("--format", report.format, "table | csv")->check(CLI::IsMember({"table", "csv"}));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kValidationFailure;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen(gen, out);
    if (adapt_cmd->parsed()) return cmd_adapt(adapt, out);
    if (run_cmd->parsed()) return cmd_run(run_args, out);
    if (report_cmd->parsed()) return cmd_report(report, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kValidationFailure;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return kValidationFailure;
}

}  // namespace dpp::cli
