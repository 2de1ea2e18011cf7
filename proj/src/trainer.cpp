#include "dpp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "dpp/binary_io.hpp"
#include "dpp/error.hpp"
#include "dpp/rng.hpp"
#include "dpp/simd/kernels.hpp"

namespace dpp::trainer {

namespace {

constexpr std::string_view kModelMagic = "DPMD";

void check_compatible(const ClassifierModel& model, const Dataset& ds) {
  if (model.shape().input_dim != ds.feature_dim() || model.shape().num_classes != ds.num_classes()) {
    throw ValidationError("model expects d=" + std::to_string(model.shape().input_dim) +
                          ", C=" + std::to_string(model.shape().num_classes) + " but dataset has d=" +
                          std::to_string(ds.feature_dim()) + ", C=" + std::to_string(ds.num_classes()));
  }
}

void check_ids(const Dataset& ds, std::span<const std::size_t> ids) {
  for (std::size_t id : ids) {
    if (id >= ds.size()) {
      throw ValidationError("sample id " + std::to_string(id) + " out of range [0, " + std::to_string(ds.size()) + ")");
    }
  }
}

/// Forward pass keeping the hidden activations (empty without a hidden layer).
void forward(const ParameterBlock& p, std::span<const double> x, std::vector<double>& hidden_act,
             std::vector<double>& out) {
  const ModelShape& shape = p.shape();
  std::span<const double> input = x;
  if (shape.hidden > 0) {
    hidden_act.resize(shape.hidden);
    const auto w = p.hidden_weights();
    const auto b = p.hidden_bias();
    for (std::size_t h = 0; h < shape.hidden; ++h) {
      const double z = b[h] + simd::dot(w.subspan(h * shape.input_dim, shape.input_dim), x);
      hidden_act[h] = z > 0.0 ? z : 0.0;
    }
    input = hidden_act;
  }
  out.resize(shape.num_classes);
  const std::size_t m = shape.out_inputs();
  const auto w = p.out_weights();
  const auto b = p.out_bias();
  for (std::size_t c = 0; c < shape.num_classes; ++c) out[c] = b[c] + simd::dot(w.subspan(c * m, m), input);
}

}  // namespace

ClassifierModel init_model(std::size_t input_dim, std::size_t num_classes, std::optional<std::size_t> hidden,
                           double init_scale, std::uint64_t seed) {
  if (input_dim < 1) throw ValidationError("model input dimension must be >= 1");
  if (num_classes < 2) throw ValidationError("model needs at least 2 classes");
  if (hidden && *hidden < 1) throw ValidationError("hidden layer width must be >= 1");
  if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) throw ValidationError("init_scale must be >= 0");

  ClassifierModel model{ParameterBlock(ModelShape{input_dim, num_classes, hidden.value_or(0)})};
  if (init_scale > 0.0) {
    Rng rng = make_rng(seed, StreamTag::kModelInit);
    std::uniform_real_distribution<double> dist(-init_scale, init_scale);
    for (auto& w : model.params.hidden_weights()) w = dist(rng);
    for (auto& w : model.params.out_weights()) w = dist(rng);
  }
  return model;
}

std::vector<double> logits(const ClassifierModel& model, std::span<const double> features) {
  if (features.size() != model.shape().input_dim) {
    throw ValidationError("feature vector has length " + std::to_string(features.size()) + ", model expects " +
                          std::to_string(model.shape().input_dim));
  }
  std::vector<double> hidden;
  std::vector<double> out;
  forward(model.params, features, hidden, out);
  return out;
}

double cross_entropy(std::span<const double> z, Label label) {
  if (label >= z.size()) throw ValidationError("label " + std::to_string(label) + " out of range");
  // log-sum-exp around the max logit; log1p keeps tiny losses of a dominant correct logit positive.
  std::size_t top = 0;
  for (std::size_t c = 1; c < z.size(); ++c) {
    if (z[c] > z[top]) top = c;
  }
  double rest = 0.0;
  for (std::size_t c = 0; c < z.size(); ++c) {
    if (c != top) rest += std::exp(z[c] - z[top]);
  }
  return std::log1p(rest) + (z[top] - z[label]);
}

std::vector<double> per_sample_losses(const ClassifierModel& model, const Dataset& ds,
                                      std::span<const std::size_t> ids, CostCounters* counters) {
  check_compatible(model, ds);
  check_ids(ds, ids);
  std::vector<double> losses(ids.size());
  std::vector<double> hidden;
  std::vector<double> out;
  for (std::size_t j = 0; j < ids.size(); ++j) {
    forward(model.params, ds.features(ids[j]), hidden, out);
    losses[j] = cross_entropy(out, ds.observed_label(ids[j]));
  }
  if (counters != nullptr) counters->forward_passes += ids.size();
  return losses;
}

BatchGradient batch_gradient(const ClassifierModel& model, const Dataset& ds, std::span<const std::size_t> ids,
                             std::span<double> losses_out) {
  check_compatible(model, ds);
  if (ids.empty()) throw ValidationError("batch_gradient: empty batch");
  check_ids(ds, ids);
  if (!losses_out.empty() && losses_out.size() != ids.size()) {
    throw ValidationError("batch_gradient: loss buffer size does not match batch");
  }

  const ModelShape& shape = model.shape();
  const std::size_t m = shape.out_inputs();
  const double inv_batch = 1.0 / static_cast<double>(ids.size());
  BatchGradient grad{ParameterBlock(shape)};
  auto gw_out = grad.values.out_weights();
  auto gb_out = grad.values.out_bias();
  auto gw_hidden = grad.values.hidden_weights();
  auto gb_hidden = grad.values.hidden_bias();
  const auto w_out = model.params.out_weights();

  std::vector<double> hidden;
  std::vector<double> z;
  std::vector<double> delta_hidden(shape.hidden);
  for (std::size_t j = 0; j < ids.size(); ++j) {
    const auto x = ds.features(ids[j]);
    const Label y = ds.observed_label(ids[j]);
    forward(model.params, x, hidden, z);
    if (!losses_out.empty()) losses_out[j] = cross_entropy(z, y);

    // dL/dz = softmax(z) - onehot(y), scaled for the batch mean.
    const double mx = *std::max_element(z.begin(), z.end());
    double denom = 0.0;
    for (auto& v : z) {
      v = std::exp(v - mx);
      denom += v;
    }
    for (std::size_t c = 0; c < z.size(); ++c) z[c] = (z[c] / denom - (c == y ? 1.0 : 0.0)) * inv_batch;

    const std::span<const double> input = shape.hidden > 0 ? std::span<const double>(hidden) : x;
    for (std::size_t c = 0; c < shape.num_classes; ++c) {
      simd::axpy(z[c], input, gw_out.subspan(c * m, m));
      gb_out[c] += z[c];
    }
    if (shape.hidden > 0) {
      std::ranges::fill(delta_hidden, 0.0);
      for (std::size_t c = 0; c < shape.num_classes; ++c) simd::axpy(z[c], w_out.subspan(c * m, m), delta_hidden);
      for (std::size_t h = 0; h < shape.hidden; ++h) {
        if (hidden[h] <= 0.0) continue;  // ReLU gate
        simd::axpy(delta_hidden[h], x, gw_hidden.subspan(h * shape.input_dim, shape.input_dim));
        gb_hidden[h] += delta_hidden[h];
      }
    }
  }
  return grad;
}

ClassifierModel sgd_step(ClassifierModel model, const BatchGradient& grad, double learn_rate) {
  if (!(grad.values.shape() == model.shape())) throw ValidationError("gradient shape does not match model");
  simd::axpy(-learn_rate, grad.values.values(), model.params.values());
  return model;
}

double evaluate(const ClassifierModel& model, const Dataset& ds, bool use_true_labels) {
  check_compatible(model, ds);
  std::vector<double> hidden;
  std::vector<double> z;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    forward(model.params, ds.features(i), hidden, z);
    const auto predicted = static_cast<Label>(std::max_element(z.begin(), z.end()) - z.begin());
    const Label target = use_true_labels ? ds.true_label(i) : ds.observed_label(i);
    correct += predicted == target ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

void save_model(const ClassifierModel& model, const std::filesystem::path& path) {
  binio::Writer w;
  w.magic(kModelMagic);
  w.u32(static_cast<std::uint32_t>(model.shape().input_dim));
  w.u32(static_cast<std::uint32_t>(model.shape().num_classes));
  w.u32(static_cast<std::uint32_t>(model.shape().hidden));
  w.f32_array(model.params.values());
  w.save(path);
}

ClassifierModel load_model(const std::filesystem::path& path) {
  auto r = binio::Reader::open(path);
  r.expect_header(kModelMagic);
  ModelShape shape;
  shape.input_dim = r.u32();
  shape.num_classes = r.u32();
  shape.hidden = r.u32();
  if (shape.input_dim < 1 || shape.num_classes < 2) throw FormatError("'" + path.string() + "': invalid model shape");
  ClassifierModel model{ParameterBlock(shape)};
  const auto values = r.f32_array(shape.parameter_count());
  r.expect_end();
  std::ranges::copy(values, model.params.values().begin());
  return model;
}

}  // namespace dpp::trainer
