#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "dpp/dataset.hpp"

namespace dpp::trainer {

/// Forward/backward work done so far. Owned by whoever drives training.
struct CostCounters {
  std::uint64_t forward_passes = 0;
  std::uint64_t backward_updates = 0;
};

struct ModelShape {
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  std::size_t hidden = 0;  // 0 = softmax regression

  std::size_t out_inputs() const { return hidden == 0 ? input_dim : hidden; }
  std::size_t parameter_count() const {
    return hidden * input_dim + hidden + num_classes * out_inputs() + num_classes;
  }
  bool operator==(const ModelShape&) const = default;
};

/// Flat parameter vector laid out as
/// [hidden weights (h x d), hidden bias (h), output weights (C x m), output bias (C)],
/// m = h when there is a hidden layer (ReLU) and d otherwise.
class ParameterBlock {
 public:
  ParameterBlock() = default;
  explicit ParameterBlock(ModelShape shape) : shape_(shape), values_(shape.parameter_count(), 0.0) {}

  const ModelShape& shape() const { return shape_; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  std::span<double> hidden_weights() { return slice(0, shape_.hidden * shape_.input_dim); }
  std::span<const double> hidden_weights() const { return slice(0, shape_.hidden * shape_.input_dim); }
  std::span<double> hidden_bias() { return slice(hidden_bias_offset(), shape_.hidden); }
  std::span<const double> hidden_bias() const { return slice(hidden_bias_offset(), shape_.hidden); }
  std::span<double> out_weights() { return slice(out_weights_offset(), shape_.num_classes * shape_.out_inputs()); }
  std::span<const double> out_weights() const {
    return slice(out_weights_offset(), shape_.num_classes * shape_.out_inputs());
  }
  std::span<double> out_bias() { return slice(out_bias_offset(), shape_.num_classes); }
  std::span<const double> out_bias() const { return slice(out_bias_offset(), shape_.num_classes); }

  bool operator==(const ParameterBlock&) const = default;

 private:
  std::size_t hidden_bias_offset() const { return shape_.hidden * shape_.input_dim; }
  std::size_t out_weights_offset() const { return hidden_bias_offset() + shape_.hidden; }
  std::size_t out_bias_offset() const { return out_weights_offset() + shape_.num_classes * shape_.out_inputs(); }
  std::span<double> slice(std::size_t off, std::size_t len) { return {values_.data() + off, len}; }
  std::span<const double> slice(std::size_t off, std::size_t len) const { return {values_.data() + off, len}; }

  ModelShape shape_;
  std::vector<double> values_;
};

/// Classifier f_theta.
struct ClassifierModel {
  ParameterBlock params;
  const ModelShape& shape() const { return params.shape(); }
  bool operator==(const ClassifierModel&) const = default;
};

/// Gradient of the mean batch cross-entropy, same layout as the model.
struct BatchGradient {
  ParameterBlock values;
};

/// Weights ~ U(-init_scale, init_scale) from a seeded stream, biases zero.
ClassifierModel init_model(std::size_t input_dim, std::size_t num_classes, std::optional<std::size_t> hidden,
                           double init_scale, std::uint64_t seed);

/// Raw class scores for one feature vector.
std::vector<double> logits(const ClassifierModel& model, std::span<const double> features);

/// -log softmax(logits)[label], via log-sum-exp.
double cross_entropy(std::span<const double> logits, Label label);

/// Cross-entropy against the observed label for each id, in id order.
/// Adds ids.size() forward passes to counters when given.
std::vector<double> per_sample_losses(const ClassifierModel& model, const Dataset& ds,
                                      std::span<const std::size_t> ids, CostCounters* counters = nullptr);

/// Analytic gradient of the mean cross-entropy over ids. When losses_out is
/// non-empty it receives each sample's loss at the current parameters.
BatchGradient batch_gradient(const ClassifierModel& model, const Dataset& ds, std::span<const std::size_t> ids,
                             std::span<double> losses_out = {});

/// p <- p - learn_rate * g for every parameter.
ClassifierModel sgd_step(ClassifierModel model, const BatchGradient& grad, double learn_rate);

/// Fraction of samples whose argmax logit (lowest index on ties) equals the
/// true label (use_true_labels) or the observed label.
double evaluate(const ClassifierModel& model, const Dataset& ds, bool use_true_labels);

/// DPMD file: magic, version, u32 d, u32 C, u32 h, then the flat parameter vector as f32.
void save_model(const ClassifierModel& model, const std::filesystem::path& path);
ClassifierModel load_model(const std::filesystem::path& path);

}  // namespace dpp::trainer
