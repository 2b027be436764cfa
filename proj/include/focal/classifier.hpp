#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "focal/feature_store.hpp"

namespace focal {

struct TrainConfig {
  int epochs = 25;
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 64;
  std::uint64_t shuffle_seed = 0;

  void validate() const;
};

/// Linear softmax head whose rows are appended as categories appear.
class ClassifierHead {
public:
  explicit ClassifierHead(std::uint32_t feature_dim);

  std::uint32_t feature_dim() const { return dim_; }
  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  const std::vector<std::string>& labels() const { return labels_; }
  /// Row index for `label`, or -1.
  long row_of(const std::string& label) const;

  /// Row-major, size() x feature_dim().
  const std::vector<double>& weights() const { return weights_; }
  std::vector<double>& weights() { return weights_; }
  const std::vector<double>& biases() const { return biases_; }
  std::vector<double>& biases() { return biases_; }

  /// Appends one zero-initialized row per label. Throws on a known label.
  void expand(std::span<const std::string> new_labels);
  /// Zeroes all weights and biases, keeping the label order.
  void reset();

  std::vector<double> logits(FeatureView x) const;

private:
  std::uint32_t dim_;
  std::vector<std::string> labels_;
  std::vector<double> weights_;
  std::vector<double> biases_;
};

/// Max-subtracted softmax.
std::vector<double> softmax(std::span<const double> logits);

struct Prediction {
  std::string label;
  std::size_t row = 0;
  std::vector<double> probabilities;
};

Prediction predict(const ClassifierHead& head, FeatureView x);

/// Rows are indices into head.labels().
struct EncodedBatch {
  std::vector<FeatureView> features;
  std::vector<std::size_t> rows;
};

EncodedBatch encode_labels(const ClassifierHead& head, std::span<const LabeledSample> data);

/// Mean softmax cross-entropy over the batch.
double cross_entropy_loss(const ClassifierHead& head, const EncodedBatch& batch);

struct Gradient {
  std::vector<double> weights; // same layout as ClassifierHead::weights()
  std::vector<double> biases;
};

/// Gradient of cross_entropy_loss with respect to weights and biases.
Gradient cross_entropy_gradient(const ClassifierHead& head, const EncodedBatch& batch);

struct TrainReport {
  std::vector<double> epoch_loss; // mean minibatch loss per epoch
  std::size_t steps = 0;
};

/// Minibatch SGD with momentum on softmax cross-entropy, warm-started from
/// the head's current parameters. The last partial batch is kept.
TrainReport train(ClassifierHead& head, std::span<const LabeledSample> data, const TrainConfig& cfg);

/// Per-object views and ground truth for evaluation.
struct EvalObject {
  std::vector<FeatureView> views;
  std::string label;
};

struct Accuracy {
  double image = 0.0;           // fraction of view-images predicted correctly
  double object_majority = 0.0; // fraction of objects whose majority vote is correct
};

/// `threads` > 1 splits prediction over workers; the reduction order is fixed.
Accuracy evaluate(const ClassifierHead& head, std::span<const EvalObject> test, unsigned threads = 1);

} // namespace focal
