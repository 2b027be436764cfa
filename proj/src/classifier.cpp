#include "focal/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

namespace focal {

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
}

ClassifierHead::ClassifierHead(std::uint32_t feature_dim) : dim_(feature_dim) {
  if (dim_ == 0) throw std::invalid_argument("ClassifierHead: feature_dim must be positive");
}

long ClassifierHead::row_of(const std::string& label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  return it == labels_.end() ? -1 : static_cast<long>(it - labels_.begin());
}

void ClassifierHead::expand(std::span<const std::string> new_labels) {
  for (std::size_t i = 0; i < new_labels.size(); ++i) {
    const auto& label = new_labels[i];
    if (row_of(label) >= 0 || std::find(new_labels.begin(), new_labels.begin() + i, label) != new_labels.begin() + i) {
      throw std::invalid_argument("expand: duplicate label " + label);
    }
  }
  for (const auto& label : new_labels) {
    labels_.push_back(label);
    weights_.resize(weights_.size() + dim_, 0.0);
    biases_.push_back(0.0);
  }
}

void ClassifierHead::reset() {
  std::fill(weights_.begin(), weights_.end(), 0.0);
  std::fill(biases_.begin(), biases_.end(), 0.0);
}

std::vector<double> ClassifierHead::logits(FeatureView x) const {
  if (x.size() != dim_) throw std::invalid_argument("classifier: dimension mismatch");
  std::vector<double> z(labels_.size());
  for (std::size_t r = 0; r < z.size(); ++r) {
    const double* w = weights_.data() + r * dim_;
    z[r] = std::inner_product(x.begin(), x.end(), w, biases_[r]);
  }
  return z;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double top = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (auto& v : p) {
    v = std::exp(v - top);
    sum += v;
  }
  for (auto& v : p) v /= sum;
  return p;
}

Prediction predict(const ClassifierHead& head, FeatureView x) {
  if (head.empty()) throw std::invalid_argument("predict: empty classifier head");
  Prediction out;
  out.probabilities = softmax(head.logits(x));
  out.row = static_cast<std::size_t>(std::max_element(out.probabilities.begin(), out.probabilities.end()) -
                                     out.probabilities.begin());
  out.label = head.labels()[out.row];
  return out;
}

EncodedBatch encode_labels(const ClassifierHead& head, std::span<const LabeledSample> data) {
  EncodedBatch batch;
  batch.features.reserve(data.size());
  batch.rows.reserve(data.size());
  for (const auto& s : data) {
    const long row = head.row_of(s.label);
    if (row < 0) throw std::invalid_argument("train: unknown label " + s.label);
    if (s.features.size() != head.feature_dim()) throw std::invalid_argument("train: dimension mismatch");
    batch.features.emplace_back(s.features);
    batch.rows.push_back(static_cast<std::size_t>(row));
  }
  return batch;
}

namespace {

// Accumulates the summed (not averaged) loss and gradient over `indices`.
double accumulate(const ClassifierHead& head, const EncodedBatch& batch, std::span<const std::size_t> indices,
                  Gradient& grad) {
  const std::size_t dim = head.feature_dim();
  double loss = 0.0;
  for (std::size_t i : indices) {
    const auto x = batch.features[i];
    auto p = softmax(head.logits(x));
    const std::size_t target = batch.rows[i];
    loss -= std::log(std::max(p[target], std::numeric_limits<double>::min()));
    p[target] -= 1.0;
    for (std::size_t r = 0; r < p.size(); ++r) {
      double* g = grad.weights.data() + r * dim;
      for (std::size_t d = 0; d < dim; ++d) g[d] += p[r] * x[d];
      grad.biases[r] += p[r];
    }
  }
  return loss;
}

Gradient zero_gradient(const ClassifierHead& head) {
  return {std::vector<double>(head.weights().size(), 0.0), std::vector<double>(head.biases().size(), 0.0)};
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

} // namespace

double cross_entropy_loss(const ClassifierHead& head, const EncodedBatch& batch) {
  if (batch.features.empty()) return 0.0;
  auto grad = zero_gradient(head);
  auto idx = all_indices(batch.features.size());
  return accumulate(head, batch, idx, grad) / static_cast<double>(idx.size());
}

Gradient cross_entropy_gradient(const ClassifierHead& head, const EncodedBatch& batch) {
  auto grad = zero_gradient(head);
  if (batch.features.empty()) return grad;
  auto idx = all_indices(batch.features.size());
  accumulate(head, batch, idx, grad);
  const double scale = 1.0 / static_cast<double>(idx.size());
  for (auto& g : grad.weights) g *= scale;
  for (auto& g : grad.biases) g *= scale;
  return grad;
}

TrainReport train(ClassifierHead& head, std::span<const LabeledSample> data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: empty training set");
  const auto batch = encode_labels(head, data);

  TrainReport report;
  if (cfg.epochs == 0) return report;

  std::mt19937_64 rng(cfg.shuffle_seed);
  auto order = all_indices(batch.features.size());
  std::vector<double> vel_w(head.weights().size(), 0.0);
  std::vector<double> vel_b(head.biases().size(), 0.0);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t n = std::min(bs, order.size() - start);
      auto grad = zero_gradient(head);
      epoch_loss += accumulate(head, batch, std::span(order).subspan(start, n), grad);
      const double scale = 1.0 / static_cast<double>(n);
      auto& w = head.weights();
      for (std::size_t k = 0; k < w.size(); ++k) {
        vel_w[k] = cfg.momentum * vel_w[k] + grad.weights[k] * scale;
        w[k] -= cfg.learning_rate * vel_w[k];
      }
      auto& b = head.biases();
      for (std::size_t k = 0; k < b.size(); ++k) {
        vel_b[k] = cfg.momentum * vel_b[k] + grad.biases[k] * scale;
        b[k] -= cfg.learning_rate * vel_b[k];
      }
      ++report.steps;
    }
    report.epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  return report;
}

Accuracy evaluate(const ClassifierHead& head, std::span<const EvalObject> test, unsigned threads) {
  if (test.empty()) throw std::invalid_argument("evaluate: empty test set");
  Accuracy acc;
  if (head.empty()) return acc;

  // Per-object (correct views, total views, majority correct); filled
  // independently so the final sum runs in object order.
  struct Tally {
    std::size_t correct = 0;
    std::size_t total = 0;
    bool majority = false;
  };
  std::vector<Tally> tallies(test.size());

  auto score_range = [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> votes(head.size());
    for (std::size_t i = begin; i < end; ++i) {
      const auto& obj = test[i];
      const long truth = head.row_of(obj.label);
      std::fill(votes.begin(), votes.end(), 0);
      Tally t;
      for (const auto& v : obj.views) {
        const auto row = predict(head, v).row;
        ++votes[row];
        ++t.total;
        if (static_cast<long>(row) == truth) ++t.correct;
      }
      const auto winner = std::max_element(votes.begin(), votes.end()) - votes.begin();
      t.majority = truth >= 0 && winner == truth;
      tallies[i] = t;
    }
  };

  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(test.size())));
  if (threads == 1) {
    score_range(0, test.size());
  } else {
    std::vector<std::thread> workers;
    const std::size_t chunk = (test.size() + threads - 1) / threads;
    for (std::size_t begin = 0; begin < test.size(); begin += chunk) {
      workers.emplace_back(score_range, begin, std::min(test.size(), begin + chunk));
    }
    for (auto& w : workers) w.join();
  }

  std::size_t correct = 0, total = 0, majority = 0;
  for (const auto& t : tallies) {
    correct += t.correct;
    total += t.total;
    majority += t.majority ? 1 : 0;
  }
  acc.image = total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
  acc.object_majority = static_cast<double>(majority) / static_cast<double>(test.size());
  return acc;
}

} // namespace focal
