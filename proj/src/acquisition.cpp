#include "focal/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace focal {

std::string_view to_string(AcquisitionMode mode) {
  switch (mode) {
  case AcquisitionMode::combined:
    return "combined";
  case AcquisitionMode::entropy_only:
    return "entropy";
  case AcquisitionMode::consistency_only:
    return "consistency";
  case AcquisitionMode::random:
    return "random";
  }
  return "?";
}

AcquisitionMode parse_acquisition_mode(std::string_view text) {
  if (text == "combined") return AcquisitionMode::combined;
  if (text == "entropy" || text == "entropy_only") return AcquisitionMode::entropy_only;
  if (text == "consistency" || text == "consistency_only") return AcquisitionMode::consistency_only;
  if (text == "random") return AcquisitionMode::random;
  throw std::invalid_argument("unknown acquisition mode '" + std::string(text) + "'");
}

void AcquisitionConfig::validate() const {
  if (!(delta >= 0.0 && delta <= 1.0)) throw std::invalid_argument("delta must lie in [0, 1]");
  if (k < 1) throw std::invalid_argument("label budget k must be >= 1");
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

double view_entropy(const MemoryBank& bank, FeatureView x) {
  const auto p = class_posterior(bank, x);
  return entropy(p);
}

double object_entropy(const MemoryBank& bank, std::span<const FeatureView> views) {
  if (views.empty()) throw std::invalid_argument("object_entropy: object has no views");
  double sum = 0.0;
  for (const auto& v : views) sum += view_entropy(bank, v);
  return sum / static_cast<double>(views.size());
}

std::vector<std::size_t> view_predictions(const MemoryBank& bank, std::span<const FeatureView> views) {
  if (bank.empty()) throw std::invalid_argument("view_predictions: empty memory bank");
  const double floor = bank.config().variance_floor;
  std::vector<std::size_t> out;
  out.reserve(views.size());
  for (const auto& x : views) {
    std::size_t best = 0;
    double best_score = -1.0;
    for (std::size_t y = 0; y < bank.size(); ++y) {
      const double s = class_score(x, bank.classes()[y], floor);
      if (s > best_score) {
        best = y;
        best_score = s;
      }
    }
    out.push_back(best);
  }
  return out;
}

double inconsistency_from_predictions(std::span<const std::size_t> predictions) {
  if (predictions.empty()) throw std::invalid_argument("inconsistency: object has no views");
  std::vector<std::size_t> sorted(predictions.begin(), predictions.end());
  std::sort(sorted.begin(), sorted.end());
  std::size_t best = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    best = std::max(best, j - i);
    i = j;
  }
  const double max_fraction = static_cast<double>(best) / static_cast<double>(predictions.size());
  return 1.0 / max_fraction;
}

double viewpoint_inconsistency(const MemoryBank& bank, std::span<const FeatureView> views) {
  const auto preds = view_predictions(bank, views);
  return inconsistency_from_predictions(preds);
}

double combined_score(const AcquisitionConfig& cfg, double mean_entropy, double inconsistency, std::mt19937_64& rng) {
  switch (cfg.mode) {
  case AcquisitionMode::combined:
    return cfg.delta * mean_entropy + (1.0 - cfg.delta) * inconsistency;
  case AcquisitionMode::entropy_only:
    return mean_entropy;
  case AcquisitionMode::consistency_only:
    return inconsistency;
  case AcquisitionMode::random:
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  }
  return 0.0;
}

namespace {

std::vector<std::size_t> top_k(const std::vector<ObjectScore>& scores, std::size_t k) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a].combined > scores[b].combined; });
  order.resize(k);
  return order;
}

} // namespace

Selection select(const MemoryBank& bank, std::span<const Candidate> pool, const AcquisitionConfig& cfg,
                 const ClassifierHead* head) {
  cfg.validate();
  const auto k = static_cast<std::size_t>(cfg.k);
  if (pool.size() < k) throw std::invalid_argument("select: pool smaller than label budget");
  if (cfg.predictor == ViewPredictor::classifier && !bank.empty() && (head == nullptr || head->empty())) {
    throw std::invalid_argument("select: classifier view predictor requires a trained head");
  }

  std::mt19937_64 rng(cfg.selection_seed);
  Selection out;
  out.scores.reserve(pool.size());

  if (bank.empty()) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (const auto& c : pool) {
      ObjectScore s;
      s.object_id = c.id;
      s.combined = uniform(rng);
      out.scores.push_back(std::move(s));
    }
    out.chosen = top_k(out.scores, k);
    return out;
  }

  const double classes = static_cast<double>(bank.size());
  for (const auto& c : pool) {
    if (c.views.empty()) throw std::invalid_argument("select: object " + c.id + " has no views");
    ObjectScore s;
    s.object_id = c.id;
    s.mean_entropy = object_entropy(bank, c.views);

    std::vector<std::size_t> preds;
    if (cfg.predictor == ViewPredictor::gmm) {
      preds = view_predictions(bank, c.views);
      for (auto y : preds) s.per_view_predictions.push_back(bank.classes()[y].label);
    } else {
      for (const auto& v : c.views) {
        auto p = predict(*head, v);
        preds.push_back(p.row);
        s.per_view_predictions.push_back(std::move(p.label));
      }
    }
    s.inconsistency = inconsistency_from_predictions(preds);

    double h = s.mean_entropy;
    double inc = s.inconsistency;
    if (cfg.normalize_terms) {
      h = classes > 1.0 ? h / std::log(classes) : 0.0;
      const double top = std::min(static_cast<double>(c.views.size()), classes);
      inc = top > 1.0 ? (inc - 1.0) / (top - 1.0) : 0.0;
    }
    s.combined = combined_score(cfg, h, inc, rng);
    out.scores.push_back(std::move(s));
  }
  out.chosen = top_k(out.scores, k);
  return out;
}

} // namespace focal
