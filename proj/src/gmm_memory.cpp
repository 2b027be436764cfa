#include "focal/gmm_memory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace focal {

namespace {

void check_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (" + std::to_string(got) + " vs " +
                                std::to_string(want) + ")");
  }
}

} // namespace

GaussianComponent GaussianComponent::spawn(FeatureView x) {
  return {FeatureVector(x.begin(), x.end()), FeatureVector(x.size(), 0.0), 1};
}

std::uint64_t ClassMemory::total_count() const {
  std::uint64_t total = 0;
  for (const auto& c : components) total += c.count;
  return total;
}

void MemoryConfig::validate() const {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw std::invalid_argument("threshold must lie in [0, 1]");
  if (!(variance_floor > 0.0) || !std::isfinite(variance_floor)) {
    throw std::invalid_argument("variance floor must be positive and finite");
  }
}

std::string to_string(const IngestOutcome& outcome) {
  switch (outcome.kind) {
  case IngestOutcome::Kind::new_class:
    return "new_class";
  case IngestOutcome::Kind::merged:
    return "merged:" + std::to_string(outcome.component);
  case IngestOutcome::Kind::new_component:
    return "new_component:" + std::to_string(outcome.component);
  }
  return "?";
}

double log_component_similarity(FeatureView x, const GaussianComponent& comp, double variance_floor) {
  check_dim(x.size(), comp.centroid.size(), "component_similarity");
  double mahalanobis = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double diff = x[d] - comp.centroid[d];
    mahalanobis += diff * diff / std::max(comp.variance[d], variance_floor);
  }
  return -0.5 * mahalanobis;
}

double component_similarity(FeatureView x, const GaussianComponent& comp, double variance_floor) {
  return std::exp(log_component_similarity(x, comp, variance_floor));
}

double class_score(FeatureView x, const ClassMemory& mem, double variance_floor) {
  if (mem.components.empty()) throw std::invalid_argument("class_score: empty class memory");
  double sum = 0.0;
  for (const auto& comp : mem.components) sum += component_similarity(x, comp, variance_floor);
  return sum / static_cast<double>(mem.components.size());
}

FeatureVector update_centroid(const GaussianComponent& comp, FeatureView x) {
  check_dim(x.size(), comp.centroid.size(), "update_centroid");
  const double w = static_cast<double>(comp.count);
  FeatureVector out(x.size());
  for (std::size_t d = 0; d < x.size(); ++d) out[d] = (w * comp.centroid[d] + x[d]) / (w + 1.0);
  return out;
}

FeatureVector update_variance(const GaussianComponent& comp, FeatureView x, FeatureView new_centroid,
                              VarianceRule rule) {
  check_dim(x.size(), comp.variance.size(), "update_variance");
  check_dim(new_centroid.size(), comp.variance.size(), "update_variance");
  const double w = static_cast<double>(comp.count);
  FeatureVector out(x.size());
  if (rule == VarianceRule::literal) {
    const double keep = (w - 1.0) / w;
    const double spread = (w - 1.0) / (w * w);
    for (std::size_t d = 0; d < x.size(); ++d) {
      const double diff = x[d] - new_centroid[d];
      out[d] = keep * comp.variance[d] + spread * diff * diff;
    }
  } else {
    for (std::size_t d = 0; d < x.size(); ++d) {
      out[d] = (w * comp.variance[d] + (x[d] - comp.centroid[d]) * (x[d] - new_centroid[d])) / (w + 1.0);
    }
  }
  return out;
}

MemoryBank::MemoryBank(std::uint32_t feature_dim, MemoryConfig config) : dim_(feature_dim), config_(config) {
  if (dim_ == 0) throw std::invalid_argument("MemoryBank: feature_dim must be positive");
  config_.validate();
}

MemoryBank MemoryBank::from_state(std::uint32_t feature_dim, MemoryConfig config, std::vector<ClassMemory> classes) {
  MemoryBank bank(feature_dim, config);
  for (auto& mem : classes) {
    if (mem.components.empty()) throw std::invalid_argument("class " + mem.label + " has no components");
    for (const auto& comp : mem.components) {
      check_dim(comp.centroid.size(), feature_dim, "from_state");
      check_dim(comp.variance.size(), feature_dim, "from_state");
      if (comp.count == 0) throw std::invalid_argument("component count must be positive");
      for (double v : comp.variance) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("variance must be finite and >= 0");
      }
    }
    if (!bank.index_.emplace(mem.label, bank.classes_.size()).second) {
      throw std::invalid_argument("duplicate class label " + mem.label);
    }
    bank.classes_.push_back(std::move(mem));
  }
  return bank;
}

const ClassMemory* MemoryBank::find(const std::string& label) const {
  auto it = index_.find(label);
  return it == index_.end() ? nullptr : &classes_[it->second];
}

std::size_t MemoryBank::component_count() const {
  std::size_t n = 0;
  for (const auto& mem : classes_) n += mem.components.size();
  return n;
}

IngestOutcome MemoryBank::ingest(FeatureView x, const std::string& label) {
  check_dim(x.size(), dim_, "ingest");
  for (double v : x) {
    if (!std::isfinite(v)) throw std::invalid_argument("ingest: non-finite feature value");
  }

  auto it = index_.find(label);
  if (it == index_.end()) {
    index_.emplace(label, classes_.size());
    classes_.push_back({label, {GaussianComponent::spawn(x)}});
    return {IngestOutcome::Kind::new_class, 0};
  }

  auto& mem = classes_[it->second];
  // Compare in the log domain so distant components do not tie at zero and
  // P = 0 / P = 1 behave exactly.
  std::size_t best = 0;
  double best_log = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < mem.components.size(); ++j) {
    const double s = log_component_similarity(x, mem.components[j], config_.variance_floor);
    if (j == 0 || s > best_log) {
      best = j;
      best_log = s;
    }
  }

  if (best_log >= std::log(config_.threshold)) {
    auto& comp = mem.components[best];
    auto centroid = update_centroid(comp, x);
    comp.variance = update_variance(comp, x, centroid, config_.variance_rule);
    comp.centroid = std::move(centroid);
    ++comp.count;
    return {IngestOutcome::Kind::merged, best};
  }
  mem.components.push_back(GaussianComponent::spawn(x));
  return {IngestOutcome::Kind::new_component, mem.components.size() - 1};
}

std::vector<double> class_posterior(const MemoryBank& bank, FeatureView x) {
  if (bank.empty()) throw std::invalid_argument("class_posterior: empty memory bank");
  const double floor = bank.config().variance_floor;
  std::vector<double> p;
  p.reserve(bank.size());
  double sum = 0.0;
  for (const auto& mem : bank.classes()) {
    p.push_back(class_score(x, mem, floor));
    sum += p.back();
  }
  if (!(sum > 0.0)) {
    std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(p.size()));
    return p;
  }
  for (auto& v : p) v /= sum;
  return p;
}

std::vector<LabeledSample> sample_pseudo(const MemoryBank& bank, std::uint64_t seed) {
  if (bank.empty()) throw std::invalid_argument("sample_pseudo: empty memory bank");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<LabeledSample> out;
  for (const auto& mem : bank.classes()) {
    for (const auto& comp : mem.components) {
      for (std::uint64_t n = 0; n < comp.count; ++n) {
        FeatureVector x(comp.centroid.size());
        for (std::size_t d = 0; d < x.size(); ++d) {
          const double z = normal(rng);
          x[d] = comp.variance[d] > 0.0 ? comp.centroid[d] + std::sqrt(comp.variance[d]) * z : comp.centroid[d];
        }
        out.push_back({std::move(x), mem.label});
      }
    }
  }
  return out;
}

MemoryFootprint memory_footprint(std::uint64_t component_count, std::uint32_t feature_dim) {
  MemoryFootprint f;
  f.component_count = component_count;
  f.stored_vectors = 2 * component_count;
  f.bytes = f.stored_vectors * feature_dim * sizeof(float);
  return f;
}

MemoryFootprint memory_footprint(const MemoryBank& bank) {
  return memory_footprint(bank.component_count(), bank.feature_dim());
}

} // namespace focal
