#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "focal/feature_store.hpp"

namespace focal {

/// One mixture component with diagonal covariance. `count` is the number of
/// feature vectors absorbed so far.
struct GaussianComponent {
  FeatureVector centroid;
  FeatureVector variance;
  std::uint64_t count = 1;

  static GaussianComponent spawn(FeatureView x);
};

/// Uniform mixture for one category: every component has weight 1/n.
struct ClassMemory {
  std::string label;
  std::vector<GaussianComponent> components;

  std::uint64_t total_count() const;
};

enum class VarianceRule {
  literal, // ((w-1)/w) s + ((w-1)/w^2) (x - c_new)^2 with w the pre-update count
  welford, // (w s + (x - c_old)(x - c_new)) / (w + 1)
};

struct MemoryConfig {
  double threshold = 0.2;       // P, in [0, 1]
  double variance_floor = 1.0; // epsilon, applied inside the kernel only
  VarianceRule variance_rule = VarianceRule::literal;

  void validate() const;
};

struct IngestOutcome {
  enum class Kind { new_class, merged, new_component };
  Kind kind;
  std::size_t component = 0; // index touched or created within the category

  bool operator==(const IngestOutcome&) const = default;
};

std::string to_string(const IngestOutcome& outcome);

/// Natural log of the unnormalized diagonal Gaussian kernel:
/// -1/2 * sum_d (x_d - c_d)^2 / max(var_d, floor).
double log_component_similarity(FeatureView x, const GaussianComponent& comp, double variance_floor);

/// exp(log_component_similarity). In (0, 1]; equals 1 only at the centroid.
/// May underflow to 0 for distant points.
double component_similarity(FeatureView x, const GaussianComponent& comp, double variance_floor);

/// Mean of component similarities: p(x | category) under the uniform mixture.
double class_score(FeatureView x, const ClassMemory& mem, double variance_floor);

/// (w c + x) / (w + 1).
FeatureVector update_centroid(const GaussianComponent& comp, FeatureView x);

FeatureVector update_variance(const GaussianComponent& comp, FeatureView x, FeatureView new_centroid,
                              VarianceRule rule = VarianceRule::literal);

class MemoryBank {
public:
  explicit MemoryBank(std::uint32_t feature_dim, MemoryConfig config = {});

  /// Rebuilds a bank from serialized state; validates all invariants.
  static MemoryBank from_state(std::uint32_t feature_dim, MemoryConfig config, std::vector<ClassMemory> classes);

  IngestOutcome ingest(FeatureView x, const std::string& label);

  std::uint32_t feature_dim() const { return dim_; }
  const MemoryConfig& config() const { return config_; }
  bool empty() const { return classes_.empty(); }
  std::size_t size() const { return classes_.size(); }

  /// Categories in order of first appearance.
  const std::vector<ClassMemory>& classes() const { return classes_; }
  const ClassMemory* find(const std::string& label) const;
  std::size_t component_count() const;

private:
  std::uint32_t dim_;
  MemoryConfig config_;
  std::vector<ClassMemory> classes_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// class_score for every learned category, normalized to sum to one. Falls
/// back to the uniform distribution when every score underflows to zero.
std::vector<double> class_posterior(const MemoryBank& bank, FeatureView x);

/// Draws `count` vectors from N(centroid, diag(variance)) for each component.
std::vector<LabeledSample> sample_pseudo(const MemoryBank& bank, std::uint64_t seed);

struct MemoryFootprint {
  std::uint64_t component_count = 0;
  std::uint64_t stored_vectors = 0; // centroid + diagonal variance per component
  std::uint64_t bytes = 0;          // 4 bytes per stored value

  double megabytes() const { return static_cast<double>(bytes) / 1e6; }
};

MemoryFootprint memory_footprint(std::uint64_t component_count, std::uint32_t feature_dim);
MemoryFootprint memory_footprint(const MemoryBank& bank);

} // namespace focal
