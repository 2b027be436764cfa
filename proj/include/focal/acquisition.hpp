#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "focal/classifier.hpp"
#include "focal/gmm_memory.hpp"

namespace focal {

enum class AcquisitionMode { combined, entropy_only, consistency_only, random };

std::string_view to_string(AcquisitionMode mode);
/// Accepts "combined", "entropy", "consistency", "random" (and the *_only spellings).
AcquisitionMode parse_acquisition_mode(std::string_view text);

/// Where per-view category predictions for the consistency term come from.
enum class ViewPredictor { gmm, classifier };

struct AcquisitionConfig {
  double delta = 0.7;
  AcquisitionMode mode = AcquisitionMode::combined;
  int k = 1;
  std::uint64_t selection_seed = 0;
  // Rescale entropy by ln N and inconsistency onto [0, 1] before weighting.
  bool normalize_terms = false;
  ViewPredictor predictor = ViewPredictor::gmm;

  void validate() const;
};

struct Candidate {
  std::string id;
  std::vector<FeatureView> views;
};

struct ObjectScore {
  std::string object_id;
  double mean_entropy = 0.0;  // nats
  double inconsistency = 1.0; // 1 / max agreement fraction
  double combined = 0.0;
  std::vector<std::string> per_view_predictions;
};

/// Shannon entropy in nats; 0 ln 0 = 0.
double entropy(std::span<const double> p);

double view_entropy(const MemoryBank& bank, FeatureView x);
double object_entropy(const MemoryBank& bank, std::span<const FeatureView> views);

/// Per-view argmax of class_score (ties to the earliest category), as
/// indices into bank.classes().
std::vector<std::size_t> view_predictions(const MemoryBank& bank, std::span<const FeatureView> views);

/// 1 / max_y (votes_y / l) for a sequence of per-view predicted categories.
double inconsistency_from_predictions(std::span<const std::size_t> predictions);

double viewpoint_inconsistency(const MemoryBank& bank, std::span<const FeatureView> views);

/// delta * H + (1 - delta) * inconsistency for `combined`; the single term for
/// the ablation modes; a U[0, 1) draw from `rng` for `random`.
double combined_score(const AcquisitionConfig& cfg, double mean_entropy, double inconsistency, std::mt19937_64& rng);

struct Selection {
  std::vector<std::size_t> chosen; // pool indices, best first
  std::vector<ObjectScore> scores; // one per pool entry, in pool order
};

/// Scores every candidate and returns the top cfg.k (ties to the earlier
/// pool entry). With an empty bank the pick is uniform-random under
/// cfg.selection_seed. `head` is required only for ViewPredictor::classifier.
Selection select(const MemoryBank& bank, std::span<const Candidate> pool, const AcquisitionConfig& cfg,
                 const ClassifierHead* head = nullptr);

} // namespace focal
