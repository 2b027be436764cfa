#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "focal/classifier.hpp"
#include "focal/gmm_memory.hpp"

namespace focal {

/// A JSON header (labels, counts, threshold, floor, classifier labels and
/// biases) plus a FOCALFD1 blob. Blob rows: for each category in bank order,
/// for each component, the centroid row then the variance row; then one row
/// per classifier weight row.
struct Checkpoint {
  MemoryBank bank;
  std::optional<ClassifierHead> head;
};

void save_checkpoint(const std::filesystem::path& header_path, const MemoryBank& bank,
                     const ClassifierHead* head = nullptr);

Checkpoint load_checkpoint(const std::filesystem::path& header_path);

/// Blob file written next to `header_path`.
std::filesystem::path checkpoint_blob_path(const std::filesystem::path& header_path);

} // namespace focal
