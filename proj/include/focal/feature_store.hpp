#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace focal {

using FeatureVector = std::vector<double>;
using FeatureView = std::span<const double>;

struct LabeledSample {
  FeatureVector features;
  std::string label;
};

/// Raised for malformed manifests, blobs, or feature values.
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class Split { train, test };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

/// Row-major matrix read from or written to a feature blob.
struct BlobMatrix {
  std::uint32_t dim = 0;
  std::vector<double> values; // rows() * dim entries

  std::size_t rows() const { return dim == 0 ? 0 : values.size() / dim; }
  FeatureView row(std::size_t i) const { return {values.data() + i * dim, dim}; }
};

namespace blob {

// `FOCALFT1`: float32 payload. `FOCALFD1`: float64 payload, same layout,
// used by checkpoints so model state round-trips exactly.
inline constexpr std::string_view kFloatMagic = "FOCALFT1";
inline constexpr std::string_view kDoubleMagic = "FOCALFD1";
inline constexpr std::size_t kHeaderBytes = 8 + 4 + 8;

enum class Precision { f32, f64 };

void write(const std::filesystem::path& path, const BlobMatrix& m, Precision precision = Precision::f32);
BlobMatrix read(const std::filesystem::path& path);

std::vector<char> encode(const BlobMatrix& m, Precision precision = Precision::f32);
BlobMatrix decode(std::span<const char> bytes);

} // namespace blob

/// One physical object: a labeled group of view feature vectors stored
/// contiguously in the dataset table.
struct ObjectInstance {
  std::string id;
  std::string label; // oracle-only
  Split split = Split::train;
  std::uint64_t offset = 0;
  std::uint64_t count = 0;
};

class Dataset {
public:
  Dataset() = default;
  Dataset(std::string name, std::uint32_t feature_dim, std::vector<ObjectInstance> objects,
          std::vector<double> table);

  const std::string& name() const { return name_; }
  std::uint32_t feature_dim() const { return dim_; }
  const std::vector<ObjectInstance>& objects() const { return objects_; }
  const ObjectInstance& object(std::size_t i) const { return objects_[i]; }
  std::size_t vector_count() const { return dim_ == 0 ? 0 : table_.size() / dim_; }
  const std::vector<double>& table() const { return table_; }

  FeatureView view(const ObjectInstance& obj, std::size_t v) const {
    return {table_.data() + (obj.offset + v) * dim_, dim_};
  }
  std::vector<FeatureView> views(const ObjectInstance& obj) const;

  /// Indices into objects() belonging to `split`, in manifest order.
  std::vector<std::size_t> split_indices(Split split) const;
  std::vector<std::string> categories() const;

private:
  void validate() const;

  std::string name_;
  std::uint32_t dim_ = 0;
  std::vector<ObjectInstance> objects_;
  std::vector<double> table_;
};

Dataset load_dataset(const std::filesystem::path& manifest_path);

/// Writes `<manifest_path>` and a blob next to it named `blob_name`.
void write_dataset(const Dataset& dataset, const std::filesystem::path& manifest_path,
                   const std::string& blob_name);

std::string manifest_json(const Dataset& dataset, const std::string& blob_name);

struct SyntheticParams {
  int num_classes = 10;
  int objects_per_class = 40;
  int views_per_object = 8;
  int dim = 64;
  double class_spread = 0.25;
  double view_jitter = 0.05;
  std::uint64_t seed = 0;
  // Held-out objects per category; negative selects ceil(3/8 * objects_per_class).
  int test_objects_per_class = -1;
};

/// Category center ~ U[-1,1]^dim, object center ~ N(category, spread^2 I),
/// view ~ N(object, jitter^2 I). Values are rounded to float32 so the
/// in-memory table matches what is written to disk.
Dataset generate_synthetic(const SyntheticParams& params);

} // namespace focal
