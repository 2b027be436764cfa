#include "focal/feature_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace focal {

namespace {

template <typename T>
void put_le(std::vector<char>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  auto bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }
}

template <typename T>
T get_le(const char* p) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bits |= static_cast<U>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return std::bit_cast<T>(bits);
}

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

std::string_view to_string(Split split) { return split == Split::train ? "train" : "test"; }

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "test") return Split::test;
  throw DataError("malformed manifest: unknown split '" + std::string(text) + "'");
}

namespace blob {

std::vector<char> encode(const BlobMatrix& m, Precision precision) {
  if (m.dim == 0 && !m.values.empty()) throw DataError("blob: zero dimension with data");
  if (m.dim != 0 && m.values.size() % m.dim != 0) throw DataError("blob: ragged matrix");
  std::vector<char> out;
  const std::size_t width = precision == Precision::f32 ? 4 : 8;
  out.reserve(kHeaderBytes + m.values.size() * width);
  auto magic = precision == Precision::f32 ? kFloatMagic : kDoubleMagic;
  out.insert(out.end(), magic.begin(), magic.end());
  put_le<std::uint32_t>(out, m.dim);
  put_le<std::uint64_t>(out, m.rows());
  for (double v : m.values) {
    if (precision == Precision::f32) {
      put_le<float>(out, static_cast<float>(v));
    } else {
      put_le<double>(out, v);
    }
  }
  return out;
}

BlobMatrix decode(std::span<const char> bytes) {
  if (bytes.size() < kHeaderBytes) throw DataError("blob size mismatch: truncated header");
  std::string_view magic(bytes.data(), 8);
  Precision precision;
  if (magic == kFloatMagic) {
    precision = Precision::f32;
  } else if (magic == kDoubleMagic) {
    precision = Precision::f64;
  } else {
    throw DataError("blob: bad magic");
  }
  BlobMatrix m;
  m.dim = get_le<std::uint32_t>(bytes.data() + 8);
  const auto count = get_le<std::uint64_t>(bytes.data() + 12);
  const std::size_t width = precision == Precision::f32 ? 4 : 8;
  const auto expected = kHeaderBytes + count * m.dim * width;
  if (bytes.size() != expected) {
    std::ostringstream msg;
    msg << "blob size mismatch: expected " << expected << " bytes, found " << bytes.size();
    throw DataError(msg.str());
  }
  m.values.resize(count * m.dim);
  const char* p = bytes.data() + kHeaderBytes;
  for (auto& v : m.values) {
    v = precision == Precision::f32 ? static_cast<double>(get_le<float>(p)) : get_le<double>(p);
    p += width;
  }
  return m;
}

void write(const std::filesystem::path& path, const BlobMatrix& m, Precision precision) {
  auto bytes = encode(m, precision);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

BlobMatrix read(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  return decode(bytes);
}

} // namespace blob

Dataset::Dataset(std::string name, std::uint32_t feature_dim, std::vector<ObjectInstance> objects,
                 std::vector<double> table)
    : name_(std::move(name)), dim_(feature_dim), objects_(std::move(objects)), table_(std::move(table)) {
  validate();
}

void Dataset::validate() const {
  if (dim_ == 0) throw DataError("malformed manifest: feature_dim must be positive");
  if (table_.size() % dim_ != 0) throw DataError("blob size mismatch: ragged table");
  const auto rows = static_cast<std::uint64_t>(table_.size() / dim_);

  std::unordered_set<std::string> ids;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;
  for (const auto& obj : objects_) {
    if (!ids.insert(obj.id).second) throw DataError("malformed manifest: duplicate object id " + obj.id);
    if (obj.count == 0) throw DataError("malformed manifest: object " + obj.id + " has no views");
    if (obj.offset > rows || obj.count > rows - obj.offset) {
      throw DataError("malformed manifest: object " + obj.id + " range exceeds blob");
    }
    ranges.emplace_back(obj.offset, obj.offset + obj.count);
  }
  std::sort(ranges.begin(), ranges.end());
  for (std::size_t i = 1; i < ranges.size(); ++i) {
    if (ranges[i].first < ranges[i - 1].second) throw DataError("malformed manifest: overlapping object ranges");
  }
  for (const auto& obj : objects_) {
    for (std::uint64_t v = 0; v < obj.count; ++v) {
      for (double x : view(obj, v)) {
        if (!std::isfinite(x)) {
          throw DataError("non-finite value in object " + obj.id + " view " + std::to_string(v));
        }
      }
    }
  }
}

std::vector<FeatureView> Dataset::views(const ObjectInstance& obj) const {
  std::vector<FeatureView> out;
  out.reserve(obj.count);
  for (std::uint64_t v = 0; v < obj.count; ++v) out.push_back(view(obj, v));
  return out;
}

std::vector<std::size_t> Dataset::split_indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < objects_.size(); ++i) {
    if (objects_[i].split == split) out.push_back(i);
  }
  return out;
}

std::vector<std::string> Dataset::categories() const {
  std::set<std::string> labels;
  for (const auto& obj : objects_) labels.insert(obj.label);
  return {labels.begin(), labels.end()};
}

std::string manifest_json(const Dataset& dataset, const std::string& blob_name) {
  nlohmann::json j;
  j["name"] = dataset.name();
  j["feature_dim"] = dataset.feature_dim();
  j["blob"] = blob_name;
  auto objects = nlohmann::json::array();
  for (const auto& obj : dataset.objects()) {
    objects.push_back({{"id", obj.id},
                       {"label", obj.label},
                       {"split", to_string(obj.split)},
                       {"offset", obj.offset},
                       {"count", obj.count}});
  }
  j["objects"] = std::move(objects);
  return j.dump(2) + "\n";
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& manifest_path,
                   const std::string& blob_name) {
  auto blob_path = manifest_path.parent_path() / blob_name;
  blob::write(blob_path, BlobMatrix{dataset.feature_dim(), dataset.table()});
  std::ofstream out(manifest_path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + manifest_path.string());
  out << manifest_json(dataset, blob_name);
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  auto text = read_file(manifest_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }

  std::string name;
  std::uint32_t dim = 0;
  std::string blob_name;
  std::vector<ObjectInstance> objects;
  try {
    name = j.at("name").get<std::string>();
    auto raw_dim = j.at("feature_dim").get<std::int64_t>();
    if (raw_dim <= 0 || raw_dim > std::numeric_limits<std::uint32_t>::max()) {
      throw DataError("malformed manifest: feature_dim must be positive");
    }
    dim = static_cast<std::uint32_t>(raw_dim);
    blob_name = j.at("blob").get<std::string>();
    for (const auto& o : j.at("objects")) {
      ObjectInstance obj;
      obj.id = o.at("id").get<std::string>();
      obj.label = o.at("label").get<std::string>();
      obj.split = parse_split(o.at("split").get<std::string>());
      obj.offset = o.at("offset").get<std::uint64_t>();
      obj.count = o.at("count").get<std::uint64_t>();
      objects.push_back(std::move(obj));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }

  auto matrix = blob::read(manifest_path.parent_path() / blob_name);
  if (matrix.dim != dim) {
    throw DataError("malformed manifest: feature_dim " + std::to_string(dim) + " disagrees with blob dim " +
                    std::to_string(matrix.dim));
  }
  return Dataset(std::move(name), dim, std::move(objects), std::move(matrix.values));
}

Dataset generate_synthetic(const SyntheticParams& p) {
  if (p.num_classes <= 0 || p.objects_per_class <= 0 || p.views_per_object <= 0 || p.dim <= 0) {
    throw std::invalid_argument("generate_synthetic: counts must be positive");
  }
  if (!(p.class_spread >= 0.0) || !(p.view_jitter >= 0.0)) {
    throw std::invalid_argument("generate_synthetic: spread and jitter must be non-negative");
  }
  const int test_per_class =
      p.test_objects_per_class >= 0 ? p.test_objects_per_class : (3 * p.objects_per_class + 7) / 8;

  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto dim = static_cast<std::size_t>(p.dim);

  std::vector<ObjectInstance> objects;
  std::vector<double> table;
  std::vector<double> category(dim), object(dim);

  auto label_of = [](int c) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "c%02d", c);
    return std::string(buf);
  };

  for (int c = 0; c < p.num_classes; ++c) {
    for (auto& v : category) v = uniform(rng);
    const auto label = label_of(c);
    for (int o = 0; o < p.objects_per_class + test_per_class; ++o) {
      const bool train = o < p.objects_per_class;
      for (std::size_t d = 0; d < dim; ++d) object[d] = category[d] + p.class_spread * normal(rng);
      ObjectInstance obj;
      char id[32];
      std::snprintf(id, sizeof id, "%s_%s%03d", label.c_str(), train ? "o" : "t",
                    train ? o : o - p.objects_per_class);
      obj.id = id;
      obj.label = label;
      obj.split = train ? Split::train : Split::test;
      obj.offset = table.size() / dim;
      obj.count = static_cast<std::uint64_t>(p.views_per_object);
      for (int v = 0; v < p.views_per_object; ++v) {
        for (std::size_t d = 0; d < dim; ++d) {
          double x = object[d] + p.view_jitter * normal(rng);
          table.push_back(static_cast<double>(static_cast<float>(x)));
        }
      }
      objects.push_back(std::move(obj));
    }
  }
  return Dataset("synthetic", static_cast<std::uint32_t>(dim), std::move(objects), std::move(table));
}

} // namespace focal
