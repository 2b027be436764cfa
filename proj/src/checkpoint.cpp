#include "focal/checkpoint.hpp"

#include <fstream>
#include <iterator>

#include <json.hpp>

namespace focal {

namespace {

constexpr const char* kFormat = "focal-checkpoint";
constexpr int kVersion = 1;

std::string_view rule_name(VarianceRule rule) { return rule == VarianceRule::literal ? "literal" : "welford"; }

VarianceRule parse_rule(const std::string& name) {
  if (name == "literal") return VarianceRule::literal;
  if (name == "welford") return VarianceRule::welford;
  throw DataError("checkpoint: unknown variance rule " + name);
}

} // namespace

std::filesystem::path checkpoint_blob_path(const std::filesystem::path& header_path) {
  auto p = header_path;
  p += ".bin";
  return p;
}

void save_checkpoint(const std::filesystem::path& header_path, const MemoryBank& bank, const ClassifierHead* head) {
  const auto dim = bank.feature_dim();
  if (head != nullptr && head->feature_dim() != dim) throw std::invalid_argument("checkpoint: head/bank dim mismatch");

  BlobMatrix blob{dim, {}};
  nlohmann::json categories = nlohmann::json::array();
  for (const auto& mem : bank.classes()) {
    nlohmann::json counts = nlohmann::json::array();
    for (const auto& comp : mem.components) {
      counts.push_back(comp.count);
      blob.values.insert(blob.values.end(), comp.centroid.begin(), comp.centroid.end());
      blob.values.insert(blob.values.end(), comp.variance.begin(), comp.variance.end());
    }
    categories.push_back({{"label", mem.label}, {"counts", std::move(counts)}});
  }

  nlohmann::json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["feature_dim"] = dim;
  j["threshold"] = bank.config().threshold;
  j["variance_floor"] = bank.config().variance_floor;
  j["variance_rule"] = rule_name(bank.config().variance_rule);
  j["blob"] = checkpoint_blob_path(header_path).filename().string();
  j["categories"] = std::move(categories);
  if (head != nullptr) {
    blob.values.insert(blob.values.end(), head->weights().begin(), head->weights().end());
    j["classifier"] = {{"labels", head->labels()}, {"biases", head->biases()}};
  } else {
    j["classifier"] = nullptr;
  }

  blob::write(checkpoint_blob_path(header_path), blob, blob::Precision::f64);
  std::ofstream out(header_path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + header_path.string());
  out << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& header_path) {
  std::ifstream in(header_path, std::ios::binary);
  if (!in) throw DataError("cannot open " + header_path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
    if (j.at("format").get<std::string>() != kFormat || j.at("version").get<int>() != kVersion) {
      throw DataError("checkpoint: unsupported format or version");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: malformed header: ") + e.what());
  }

  try {
    const auto dim = j.at("feature_dim").get<std::uint32_t>();
    MemoryConfig cfg;
    cfg.threshold = j.at("threshold").get<double>();
    cfg.variance_floor = j.at("variance_floor").get<double>();
    cfg.variance_rule = parse_rule(j.at("variance_rule").get<std::string>());

    auto matrix = blob::read(header_path.parent_path() / j.at("blob").get<std::string>());
    if (matrix.dim != dim) throw DataError("checkpoint: blob dimension mismatch");

    std::size_t row = 0;
    auto take = [&]() {
      if (row >= matrix.rows()) throw DataError("checkpoint: blob too short");
      auto r = matrix.row(row++);
      return FeatureVector(r.begin(), r.end());
    };

    std::vector<ClassMemory> classes;
    for (const auto& c : j.at("categories")) {
      ClassMemory mem;
      mem.label = c.at("label").get<std::string>();
      for (const auto& count : c.at("counts")) {
        GaussianComponent comp;
        comp.centroid = take();
        comp.variance = take();
        comp.count = count.get<std::uint64_t>();
        mem.components.push_back(std::move(comp));
      }
      classes.push_back(std::move(mem));
    }
    Checkpoint out{MemoryBank::from_state(dim, cfg, std::move(classes)), std::nullopt};

    const auto& cls = j.at("classifier");
    if (!cls.is_null()) {
      ClassifierHead head(dim);
      const auto labels = cls.at("labels").get<std::vector<std::string>>();
      head.expand(labels);
      const auto biases = cls.at("biases").get<std::vector<double>>();
      if (biases.size() != labels.size()) throw DataError("checkpoint: bias count mismatch");
      head.biases() = biases;
      for (std::size_t r = 0; r < labels.size(); ++r) {
        auto w = take();
        std::copy(w.begin(), w.end(), head.weights().begin() + static_cast<std::ptrdiff_t>(r * dim));
      }
      out.head = std::move(head);
    }
    if (row != matrix.rows()) throw DataError("checkpoint: blob has trailing rows");
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: malformed header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("checkpoint: invalid state: ") + e.what());
  }
}

} // namespace focal
