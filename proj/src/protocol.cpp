#include "focal/protocol.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

namespace focal {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Independent streams derived from one increment seed.
enum Stream : std::uint64_t { kPool = 1, kSelection = 2, kPseudo = 3, kShuffle = 4 };

std::uint64_t stream_seed(std::uint64_t increment_seed, Stream s) { return splitmix64(increment_seed ^ splitmix64(s)); }

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  return s.substr(first, last - first + 1);
}

} // namespace

std::string_view to_string(OracleMode mode) { return mode == OracleMode::simulated ? "simulated" : "interactive"; }

OracleMode parse_oracle_mode(std::string_view text) {
  if (text == "simulated") return OracleMode::simulated;
  if (text == "interactive") return OracleMode::interactive;
  throw std::invalid_argument("unknown oracle mode '" + std::string(text) + "'");
}

void ProtocolConfig::validate() const {
  if (pool_size < 1) throw std::invalid_argument("pool size m must be >= 1");
  if (label_budget < 1 || label_budget > pool_size) throw std::invalid_argument("label budget k must satisfy 1 <= k <= m");
  if (max_increments < 0) throw std::invalid_argument("max_increments must be >= 0");
  if (eval_every < 1) throw std::invalid_argument("eval_every must be >= 1");
  memory.validate();
  train.validate();
  AcquisitionConfig{delta, acquisition, label_budget, 0, normalize_terms, view_predictor}.validate();
}

nlohmann::json to_json(const ProtocolConfig& cfg) {
  return {
      {"pool_size", cfg.pool_size},
      {"label_budget", cfg.label_budget},
      {"prob_threshold", cfg.memory.threshold},
      {"variance_floor", cfg.memory.variance_floor},
      {"variance_rule", cfg.memory.variance_rule == VarianceRule::literal ? "literal" : "welford"},
      {"delta", cfg.delta},
      {"acquisition", to_string(cfg.acquisition)},
      {"normalize_terms", cfg.normalize_terms},
      {"view_predictor", cfg.view_predictor == ViewPredictor::gmm ? "gmm" : "classifier"},
      {"epochs", cfg.train.epochs},
      {"learning_rate", cfg.train.learning_rate},
      {"momentum", cfg.train.momentum},
      {"batch_size", cfg.train.batch_size},
      {"retrain_from_scratch", cfg.retrain_from_scratch},
      {"max_increments", cfg.max_increments},
      {"eval_every", cfg.eval_every},
      {"master_seed", cfg.master_seed},
      {"oracle", to_string(cfg.oracle)},
      {"deterministic", cfg.deterministic},
      {"threads", cfg.threads},
  };
}

std::string InteractiveOracle::label(const ObjectInstance& obj) {
  for (;;) {
    out_ << "label for object " << obj.id << " (" << obj.count << " views): " << std::flush;
    std::string line;
    if (!std::getline(in_, line)) throw OracleAborted("oracle input ended");
    auto t = trim(line);
    if (!t.empty()) return t;
  }
}

std::string oracle_label(const ObjectInstance& obj, OracleMode mode, std::istream& in, std::ostream& out) {
  if (mode == OracleMode::simulated) return SimulatedOracle{}.label(obj);
  InteractiveOracle oracle(in, out);
  return oracle.label(obj);
}

std::uint64_t increment_seed(std::uint64_t master_seed, int increment) {
  return splitmix64(splitmix64(master_seed) ^ static_cast<std::uint64_t>(increment));
}

RunResult run(const Dataset& dataset, const ProtocolConfig& cfg, Oracle& oracle, const RecordSink& sink) {
  cfg.validate();
  const auto train_idx = dataset.split_indices(Split::train);
  const auto test_idx = dataset.split_indices(Split::test);
  if (train_idx.empty()) throw DataError("dataset has no train objects");
  if (test_idx.empty()) throw DataError("dataset has no test objects");

  std::vector<EvalObject> test;
  test.reserve(test_idx.size());
  for (auto i : test_idx) test.push_back({dataset.views(dataset.object(i)), dataset.object(i).label});

  RunResult result{{}, false, MemoryBank(dataset.feature_dim(), cfg.memory), ClassifierHead(dataset.feature_dim())};
  auto& bank = result.bank;
  auto& head = result.head;

  std::vector<std::size_t> remaining = train_idx;
  std::size_t learned_objects = 0;
  double accuracy_sum = 0.0;
  std::size_t evaluations = 0;
  const unsigned threads = cfg.deterministic ? 1u : std::max(1u, cfg.threads);

  for (int t = 1; t <= cfg.max_increments && !remaining.empty(); ++t) {
    const auto started = std::chrono::steady_clock::now();
    const auto seed = increment_seed(cfg.master_seed, t);

    // (1) draw the pool without replacement
    const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(cfg.pool_size), remaining.size());
    std::vector<std::size_t> positions(remaining.size());
    std::iota(positions.begin(), positions.end(), 0);
    std::mt19937_64 pool_rng(stream_seed(seed, kPool));
    for (std::size_t i = 0; i < m; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, positions.size() - 1);
      std::swap(positions[i], positions[pick(pool_rng)]);
    }
    positions.resize(m);

    std::vector<Candidate> pool;
    pool.reserve(m);
    for (auto pos : positions) {
      const auto& obj = dataset.object(remaining[pos]);
      pool.push_back({obj.id, dataset.views(obj)});
    }

    // (2) acquisition
    AcquisitionConfig acq{cfg.delta,
                          cfg.acquisition,
                          std::min(cfg.label_budget, static_cast<int>(m)),
                          stream_seed(seed, kSelection),
                          cfg.normalize_terms,
                          cfg.view_predictor};
    auto selection = select(bank, pool, acq, &head);

    // (3) oracle labels for the selected objects only
    IncrementRecord rec;
    rec.increment = t;
    rec.scores = std::move(selection.scores);
    std::vector<std::size_t> chosen_objects;
    try {
      for (auto p : selection.chosen) {
        const auto& obj = dataset.object(remaining[positions[p]]);
        rec.selected_ids.push_back(obj.id);
        rec.selected_labels.push_back(oracle.label(obj));
        chosen_objects.push_back(remaining[positions[p]]);
      }
    } catch (const OracleAborted&) {
      result.aborted = true;
      break;
    }

    // (4) pseudo-rehearsal of previously learned categories, then ingest
    std::vector<LabeledSample> training;
    if (!bank.empty()) training = sample_pseudo(bank, stream_seed(seed, kPseudo));
    std::vector<std::string> new_labels;
    for (std::size_t s = 0; s < chosen_objects.size(); ++s) {
      const auto& obj = dataset.object(chosen_objects[s]);
      const auto& label = rec.selected_labels[s];
      if (head.row_of(label) < 0 && std::find(new_labels.begin(), new_labels.end(), label) == new_labels.end()) {
        new_labels.push_back(label);
      }
      for (std::uint64_t v = 0; v < obj.count; ++v) {
        auto x = dataset.view(obj, v);
        rec.outcomes.push_back(bank.ingest(x, label));
        training.push_back({FeatureVector(x.begin(), x.end()), label});
      }
    }

    // (5) expand and train the head
    head.expand(new_labels);
    if (cfg.retrain_from_scratch) head.reset();
    TrainConfig tc = cfg.train;
    tc.shuffle_seed = stream_seed(seed, kShuffle);
    train(head, training, tc);

    // (6) selected objects leave the pool for good; the rest return
    std::vector<bool> taken(remaining.size(), false);
    for (auto p : selection.chosen) taken[positions[p]] = true;
    std::vector<std::size_t> next;
    next.reserve(remaining.size());
    for (std::size_t i = 0; i < remaining.size(); ++i) {
      if (!taken[i]) next.push_back(remaining[i]);
    }
    remaining = std::move(next);
    learned_objects += chosen_objects.size();

    // (7) evaluation
    if (t % cfg.eval_every == 0) {
      const auto acc = evaluate(head, test, threads);
      rec.test_accuracy = acc.image;
      rec.object_majority_accuracy = acc.object_majority;
      accuracy_sum += acc.image;
      ++evaluations;
    }
    rec.avg_incremental_accuracy = evaluations == 0 ? 0.0 : accuracy_sum / static_cast<double>(evaluations);
    rec.learned_objects = learned_objects;
    rec.learned_classes = bank.size();
    rec.component_count = bank.component_count();
    rec.memory_bytes = memory_footprint(bank).bytes;
    rec.pool_remaining = remaining.size();
    if (!cfg.deterministic) {
      rec.wall_time_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    }

    if (sink) sink(rec);
    result.records.push_back(std::move(rec));
  }
  return result;
}

std::optional<int> increments_to_all_classes(const std::vector<IncrementRecord>& records, std::size_t total_classes) {
  for (const auto& r : records) {
    if (r.learned_classes >= total_classes) return r.increment;
  }
  return std::nullopt;
}

std::string metrics_header() {
  return "increment,selected_ids,selected_labels,learned_objects,learned_classes,test_accuracy,"
         "object_majority_accuracy,avg_incremental_accuracy,component_count,memory_bytes,wall_time_ms\n";
}

std::string metrics_row(const IncrementRecord& r) {
  std::ostringstream os;
  os << r.increment << ',' << csv_cell(join(r.selected_ids, ';')) << ',' << csv_cell(join(r.selected_labels, ';'))
     << ',' << r.learned_objects << ',' << r.learned_classes << ','
     << (r.test_accuracy ? fixed(*r.test_accuracy, 6) : "") << ','
     << (r.object_majority_accuracy ? fixed(*r.object_majority_accuracy, 6) : "") << ','
     << fixed(r.avg_incremental_accuracy, 6) << ',' << r.component_count << ',' << r.memory_bytes << ','
     << fixed(r.wall_time_ms, 3) << '\n';
  return os.str();
}

MetricsWriter::MetricsWriter(const std::string& path)
    : out_(std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc)) {
  if (!*out_) throw DataError("cannot write " + path);
  *out_ << metrics_header() << std::flush;
}

void MetricsWriter::append(const IncrementRecord& record) {
  *out_ << metrics_row(record) << std::flush;
  if (!*out_) throw DataError("metrics write failed");
}

std::string scores_header() {
  return "increment,object_id,mean_entropy,inconsistency,combined,selected,per_view_predictions\n";
}

std::string scores_rows(const IncrementRecord& r) {
  std::ostringstream os;
  for (const auto& s : r.scores) {
    const bool selected = std::find(r.selected_ids.begin(), r.selected_ids.end(), s.object_id) != r.selected_ids.end();
    os << r.increment << ',' << csv_cell(s.object_id) << ',' << fixed(s.mean_entropy, 9) << ','
       << fixed(s.inconsistency, 9) << ',' << fixed(s.combined, 9) << ',' << (selected ? 1 : 0) << ','
       << csv_cell(join(s.per_view_predictions, ';')) << '\n';
  }
  return os.str();
}

std::string_view to_string(SweepParam param) { return param == SweepParam::delta ? "delta" : "P"; }

SweepParam parse_sweep_param(std::string_view text) {
  if (text == "delta") return SweepParam::delta;
  if (text == "P" || text == "p" || text == "threshold") return SweepParam::threshold;
  throw std::invalid_argument("unknown sweep parameter '" + std::string(text) + "'");
}

double SweepRow::mean_avg_accuracy() const {
  double s = 0.0;
  for (const auto& r : runs) s += r.avg_incremental_accuracy;
  return runs.empty() ? 0.0 : s / static_cast<double>(runs.size());
}

double SweepRow::std_avg_accuracy() const {
  if (runs.size() < 2) return 0.0;
  const double mean = mean_avg_accuracy();
  double s = 0.0;
  for (const auto& r : runs) s += (r.avg_incremental_accuracy - mean) * (r.avg_incremental_accuracy - mean);
  return std::sqrt(s / static_cast<double>(runs.size() - 1));
}

double SweepRow::mean_final_accuracy() const {
  double s = 0.0;
  for (const auto& r : runs) s += r.final_accuracy;
  return runs.empty() ? 0.0 : s / static_cast<double>(runs.size());
}

double SweepRow::mean_components() const {
  double s = 0.0;
  for (const auto& r : runs) s += static_cast<double>(r.total_components);
  return runs.empty() ? 0.0 : s / static_cast<double>(runs.size());
}

std::vector<SweepRow> sweep(const Dataset& dataset, const ProtocolConfig& cfg, SweepParam param,
                            const std::vector<double>& values, const std::vector<std::uint64_t>& seeds) {
  if (values.empty()) throw std::invalid_argument("sweep: no values");
  if (seeds.empty()) throw std::invalid_argument("sweep: no seeds");
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument("sweep: " + std::string(to_string(param)) + " value out of range [0, 1]");
    }
  }
  const std::size_t total_classes = dataset.categories().size();
  std::vector<SweepRow> rows;
  for (double v : values) {
    SweepRow row;
    row.value = v;
    for (auto seed : seeds) {
      ProtocolConfig c = cfg;
      c.oracle = OracleMode::simulated;
      c.master_seed = seed;
      if (param == SweepParam::delta) {
        c.delta = v;
      } else {
        c.memory.threshold = v;
      }
      SimulatedOracle oracle;
      auto res = run(dataset, c, oracle);
      SweepRun sr;
      sr.seed = seed;
      sr.total_components = res.bank.component_count();
      sr.increments_to_all = increments_to_all_classes(res.records, total_classes);
      if (!res.records.empty()) sr.avg_incremental_accuracy = res.records.back().avg_incremental_accuracy;
      for (auto it = res.records.rbegin(); it != res.records.rend(); ++it) {
        if (it->test_accuracy) {
          sr.final_accuracy = *it->test_accuracy;
          break;
        }
      }
      row.runs.push_back(sr);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string sweep_header() {
  return "param,value,seeds,avg_incremental_accuracy,avg_incremental_accuracy_std,final_accuracy,"
         "total_components,increments_to_all_classes\n";
}

std::string sweep_row(SweepParam param, const SweepRow& row) {
  std::vector<std::string> reach;
  for (const auto& r : row.runs) reach.push_back(r.increments_to_all ? std::to_string(*r.increments_to_all) : "NA");
  std::ostringstream os;
  os << to_string(param) << ',' << fixed(row.value, 4) << ',' << row.runs.size() << ','
     << fixed(row.mean_avg_accuracy(), 6) << ',' << fixed(row.std_avg_accuracy(), 6) << ','
     << fixed(row.mean_final_accuracy(), 6) << ',' << fixed(row.mean_components(), 2) << ',' << join(reach, ';')
     << '\n';
  return os.str();
}

} // namespace focal
