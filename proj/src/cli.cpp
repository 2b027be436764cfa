#include "focal/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "focal/checkpoint.hpp"
#include "focal/protocol.hpp"

namespace focal::cli {

namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct ProtocolFlags {
  ProtocolConfig cfg;
  std::string acquisition = "combined";
  std::string oracle = "simulated";
  std::string variance_rule = "literal";
  std::string view_predictor = "gmm";

  void add_to(CLI::App& app) {
    app.add_option("--pool-size", cfg.pool_size, "objects drawn per increment (m)")->check(CLI::PositiveNumber);
    app.add_option("--label-budget", cfg.label_budget, "objects labeled per increment (k)")->check(CLI::PositiveNumber);
    app.add_option("--prob-threshold", cfg.memory.threshold, "component merge threshold P")
        ->check(CLI::Range(0.0, 1.0));
    app.add_option("--variance-floor", cfg.memory.variance_floor, "variance floor inside the kernel")
        ->check(CLI::PositiveNumber);
    app.add_option("--variance-rule", variance_rule, "component variance update")
        ->check(CLI::IsMember({"literal", "welford"}));
    app.add_option("--delta", cfg.delta, "entropy weight in the combined score")->check(CLI::Range(0.0, 1.0));
    app.add_option("--acquisition", acquisition, "acquisition function")
        ->check(CLI::IsMember({"combined", "entropy", "consistency", "random"}));
    app.add_flag("--normalize-terms", cfg.normalize_terms, "rescale both acquisition terms onto [0,1]");
    app.add_option("--view-predictor", view_predictor, "per-view predictions for consistency")
        ->check(CLI::IsMember({"gmm", "classifier"}));
    app.add_option("--seed", cfg.master_seed, "master seed");
    app.add_option("--epochs", cfg.train.epochs, "training epochs per increment")->check(CLI::NonNegativeNumber);
    app.add_option("--lr", cfg.train.learning_rate, "SGD learning rate")->check(CLI::PositiveNumber);
    app.add_option("--momentum", cfg.train.momentum, "SGD momentum")->check(CLI::Range(0.0, 0.999999));
    app.add_option("--batch-size", cfg.train.batch_size, "minibatch size")->check(CLI::PositiveNumber);
    app.add_flag("--retrain", cfg.retrain_from_scratch, "reset the head before each increment's training");
    app.add_option("--max-increments", cfg.max_increments, "increment limit")->check(CLI::NonNegativeNumber);
    app.add_option("--eval-every", cfg.eval_every, "evaluate every N increments")->check(CLI::PositiveNumber);
    app.add_option("--oracle", oracle, "label source")->check(CLI::IsMember({"simulated", "interactive"}));
    app.add_flag("--deterministic", cfg.deterministic, "sequential execution, byte-reproducible output");
  }

  ProtocolConfig resolve() {
    cfg.acquisition = parse_acquisition_mode(acquisition);
    cfg.oracle = parse_oracle_mode(oracle);
    cfg.memory.variance_rule = variance_rule == "literal" ? VarianceRule::literal : VarianceRule::welford;
    cfg.view_predictor = view_predictor == "gmm" ? ViewPredictor::gmm : ViewPredictor::classifier;
    if (cfg.label_budget > cfg.pool_size) throw UsageError("--label-budget must not exceed --pool-size");
    cfg.threads = 1;
    if (!cfg.deterministic) {
      cfg.threads = std::max(1u, std::thread::hardware_concurrency());
      if (const char* env = std::getenv("FOCAL_THREADS")) {
        const long n = std::strtol(env, nullptr, 10);
        if (n >= 1) cfg.threads = static_cast<unsigned>(n);
      }
    }
    cfg.validate();
    return cfg;
  }
};

void ensure_writable(const std::vector<fs::path>& paths, bool force) {
  for (const auto& p : paths) {
    if (!force && fs::exists(p)) throw UsageError("output path exists (use --force): " + p.string());
  }
  for (const auto& p : paths) {
    std::error_code ec;
    if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
    if (ec) throw DataError("cannot create directory " + p.parent_path().string() + ": " + ec.message());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

fs::path run_manifest_path(const fs::path& out) {
  auto p = out;
  p += ".run.json";
  return p;
}

int cmd_run(ProtocolFlags& flags, const std::string& dataset_path, const std::string& out_path,
            const std::string& scores_path, const std::string& checkpoint_path, bool force, std::istream& in,
            std::ostream& out) {
  const auto cfg = flags.resolve();
  std::vector<fs::path> outputs{out_path, run_manifest_path(out_path)};
  if (!scores_path.empty()) outputs.emplace_back(scores_path);
  if (!checkpoint_path.empty()) {
    outputs.emplace_back(checkpoint_path);
    outputs.push_back(checkpoint_blob_path(checkpoint_path));
  }
  ensure_writable(outputs, force);

  const auto dataset = load_dataset(dataset_path);

  nlohmann::json manifest;
  manifest["version"] = kVersionString;
  manifest["dataset"] = dataset_path;
  manifest["config"] = to_json(cfg);
  write_text(run_manifest_path(out_path), manifest.dump(2) + "\n");

  MetricsWriter metrics(out_path);
  std::unique_ptr<std::ofstream> scores;
  if (!scores_path.empty()) {
    scores = std::make_unique<std::ofstream>(scores_path, std::ios::binary | std::ios::trunc);
    *scores << scores_header() << std::flush;
  }
  auto sink = [&](const IncrementRecord& r) {
    metrics.append(r);
    if (scores) *scores << scores_rows(r) << std::flush;
  };

  SimulatedOracle simulated;
  InteractiveOracle interactive(in, out);
  Oracle& oracle = cfg.oracle == OracleMode::simulated ? static_cast<Oracle&>(simulated) : interactive;
  auto result = run(dataset, cfg, oracle, sink);

  if (!checkpoint_path.empty()) save_checkpoint(checkpoint_path, result.bank, &result.head);

  if (result.aborted) {
    out << "\naborted after " << result.records.size() << " increments\n";
    return kAborted;
  }
  if (!result.records.empty()) {
    const auto& last = result.records.back();
    out << "increments: " << result.records.size() << "  classes: " << last.learned_classes
        << "  components: " << last.component_count
        << "  avg incremental accuracy: " << last.avg_incremental_accuracy << "\n";
  }
  return kOk;
}

int cmd_sweep(ProtocolFlags& flags, const std::string& dataset_path, const std::string& param_name,
              const std::vector<double>& values, const std::vector<std::uint64_t>& seeds, const std::string& out_path,
              bool force, std::ostream& out) {
  auto cfg = flags.resolve();
  const auto param = parse_sweep_param(param_name);
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) throw UsageError("--values entries must lie in [0, 1]");
  }
  if (!out_path.empty()) ensure_writable({out_path}, force);
  const auto dataset = load_dataset(dataset_path);
  const auto rows = sweep(dataset, cfg, param, values, seeds.empty() ? std::vector<std::uint64_t>{cfg.master_seed} : seeds);
  std::string table = sweep_header();
  for (const auto& r : rows) table += sweep_row(param, r);
  if (!out_path.empty()) write_text(out_path, table);
  out << table;
  return kOk;
}

int cmd_synth(const SyntheticParams& params, const std::string& out_path, bool force, std::ostream& out) {
  const fs::path manifest = out_path;
  const auto blob_name = manifest.stem().string() + ".bin";
  ensure_writable({manifest, manifest.parent_path() / blob_name}, force);
  if (!(params.class_spread >= 0.0) || !(params.view_jitter >= 0.0)) {
    throw UsageError("--class-spread and --view-jitter must be >= 0");
  }
  const auto dataset = generate_synthetic(params);
  write_dataset(dataset, manifest, blob_name);
  out << "wrote " << dataset.objects().size() << " objects (" << dataset.vector_count() << " vectors, dim "
      << dataset.feature_dim() << ") to " << manifest.string() << "\n";
  return kOk;
}

int cmd_validate(const std::string& manifest_path, bool as_json, std::ostream& out) {
  const auto dataset = load_dataset(manifest_path);
  const auto train = dataset.split_indices(Split::train).size();
  const auto test = dataset.split_indices(Split::test).size();
  const auto categories = dataset.categories();
  if (as_json) {
    nlohmann::json j{{"valid", true},
                     {"name", dataset.name()},
                     {"feature_dim", dataset.feature_dim()},
                     {"objects", dataset.objects().size()},
                     {"train_objects", train},
                     {"test_objects", test},
                     {"vectors", dataset.vector_count()},
                     {"categories", categories}};
    out << j.dump(2) << "\n";
  } else {
    out << "ok: " << dataset.name() << "  dim " << dataset.feature_dim() << "  objects " << dataset.objects().size()
        << " (train " << train << ", test " << test << ")  vectors " << dataset.vector_count() << "  categories "
        << categories.size() << "\n";
  }
  return kOk;
}

int cmd_inspect(const std::string& checkpoint_path, bool as_json, std::ostream& out) {
  const auto ckpt = load_checkpoint(checkpoint_path);
  const auto fp = memory_footprint(ckpt.bank);
  char mb[32];
  std::snprintf(mb, sizeof mb, "%.2f", fp.megabytes());
  if (as_json) {
    nlohmann::json cats = nlohmann::json::array();
    for (const auto& mem : ckpt.bank.classes()) {
      cats.push_back({{"label", mem.label}, {"components", mem.components.size()}, {"count", mem.total_count()}});
    }
    nlohmann::json j{{"feature_dim", ckpt.bank.feature_dim()},
                     {"threshold", ckpt.bank.config().threshold},
                     {"variance_floor", ckpt.bank.config().variance_floor},
                     {"categories", cats},
                     {"component_count", fp.component_count},
                     {"stored_vectors", fp.stored_vectors},
                     {"bytes", fp.bytes},
                     {"megabytes", fp.megabytes()},
                     {"classifier_rows", ckpt.head ? ckpt.head->size() : 0}};
    out << j.dump(2) << "\n";
    return kOk;
  }
  out << "category  components  count\n";
  for (const auto& mem : ckpt.bank.classes()) {
    out << mem.label << "  " << mem.components.size() << "  " << mem.total_count() << "\n";
  }
  out << "components: " << fp.component_count << "  stored vectors: " << fp.stored_vectors << " x "
      << ckpt.bank.feature_dim() << "  bytes: " << fp.bytes << "  MB: " << mb << "\n";
  return kOk;
}

} // namespace

int main(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-shot continual active learning with incremental Gaussian mixture memories", "focal"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", kVersionString);

  // run
  auto* run_cmd = app.add_subcommand("run", "run the continual active learning protocol");
  ProtocolFlags run_flags;
  run_flags.add_to(*run_cmd);
  std::string run_dataset, run_out, run_scores, run_checkpoint;
  bool run_force = false;
  run_cmd->add_option("--dataset", run_dataset, "dataset manifest")->required();
  run_cmd->add_option("--out", run_out, "metrics CSV")->required();
  run_cmd->add_option("--scores", run_scores, "acquisition score table CSV");
  run_cmd->add_option("--checkpoint", run_checkpoint, "write final memory + classifier checkpoint");
  run_cmd->add_flag("--force", run_force, "overwrite existing outputs");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "sweep delta or P over values and seeds");
  ProtocolFlags sweep_flags;
  sweep_flags.add_to(*sweep_cmd);
  std::string sweep_dataset, sweep_param, sweep_out;
  std::vector<double> sweep_values;
  std::vector<std::uint64_t> sweep_seeds;
  bool sweep_force = false;
  sweep_cmd->add_option("--dataset", sweep_dataset, "dataset manifest")->required();
  sweep_cmd->add_option("--param", sweep_param, "parameter to sweep")
      ->required()
      ->check(CLI::IsMember({"delta", "P"}));
  sweep_cmd->add_option("--values", sweep_values, "comma-separated values")->required()->delimiter(',');
  sweep_cmd->add_option("--seeds", sweep_seeds, "comma-separated master seeds")->delimiter(',');
  sweep_cmd->add_option("--out", sweep_out, "summary CSV");
  sweep_cmd->add_flag("--force", sweep_force, "overwrite existing outputs");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic multi-view feature dataset");
  SyntheticParams synth;
  std::string synth_out;
  bool synth_force = false;
  synth_cmd->add_option("--classes", synth.num_classes)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--objects-per-class", synth.objects_per_class)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--test-objects-per-class", synth.test_objects_per_class)->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--views", synth.views_per_object)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--dim", synth.dim)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--class-spread", synth.class_spread)->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--view-jitter", synth.view_jitter)->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--seed", synth.seed);
  synth_cmd->add_option("--out", synth_out, "manifest path; the blob is written alongside")->required();
  synth_cmd->add_flag("--force", synth_force, "overwrite existing outputs");

  // inspect / validate
  auto* inspect_cmd = app.add_subcommand("inspect", "summarize a checkpoint");
  std::string inspect_path;
  bool inspect_json = false;
  inspect_cmd->add_option("checkpoint", inspect_path)->required();
  inspect_cmd->add_flag("--json", inspect_json);

  auto* validate_cmd = app.add_subcommand("validate", "check a dataset manifest and blob");
  std::string validate_path;
  bool validate_json = false;
  validate_cmd->add_option("manifest", validate_path)->required();
  validate_cmd->add_flag("--json", validate_json);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  try {
    if (run_cmd->parsed()) {
      return cmd_run(run_flags, run_dataset, run_out, run_scores, run_checkpoint, run_force, in, out);
    }
    if (sweep_cmd->parsed()) {
      return cmd_sweep(sweep_flags, sweep_dataset, sweep_param, sweep_values, sweep_seeds, sweep_out, sweep_force,
                       out);
    }
    if (synth_cmd->parsed()) return cmd_synth(synth, synth_out, synth_force, out);
    if (inspect_cmd->parsed()) return cmd_inspect(inspect_path, inspect_json, out);
    if (validate_cmd->parsed()) return cmd_validate(validate_path, validate_json, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}

} // namespace focal::cli
