#include "cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <map>
#include <ostream>
#include <sstream>

#include "bamp/adaptation.hpp"
#include "bamp/embedding_store.hpp"
#include "bamp/ensemble.hpp"
#include "bamp/errors.hpp"
#include "bamp/kernels.hpp"
#include "bamp/results.hpp"
#include "bamp/run_config.hpp"
#include "bamp/synthetic.hpp"

namespace bamp::cli {

namespace {

using Json = nlohmann::ordered_json;

std::string flag_name(const std::string& key) {
  std::string flag = "--" + key;
  for (char& ch : flag) {
    if (ch == '_') ch = '-';
  }
  return flag;
}

std::string hex(std::uint64_t value) {
  char buffer[24];
  std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(value));
  return buffer;
}

std::string percent(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.2f", value);
  return buffer;
}

/// Config file plus one flag per config key.
struct ConfigOptions {
  std::string file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App& command) {
    command.add_option("--config", file, "key = value config file")->check(CLI::ExistingFile);
    for (const auto& key : config_keys()) {
      options[key] = command.add_option(flag_name(key), values[key], "config key " + key);
    }
  }

  RunConfig resolve() const {
    RunConfig config;
    if (!file.empty()) apply_config_file(config, file);
    for (const auto& key : config_keys()) {
      if (options.at(key)->count() > 0) config.set(key, values.at(key));
    }
    config.validate();
    return config;
  }
};

void check_plan(const SessionPlan& plan, const DatasetManifest& manifest) {
  for (std::size_t t = 0; t < plan.session_count(); ++t) {
    for (auto id : plan.sessions[t]) {
      const auto it = manifest.counts.find(id);
      if (it == manifest.counts.end()) {
        throw InputError("plan session " + std::to_string(t) + " names class " +
                         std::to_string(id) + ", which the dataset does not contain");
      }
      if (it->second.test == 0) {
        throw InputError("class " + std::to_string(id) + " has no test samples");
      }
    }
  }
}

SessionPlan resolve_plan(const LoadedDataset& data, const RunConfig& config,
                         const std::string& plan_path) {
  if (plan_path.empty()) {
    return build_session_plan(data.manifest, config.mode, config.shots, config.plan_seed,
                              config.session_override());
  }
  SessionPlan plan = read_plan(plan_path);
  check_plan(plan, data.manifest);
  return plan;
}

void describe_dataset(std::ostream& out, const std::string& path, const LoadedDataset& data) {
  std::size_t train = 0;
  std::size_t test = 0;
  for (const auto& [id, counts] : data.manifest.counts) {
    train += counts.train;
    test += counts.test;
  }
  out << "dataset " << (data.manifest.name.empty() ? path : data.manifest.name) << ": "
      << data.manifest.class_count() << " classes, d=" << data.manifest.dim << ", " << train
      << " train / " << test << " test records\n";
}

Json plan_json(const SessionPlan& plan) {
  Json sessions = Json::array();
  for (const auto& session : plan.sessions) sessions.push_back(session);
  return Json{{"mode", to_string(plan.mode)},
              {"shots", plan.shots},
              {"seed", plan.seed},
              {"summary", describe_plan(plan)},
              {"sessions", sessions}};
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  SyntheticSpec spec;
  std::string out;
};

int cmd_synth(const SynthArgs& args, std::ostream& out) {
  const auto records = generate_synthetic(args.spec);
  write_embeddings(records, args.out);
  const auto names = synthetic_class_names(args.spec.classes);
  write_sidecar(args.out, args.spec.name, names);
  out << "wrote " << records.size() << " records (" << args.spec.classes << " classes, d="
      << args.spec.dim << ") to " << args.out << "\n";
  return 0;
}

struct PrepareArgs {
  std::string dataset;
  std::string out;
  ConfigOptions config;
};

int cmd_prepare(const PrepareArgs& args, std::ostream& out) {
  const RunConfig config = args.config.resolve();
  const LoadedDataset data = load_embeddings(args.dataset);
  const SessionPlan plan = build_session_plan(data.manifest, config.mode, config.shots,
                                              config.plan_seed, config.session_override());
  write_plan(plan, args.out);
  describe_dataset(out, args.dataset, data);
  out << describe_plan(plan) << " (" << to_string(plan.mode) << ", " << plan.shots << "-shot)\n";
  out << "wrote " << args.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string dataset;
  std::string plan;
  std::string out;
  ConfigOptions config;
};

int cmd_train_base(const TrainArgs& args, std::ostream& out) {
  const RunConfig config = args.config.resolve();
  const LoadedDataset data = load_embeddings(args.dataset);
  const SessionPlan plan = resolve_plan(data, config, args.plan);
  const ProtocolConfig protocol = config.resolved_protocol();
  describe_dataset(out, args.dataset, data);

  const auto base_records = sample_session_data(plan, 0, data.records, protocol.seed);
  const TrainingSet base = TrainingSet::from_records(base_records);
  const auto started = std::chrono::steady_clock::now();
  const TrainResult trained = train_base_session(base, protocol.train);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  Checkpoint checkpoint;
  checkpoint.config_hash = config.training_hash();
  checkpoint.head = trained.head;
  checkpoint.bank = trained.bank;
  checkpoint.class_ids = trained.class_ids;
  write_checkpoint(checkpoint, args.out);

  out << "base session: " << base.class_ids.size() << " classes, " << base.features.rows()
      << " samples\n";
  if (!trained.history.empty()) {
    const auto& last = trained.history.back().batch_mean;
    out << "epoch " << trained.history.size() << ": loss " << last.total << " (ce "
        << last.cross_entropy << ", compact " << last.compact << ", proto " << last.proto_contrastive
        << ")\n";
  }
  out << "alpha " << trained.alpha << ", lambda " << trained.lambda << "\n";
  out << "train accuracy " << percent(head_accuracy(trained.head, base)) << "% in " << seconds
      << " s\n";
  for (const auto& warning : trained.warnings) out << "warning: " << warning << "\n";
  out << "wrote " << args.out << " (config hash " << hex(checkpoint.config_hash) << ")\n";
  return 0;
}

struct RunArgs {
  std::string dataset;
  std::string plan;
  std::string checkpoint;
  std::string out;
  std::string manifest;
  ConfigOptions config;
};

int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err) {
  const RunConfig config = args.config.resolve();
  const LoadedDataset data = load_embeddings(args.dataset);
  const SessionPlan plan = resolve_plan(data, config, args.plan);
  const ProtocolConfig protocol = config.resolved_protocol();

  std::optional<Checkpoint> checkpoint;
  if (!args.checkpoint.empty()) {
    checkpoint = read_checkpoint(args.checkpoint);
    if (checkpoint->config_hash != config.training_hash()) {
      throw InputError("checkpoint " + args.checkpoint +
                       " was trained with different training settings (hash " +
                       hex(checkpoint->config_hash) + ", expected " + hex(config.training_hash()) +
                       ")");
    }
    std::vector<std::uint32_t> base_ids = plan.sessions.front();
    std::sort(base_ids.begin(), base_ids.end());
    if (checkpoint->class_ids != base_ids) {
      throw InputError("checkpoint " + args.checkpoint + " was trained on different base classes");
    }
  }

  describe_dataset(out, args.dataset, data);
  out << describe_plan(plan) << " (" << to_string(plan.mode) << ", " << plan.shots << "-shot)\n";
  out << "preset " << protocol.toggles.preset_name() << ": mixture_losses "
      << (protocol.toggles.mixture_losses ? "on" : "off") << ", calibration "
      << (protocol.toggles.calibration ? "on" : "off") << ", voting "
      << (protocol.toggles.voting ? "on" : "off") << "\n";

  std::ofstream csv(args.out, std::ios::trunc);
  if (!csv) throw InputError("cannot open results file " + args.out);
  csv << kResultsHeader << "\n";
  csv.flush();

  const std::string manifest_path = args.manifest.empty() ? args.out + ".json" : args.manifest;
  Json manifest;
  manifest["format_version"] = 1;
  manifest["status"] = "running";
  manifest["dataset"] = {{"path", args.dataset},
                         {"name", data.manifest.name},
                         {"dim", data.manifest.dim},
                         {"classes", data.manifest.class_count()},
                         {"records", data.records.size()}};
  manifest["plan"] = plan_json(plan);
  if (!args.plan.empty()) manifest["plan"]["path"] = args.plan;
  Json config_json = Json::object();
  for (const auto& [key, value] : config.entries()) config_json[key] = value;
  manifest["config"] = config_json;
  manifest["config_hash"] = hex(config.hash());
  manifest["seeds"] = {{"seed", config.seed},
                       {"plan_seed", plan.seed},
                       {"shot_sampling", protocol.seed},
                       {"training", protocol.train.seed},
                       {"projection", protocol.ots.seed}};
  manifest["toggles"] = {{"preset", protocol.toggles.preset_name()},
                         {"mixture_losses", protocol.toggles.mixture_losses},
                         {"calibration", protocol.toggles.calibration},
                         {"voting", protocol.toggles.voting}};
  manifest["checkpoint"] = args.checkpoint.empty() ? Json(nullptr) : Json(args.checkpoint);
  manifest["kernels"] = kernels::active_kernels().name;

  Json session_rows = Json::array();
  std::size_t completed = 0;
  auto write_manifest = [&] {
    std::ofstream file(manifest_path, std::ios::trunc);
    if (!file) throw InputError("cannot write run manifest " + manifest_path);
    file << manifest.dump(2) << "\n";
  };

  const auto started = std::chrono::steady_clock::now();
  try {
    const SessionResult result = run_protocol(
        data.records, plan, protocol, checkpoint ? &checkpoint->head : nullptr,
        [&](const SessionRecord& record) {
          csv << format_session_row(record) << "\n";
          csv.flush();
          session_rows.push_back({{"session", record.session},
                                  {"seen_classes", record.seen_classes.size()},
                                  {"test_samples", record.test_samples()},
                                  {"correct", record.correct},
                                  {"accuracy", record.accuracy}});
          ++completed;
          out << "session " << record.session << ": " << record.seen_classes.size()
              << " classes, " << record.test_samples() << " test samples, accuracy "
              << percent(record.accuracy) << "%\n";
        });
    csv << format_summary_row(result.metrics) << "\n";
    csv.flush();
    manifest["status"] = "complete";
    manifest["results"] = {{"a_last", result.metrics.a_last},
                           {"a_inc", result.metrics.a_inc},
                           {"base_train_accuracy", result.base_train_accuracy},
                           {"alpha", result.alpha},
                           {"lambda", result.lambda},
                           {"sessions", session_rows}};
    manifest["warnings"] = result.warnings;
    write_manifest();
    for (const auto& warning : result.warnings) err << "warning: " << warning << "\n";
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    out << "A_last " << percent(result.metrics.a_last) << "  A_inc "
        << percent(result.metrics.a_inc) << "  (" << percent(seconds) << " s)\n";
    out << "wrote " << args.out << " and " << manifest_path << "\n";
  } catch (const std::exception& error) {
    csv << format_failure_row(completed) << "\n";
    csv.flush();
    manifest["status"] = "failed";
    manifest["error"] = error.what();
    manifest["results"] = {{"sessions", session_rows}};
    write_manifest();
    throw;
  }
  return 0;
}

struct ReportArgs {
  std::vector<std::string> files;
  std::string curve;
};

int cmd_report(const ReportArgs& args, std::ostream& out) {
  std::vector<ResultsFile> runs;
  std::vector<MetricPair> metrics;
  for (const auto& file : args.files) {
    runs.push_back(read_results(file));
    metrics.push_back(runs.back().summary);
  }
  char line[512];
  std::snprintf(line, sizeof(line), "%-40s %8s %8s %8s\n", "run", "sessions", "A_last", "A_inc");
  out << line;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    std::snprintf(line, sizeof(line), "%-40s %8zu %8.2f %8.2f\n", args.files[i].c_str(),
                  runs[i].sessions.size(), metrics[i].a_last, metrics[i].a_inc);
    out << line;
  }
  const MetricPair macro = macro_metrics(metrics);
  std::snprintf(line, sizeof(line), "%-40s %8s %8.2f %8.2f\n",
                ("mean of " + std::to_string(runs.size()) + " runs").c_str(), "", macro.a_last,
                macro.a_inc);
  out << line;

  if (!args.curve.empty()) {
    std::ofstream curve(args.curve, std::ios::trunc);
    if (!curve) throw InputError("cannot write curve file " + args.curve);
    curve << "run,session,seen_classes,accuracy\n";
    for (std::size_t i = 0; i < runs.size(); ++i) {
      for (const auto& row : runs[i].sessions) {
        std::snprintf(line, sizeof(line), "%s,%zu,%zu,%.6f\n", args.files[i].c_str(), row.session,
                      row.seen_classes, row.accuracy);
        curve << line;
      }
    }
    out << "wrote " << args.curve << "\n";
  }
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-shot class-incremental learning on pre-extracted embeddings"};
  app.name("bamp");
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a seeded synthetic embedding file");
  synth_cmd->add_option("--out", synth.out, "Output embedding file")->required();
  synth_cmd->add_option("--classes", synth.spec.classes, "Number of classes");
  synth_cmd->add_option("--dim", synth.spec.dim, "Feature dimension");
  synth_cmd->add_option("--train-per-class", synth.spec.train_per_class, "Training records per class");
  synth_cmd->add_option("--test-per-class", synth.spec.test_per_class, "Test records per class");
  synth_cmd->add_option("--modes", synth.spec.modes, "Sub-clusters per class");
  synth_cmd->add_option("--separation", synth.spec.separation, "Radius of the class-center sphere");
  synth_cmd->add_option("--mode-spread", synth.spec.mode_spread, "Sub-cluster distance from center");
  synth_cmd->add_option("--noise", synth.spec.noise, "Per-coordinate noise standard deviation");
  synth_cmd->add_option("--anisotropy", synth.spec.anisotropy,
                        "Condition-number root of the shared within-class covariance");
  synth_cmd->add_option("--seed", synth.spec.seed, "Generator seed");
  synth_cmd->add_option("--name", synth.spec.name, "Dataset name for the sidecar manifest");

  PrepareArgs prepare;
  auto* prepare_cmd = app.add_subcommand("prepare", "Partition classes into sessions");
  prepare_cmd->add_option("--dataset", prepare.dataset, "Embedding file")->required();
  prepare_cmd->add_option("--out", prepare.out, "Plan file to write")->required();
  prepare.config.attach(*prepare_cmd);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train-base", "Adapt the head on the base session");
  train_cmd->add_option("--dataset", train.dataset, "Embedding file")->required();
  train_cmd->add_option("--plan", train.plan, "Plan file (default: built from the config)");
  train_cmd->add_option("--out", train.out, "Checkpoint file to write")->required();
  train.config.attach(*train_cmd);

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "Run every session and write results");
  run_cmd->add_option("--dataset", run_args.dataset, "Embedding file")->required();
  run_cmd->add_option("--plan", run_args.plan, "Plan file (default: built from the config)");
  run_cmd->add_option("--checkpoint", run_args.checkpoint, "Reuse a trained head");
  run_cmd->add_option("--out", run_args.out, "Results CSV")->required();
  run_cmd->add_option("--manifest", run_args.manifest, "Run manifest (default: <out>.json)");
  run_args.config.attach(*run_cmd);

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "Summarize results files");
  report_cmd->add_option("files", report.files, "Results CSV files")->required();
  report_cmd->add_option("--curve", report.curve, "Per-session curve CSV to write");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& error) {
    err << "error: " << error.what() << "\n";
    return 2;
  }

  try {
    if (*synth_cmd) return cmd_synth(synth, out);
    if (*prepare_cmd) return cmd_prepare(prepare, out);
    if (*train_cmd) return cmd_train_base(train, out);
    if (*run_cmd) return cmd_run(run_args, out, err);
    if (*report_cmd) return cmd_report(report, out);
  } catch (const InputError& error) {
    err << "error: " << error.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& error) {
    err << "error: " << error.what() << "\n";
    return 2;
  } catch (const std::exception& error) {
    err << "error: " << error.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace bamp::cli
