// egrnet: dataset synthesis, conversion, training, evaluation, sweeps,
// ablations, gradient checks and separability reports.
//
// Exit codes: 0 success, 1 check failure or runtime error, 2 usage or input error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "egr/checkpoint.hpp"
#include "egr/dataset.hpp"
#include "egr/error.hpp"
#include "egr/gradcheck.hpp"
#include "egr/harness.hpp"
#include "egr/image_io.hpp"
#include "egr/kernels/gemm.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace egr;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheck = 1;
constexpr int kExitInput = 2;

void progress(const std::string& line) { std::cerr << line << '\n'; }

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::optional<double> parse_snr(const std::string& text) {
  if (text == "none" || text == "clean") return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad SNR '" + text + "' (expected dB value or 'none')");
  }
}

NormalizationMode parse_normalization(const std::string& s) {
  if (s == "variance") return NormalizationMode::variance;
  if (s == "standard_deviation" || s == "std") return NormalizationMode::standard_deviation;
  throw ConfigError("unknown normalization '" + s + "'");
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// Experiment options shared by train, sweep and ablate. Flags override the
// config file field by field.
struct ExperimentFlags {
  std::string config;
  std::optional<std::string> manifest;
  std::optional<std::string> variant;
  std::vector<std::string> snr;
  std::optional<int> trials;
  std::optional<int> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::optional<double> lr_decay_factor;
  std::optional<int> lr_decay_every;
  std::optional<std::uint64_t> seed;
  std::optional<double> train_fraction;
  std::optional<std::string> normalization;
  std::optional<std::string> blocks;
  bool no_normalize = false;
  bool normalize_after_noise = false;
  bool record_timing = false;
  std::string out;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "Experiment config JSON")->check(CLI::ExistingFile);
    cmd->add_option("--manifest", manifest, "Dataset manifest.json");
    cmd->add_option("--variant", variant, "egr_net | egr_net_no_bc | cnn_rsm");
    cmd->add_option("--snr", snr, "SNR values in dB, or 'none' for clean data");
    cmd->add_option("--trials", trials, "Trials per SNR");
    cmd->add_option("--epochs", epochs, "Training epochs");
    cmd->add_option("--batch-size", batch_size, "Mini-batch size");
    cmd->add_option("--lr", lr, "Initial learning rate");
    cmd->add_option("--lr-decay-factor", lr_decay_factor, "Learning-rate decay factor");
    cmd->add_option("--lr-decay-every", lr_decay_every, "Epochs between decays");
    cmd->add_option("--seed", seed, "Base RNG seed");
    cmd->add_option("--train-fraction", train_fraction, "Per-class training fraction");
    cmd->add_option("--normalization", normalization, "variance | standard_deviation");
    cmd->add_option("--blocks", blocks, "Blocks as k:c:s,k:c:s,...");
    cmd->add_flag("--no-normalize", no_normalize, "Skip sample normalization");
    cmd->add_flag("--normalize-after-noise", normalize_after_noise, "Normalize the clean sample, then add noise");
    cmd->add_flag("--record-timing", record_timing, "Record wall-clock seconds in results.csv");
    cmd->add_option("--out", out, "Output directory");
  }

  ExperimentConfig resolve() const {
    ExperimentConfig cfg;
    if (!config.empty()) cfg = load_experiment_config(config);
    if (manifest) cfg.manifest = *manifest;
    if (variant) cfg.variant = parse_variant(*variant);
    if (!snr.empty()) {
      cfg.snr_db.clear();
      for (const std::string& s : snr) {
        if (auto v = parse_snr(s)) cfg.snr_db.push_back(*v);
      }
    }
    if (trials) cfg.trials = *trials;
    if (epochs) cfg.epochs = *epochs;
    if (batch_size) cfg.batch_size = *batch_size;
    if (lr) cfg.initial_lr = *lr;
    if (lr_decay_factor) cfg.lr_decay_factor = *lr_decay_factor;
    if (lr_decay_every) cfg.lr_decay_every_epochs = *lr_decay_every;
    if (seed) cfg.rng_seed = *seed;
    if (train_fraction) cfg.split.train_fraction = *train_fraction;
    if (normalization) cfg.normalization = parse_normalization(*normalization);
    if (blocks) cfg.blocks = parse_blocks(*blocks);
    if (no_normalize) cfg.normalize = false;
    if (normalize_after_noise) cfg.noise_first = false;
    if (record_timing) cfg.record_timing = true;
    if (!out.empty()) cfg.out_dir = out;
    validate(cfg);
    return cfg;
  }

  static std::vector<GcbSpec> parse_blocks(const std::string& text) {
    std::vector<GcbSpec> blocks;
    std::stringstream list(text);
    std::string item;
    while (std::getline(list, item, ',')) {
      GcbSpec b;
      char c1 = 0;
      char c2 = 0;
      std::stringstream in(item);
      if (!(in >> b.kernel_size >> c1 >> b.out_channels >> c2 >> b.stride) || c1 != ':' || c2 != ':' || !in.eof()) {
        throw ConfigError("bad block '" + item + "' (expected kernel:channels:stride)");
      }
      blocks.push_back(b);
    }
    if (blocks.empty()) throw ConfigError("--blocks is empty");
    return blocks;
  }
};

int cmd_synth(const std::string& spec_path, const std::vector<std::string>& csv_files,
              const std::vector<std::string>& names, const fs::path& out) {
  DatasetManifest manifest;
  if (!csv_files.empty()) {
    if (!spec_path.empty()) throw ConfigError("give either --spec or --csv, not both");
    std::vector<fs::path> files(csv_files.begin(), csv_files.end());
    std::vector<std::string> class_names = names;
    if (class_names.empty()) {
      for (const fs::path& f : files) class_names.push_back(f.stem().string());
    }
    manifest = import_csv(files, class_names, out);
  } else {
    if (spec_path.empty()) throw ConfigError("synth needs --spec or --csv");
    const SyntheticFaultSpec spec = synthetic_spec_from_json(read_json(spec_path));
    validate(spec);
    manifest = generate_synthetic(spec, out);
  }
  std::cout << "manifest " << (out / "manifest.json").string() << '\n';
  std::cout << "sample_length " << manifest.sample_length << ", sample_rate_hz " << manifest.sample_rate_hz << '\n';
  for (const ClassEntry& c : manifest.classes) {
    std::cout << "  class " << c.label_id << " '" << c.name << "': " << c.sample_count << " samples\n";
  }
  return kExitOk;
}

int cmd_convert(const fs::path& manifest_path, const std::string& sample_id, const std::string& emit,
                const std::optional<std::string>& snr_text, std::uint64_t seed,
                const std::optional<std::string>& normalization, const fs::path& out) {
  if (emit != "rsm" && emit != "egr" && emit != "both") throw ConfigError("--emit must be rsm, egr or both");
  const auto colon = sample_id.find(':');
  int label = -1;
  std::size_t index = 0;
  try {
    if (colon == std::string::npos) throw std::invalid_argument(sample_id);
    label = std::stoi(sample_id.substr(0, colon));
    index = std::stoul(sample_id.substr(colon + 1));
  } catch (const std::exception&) {
    throw ConfigError("bad --sample '" + sample_id + "' (expected class:index)");
  }
  const DatasetManifest manifest = load_manifest(manifest_path);
  if (label < 0 || static_cast<std::size_t>(label) >= manifest.num_classes()) {
    throw InputError("class " + std::to_string(label) + " not in manifest (" +
                     std::to_string(manifest.num_classes()) + " classes)");
  }
  const std::vector<Signal> samples = load_samples(manifest, label);
  if (index >= samples.size()) {
    throw InputError("sample " + std::to_string(index) + " out of range for class " + std::to_string(label) + " (" +
                     std::to_string(samples.size()) + " samples)");
  }
  Signal s = samples[index];
  const std::optional<double> snr = snr_text ? parse_snr(*snr_text) : std::nullopt;
  if (snr) s = add_noise_snr(s, {*snr, seed});
  if (normalization) s = normalize_sample(s, parse_normalization(*normalization));
  const RsmConfig dims = suggest_dims(s.size());
  const Rsm x = build_rsm(s, dims);

  fs::create_directories(out);
  const std::string stem = "sample_" + std::to_string(label) + "_" + std::to_string(index);
  if (emit != "egr") {
    write_pgm(out / (stem + "_rsm.pgm"), x.values);
    write_matrix_csv(out / (stem + "_rsm.csv"), x.values);
  }
  if (emit != "rsm") {
    const Egr g = gram(x);
    const StripeProfile profile = stripe_profile(g);
    write_pgm(out / (stem + "_egr.pgm"), g.values);
    write_matrix_csv(out / (stem + "_egr.csv"), g.values);
    write_stripe_csv(out / (stem + "_stripe.csv"), profile);
    if (dims.n >= 4) std::cout << "dominant stripe lag " << profile.dominant_lag(1, dims.n / 2) << '\n';
  }
  std::cout << "wrote " << stem << " (" << dims.m << "x" << dims.n << ") to " << out.string() << '\n';
  return kExitOk;
}

json run_json(const ExperimentConfig& cfg, std::optional<double> snr, int trial, const TrialResult& r) {
  return {{"config", to_json(cfg)},
          {"snr_db", format_snr(snr)},
          {"trial", trial},
          {"test_accuracy_pct", r.test_accuracy_pct}};
}

int cmd_train(const ExperimentFlags& flags, int trial) {
  const ExperimentConfig cfg = flags.resolve();
  if (cfg.snr_db.size() > 1) progress("train uses the first SNR only; run sweep for the full list");
  const std::optional<double> snr = cfg.snr_db.empty() ? std::nullopt : std::optional<double>(cfg.snr_db.front());
  const DataSplit data = load_split(cfg);
  TrainedTrial t = train_trial(cfg, data, snr, trial, progress);
  fs::create_directories(cfg.out_dir);
  save_model(*t.model, cfg.out_dir / "model.egrn");
  write_json(cfg.out_dir / "run.json", run_json(cfg, snr, trial, t.result));
  write_results_csv(cfg.out_dir / "results.csv", {t.result}, cfg.record_timing);
  write_curves_csv(cfg.out_dir / "curves.csv", {t.result});
  write_confusion_csv(cfg.out_dir / "confusion.csv", {t.result});
  std::cout << "test accuracy " << fmt("%.4f", t.result.test_accuracy_pct) << "% ("
            << t.model->parameter_count() << " parameters), checkpoint " << (cfg.out_dir / "model.egrn").string()
            << '\n';
  return kExitOk;
}

int cmd_eval(const fs::path& checkpoint, const std::string& run_path, const std::optional<std::string>& manifest,
             const fs::path& out) {
  const fs::path run_file = run_path.empty() ? checkpoint.parent_path() / "run.json" : fs::path(run_path);
  const json run = read_json(run_file);
  ExperimentConfig cfg;
  std::optional<double> snr;
  int trial = 0;
  try {
    cfg = experiment_config_from_json(run.at("config"));
    snr = parse_snr(run.at("snr_db").get<std::string>());
    trial = run.at("trial").get<int>();
  } catch (const json::exception& e) {
    throw FormatError(run_file.string() + ": " + e.what());
  }
  if (manifest) cfg.manifest = *manifest;
  const EgrNet<float> model = load_model<float>(checkpoint);
  const DataSplit data = load_split(cfg);
  if (data.num_classes != model.config().num_classes || data.input_side != model.config().input_side) {
    throw InputError("checkpoint architecture does not match the dataset");
  }
  const PreparedSet test = prepare_set(data.test, cfg, snr, trial_seed(cfg, trial), SetRole::test);
  TrialResult r;
  r.snr_db = snr;
  r.trial = trial;
  r.confusion = evaluate(model, test, cfg.batch_size);
  r.test_accuracy_pct = accuracy_pct(r.confusion);
  fs::create_directories(out);
  write_confusion_csv(out / "confusion.csv", {r});
  json report{{"checkpoint", checkpoint.string()},
              {"snr_db", format_snr(snr)},
              {"trial", trial},
              {"test_samples", test.labels.size()},
              {"test_accuracy_pct", r.test_accuracy_pct}};
  if (run.contains("test_accuracy_pct")) {
    report["training_test_accuracy_pct"] = run["test_accuracy_pct"];
  }
  write_json(out / "eval.json", report);
  std::cout << "test accuracy " << fmt("%.4f", r.test_accuracy_pct) << "% on " << test.labels.size() << " samples\n";
  return kExitOk;
}

void print_table(const std::vector<std::pair<NetworkVariant, SweepResult>>& rows) {
  for (const auto& [variant, sweep] : rows) {
    for (const SnrSummary& s : sweep.summary) {
      std::cout << to_string(variant) << "  SNR " << format_snr(s.snr_db) << " dB  " << fmt("%.2f", s.accuracy.mean)
                << " ± " << fmt("%.2f", s.accuracy.std) << " % over " << s.accuracies.size() << " trials\n";
    }
  }
}

int cmd_sweep(const ExperimentFlags& flags) {
  const ExperimentConfig cfg = flags.resolve();
  const SweepResult sweep = run_snr_sweep(cfg, progress);
  print_table({{cfg.variant, sweep}});
  return kExitOk;
}

int cmd_ablate(const ExperimentFlags& flags) {
  const ExperimentConfig cfg = flags.resolve();
  print_table(run_ablation(cfg, progress));
  return kExitOk;
}

int cmd_gradcheck(const std::string& scope, std::uint64_t seed, const std::string& out, bool corrupt) {
  GradcheckOptions options;
  options.seed = seed;
  const GradcheckReport report = run_gradcheck_suites(parse_gradcheck_scope(scope), options, corrupt);
  json entries = json::array();
  for (const GradcheckEntry& e : report.entries) {
    std::cout << (e.passed() ? "ok   " : "FAIL ") << e.suite << " / " << e.tensor << "  max rel error "
              << fmt("%.3e", e.max_rel_error) << " (tol " << fmt("%.0e", e.tolerance) << ", " << e.checked
              << " coords)\n";
    entries.push_back({{"suite", e.suite},
                       {"tensor", e.tensor},
                       {"checked", e.checked},
                       {"max_rel_error", e.max_rel_error},
                       {"tolerance", e.tolerance},
                       {"passed", e.passed()}});
  }
  std::cout << (report.passed() ? "gradcheck passed" : "gradcheck FAILED") << ", worst "
            << fmt("%.3e", report.max_rel_error()) << '\n';
  if (!out.empty()) {
    fs::create_directories(out);
    write_json(fs::path(out) / "gradcheck.json", {{"scope", scope}, {"passed", report.passed()}, {"entries", entries}});
  }
  return report.passed() ? kExitOk : kExitCheck;
}

int cmd_separability(const fs::path& manifest, const std::string& snr_text, std::uint64_t seed,
                     const std::string& normalization, const std::string& out) {
  const std::optional<double> snr = parse_snr(snr_text);
  const SeparabilityReport r = separability_report(manifest, snr, seed, parse_normalization(normalization));
  json scores = json::array();
  for (const SeparabilityScore& s : r.scores) {
    std::cout << s.representation << "  silhouette " << fmt("%.4f", s.silhouette) << "  1-NN accuracy "
              << fmt("%.2f", s.knn_accuracy_pct) << "%\n";
    scores.push_back(
        {{"representation", s.representation}, {"silhouette", s.silhouette}, {"knn_accuracy_pct", s.knn_accuracy_pct}});
  }
  if (!out.empty()) {
    fs::create_directories(out);
    write_json(fs::path(out) / "separability.json", {{"snr_db", format_snr(snr)}, {"scores", scores}});
  }
  return kExitOk;
}

int cmd_inspect(const std::string& manifest, const std::string& checkpoint, const std::string& variant,
                std::size_t classes, std::size_t latency_runs) {
  if (!manifest.empty()) {
    const DatasetManifest m = load_manifest(manifest);
    const RsmConfig dims = suggest_dims(m.sample_length);
    std::cout << "dataset " << manifest << ": " << m.num_classes() << " classes, sample_length " << m.sample_length
              << " (" << dims.m << "x" << dims.n << "), sample_rate_hz " << m.sample_rate_hz << '\n';
    for (const ClassEntry& c : m.classes) {
      std::cout << "  class " << c.label_id << " '" << c.name << "': " << c.sample_count << " samples, "
                << c.file_path << '\n';
    }
    return kExitOk;
  }
  std::optional<EgrNet<float>> model;
  if (!checkpoint.empty()) {
    model.emplace(load_model<float>(checkpoint));
  } else {
    model.emplace(build_network(classes, parse_variant(variant)));
    model->initialize(0);
  }
  const NetworkConfig& cfg = model->config();
  std::cout << "variant " << to_string(cfg.variant) << ", " << cfg.num_classes << " classes, input " << cfg.input_side
            << "x" << cfg.input_side << '\n';
  const std::vector<BlockShape> trace = shape_trace(cfg);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const GcbSpec& b = cfg.blocks[i];
    std::cout << "  block " << i << " k" << b.kernel_size << " c" << b.out_channels << " s" << b.stride << ": rsm "
              << trace[i].rsm_channels << "ch, egr " << trace[i].egr_channels << "ch, " << trace[i].side << "x"
              << trace[i].side << '\n';
  }
  std::cout << "classifier input " << classifier_width(cfg) << ", parameters " << model->parameter_count()
            << ", forward FLOPs " << count_flops(cfg) << '\n';
  if (latency_runs > 0) {
    Tensor<float> rsm({1, 1, cfg.input_side, cfg.input_side});
    Tensor<float> egr({1, 1, cfg.input_side, cfg.input_side});
    const InferenceStats stats = measure_inference(*model, rsm, egr, latency_runs);
    std::cout << "inference latency median " << fmt("%.3f", stats.median_ms) << " ms (min "
              << fmt("%.3f", stats.min_ms) << ", max " << fmt("%.3f", stats.max_ms) << ", " << stats.runs
              << " runs)\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  kernels::set_thread_limit_from_env();
  retain_freed_memory();
  CLI::App app{"EGR transform and EGR-Net classifier"};
  app.require_subcommand(1, 1);

  std::string spec_path;
  std::vector<std::string> csv_files;
  std::vector<std::string> class_names;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset or import CSV files");
  synth->add_option("--spec", spec_path, "Synthetic dataset spec JSON");
  synth->add_option("--csv", csv_files, "CSV files to import, one class each");
  synth->add_option("--names", class_names, "Class names for --csv (default: file stems)");
  synth->add_option("--out", synth_out, "Output directory")->required();

  std::string conv_manifest;
  std::string conv_sample;
  std::string conv_emit = "both";
  std::optional<std::string> conv_snr;
  std::uint64_t conv_seed = 0;
  std::optional<std::string> conv_norm;
  std::string conv_out;
  auto* convert = app.add_subcommand("convert", "Write the RSM and EGR of one sample as PGM and CSV");
  convert->add_option("--manifest", conv_manifest, "Dataset manifest.json")->required();
  convert->add_option("--sample", conv_sample, "Sample as class:index")->required();
  convert->add_option("--emit", conv_emit, "rsm | egr | both");
  convert->add_option("--snr", conv_snr, "Add noise at this SNR (dB) first");
  convert->add_option("--seed", conv_seed, "Noise seed");
  convert->add_option("--normalize", conv_norm, "Normalize first: variance | standard_deviation");
  convert->add_option("--out", conv_out, "Output directory")->required();

  ExperimentFlags train_flags;
  int train_trial_index = 0;
  auto* train = app.add_subcommand("train", "Train one model and save a checkpoint");
  train_flags.attach(train);
  train->add_option("--trial", train_trial_index, "Trial index (seed offset)");

  std::string eval_checkpoint;
  std::string eval_run;
  std::optional<std::string> eval_manifest;
  std::string eval_out;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on its test split");
  eval->add_option("--checkpoint", eval_checkpoint, "model.egrn written by train")->required();
  eval->add_option("--run", eval_run, "run.json (default: next to the checkpoint)");
  eval->add_option("--manifest", eval_manifest, "Override the dataset manifest");
  eval->add_option("--out", eval_out, "Output directory")->required();

  ExperimentFlags sweep_flags;
  auto* sweep = app.add_subcommand("sweep", "Repeated trials over an SNR list");
  sweep_flags.attach(sweep);

  ExperimentFlags ablate_flags;
  auto* ablate = app.add_subcommand("ablate", "Sweep egr_net, egr_net_no_bc and cnn_rsm on identical data");
  ablate_flags.attach(ablate);

  std::string gc_scope = "all";
  std::uint64_t gc_seed = 0;
  std::string gc_out;
  bool gc_corrupt = false;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gradcheck->add_option("--scope", gc_scope, "layer | block | net | all");
  gradcheck->add_option("--seed", gc_seed, "Seed for inputs and sampled coordinates");
  gradcheck->add_option("--out", gc_out, "Write gradcheck.json here");
  gradcheck->add_flag("--corrupt", gc_corrupt)->group("");

  std::string sep_manifest;
  std::string sep_snr = "0";
  std::uint64_t sep_seed = 0;
  std::string sep_norm = "variance";
  std::string sep_out;
  auto* separability = app.add_subcommand("separability", "Silhouette and 1-NN accuracy of RSMs vs EGRs");
  separability->add_option("--manifest", sep_manifest, "Dataset manifest.json")->required();
  separability->add_option("--snr", sep_snr, "SNR in dB, or 'none'");
  separability->add_option("--seed", sep_seed, "Noise seed");
  separability->add_option("--normalization", sep_norm, "variance | standard_deviation");
  separability->add_option("--out", sep_out, "Write separability.json here");

  std::string insp_manifest;
  std::string insp_checkpoint;
  std::string insp_variant = "egr_net";
  std::size_t insp_classes = 4;
  std::size_t insp_latency = 0;
  auto* inspect = app.add_subcommand("inspect", "Describe a dataset, a checkpoint or the canonical network");
  inspect->add_option("--manifest", insp_manifest, "Dataset manifest.json");
  inspect->add_option("--checkpoint", insp_checkpoint, "model.egrn");
  inspect->add_option("--variant", insp_variant, "Network variant when no checkpoint is given");
  inspect->add_option("--classes", insp_classes, "Class count when no checkpoint is given");
  inspect->add_option("--latency", insp_latency, "Time this many single-sample inferences");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*synth) return cmd_synth(spec_path, csv_files, class_names, synth_out);
    if (*convert) return cmd_convert(conv_manifest, conv_sample, conv_emit, conv_snr, conv_seed, conv_norm, conv_out);
    if (*train) return cmd_train(train_flags, train_trial_index);
    if (*eval) return cmd_eval(eval_checkpoint, eval_run, eval_manifest, eval_out);
    if (*sweep) return cmd_sweep(sweep_flags);
    if (*ablate) return cmd_ablate(ablate_flags);
    if (*gradcheck) return cmd_gradcheck(gc_scope, gc_seed, gc_out, gc_corrupt);
    if (*separability) return cmd_separability(sep_manifest, sep_snr, sep_seed, sep_norm, sep_out);
    if (*inspect) return cmd_inspect(insp_manifest, insp_checkpoint, insp_variant, insp_classes, insp_latency);
  } catch (const CheckFailure& e) {
    std::cerr << "check failed: " << e.what() << '\n';
    return kExitCheck;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCheck;
  }
  return kExitInput;
}
