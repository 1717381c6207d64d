#include "egr/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "egr/checkpoint.hpp"
#include "egr/error.hpp"
#include "egr/optim.hpp"
#include "egr/rng.hpp"

namespace egr {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kNoiseTag = 0x6E6F697365ULL;
constexpr std::uint64_t kShuffleTag = 0x73687566ULL;
constexpr std::uint64_t kInitTag = 0x696E6974ULL;

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string normalization_name(NormalizationMode m) {
  return m == NormalizationMode::variance ? "variance" : "standard_deviation";
}

NormalizationMode parse_normalization(const std::string& s) {
  if (s == "variance") return NormalizationMode::variance;
  if (s == "standard_deviation" || s == "std") return NormalizationMode::standard_deviation;
  throw ConfigError("unknown normalization '" + s + "' (expected variance or standard_deviation)");
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

void report(const Progress& progress, const std::string& line) {
  if (progress) progress(line);
}

}  // namespace

std::string format_snr(const std::optional<double>& snr_db) { return snr_db ? fmt("%g", *snr_db) : "none"; }

json to_json(const ExperimentConfig& cfg) {
  json blocks = json::array();
  for (const GcbSpec& b : cfg.blocks) blocks.push_back({b.kernel_size, b.out_channels, b.stride});
  return {{"manifest", cfg.manifest.string()},
          {"variant", to_string(cfg.variant)},
          {"snr_db", cfg.snr_db},
          {"trials", cfg.trials},
          {"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"initial_lr", cfg.initial_lr},
          {"lr_decay_factor", cfg.lr_decay_factor},
          {"lr_decay_every_epochs", cfg.lr_decay_every_epochs},
          {"rng_seed", cfg.rng_seed},
          {"train_fraction", cfg.split.train_fraction},
          {"normalization", normalization_name(cfg.normalization)},
          {"normalize", cfg.normalize},
          {"noise_first", cfg.noise_first},
          {"normalize_input_egr", cfg.normalize_input_egr},
          {"blocks", blocks},
          {"record_timing", cfg.record_timing},
          {"out_dir", cfg.out_dir.string()}};
}

ExperimentConfig experiment_config_from_json(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("experiment config must be a JSON object");
  static const std::set<std::string> known{"manifest",      "variant",          "snr_db",
                                           "trials",        "epochs",           "batch_size",
                                           "initial_lr",    "lr_decay_factor",  "lr_decay_every_epochs",
                                           "rng_seed",      "train_fraction",   "normalization",
                                           "normalize",     "noise_first",      "normalize_input_egr",
                                           "blocks",        "record_timing",    "out_dir"};
  for (const auto& [key, value] : doc.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  ExperimentConfig cfg;
  try {
    if (doc.contains("manifest")) {
      fs::path m = doc["manifest"].get<std::string>();
      cfg.manifest = m.is_absolute() || base_dir.empty() ? m : base_dir / m;
    }
    if (doc.contains("variant")) cfg.variant = parse_variant(doc["variant"].get<std::string>());
    if (doc.contains("snr_db")) {
      const json& s = doc["snr_db"];
      cfg.snr_db.clear();
      if (s.is_number()) {
        cfg.snr_db.push_back(s.get<double>());
      } else if (!s.is_null()) {
        cfg.snr_db = s.get<std::vector<double>>();
      }
    }
    cfg.trials = doc.value("trials", cfg.trials);
    cfg.epochs = doc.value("epochs", cfg.epochs);
    cfg.batch_size = doc.value("batch_size", cfg.batch_size);
    cfg.initial_lr = doc.value("initial_lr", cfg.initial_lr);
    cfg.lr_decay_factor = doc.value("lr_decay_factor", cfg.lr_decay_factor);
    cfg.lr_decay_every_epochs = doc.value("lr_decay_every_epochs", cfg.lr_decay_every_epochs);
    cfg.rng_seed = doc.value("rng_seed", cfg.rng_seed);
    cfg.split.train_fraction = doc.value("train_fraction", cfg.split.train_fraction);
    if (doc.contains("normalization")) cfg.normalization = parse_normalization(doc["normalization"].get<std::string>());
    cfg.normalize = doc.value("normalize", cfg.normalize);
    cfg.noise_first = doc.value("noise_first", cfg.noise_first);
    cfg.normalize_input_egr = doc.value("normalize_input_egr", cfg.normalize_input_egr);
    if (doc.contains("blocks")) {
      cfg.blocks.clear();
      for (const json& b : doc["blocks"]) {
        if (b.is_array()) {
          const auto v = b.get<std::vector<std::size_t>>();
          if (v.size() != 3) throw ConfigError("block entries are [kernel_size, out_channels, stride]");
          cfg.blocks.push_back({v[0], v[1], v[2]});
        } else {
          cfg.blocks.push_back({b.at("kernel_size").get<std::size_t>(), b.at("out_channels").get<std::size_t>(),
                                b.at("stride").get<std::size_t>()});
        }
      }
    }
    cfg.record_timing = doc.value("record_timing", cfg.record_timing);
    if (doc.contains("out_dir")) cfg.out_dir = doc["out_dir"].get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return experiment_config_from_json(doc, path.parent_path());
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.manifest.empty()) throw ConfigError("config has no manifest");
  if (cfg.trials < 1) throw ConfigError("trials must be at least 1");
  if (cfg.epochs < 0) throw ConfigError("epochs must be non-negative");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(cfg.initial_lr > 0.0)) throw ConfigError("initial_lr must be positive");
  if (!(cfg.lr_decay_factor > 0.0)) throw ConfigError("lr_decay_factor must be positive");
  if (cfg.blocks.empty()) throw ConfigError("config needs at least one block");
  for (double s : cfg.snr_db) {
    if (!std::isfinite(s)) throw ConfigError("snr_db values must be finite");
  }
}

NetworkConfig network_config(const ExperimentConfig& cfg, std::size_t num_classes, std::size_t input_side) {
  NetworkConfig net;
  net.variant = cfg.variant;
  net.num_classes = num_classes;
  net.input_side = input_side;
  net.blocks = cfg.blocks;
  net.normalize_input_egr = cfg.normalize_input_egr;
  return net;
}

DataSplit load_split(const ExperimentConfig& cfg) {
  const DatasetManifest manifest = load_manifest(cfg.manifest);
  DataSplit data;
  data.num_classes = manifest.num_classes();
  data.input_side = suggest_dims(manifest.sample_length).n;
  for (std::size_t c = 0; c < manifest.num_classes(); ++c) {
    SplitResult parts;
    try {
      parts = split(load_samples(manifest, static_cast<int>(c)), cfg.split);
    } catch (const ConfigError& e) {
      throw ConfigError("class '" + manifest.classes[c].name + "': " + e.what());
    }
    data.train.insert(data.train.end(), parts.train.begin(), parts.train.end());
    data.test.insert(data.test.end(), parts.test.begin(), parts.test.end());
  }
  return data;
}

PreparedSet prepare_set(const std::vector<Signal>& signals, const ExperimentConfig& cfg, std::optional<double> snr_db,
                        std::uint64_t seed, SetRole role) {
  if (signals.empty()) throw InputError("empty sample set");
  const RsmConfig dims = suggest_dims(signals.front().size());
  PreparedSet set;
  const std::size_t n = signals.size();
  set.rsm = Tensor<float>({n, 1, dims.m, dims.n});
  set.egr = Tensor<float>({n, 1, dims.n, dims.n});
  set.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!signals[i].label()) throw InputError("sample " + std::to_string(i) + " has no label");
    set.labels[i] = *signals[i].label();
    Signal s = signals[i];
    const auto add_noise = [&] {
      if (snr_db) {
        s = add_noise_snr(s, {*snr_db, derive_seed(seed, {kNoiseTag, static_cast<std::uint64_t>(role), i})});
      }
    };
    if (cfg.noise_first) add_noise();
    if (cfg.normalize) s = normalize_sample(s, cfg.normalization);
    if (!cfg.noise_first) add_noise();
    const Rsm x = build_rsm(s, dims);
    const Egr g = gram(x);
    std::copy(x.values.values().begin(), x.values.values().end(), set.rsm.plane(i, 0));
    std::copy(g.values.values().begin(), g.values.values().end(), set.egr.plane(i, 0));
  }
  return set;
}

std::uint64_t trial_seed(const ExperimentConfig& cfg, int trial) {
  return cfg.rng_seed + static_cast<std::uint64_t>(trial);
}

double learning_rate(const ExperimentConfig& cfg, int epoch) {
  return stepped_learning_rate(cfg.initial_lr, cfg.lr_decay_factor, cfg.lr_decay_every_epochs, epoch);
}

namespace {

Tensor<float> gather(const Tensor<float>& all, std::span<const std::size_t> rows) {
  Shape shape = all.shape();
  shape[0] = rows.size();
  Tensor<float> out(shape);
  const std::size_t stride = all.size() / all.dim(0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy(all.raw() + rows[r] * stride, all.raw() + (rows[r] + 1) * stride, out.raw() + r * stride);
  }
  return out;
}

}  // namespace

std::vector<int> predict_set(const EgrNet<float>& model, const PreparedSet& set, std::size_t batch_size) {
  const std::size_t n = set.labels.size();
  std::vector<int> predicted;
  predicted.reserve(n);
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < n; start += batch_size) {
    rows.resize(std::min(batch_size, n - start));
    std::iota(rows.begin(), rows.end(), start);
    const auto out = model.infer(gather(set.rsm, rows), gather(set.egr, rows));
    for (int p : argmax_rows(out.probabilities)) predicted.push_back(p);
  }
  return predicted;
}

ConfusionMatrix evaluate(const EgrNet<float>& model, const PreparedSet& set, std::size_t batch_size) {
  const std::vector<int> predicted = predict_set(model, set, batch_size);
  return confusion_matrix(set.labels, predicted, model.config().num_classes);
}

TrainedTrial train_trial(const ExperimentConfig& cfg, const DataSplit& data, std::optional<double> snr_db, int trial,
                         const Progress& progress) {
  validate(cfg);
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t seed = trial_seed(cfg, trial);
  const PreparedSet train = prepare_set(data.train, cfg, snr_db, seed, SetRole::train);
  const PreparedSet test = prepare_set(data.test, cfg, snr_db, seed, SetRole::test);

  TrainedTrial out;
  out.model = std::make_unique<EgrNet<float>>(network_config(cfg, data.num_classes, data.input_side));
  EgrNet<float>& model = *out.model;
  model.initialize(derive_seed(seed, {kInitTag}));
  std::vector<Tensor<float>*> params;
  for (const auto& p : model.parameters()) params.push_back(p.tensor);
  Adam<float> adam(params);

  TrialResult& result = out.result;
  result.snr_db = snr_db;
  result.trial = trial;
  const std::size_t n = train.labels.size();
  std::vector<std::size_t> order(n);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = learning_rate(cfg, epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffler(derive_seed(seed, {kShuffleTag, static_cast<std::uint64_t>(epoch)}));
    shuffler.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b0 = 0; b0 < n; b0 += cfg.batch_size) {
      const std::span<const std::size_t> rows(order.data() + b0, std::min(cfg.batch_size, n - b0));
      std::vector<int> labels;
      for (std::size_t r : rows) labels.push_back(train.labels[r]);
      const auto fwd = model.forward(gather(train.rsm, rows), gather(train.egr, rows), true);
      const auto ce = softmax_cross_entropy(fwd.logits, one_hot<float>(labels, data.num_classes));
      if (!std::isfinite(ce.loss)) {
        throw Error("training diverged (non-finite loss) at epoch " + std::to_string(epoch));
      }
      loss_sum += ce.loss * static_cast<double>(rows.size());
      const std::vector<int> predicted = argmax_rows(ce.probabilities);
      for (std::size_t i = 0; i < rows.size(); ++i) correct += predicted[i] == labels[i] ? 1 : 0;
      model.zero_grad();
      model.backward(ce.logit_grad);
      adam.step(lr);
    }
    EpochMetrics m{epoch, loss_sum / static_cast<double>(n), 100.0 * static_cast<double>(correct) / static_cast<double>(n), lr};
    result.curve.push_back(m);
    report(progress, "snr " + format_snr(snr_db) + " trial " + std::to_string(trial) + " epoch " +
                         std::to_string(epoch + 1) + "/" + std::to_string(cfg.epochs) + " loss " + fmt("%.4f", m.loss) +
                         " train acc " + fmt("%.2f", m.accuracy_pct) + "%");
  }
  result.confusion = evaluate(model, test, cfg.batch_size);
  result.test_accuracy_pct = accuracy_pct(result.confusion);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report(progress, "snr " + format_snr(snr_db) + " trial " + std::to_string(trial) + " test accuracy " +
                       fmt("%.2f", result.test_accuracy_pct) + "%");
  return out;
}

void write_results_csv(const fs::path& path, const std::vector<TrialResult>& trials, bool with_seconds) {
  auto out = open_out(path);
  out << "snr_db,trial,accuracy_pct,seconds\n";
  for (const TrialResult& t : trials) {
    out << format_snr(t.snr_db) << ',' << t.trial << ',' << fmt("%.4f", t.test_accuracy_pct) << ','
        << (with_seconds ? fmt("%.3f", t.seconds) : "NA") << '\n';
  }
}

void write_curves_csv(const fs::path& path, const std::vector<TrialResult>& trials) {
  auto out = open_out(path);
  out << "snr_db,trial,epoch,loss,accuracy,learning_rate\n";
  for (const TrialResult& t : trials) {
    for (const EpochMetrics& m : t.curve) {
      out << format_snr(t.snr_db) << ',' << t.trial << ',' << m.epoch << ',' << fmt("%.17g", m.loss) << ','
          << fmt("%.4f", m.accuracy_pct) << ',' << fmt("%.17g", m.learning_rate) << '\n';
    }
  }
}

void write_confusion_csv(const fs::path& path, const std::vector<TrialResult>& trials) {
  auto out = open_out(path);
  out << "snr_db,trial,true_class,predicted_class,count\n";
  for (const TrialResult& t : trials) {
    const std::size_t k = t.confusion.num_classes();
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        out << format_snr(t.snr_db) << ',' << t.trial << ',' << i << ',' << j << ',' << t.confusion(i, j) << '\n';
      }
    }
  }
}

namespace {

std::vector<std::optional<double>> snr_points(const ExperimentConfig& cfg) {
  std::vector<std::optional<double>> points;
  for (double s : cfg.snr_db) points.emplace_back(s);
  if (points.empty()) points.emplace_back(std::nullopt);
  return points;
}

std::string table_cell(const MeanStd& m) { return fmt("%.2f", m.mean) + " ± " + fmt("%.2f", m.std); }

void write_table_csv(const fs::path& path, const std::vector<std::pair<NetworkVariant, SweepResult>>& rows) {
  auto out = open_out(path);
  out << "method";
  for (const SnrSummary& s : rows.front().second.summary) out << ",SNR " << format_snr(s.snr_db) << " dB";
  out << '\n';
  for (const auto& [variant, sweep] : rows) {
    out << to_string(variant);
    for (const SnrSummary& s : sweep.summary) out << ',' << table_cell(s.accuracy);
    out << '\n';
  }
}

}  // namespace

SweepResult run_snr_sweep(const ExperimentConfig& cfg, const Progress& progress) {
  validate(cfg);
  const DataSplit data = load_split(cfg);
  fs::create_directories(cfg.out_dir / "checkpoints");
  SweepResult sweep;
  for (const std::optional<double>& snr : snr_points(cfg)) {
    SnrSummary summary;
    summary.snr_db = snr;
    for (int trial = 0; trial < cfg.trials; ++trial) {
      TrainedTrial t = train_trial(cfg, data, snr, trial, progress);
      sweep.parameter_count = t.model->parameter_count();
      save_model(*t.model, cfg.out_dir / "checkpoints" / ("snr_" + format_snr(snr) + "_trial_" + std::to_string(trial) + ".egrn"));
      summary.accuracies.push_back(t.result.test_accuracy_pct);
      sweep.trials.push_back(std::move(t.result));
    }
    summary.accuracy = mean_std(summary.accuracies);
    sweep.summary.push_back(std::move(summary));
  }

  write_results_csv(cfg.out_dir / "results.csv", sweep.trials, cfg.record_timing);
  write_curves_csv(cfg.out_dir / "curves.csv", sweep.trials);
  write_confusion_csv(cfg.out_dir / "confusion.csv", sweep.trials);
  write_table_csv(cfg.out_dir / "table.csv", {{cfg.variant, sweep}});
  json per_snr = json::array();
  for (const SnrSummary& s : sweep.summary) {
    per_snr.push_back({{"snr_db", format_snr(s.snr_db)},
                       {"trials", s.accuracies.size()},
                       {"accuracies_pct", s.accuracies},
                       {"mean_accuracy_pct", s.accuracy.mean},
                       {"std_accuracy_pct", s.accuracy.std}});
  }
  // The output location is left out so that reruns elsewhere compare bytewise.
  json run_config = to_json(cfg);
  run_config.erase("out_dir");
  const json summary{{"variant", to_string(cfg.variant)},
                     {"parameter_count", sweep.parameter_count},
                     {"config", run_config},
                     {"snr", per_snr}};
  open_out(cfg.out_dir / "summary.json") << summary.dump(2) << '\n';
  return sweep;
}

std::vector<std::pair<NetworkVariant, SweepResult>> run_ablation(const ExperimentConfig& cfg, const Progress& progress) {
  std::vector<std::pair<NetworkVariant, SweepResult>> rows;
  for (NetworkVariant v : {NetworkVariant::egr_net, NetworkVariant::egr_net_no_bc, NetworkVariant::cnn_rsm}) {
    ExperimentConfig sub = cfg;
    sub.variant = v;
    sub.out_dir = cfg.out_dir / to_string(v);
    report(progress, "variant " + to_string(v));
    rows.emplace_back(v, run_snr_sweep(sub, progress));
  }
  auto out = open_out(cfg.out_dir / "ablation.csv");
  out << "variant,snr_db,trials,mean_accuracy_pct,std_accuracy_pct,parameter_count\n";
  for (const auto& [variant, sweep] : rows) {
    for (const SnrSummary& s : sweep.summary) {
      out << to_string(variant) << ',' << format_snr(s.snr_db) << ',' << s.accuracies.size() << ','
          << fmt("%.4f", s.accuracy.mean) << ',' << fmt("%.4f", s.accuracy.std) << ',' << sweep.parameter_count << '\n';
    }
  }
  write_table_csv(cfg.out_dir / "table.csv", rows);
  return rows;
}

SeparabilityReport separability_report(const fs::path& manifest_path, std::optional<double> snr_db, std::uint64_t seed,
                                       NormalizationMode normalization) {
  const DatasetManifest manifest = load_manifest(manifest_path);
  const RsmConfig dims = suggest_dims(manifest.sample_length);
  std::vector<std::vector<double>> rsm_points;
  std::vector<std::vector<double>> egr_points;
  std::vector<int> labels;
  for (std::size_t c = 0; c < manifest.num_classes(); ++c) {
    const std::vector<Signal> samples = load_samples(manifest, static_cast<int>(c));
    for (std::size_t i = 0; i < samples.size(); ++i) {
      Signal s = samples[i];
      if (snr_db) s = add_noise_snr(s, {*snr_db, derive_seed(seed, {kNoiseTag, c, i})});
      s = normalize_sample(s, normalization);
      const Rsm x = build_rsm(s, dims);
      const Egr g = gram(x);
      rsm_points.emplace_back(x.values.values().begin(), x.values.values().end());
      egr_points.emplace_back(g.values.values().begin(), g.values.values().end());
      labels.push_back(static_cast<int>(c));
    }
  }
  SeparabilityReport r;
  r.snr_db = snr_db;
  for (auto* pts : {&rsm_points, &egr_points}) {
    standardize_features(*pts);
    r.scores.push_back({pts == &rsm_points ? "rsm" : "egr", silhouette(*pts, labels), knn1_loo_accuracy(*pts, labels)});
  }
  return r;
}

InferenceStats measure_inference(const EgrNet<float>& model, const Tensor<float>& rsm, const Tensor<float>& egr,
                                 std::size_t runs) {
  InferenceStats stats;
  stats.flops = count_flops(model.config());
  stats.runs = std::max<std::size_t>(runs, 1);
  model.infer(rsm, egr);  // warm-up
  std::vector<double> ms;
  ms.reserve(stats.runs);
  for (std::size_t i = 0; i < stats.runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    model.infer(rsm, egr);
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(ms.begin(), ms.end());
  stats.min_ms = ms.front();
  stats.max_ms = ms.back();
  stats.median_ms = ms.size() % 2 ? ms[ms.size() / 2] : 0.5 * (ms[ms.size() / 2 - 1] + ms[ms.size() / 2]);
  return stats;
}

void retain_freed_memory() {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace egr
