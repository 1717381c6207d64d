#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "egr/dataset.hpp"
#include "egr/egrnet.hpp"
#include "egr/metrics.hpp"

namespace egr {

struct ExperimentConfig {
  std::filesystem::path manifest;
  NetworkVariant variant = NetworkVariant::egr_net;
  std::vector<double> snr_db{0.0};  // empty: clean data, no noise
  int trials = 1;
  int epochs = 50;
  std::size_t batch_size = 32;
  double initial_lr = 1e-4;
  double lr_decay_factor = 0.1;
  int lr_decay_every_epochs = 15;
  std::uint64_t rng_seed = 0;
  SplitSpec split;
  NormalizationMode normalization = NormalizationMode::variance;
  bool normalize = true;
  bool noise_first = true;  // add noise to the raw sample, then normalize
  bool normalize_input_egr = true;
  std::vector<GcbSpec> blocks = canonical_blocks();
  bool record_timing = false;  // wall-clock seconds in results.csv (otherwise "NA")
  std::filesystem::path out_dir = "out";
};

nlohmann::json to_json(const ExperimentConfig& cfg);

// Missing keys keep their defaults; unknown keys are rejected. A relative
// manifest path is resolved against `base_dir`.
ExperimentConfig experiment_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

void validate(const ExperimentConfig& cfg);

NetworkConfig network_config(const ExperimentConfig& cfg, std::size_t num_classes, std::size_t input_side);

// Per-class chronological split of a manifest's samples; train and test are
// each ordered by class, then by position in the class file.
struct DataSplit {
  std::vector<Signal> train;
  std::vector<Signal> test;
  std::size_t num_classes = 0;
  std::size_t input_side = 0;
};

DataSplit load_split(const ExperimentConfig& cfg);

// Network-ready tensors for one set of signals.
struct PreparedSet {
  Tensor<float> rsm;
  Tensor<float> egr;
  std::vector<int> labels;
};

enum class SetRole : std::uint64_t { train = 1, test = 2 };

// Noise for sample i of a set is seeded with
// derive_seed(trial_seed, {noise tag, role, i}).
PreparedSet prepare_set(const std::vector<Signal>& signals, const ExperimentConfig& cfg, std::optional<double> snr_db,
                        std::uint64_t trial_seed, SetRole role);

// rng_seed + trial index.
std::uint64_t trial_seed(const ExperimentConfig& cfg, int trial);

// lr(epoch) = initial_lr * factor^floor(epoch / every), epochs 0-based.
double learning_rate(const ExperimentConfig& cfg, int epoch);

struct EpochMetrics {
  int epoch = 0;
  double loss = 0.0;          // mean training cross-entropy
  double accuracy_pct = 0.0;  // training accuracy of the forward passes in this epoch
  double learning_rate = 0.0;
};

struct TrialResult {
  std::optional<double> snr_db;
  int trial = 0;
  std::vector<EpochMetrics> curve;
  double test_accuracy_pct = 0.0;
  ConfusionMatrix confusion;
  double seconds = 0.0;
};

struct TrainedTrial {
  std::unique_ptr<EgrNet<float>> model;
  TrialResult result;
};

using Progress = std::function<void(const std::string&)>;

// Full pipeline for one trial: noise -> normalize -> RSM -> EGR, Adam with
// the stepped schedule, per-epoch metrics, then test evaluation.
TrainedTrial train_trial(const ExperimentConfig& cfg, const DataSplit& data, std::optional<double> snr_db, int trial,
                         const Progress& progress = {});

std::vector<int> predict_set(const EgrNet<float>& model, const PreparedSet& set, std::size_t batch_size);
ConfusionMatrix evaluate(const EgrNet<float>& model, const PreparedSet& set, std::size_t batch_size);

struct SnrSummary {
  std::optional<double> snr_db;
  std::vector<double> accuracies;
  MeanStd accuracy;
};

struct SweepResult {
  std::vector<TrialResult> trials;
  std::vector<SnrSummary> summary;
  std::size_t parameter_count = 0;
};

// Every (SNR, trial) pair; writes results.csv, curves.csv, confusion.csv,
// summary.json, table.csv and checkpoints/ under cfg.out_dir.
SweepResult run_snr_sweep(const ExperimentConfig& cfg, const Progress& progress = {});

// The sweep for EgrNet, EgrNetNoBc and CnnRsm on identical data and seeds,
// each in its own subdirectory, plus ablation.csv and table.csv.
std::vector<std::pair<NetworkVariant, SweepResult>> run_ablation(const ExperimentConfig& cfg,
                                                                 const Progress& progress = {});

struct SeparabilityScore {
  std::string representation;  // "rsm" or "egr"
  double silhouette = 0.0;
  double knn_accuracy_pct = 0.0;
};

struct SeparabilityReport {
  std::optional<double> snr_db;
  std::vector<SeparabilityScore> scores;
};

// All samples of the manifest, noise (seeded from `seed`) then normalization,
// flattened RSM / EGR matrices standardized per feature.
SeparabilityReport separability_report(const std::filesystem::path& manifest, std::optional<double> snr_db,
                                       std::uint64_t seed, NormalizationMode normalization = NormalizationMode::variance);

struct InferenceStats {
  std::uint64_t flops = 0;
  std::size_t runs = 0;
  double median_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
};

// Analytic FLOPs and wall-clock latency of single-sample inference over
// `runs` timed runs after a warm-up.
InferenceStats measure_inference(const EgrNet<float>& model, const Tensor<float>& rsm, const Tensor<float>& egr,
                                 std::size_t runs = 100);

// CSV writers shared by the commands.
void write_results_csv(const std::filesystem::path& path, const std::vector<TrialResult>& trials, bool with_seconds);
void write_curves_csv(const std::filesystem::path& path, const std::vector<TrialResult>& trials);
void write_confusion_csv(const std::filesystem::path& path, const std::vector<TrialResult>& trials);

std::string format_snr(const std::optional<double>& snr_db);

// Keeps freed activation buffers in the heap instead of returning them to the
// OS, so each training step does not page-fault its tensors in again.
void retain_freed_memory();

}  // namespace egr
