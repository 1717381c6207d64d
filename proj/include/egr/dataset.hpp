#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "egr/signal.hpp"

namespace egr {

inline constexpr int kManifestFormatVersion = 1;
inline constexpr const char* kManifestFormat = "egrnet-dataset";

struct ClassEntry {
  int label_id = 0;
  std::string name;
  std::string file_path;  // relative to the manifest directory unless absolute
  std::size_t sample_count = 0;
};

// manifest.json next to one class_{id}.f32le file per class. Each file holds
// sample_count contiguous samples of sample_length little-endian float32s.
struct DatasetManifest {
  std::vector<ClassEntry> classes;
  std::size_t sample_length = 0;
  double sample_rate_hz = 0.0;
  int format_version = kManifestFormatVersion;
  std::filesystem::path base_dir;  // not serialized

  std::size_t num_classes() const { return classes.size(); }
};

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

// Parses and validates: format tag and version, dense label ids 0..K-1,
// positive counts and length, and that each class file exists with exactly
// sample_count * sample_length * 4 bytes.
DatasetManifest load_manifest(const std::filesystem::path& path);

// All samples of one class, labelled, in file order. Non-finite values and
// short files raise FormatError naming the byte offset.
std::vector<Signal> load_samples(const DatasetManifest& manifest, int label_id);

void write_samples(const std::filesystem::path& path, const std::vector<Signal>& samples);

// Windows of `length` starting at 0, hop, 2*hop, ...;
// count = floor((L - length) / hop) + 1.
std::vector<Signal> segment(const Signal& signal, std::size_t length, std::size_t hop);

// Largest hop giving at least `count` windows: floor((L - length) / (count - 1)).
std::size_t hop_for_count(std::size_t signal_length, std::size_t length, std::size_t count);

enum class SplitPolicy { chronological_first };

struct SplitSpec {
  double train_fraction = 0.5;
  SplitPolicy policy = SplitPolicy::chronological_first;
};

struct SplitResult {
  std::vector<Signal> train;
  std::vector<Signal> test;
};

// First floor(fraction * N) samples train, the rest test. Either side empty
// is an error.
SplitResult split(const std::vector<Signal>& samples, const SplitSpec& spec);

struct SyntheticClass {
  std::string name;
  double carrier_freq_hz = 0.0;
  double impulse_rate_hz = 0.0;   // 0: no impulses, pure carrier
  double modulation_depth = 0.0;  // share of the impulse component, in [0, 1]
  double decay_constant = 0.0;    // impulse decay time constant, seconds
  double amplitude = 1.0;
  double interval_jitter = 0.01;  // impulse interval jitter as a fraction of the period
};

struct SyntheticFaultSpec {
  std::vector<SyntheticClass> classes;
  double sample_rate_hz = 0.0;
  std::size_t sample_length = 0;
  std::size_t samples_per_class = 0;
  std::uint64_t rng_seed = 0;
};

nlohmann::json to_json(const SyntheticFaultSpec& spec);
SyntheticFaultSpec synthetic_spec_from_json(const nlohmann::json& doc);

// Throws ConfigError for empty/invalid specs, carriers at or above Nyquist
// and classes that are exact duplicates.
void validate(const SyntheticFaultSpec& spec);

// Sample s of class c:
//   x(t) = A [ (1 - d) sin(2 pi f_c t + phi)
//              + d sum_k exp(-(t - t_k) / tau) sin(2 pi f_c (t - t_k)) u(t - t_k) ]
// with phi uniform per sample, t_k = t_0 + k / f_imp plus uniform jitter,
// t_0 uniform in one impulse period. Streams come from
// derive_seed(rng_seed, {class, sample}).
std::vector<Signal> synthesize_class(const SyntheticFaultSpec& spec, std::size_t class_index);

// Writes manifest.json and class files under out_dir.
DatasetManifest generate_synthetic(const SyntheticFaultSpec& spec, const std::filesystem::path& out_dir);

// CSV import: first line `sample_rate_hz,<value>`, then one comma-separated
// sample per line, all of equal length. One file per class, label ids in
// argument order.
DatasetManifest import_csv(const std::vector<std::filesystem::path>& csv_files, const std::vector<std::string>& names,
                           const std::filesystem::path& out_dir);

}  // namespace egr
