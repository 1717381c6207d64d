#include "egr/dataset.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <set>
#include <sstream>

#include "egr/error.hpp"
#include "egr/rng.hpp"

namespace egr {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path class_file(const DatasetManifest& m, const ClassEntry& c) {
  const fs::path p(c.file_path);
  return p.is_absolute() ? p : m.base_dir / p;
}

std::string class_file_name(int label_id) { return "class_" + std::to_string(label_id) + ".f32le"; }

}  // namespace

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
  json classes = json::array();
  for (const ClassEntry& c : manifest.classes) {
    classes.push_back(
        {{"label_id", c.label_id}, {"name", c.name}, {"file_path", c.file_path}, {"sample_count", c.sample_count}});
  }
  const json doc{{"format", kManifestFormat},
                 {"format_version", manifest.format_version},
                 {"sample_length", manifest.sample_length},
                 {"sample_rate_hz", manifest.sample_rate_hz},
                 {"classes", classes}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open manifest " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  DatasetManifest m;
  m.base_dir = path.parent_path();
  try {
    if (doc.value("format", std::string()) != kManifestFormat) {
      throw FormatError(path.string() + ": not a dataset manifest (format field must be \"" +
                        std::string(kManifestFormat) + "\")");
    }
    m.format_version = doc.at("format_version").get<int>();
    if (m.format_version != kManifestFormatVersion) {
      throw FormatError(path.string() + ": unsupported format_version " + std::to_string(m.format_version));
    }
    m.sample_length = doc.at("sample_length").get<std::size_t>();
    m.sample_rate_hz = doc.at("sample_rate_hz").get<double>();
    for (const json& c : doc.at("classes")) {
      m.classes.push_back({c.at("label_id").get<int>(), c.at("name").get<std::string>(),
                           c.at("file_path").get<std::string>(), c.at("sample_count").get<std::size_t>()});
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (m.sample_length == 0) throw FormatError(path.string() + ": sample_length must be positive");
  if (!(m.sample_rate_hz > 0.0) || !std::isfinite(m.sample_rate_hz)) {
    throw FormatError(path.string() + ": sample_rate_hz must be positive");
  }
  if (m.classes.empty()) throw FormatError(path.string() + ": no classes");
  for (std::size_t i = 0; i < m.classes.size(); ++i) {
    const ClassEntry& c = m.classes[i];
    if (c.label_id != static_cast<int>(i)) {
      throw FormatError(path.string() + ": label ids must be 0..K-1 in order; entry " + std::to_string(i) +
                        " has label_id " + std::to_string(c.label_id));
    }
    if (c.sample_count == 0) throw FormatError(path.string() + ": class '" + c.name + "' has no samples");
    const fs::path file = class_file(m, c);
    std::error_code ec;
    const auto size = fs::file_size(file, ec);
    if (ec) throw FormatError(path.string() + ": class file " + file.string() + " not readable");
    const std::uintmax_t expected = static_cast<std::uintmax_t>(c.sample_count) * m.sample_length * 4;
    if (size != expected) {
      throw FormatError(file.string() + ": " + std::to_string(size) + " bytes, manifest implies " +
                        std::to_string(expected) + " (" + std::to_string(c.sample_count) + " samples of " +
                        std::to_string(m.sample_length) + ")");
    }
  }
  return m;
}

std::vector<Signal> load_samples(const DatasetManifest& manifest, int label_id) {
  if (label_id < 0 || static_cast<std::size_t>(label_id) >= manifest.classes.size()) {
    throw InputError("no class with label_id " + std::to_string(label_id));
  }
  const ClassEntry& c = manifest.classes[static_cast<std::size_t>(label_id)];
  const fs::path file = class_file(manifest, c);
  std::ifstream in(file, std::ios::binary);
  if (!in) throw InputError("cannot open " + file.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  const std::size_t sample_bytes = manifest.sample_length * 4;
  std::vector<Signal> out;
  out.reserve(c.sample_count);
  for (std::size_t s = 0; s < c.sample_count; ++s) {
    const std::size_t offset = s * sample_bytes;
    if (bytes.size() < offset + sample_bytes) {
      throw FormatError(file.string() + ": truncated at byte offset " + std::to_string(bytes.size()) +
                        " (sample " + std::to_string(s) + " needs bytes up to " +
                        std::to_string(offset + sample_bytes) + ")");
    }
    std::vector<double> values(manifest.sample_length);
    for (std::size_t i = 0; i < manifest.sample_length; ++i) {
      const std::size_t at = offset + 4 * i;
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + b])) << (8 * b);
      const float v = std::bit_cast<float>(bits);
      if (!std::isfinite(v)) {
        throw FormatError(file.string() + ": non-finite value at byte offset " + std::to_string(at));
      }
      values[i] = v;
    }
    out.emplace_back(std::move(values), manifest.sample_rate_hz, label_id);
  }
  return out;
}

void write_samples(const fs::path& path, const std::vector<Signal>& samples) {
  std::string bytes;
  for (const Signal& s : samples) {
    for (double v : s.samples()) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<Signal> segment(const Signal& signal, std::size_t length, std::size_t hop) {
  if (hop == 0) throw ConfigError("segment hop must be at least 1");
  if (length == 0) throw ConfigError("segment length must be positive");
  if (length > signal.size()) {
    throw DimensionError("signal of " + std::to_string(signal.size()) + " samples is shorter than one window of " +
                         std::to_string(length));
  }
  const std::size_t count = (signal.size() - length) / hop + 1;
  std::vector<Signal> out;
  out.reserve(count);
  const auto x = signal.samples();
  for (std::size_t i = 0; i < count; ++i) {
    out.emplace_back(std::vector<double>(x.begin() + static_cast<long>(i * hop),
                                         x.begin() + static_cast<long>(i * hop + length)),
                     signal.sample_rate_hz(), signal.label());
  }
  return out;
}

std::size_t hop_for_count(std::size_t signal_length, std::size_t length, std::size_t count) {
  if (count < 2) throw ConfigError("hop_for_count needs at least two windows");
  if (signal_length < length) throw DimensionError("signal shorter than one window");
  const std::size_t hop = (signal_length - length) / (count - 1);
  if (hop == 0) {
    throw DimensionError("signal of " + std::to_string(signal_length) + " samples cannot give " +
                         std::to_string(count) + " windows of " + std::to_string(length));
  }
  return hop;
}

SplitResult split(const std::vector<Signal>& samples, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
  const auto n_train = static_cast<std::size_t>(std::floor(spec.train_fraction * static_cast<double>(samples.size())));
  if (n_train == 0 || n_train == samples.size()) {
    throw ConfigError("split of " + std::to_string(samples.size()) + " samples at fraction " +
                      std::to_string(spec.train_fraction) + " leaves one side empty");
  }
  SplitResult r;
  r.train.assign(samples.begin(), samples.begin() + static_cast<long>(n_train));
  r.test.assign(samples.begin() + static_cast<long>(n_train), samples.end());
  return r;
}

json to_json(const SyntheticFaultSpec& spec) {
  json classes = json::array();
  for (const SyntheticClass& c : spec.classes) {
    classes.push_back({{"name", c.name},
                       {"carrier_freq_hz", c.carrier_freq_hz},
                       {"impulse_rate_hz", c.impulse_rate_hz},
                       {"modulation_depth", c.modulation_depth},
                       {"decay_constant", c.decay_constant},
                       {"amplitude", c.amplitude},
                       {"interval_jitter", c.interval_jitter}});
  }
  return {{"sample_rate_hz", spec.sample_rate_hz},
          {"sample_length", spec.sample_length},
          {"samples_per_class", spec.samples_per_class},
          {"rng_seed", spec.rng_seed},
          {"classes", classes}};
}

SyntheticFaultSpec synthetic_spec_from_json(const json& doc) {
  try {
    SyntheticFaultSpec spec;
    spec.sample_rate_hz = doc.at("sample_rate_hz").get<double>();
    spec.sample_length = doc.at("sample_length").get<std::size_t>();
    spec.samples_per_class = doc.at("samples_per_class").get<std::size_t>();
    spec.rng_seed = doc.value("rng_seed", std::uint64_t{0});
    for (const json& c : doc.at("classes")) {
      SyntheticClass sc;
      sc.name = c.value("name", "class_" + std::to_string(spec.classes.size()));
      sc.carrier_freq_hz = c.at("carrier_freq_hz").get<double>();
      sc.impulse_rate_hz = c.value("impulse_rate_hz", 0.0);
      sc.modulation_depth = c.value("modulation_depth", 0.0);
      sc.decay_constant = c.value("decay_constant", 0.0);
      sc.amplitude = c.value("amplitude", 1.0);
      sc.interval_jitter = c.value("interval_jitter", 0.01);
      spec.classes.push_back(sc);
    }
    return spec;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synthetic spec: ") + e.what());
  }
}

void validate(const SyntheticFaultSpec& spec) {
  if (spec.classes.empty()) throw ConfigError("synthetic spec has no classes");
  if (!(spec.sample_rate_hz > 0.0)) throw ConfigError("sample_rate_hz must be positive");
  if (spec.sample_length == 0 || spec.samples_per_class == 0) {
    throw ConfigError("sample_length and samples_per_class must be positive");
  }
  const double nyquist = spec.sample_rate_hz / 2.0;
  for (const SyntheticClass& c : spec.classes) {
    const std::string who = "class '" + c.name + "': ";
    if (!(c.carrier_freq_hz > 0.0)) throw ConfigError(who + "carrier_freq_hz must be positive");
    if (c.carrier_freq_hz >= nyquist) {
      throw ConfigError(who + "carrier " + std::to_string(c.carrier_freq_hz) + " Hz is not below the Nyquist rate " +
                        std::to_string(nyquist) + " Hz");
    }
    if (c.impulse_rate_hz < 0.0 || c.impulse_rate_hz >= nyquist) {
      throw ConfigError(who + "impulse_rate_hz must lie in [0, Nyquist)");
    }
    if (c.modulation_depth < 0.0 || c.modulation_depth > 1.0) throw ConfigError(who + "modulation_depth outside [0, 1]");
    if (c.impulse_rate_hz > 0.0 && c.modulation_depth > 0.0 && !(c.decay_constant > 0.0)) {
      throw ConfigError(who + "decay_constant must be positive when impulses are present");
    }
    if (!(c.amplitude > 0.0)) throw ConfigError(who + "amplitude must be positive");
    if (c.interval_jitter < 0.0 || c.interval_jitter >= 0.5) throw ConfigError(who + "interval_jitter outside [0, 0.5)");
  }
  for (std::size_t i = 0; i < spec.classes.size(); ++i) {
    for (std::size_t j = i + 1; j < spec.classes.size(); ++j) {
      const SyntheticClass& a = spec.classes[i];
      const SyntheticClass& b = spec.classes[j];
      if (a.carrier_freq_hz == b.carrier_freq_hz && a.impulse_rate_hz == b.impulse_rate_hz &&
          a.modulation_depth == b.modulation_depth && a.decay_constant == b.decay_constant &&
          a.amplitude == b.amplitude) {
        throw ConfigError("classes '" + a.name + "' and '" + b.name + "' have identical parameters");
      }
    }
  }
}

std::vector<Signal> synthesize_class(const SyntheticFaultSpec& spec, std::size_t class_index) {
  validate(spec);
  if (class_index >= spec.classes.size()) throw InputError("class index out of range");
  const SyntheticClass& c = spec.classes[class_index];
  const double fs = spec.sample_rate_hz;
  const std::size_t len = spec.sample_length;
  const double w = 2.0 * std::numbers::pi * c.carrier_freq_hz;
  const bool impulses = c.impulse_rate_hz > 0.0 && c.modulation_depth > 0.0;
  const double d = impulses ? c.modulation_depth : 0.0;
  const double duration = static_cast<double>(len) / fs;

  std::vector<Signal> out;
  out.reserve(spec.samples_per_class);
  for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
    Rng rng(derive_seed(spec.rng_seed, {class_index, s}));
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    std::vector<double> x(len);
    for (std::size_t i = 0; i < len; ++i) {
      x[i] = (1.0 - d) * std::sin(w * static_cast<double>(i) / fs + phase);
    }
    if (impulses) {
      const double period = 1.0 / c.impulse_rate_hz;
      const double tail = 12.0 * c.decay_constant;  // exp(-12) ~ 6e-6
      // start early enough that decays from impulses before t = 0 are present
      const auto lead = static_cast<long>(std::ceil(tail / period)) + 1;
      const double t0 = rng.uniform(0.0, period);
      for (long k = -lead;; ++k) {
        const double jitter = c.interval_jitter * period * rng.uniform(-1.0, 1.0);
        const double tk = t0 + static_cast<double>(k) * period + jitter;
        if (tk >= duration) break;
        const double end = std::min(duration, tk + tail);
        auto i0 = static_cast<long>(std::ceil(tk * fs));
        if (i0 < 0) i0 = 0;
        for (auto i = static_cast<std::size_t>(i0); i < len && static_cast<double>(i) / fs < end; ++i) {
          const double dt = static_cast<double>(i) / fs - tk;
          x[i] += d * std::exp(-dt / c.decay_constant) * std::sin(w * dt);
        }
      }
    }
    for (double& v : x) v *= c.amplitude;
    out.emplace_back(std::move(x), fs, static_cast<int>(class_index));
  }
  return out;
}

DatasetManifest generate_synthetic(const SyntheticFaultSpec& spec, const fs::path& out_dir) {
  validate(spec);
  fs::create_directories(out_dir);
  DatasetManifest m;
  m.sample_length = spec.sample_length;
  m.sample_rate_hz = spec.sample_rate_hz;
  m.base_dir = out_dir;
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    const int id = static_cast<int>(c);
    write_samples(out_dir / class_file_name(id), synthesize_class(spec, c));
    m.classes.push_back({id, spec.classes[c].name, class_file_name(id), spec.samples_per_class});
  }
  write_manifest(out_dir / "manifest.json", m);
  return m;
}

DatasetManifest import_csv(const std::vector<fs::path>& csv_files, const std::vector<std::string>& names,
                           const fs::path& out_dir) {
  if (csv_files.empty()) throw ConfigError("no CSV files to import");
  DatasetManifest m;
  m.base_dir = out_dir;
  fs::create_directories(out_dir);
  for (std::size_t f = 0; f < csv_files.size(); ++f) {
    const fs::path& path = csv_files[f];
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path.string() + ":1: empty file");
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.substr(0, comma) != "sample_rate_hz") {
      throw FormatError(path.string() + ":1: header must be 'sample_rate_hz,<value>'");
    }
    double rate = 0.0;
    try {
      rate = std::stod(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw FormatError(path.string() + ":1: bad sample rate");
    }
    if (f == 0) {
      m.sample_rate_hz = rate;
    } else if (rate != m.sample_rate_hz) {
      throw FormatError(path.string() + ":1: sample rate differs from " + csv_files[0].string());
    }
    std::vector<Signal> samples;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line == "\r") continue;
      std::vector<double> values;
      std::stringstream row(line);
      std::string cell;
      std::size_t column = 0;
      while (std::getline(row, cell, ',')) {
        ++column;
        try {
          std::size_t used = 0;
          values.push_back(std::stod(cell, &used));
        } catch (const std::exception&) {
          throw FormatError(path.string() + ":" + std::to_string(line_no) + ":" + std::to_string(column) +
                            ": not a number: '" + cell + "'");
        }
      }
      if (m.sample_length == 0) m.sample_length = values.size();
      if (values.size() != m.sample_length) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + std::to_string(values.size()) +
                          " values, expected " + std::to_string(m.sample_length));
      }
      try {
        samples.emplace_back(std::move(values), rate, static_cast<int>(f));
      } catch (const InputError& e) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    if (samples.empty()) throw FormatError(path.string() + ": no samples");
    const int id = static_cast<int>(f);
    write_samples(out_dir / class_file_name(id), samples);
    m.classes.push_back({id, f < names.size() ? names[f] : path.stem().string(), class_file_name(id), samples.size()});
  }
  write_manifest(out_dir / "manifest.json", m);
  return m;
}

}  // namespace egr
