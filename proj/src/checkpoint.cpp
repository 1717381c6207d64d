#include "egr/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "egr/error.hpp"

namespace egr {
namespace {

constexpr std::array<char, 4> kMagic{'E', 'G', 'R', 'N'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(std::string bytes, std::string source) : bytes_(std::move(bytes)), source_(std::move(source)) {}

  void need(std::size_t count, const char* what) const {
    if (bytes_.size() - pos_ < count) {
      throw FormatError(source_ + ": truncated at byte offset " + std::to_string(pos_) + " while reading " + what +
                        " (need " + std::to_string(count) + " bytes, " + std::to_string(bytes_.size() - pos_) +
                        " left)");
    }
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  double f64(const char* what) {
    need(8, what);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(bits);
  }

  std::string text(std::size_t count, const char* what) {
    need(count, what);
    std::string s = bytes_.substr(pos_, count);
    pos_ += count;
    return s;
  }

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointTensor>& tensors) {
  std::string out(kMagic.begin(), kMagic.end());
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const CheckpointTensor& t : tensors) {
    if (shape_numel(t.shape) != t.values.size()) {
      throw DimensionError("checkpoint tensor '" + t.name + "' has " + std::to_string(t.values.size()) +
                           " values for shape " + shape_str(t.shape));
    }
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.values) put_f64(out, v);
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw InputError("cannot write " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw Error("write failed for " + path.string());
}

std::vector<CheckpointTensor> read_checkpoint(const std::filesystem::path& path) {
  Reader in(read_all(path), path.string());
  const std::string magic = in.text(4, "magic");
  if (magic != std::string(kMagic.begin(), kMagic.end())) {
    throw FormatError(path.string() + ": bad magic at byte offset 0 (not an EGRN checkpoint)");
  }
  const std::uint32_t version = in.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = in.u32("tensor count");
  std::vector<CheckpointTensor> tensors;
  tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    const std::uint32_t name_len = in.u32("name length");
    t.name = in.text(name_len, "tensor name");
    const std::uint32_t rank = in.u32("rank");
    for (std::uint32_t r = 0; r < rank; ++r) {
      const std::uint32_t d = in.u32("dimension");
      if (d == 0) throw FormatError(path.string() + ": zero dimension in tensor '" + t.name + "'");
      t.shape.push_back(d);
    }
    const std::size_t n = shape_numel(t.shape);
    in.need(n * 8, "tensor values");
    t.values.resize(n);
    for (double& v : t.values) v = in.f64("tensor values");
    tensors.push_back(std::move(t));
  }
  if (!in.done()) {
    throw FormatError(path.string() + ": trailing bytes after byte offset " + std::to_string(in.pos()));
  }
  return tensors;
}

nlohmann::json architecture_json(const NetworkConfig& cfg) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const GcbSpec& b : cfg.blocks) {
    blocks.push_back({{"kernel_size", b.kernel_size}, {"out_channels", b.out_channels}, {"stride", b.stride}});
  }
  return {{"variant", to_string(cfg.variant)},
          {"num_classes", cfg.num_classes},
          {"input_side", cfg.input_side},
          {"normalize_input_egr", cfg.normalize_input_egr},
          {"blocks", blocks}};
}

NetworkConfig architecture_from_json(const nlohmann::json& doc) {
  try {
    NetworkConfig cfg;
    cfg.variant = parse_variant(doc.at("variant").get<std::string>());
    cfg.num_classes = doc.at("num_classes").get<std::size_t>();
    cfg.input_side = doc.at("input_side").get<std::size_t>();
    cfg.normalize_input_egr = doc.at("normalize_input_egr").get<bool>();
    cfg.blocks.clear();
    for (const auto& b : doc.at("blocks")) {
      cfg.blocks.push_back({b.at("kernel_size").get<std::size_t>(), b.at("out_channels").get<std::size_t>(),
                            b.at("stride").get<std::size_t>()});
    }
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("architecture document: ") + e.what());
  }
}

std::filesystem::path architecture_path(const std::filesystem::path& checkpoint) {
  std::filesystem::path p = checkpoint;
  p.replace_extension(".json");
  return p;
}

template <typename T>
void save_model(EgrNet<T>& model, const std::filesystem::path& checkpoint) {
  std::vector<CheckpointTensor> tensors;
  for (const NamedTensor<T>& nt : model.state_tensors()) {
    tensors.push_back({nt.name, nt.tensor->shape(),
                       std::vector<double>(nt.tensor->values().begin(), nt.tensor->values().end())});
  }
  write_checkpoint(checkpoint, tensors);
  std::ofstream arch(architecture_path(checkpoint), std::ios::trunc);
  if (!arch) throw InputError("cannot write " + architecture_path(checkpoint).string());
  arch << architecture_json(model.config()).dump(2) << '\n';
}

template <typename T>
EgrNet<T> load_model(const std::filesystem::path& checkpoint) {
  const std::filesystem::path arch_path = architecture_path(checkpoint);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_all(arch_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(arch_path.string() + ": " + e.what());
  }
  EgrNet<T> model(architecture_from_json(doc));
  const std::vector<CheckpointTensor> stored = read_checkpoint(checkpoint);
  std::vector<NamedTensor<T>> slots = model.state_tensors();
  if (stored.size() != slots.size()) {
    throw FormatError(checkpoint.string() + ": " + std::to_string(stored.size()) + " tensors, architecture " +
                      arch_path.filename().string() + " expects " + std::to_string(slots.size()));
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (stored[i].name != slots[i].name || stored[i].shape != slots[i].tensor->shape()) {
      throw FormatError(checkpoint.string() + ": tensor " + std::to_string(i) + " is '" + stored[i].name + "' " +
                        shape_str(stored[i].shape) + ", architecture expects '" + slots[i].name + "' " +
                        shape_str(slots[i].tensor->shape()));
    }
    auto& dst = slots[i].tensor->values();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<T>(stored[i].values[j]);
  }
  return model;
}

template void save_model<float>(EgrNet<float>&, const std::filesystem::path&);
template void save_model<double>(EgrNet<double>&, const std::filesystem::path&);
template EgrNet<float> load_model<float>(const std::filesystem::path&);
template EgrNet<double> load_model<double>(const std::filesystem::path&);

}  // namespace egr
