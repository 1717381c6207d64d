#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "egr/egrnet.hpp"
#include "egr/tensor.hpp"

namespace egr {

// Binary weight file. All integers are u32 little-endian:
//   "EGRN" | version | tensor count |
//   per tensor: name length | UTF-8 name | rank | dims[rank] | values as float64 LE
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

void write_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointTensor>& tensors);
std::vector<CheckpointTensor> read_checkpoint(const std::filesystem::path& path);

// Architecture document stored next to a checkpoint: variant, blocks,
// num_classes, input_side, normalize_input_egr.
nlohmann::json architecture_json(const NetworkConfig& cfg);
NetworkConfig architecture_from_json(const nlohmann::json& doc);

// model.egrn -> model.json
std::filesystem::path architecture_path(const std::filesystem::path& checkpoint);

// Writes the checkpoint and its architecture document.
template <typename T>
void save_model(EgrNet<T>& model, const std::filesystem::path& checkpoint);

// Rebuilds the network from the architecture document and fills it from the
// checkpoint. Every tensor name, shape and the tensor count must match the
// architecture; mismatches raise FormatError.
template <typename T>
EgrNet<T> load_model(const std::filesystem::path& checkpoint);

}  // namespace egr
