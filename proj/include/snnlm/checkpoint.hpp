#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "snnlm/approximators.hpp"
#include "snnlm/model.hpp"
#include "snnlm/training.hpp"

namespace snnlm {

// BTSF container: "BTSF", u32 LE version, u64 LE metadata length, JSON
// metadata, then little-endian float32 tensors in directory order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    Model model;
    std::optional<TrainState> train_state;
    // Free-form provenance (command, seed, ...), stored verbatim.
    nlohmann::json info = nlohmann::json::object();
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ApproximatorBank& bank);
ApproximatorBank bank_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ApproximatorSet& banks);
ApproximatorSet approximator_set_from_json(const nlohmann::json& j);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
// Writes through a temporary file and renames it into place.
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace snnlm
