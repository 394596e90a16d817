#pragma once

#include "unitst/data.hpp"
#include "unitst/model.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>

#include <json.hpp>

namespace unitst {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Layout: 8-byte magic "UNITSTCK", u32 format version, u64 header length, JSON header
// (model config, tensor names and shapes, metadata), then every tensor's doubles in header
// order, little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams params;
  std::optional<GlobalScaler> scaler;  // dataset standardisation used in training
  nlohmann::json metadata = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace unitst
