#pragma once

#include "unitst/data.hpp"
#include "unitst/evaluation.hpp"
#include "unitst/model.hpp"
#include "unitst/training.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace unitst {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  std::string data_path;
  std::optional<std::string> date_column;
  SplitSpec split = RatioSplit{0.7, 0.1};
  ModelConfig model;
  TrainConfig train;
  Protocol protocol = Protocol::long_term;
  std::string out_dir = "runs/default";
  std::vector<std::uint64_t> seeds{2024};

  // Fails on inconsistent values and on a data path that does not exist.
  void validate(bool require_data = true) const;
};

using KeyValues = std::map<std::string, std::string>;

// `key = value` lines; '#' starts a comment; [section] headers prefix the following keys
// with "section.". Throws ConfigError with the line number on malformed input.
KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::filesystem::path& path);

// Applies recognised keys; unknown keys are an error.
void apply_key_values(RunConfig& cfg, const KeyValues& kv);
KeyValues to_key_values(const RunConfig& cfg);
std::string serialize(const RunConfig& cfg);
RunConfig deserialize(const std::string& text);

// FNV-1a of the serialised config without the output directory, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace unitst
