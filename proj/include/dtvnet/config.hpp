#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "dtvnet/model.hpp"
#include "dtvnet/training.hpp"

namespace dtvnet {

inline constexpr const char* kToolVersion = "dtvnet 0.1.0";

void to_json(nlohmann::json& j, const HW& v);
void from_json(const nlohmann::json& j, HW& v);
void to_json(nlohmann::json& j, const OFEConfig& v);
void from_json(const nlohmann::json& j, OFEConfig& v);
void to_json(nlohmann::json& j, const DVGConfig& v);
void from_json(const nlohmann::json& j, DVGConfig& v);
void to_json(nlohmann::json& j, const CriticConfig& v);
void from_json(const nlohmann::json& j, CriticConfig& v);
void to_json(nlohmann::json& j, const ModelConfig& v);
void from_json(const nlohmann::json& j, ModelConfig& v);
void to_json(nlohmann::json& j, const LossWeights& v);
void from_json(const nlohmann::json& j, LossWeights& v);
void to_json(nlohmann::json& j, const TrainConfig& v);
void from_json(const nlohmann::json& j, TrainConfig& v);

/// Fully resolved settings for one command.
struct RunConfig {
  std::string profile = "desk";
  std::uint64_t seed = 0;
  ModelConfig model;
  TrainConfig train;
};

void to_json(nlohmann::json& j, const RunConfig& v);
void from_json(const nlohmann::json& j, RunConfig& v);

// "desk": T=8, 32x32, batch 4, 2000 steps. "paper": T=32, 128x128, batch 12, 200 epochs.
RunConfig profile_defaults(const std::string& profile);

/// Profile defaults, then the config file (JSON, deep-merged), then
/// `overrides` (deep-merged). Every field is present afterwards.
RunConfig resolve_run_config(const std::string& profile, const std::optional<std::filesystem::path>& config_file,
                             const nlohmann::json& overrides);

// Writes run_config.json (resolved config + tool version + command) into dir.
void write_run_record(const std::filesystem::path& dir, const RunConfig& cfg, const std::string& command);

// 64-bit FNV-1a of a string, as 16 hex digits.
std::string fnv1a_hex(const std::string& s);

}  // namespace dtvnet
