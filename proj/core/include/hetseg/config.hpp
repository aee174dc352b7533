// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hetseg/dataset.hpp"
#include "hetseg/models.hpp"
#include "hetseg/training.hpp"

namespace hetseg {

/// Environment variable that overrides the data root of a run config.
inline constexpr const char* kDataRootEnv = "HETSEG_DATA_ROOT";

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct FinetuneBlock {
    std::filesystem::path source;
    FinetuneMode mode = FinetuneMode::finetune;
    std::optional<std::size_t> budget;  ///< nullopt = all
};

struct EvaluateBlock {
    double threshold = 0.5;
    std::size_t max_modalities = 6;
};

/// Everything a run needs. Serializes to the resolved config.json of a run
/// directory; reading that file back reproduces the run.
struct RunConfig {
    std::optional<std::filesystem::path> data_root;
    std::vector<std::filesystem::path> manifests;
    std::filesystem::path output_dir = "runs/default";
    std::uint64_t seed = 0;
    bool deterministic = true;
    /// `modalities` is filled from the data registry at run time.
    ModelSpec model;
    TrainConfig train;
    LoadOptions data;
    std::optional<FinetuneBlock> finetune;
    EvaluateBlock evaluate;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Unknown keys and bad values throw ConfigError. The top-level seed is
/// authoritative and copied into the train block.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Hex digest of the model, train and data blocks.
[[nodiscard]] std::string config_hash(const RunConfig& cfg);

/// `flag` when set, else $HETSEG_DATA_ROOT when set, else cfg.data_root.
[[nodiscard]] std::optional<std::filesystem::path> resolve_data_root(
    const RunConfig& cfg, const std::optional<std::filesystem::path>& flag = std::nullopt);

/// Creates `dir` and writes config.json, registry.json and seeds.json.
void write_run_header(const std::filesystem::path& dir, const RunConfig& resolved,
                      const std::vector<std::string>& registry);

}  // namespace hetseg
