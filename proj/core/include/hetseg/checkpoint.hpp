// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hetseg/modality_registry.hpp"
#include "hetseg/models.hpp"

namespace hetseg {

inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// How an unseen target modality set was fitted onto pretrained channels.
struct ChannelRemap {
    /// New modality -> pretrained channel it took over.
    std::map<std::string, std::size_t> reused;
    /// New modalities that got freshly initialised input filters, in channel order.
    std::vector<std::string> expanded;

    [[nodiscard]] std::size_t expansion_count() const { return expanded.size(); }
    [[nodiscard]] bool identity() const { return reused.empty() && expanded.empty(); }
    [[nodiscard]] bool operator==(const ChannelRemap&) const = default;
};

nlohmann::json to_json(const ChannelRemap& remap);
ChannelRemap channel_remap_from_json(const nlohmann::json& j);

struct CheckpointMeta {
    int version = kCheckpointVersion;
    ModelSpec spec;
    /// Registry the weights were trained against (equals spec.modalities).
    std::vector<std::string> registry;
    std::string config_hash;
    int epoch = 0;
    std::optional<ChannelRemap> remap;
};

nlohmann::json to_json(const CheckpointMeta& meta);
CheckpointMeta checkpoint_meta_from_json(const nlohmann::json& j);

/// Writes weights plus metadata to `path` via a temporary file and rename.
void save_checkpoint(const std::filesystem::path& path, SegmentationNet& model, const CheckpointMeta& meta);

struct LoadedCheckpoint {
    std::shared_ptr<SegmentationNet> model;
    CheckpointMeta meta;
};

[[nodiscard]] CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);

/// Rebuilds the model from the stored spec and loads its weights. When
/// `expected` is given, a registry of a different size is rejected with
/// CheckpointError; use remap_channels to adapt a model to new modalities.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const ModalityRegistry* expected = nullptr);

}  // namespace hetseg
