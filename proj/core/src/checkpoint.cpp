// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetseg/checkpoint.hpp"

#include <torch/serialize.h>

namespace hetseg {
namespace {

constexpr const char* kMetaKey = "hetseg_meta";

CheckpointMeta read_meta(torch::serialize::InputArchive& archive, const std::filesystem::path& path) {
    c10::IValue value;
    if (!archive.try_read(kMetaKey, value) || !value.isString()) {
        throw CheckpointError(path.string() + ": not a hetseg checkpoint");
    }
    try {
        return checkpoint_meta_from_json(nlohmann::json::parse(value.toStringRef()));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(path.string() + ": bad checkpoint metadata: " + e.what());
    }
}

torch::serialize::InputArchive open_archive(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw CheckpointError("checkpoint not found: " + path.string());
    torch::serialize::InputArchive archive;
    try {
        archive.load_from(path.string());
    } catch (const c10::Error& e) {
        throw CheckpointError(path.string() + ": unreadable checkpoint: " + e.what_without_backtrace());
    }
    return archive;
}

}  // namespace

nlohmann::json to_json(const ChannelRemap& remap) {
    nlohmann::json reused = nlohmann::json::object();
    for (const auto& [name, ch] : remap.reused) reused[name] = ch;
    return {{"reused", reused}, {"expanded", remap.expanded}};
}

ChannelRemap channel_remap_from_json(const nlohmann::json& j) {
    ChannelRemap r;
    for (const auto& [name, ch] : j.at("reused").items()) r.reused[name] = ch.get<std::size_t>();
    r.expanded = j.at("expanded").get<std::vector<std::string>>();
    return r;
}

nlohmann::json to_json(const CheckpointMeta& meta) {
    nlohmann::json j{{"version", meta.version},
                     {"spec", to_json(meta.spec)},
                     {"registry", meta.registry},
                     {"config_hash", meta.config_hash},
                     {"epoch", meta.epoch}};
    j["remap"] = meta.remap ? to_json(*meta.remap) : nlohmann::json(nullptr);
    return j;
}

CheckpointMeta checkpoint_meta_from_json(const nlohmann::json& j) {
    CheckpointMeta m;
    m.version = j.at("version").get<int>();
    if (m.version != kCheckpointVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(m.version));
    }
    m.spec = model_spec_from_json(j.at("spec"));
    m.registry = j.at("registry").get<std::vector<std::string>>();
    m.config_hash = j.value("config_hash", "");
    m.epoch = j.value("epoch", 0);
    if (j.contains("remap") && !j["remap"].is_null()) m.remap = channel_remap_from_json(j["remap"]);
    if (m.registry != m.spec.modalities) throw CheckpointError("checkpoint registry disagrees with its model spec");
    return m;
}

void save_checkpoint(const std::filesystem::path& path, SegmentationNet& model, const CheckpointMeta& meta) {
    if (meta.spec != model.spec()) throw std::invalid_argument("checkpoint metadata does not describe this model");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    torch::serialize::OutputArchive archive;
    model.save(archive);
    archive.write(kMetaKey, c10::IValue(to_json(meta).dump()));
    auto tmp = path;
    tmp += ".tmp";
    archive.save_to(tmp.string());
    std::filesystem::rename(tmp, path);
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path) {
    auto archive = open_archive(path);
    return read_meta(archive, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const ModalityRegistry* expected) {
    auto archive = open_archive(path);
    auto meta = read_meta(archive, path);
    if (expected != nullptr && expected->size() != meta.registry.size()) {
        throw CheckpointError(path.string() + ": checkpoint has " + std::to_string(meta.registry.size()) +
                              " input channels but the data registry has " + std::to_string(expected->size()) +
                              "; remap the channels first");
    }
    auto model = make_model(meta.spec);
    try {
        model->load(archive);
    } catch (const c10::Error& e) {
        throw CheckpointError(path.string() + ": weights do not match the stored spec: " +
                              e.what_without_backtrace());
    }
    return {std::move(model), std::move(meta)};
}

}  // namespace hetseg
