// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetseg/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>

#include "hetseg/rng.hpp"

namespace hetseg {
namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, value] : j.items()) {
        if (allowed.count(key) == 0) throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

const char* to_string(NormalizationMask m) { return m == NormalizationMask::nonzero ? "nonzero" : "full"; }

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

}  // namespace

nlohmann::json to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["data_root"] = cfg.data_root ? nlohmann::json(cfg.data_root->string()) : nlohmann::json(nullptr);
    j["manifests"] = nlohmann::json::array();
    for (const auto& m : cfg.manifests) j["manifests"].push_back(m.string());
    j["output_dir"] = cfg.output_dir.string();
    j["seed"] = cfg.seed;
    j["deterministic"] = cfg.deterministic;
    j["model"] = to_json(cfg.model);
    j["train"] = to_json(cfg.train);
    j["data"] = {{"normalization", to_string(cfg.data.mask)},
                 {"resample", cfg.data.resample},
                 {"target_spacing", {cfg.data.target_spacing.x, cfg.data.target_spacing.y, cfg.data.target_spacing.z}}};
    if (cfg.finetune) {
        j["finetune"] = {{"source", cfg.finetune->source.string()},
                         {"mode", to_string(cfg.finetune->mode)},
                         {"budget", cfg.finetune->budget ? nlohmann::json(*cfg.finetune->budget)
                                                         : nlohmann::json("all")}};
    }
    j["evaluate"] = {{"threshold", cfg.evaluate.threshold}, {"max_modalities", cfg.evaluate.max_modalities}};
    return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
    check_keys(j,
               {"data_root", "manifests", "output_dir", "seed", "deterministic", "model", "train", "data", "finetune",
                "evaluate"},
               "config");
    RunConfig c;
    try {
        if (j.contains("data_root") && !j["data_root"].is_null()) c.data_root = j["data_root"].get<std::string>();
        if (j.contains("manifests")) {
            for (const auto& m : j["manifests"]) c.manifests.emplace_back(m.get<std::string>());
        }
        c.output_dir = j.value("output_dir", c.output_dir.string());
        c.seed = j.value("seed", c.seed);
        c.deterministic = j.value("deterministic", c.deterministic);

        if (j.contains("model")) {
            const auto& m = j["model"];
            check_keys(m, {"family", "backbone", "share_encoders", "mask_absent", "modalities"}, "model");
            nlohmann::json spec = m;
            if (!spec.contains("family")) spec["family"] = "multi_unet";
            if (!spec.contains("modalities")) spec["modalities"] = nlohmann::json::array();
            if (!spec.contains("backbone")) spec["backbone"] = nlohmann::json::object();
            check_keys(spec["backbone"], {"levels", "base_width", "blocks_per_level", "leaky_slope", "norm_eps"},
                       "model.backbone");
            c.model = model_spec_from_json(spec);
            c.model.backbone.validate();
        }
        if (j.contains("train")) c.train = train_config_from_json(j["train"]);
        c.train.seed = c.seed;

        if (j.contains("data")) {
            const auto& d = j["data"];
            check_keys(d, {"normalization", "resample", "target_spacing"}, "data");
            const auto norm = d.value("normalization", std::string("nonzero"));
            if (norm == "nonzero") {
                c.data.mask = NormalizationMask::nonzero;
            } else if (norm == "full") {
                c.data.mask = NormalizationMask::full;
            } else {
                throw ConfigError("data.normalization must be 'nonzero' or 'full'");
            }
            c.data.resample = d.value("resample", c.data.resample);
            if (d.contains("target_spacing")) {
                const auto s = d["target_spacing"].get<std::vector<double>>();
                if (s.size() != 3 || s[0] <= 0 || s[1] <= 0 || s[2] <= 0) {
                    throw ConfigError("data.target_spacing must be three positive numbers");
                }
                c.data.target_spacing = {s[0], s[1], s[2]};
            }
        }
        if (j.contains("finetune") && !j["finetune"].is_null()) {
            const auto& f = j["finetune"];
            check_keys(f, {"source", "mode", "budget"}, "finetune");
            FinetuneBlock b;
            b.source = f.value("source", std::string());
            b.mode = parse_finetune_mode(f.value("mode", std::string("finetune")));
            if (f.contains("budget") && !(f["budget"].is_string() && f["budget"] == "all")) {
                const auto n = f["budget"].get<long>();
                if (n < 1) throw ConfigError("finetune.budget must be positive or \"all\"");
                b.budget = static_cast<std::size_t>(n);
            }
            c.finetune = b;
        }
        if (j.contains("evaluate")) {
            const auto& e = j["evaluate"];
            check_keys(e, {"threshold", "max_modalities"}, "evaluate");
            c.evaluate.threshold = e.value("threshold", c.evaluate.threshold);
            c.evaluate.max_modalities = e.value("max_modalities", c.evaluate.max_modalities);
            if (!(c.evaluate.threshold > 0.0 && c.evaluate.threshold < 1.0)) {
                throw ConfigError("evaluate.threshold must be in (0, 1)");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return run_config_from_json(j);
}

std::string config_hash(const RunConfig& cfg) {
    const auto full = to_json(cfg);
    const nlohmann::json core{{"model", full["model"]}, {"train", full["train"]}, {"data", full["data"]}};
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(stable_hash(core.dump())));
    return buf;
}

std::optional<std::filesystem::path> resolve_data_root(const RunConfig& cfg,
                                                       const std::optional<std::filesystem::path>& flag) {
    if (flag) return flag;
    if (const char* env = std::getenv(kDataRootEnv); env != nullptr && *env != '\0') {
        return std::filesystem::path(env);
    }
    return cfg.data_root;
}

void write_run_header(const std::filesystem::path& dir, const RunConfig& resolved,
                      const std::vector<std::string>& registry) {
    std::filesystem::create_directories(dir);
    write_json(dir / "config.json", to_json(resolved));
    write_json(dir / "registry.json", {{"modalities", registry}});
    write_json(dir / "seeds.json", {{"seed", resolved.seed},
                                    {"deterministic", resolved.deterministic},
                                    {"config_hash", config_hash(resolved)}});
}

}  // namespace hetseg
