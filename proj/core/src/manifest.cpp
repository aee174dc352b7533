// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetseg/manifest.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

namespace hetseg {

const char* to_string(Split s) { return s == Split::train ? "train" : "eval"; }

Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "eval" || s == "test" || s == "val") return Split::eval;
    throw DataError("unknown split '" + s + "'");
}

std::vector<std::string> CaseRecord::modalities() const {
    std::vector<std::string> out;
    out.reserve(images.size());
    for (const auto& [name, _] : images) out.push_back(name);
    return out;
}

std::vector<const CaseRecord*> DatabaseManifest::cases_in(Split s) const {
    std::vector<const CaseRecord*> out;
    for (const auto& c : cases) {
        if (c.split == s) out.push_back(&c);
    }
    return out;
}

std::size_t DatabaseManifest::count(Split s) const {
    return static_cast<std::size_t>(
        std::count_if(cases.begin(), cases.end(), [s](const CaseRecord& c) { return c.split == s; }));
}

const CaseRecord& DatabaseManifest::find_case(const std::string& case_id) const {
    auto it = std::find_if(cases.begin(), cases.end(), [&](const CaseRecord& c) { return c.case_id == case_id; });
    if (it == cases.end()) {
        throw DataError("database '" + database_id + "' has no case '" + case_id + "'");
    }
    return *it;
}

std::filesystem::path DatabaseManifest::resolve(const std::filesystem::path& p) const {
    return p.is_absolute() ? p : root / p;
}

std::string normalize_modality_name(const std::string& name) {
    std::string lower;
    lower.reserve(name.size());
    for (char c : name) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));

    static const std::map<std::string, std::string> table = {
        {"pd", "PD"},     {"flair", "FLAIR"}, {"t2flair", "FLAIR"}, {"swi", "SWI"},  {"t1", "T1"},
        {"t1w", "T1"},    {"t1c", "T1c"},     {"t1ce", "T1c"},      {"t1gd", "T1c"}, {"t1post", "T1c"},
        {"t2", "T2"},     {"t2w", "T2"},      {"dwi", "DWI"},
    };
    auto it = table.find(lower);
    return it == table.end() ? name : it->second;
}

void validate_manifest(const DatabaseManifest& m) {
    if (m.database_id.empty()) throw DataError("manifest with empty database id");
    if (m.modalities.empty()) throw DataError("database '" + m.database_id + "' declares no modality");
    std::set<std::string> declared(m.modalities.begin(), m.modalities.end());
    if (declared.size() != m.modalities.size()) {
        throw DataError("database '" + m.database_id + "' declares a modality twice");
    }
    std::set<std::string> ids;
    for (const auto& c : m.cases) {
        const std::string where = "database '" + m.database_id + "' case '" + c.case_id + "'";
        if (!ids.insert(c.case_id).second) throw DataError(where + " appears twice");
        for (const auto& [name, _] : c.images) {
            if (!declared.count(name)) throw DataError(where + " lists undeclared modality '" + name + "'");
        }
        if (c.images.empty()) throw DataError(where + " lists no image");
        if (c.split == Split::train) {
            for (const auto& name : m.modalities) {
                if (!c.images.count(name)) throw DataError(where + " (train) is missing modality '" + name + "'");
            }
            if (c.label.empty()) throw DataError(where + " (train) has no label");
        }
    }
}

nlohmann::json manifests_to_json(const std::vector<DatabaseManifest>& manifests) {
    nlohmann::json dbs = nlohmann::json::array();
    for (const auto& m : manifests) {
        nlohmann::json cases = nlohmann::json::array();
        for (const auto& c : m.cases) {
            nlohmann::json images = nlohmann::json::object();
            for (const auto& [name, path] : c.images) images[name] = path.generic_string();
            nlohmann::json jc = {{"id", c.case_id}, {"split", to_string(c.split)}, {"images", images}};
            if (!c.label.empty()) jc["label"] = c.label.generic_string();
            cases.push_back(std::move(jc));
        }
        dbs.push_back({{"id", m.database_id}, {"modalities", m.modalities}, {"cases", cases}});
    }
    return {{"format", "hetseg-manifest"}, {"version", 1}, {"databases", dbs}};
}

std::vector<DatabaseManifest> manifests_from_json(const nlohmann::json& j, const std::filesystem::path& root) {
    if (!j.contains("databases") || !j.at("databases").is_array()) {
        throw DataError("manifest: missing 'databases' array");
    }
    std::vector<DatabaseManifest> out;
    try {
        for (const auto& jd : j.at("databases")) {
            DatabaseManifest m;
            m.database_id = jd.at("id").get<std::string>();
            m.root = root;
            for (const auto& name : jd.at("modalities")) {
                m.modalities.push_back(normalize_modality_name(name.get<std::string>()));
            }
            for (const auto& jc : jd.value("cases", nlohmann::json::array())) {
                CaseRecord c;
                c.case_id = jc.at("id").get<std::string>();
                c.split = parse_split(jc.value("split", std::string("train")));
                for (const auto& [name, path] : jc.at("images").items()) {
                    c.images[normalize_modality_name(name)] = path.get<std::string>();
                }
                if (jc.contains("label")) c.label = jc.at("label").get<std::string>();
                m.cases.push_back(std::move(c));
            }
            validate_manifest(m);
            out.push_back(std::move(m));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("manifest: ") + e.what());
    }
    std::set<std::string> ids;
    for (const auto& m : out) {
        if (!ids.insert(m.database_id).second) throw DataError("manifest: database '" + m.database_id + "' repeated");
    }
    return out;
}

std::vector<DatabaseManifest> load_manifests(const std::filesystem::path& file,
                                             const std::optional<std::filesystem::path>& data_root) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open manifest " + file.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("manifest " + file.string() + ": " + e.what());
    }
    auto root = data_root ? *data_root : file.parent_path();
    return manifests_from_json(j, root);
}

void save_manifests(const std::filesystem::path& file, const std::vector<DatabaseManifest>& manifests) {
    std::ofstream out(file);
    if (!out) throw DataError("cannot write manifest " + file.string());
    out << manifests_to_json(manifests).dump(2) << '\n';
}

}  // namespace hetseg
