// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace hetseg {

/// Raised for manifest or volume contents that violate the data contract.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Split { train, eval };

[[nodiscard]] const char* to_string(Split s);
[[nodiscard]] Split parse_split(const std::string& s);

struct CaseRecord {
    std::string case_id;
    Split split = Split::train;
    /// Modality name -> volume path, relative to the manifest root unless absolute.
    std::map<std::string, std::filesystem::path> images;
    std::filesystem::path label;

    [[nodiscard]] std::vector<std::string> modalities() const;
};

/// One database: its declared modality set and case list.
struct DatabaseManifest {
    std::string database_id;
    std::vector<std::string> modalities;
    std::vector<CaseRecord> cases;
    /// Base directory for relative paths; not serialized.
    std::filesystem::path root;

    [[nodiscard]] std::vector<const CaseRecord*> cases_in(Split s) const;
    [[nodiscard]] std::size_t count(Split s) const;
    [[nodiscard]] const CaseRecord& find_case(const std::string& case_id) const;
    [[nodiscard]] std::filesystem::path resolve(const std::filesystem::path& p) const;
};

/// Maps common spellings ("flair", "t1ce", "T1Gd", ...) onto registry names.
/// Unknown names pass through unchanged.
[[nodiscard]] std::string normalize_modality_name(const std::string& name);

/// Throws DataError when train cases miss a declared modality or the label,
/// eval cases reference undeclared modalities, or ids repeat.
void validate_manifest(const DatabaseManifest& manifest);

nlohmann::json manifests_to_json(const std::vector<DatabaseManifest>& manifests);

/// Parses and validates; names are normalized and `root` is set on each
/// database.
std::vector<DatabaseManifest> manifests_from_json(const nlohmann::json& j, const std::filesystem::path& root);

/// Reads a manifest file. Relative paths resolve against `data_root` when
/// given, else against the manifest file's directory.
std::vector<DatabaseManifest> load_manifests(const std::filesystem::path& file,
                                             const std::optional<std::filesystem::path>& data_root = std::nullopt);

void save_manifests(const std::filesystem::path& file, const std::vector<DatabaseManifest>& manifests);

}  // namespace hetseg
