// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetseg/modality_registry.hpp"

#include <algorithm>
#include <iterator>

#include "hetseg/manifest.hpp"

namespace hetseg {

ModalityRegistry::ModalityRegistry(std::vector<std::string> ordered_names) : names_(std::move(ordered_names)) {
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i].empty()) {
            throw std::invalid_argument("ModalityRegistry: empty modality name");
        }
        if (!index_.emplace(names_[i], i).second) {
            throw std::invalid_argument("ModalityRegistry: duplicate modality '" + names_[i] + "'");
        }
    }
}

ModalityRegistry ModalityRegistry::canonical() {
    return ModalityRegistry(std::vector<std::string>(std::begin(kCanonicalModalities), std::end(kCanonicalModalities)));
}

std::size_t ModalityRegistry::channel_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw UnknownModality(name);
    }
    return it->second;
}

ModalityRegistry build_registry(std::span<const std::vector<std::string>> modality_sets) {
    if (modality_sets.empty()) {
        throw std::invalid_argument("build_registry: no manifests given");
    }
    std::vector<std::string> seen;
    for (const auto& set : modality_sets) {
        if (set.empty()) {
            throw std::invalid_argument("build_registry: a database declares no modality");
        }
        for (const auto& m : set) {
            if (std::find(seen.begin(), seen.end(), m) == seen.end()) {
                seen.push_back(m);
            }
        }
    }

    std::vector<std::string> ordered;
    for (const char* c : kCanonicalModalities) {
        if (std::find(seen.begin(), seen.end(), c) != seen.end()) {
            ordered.emplace_back(c);
        }
    }
    for (const auto& m : seen) {
        if (std::find(ordered.begin(), ordered.end(), m) == ordered.end()) {
            ordered.push_back(m);
        }
    }
    return ModalityRegistry(std::move(ordered));
}

ModalityRegistry build_registry(std::span<const DatabaseManifest> manifests) {
    std::vector<std::vector<std::string>> sets;
    sets.reserve(manifests.size());
    for (const auto& m : manifests) {
        sets.push_back(m.modalities);
    }
    if (manifests.empty()) {
        throw std::invalid_argument("build_registry: no manifests given");
    }
    for (std::size_t i = 0; i < manifests.size(); ++i) {
        if (sets[i].empty()) {
            throw std::invalid_argument("build_registry: database '" + manifests[i].database_id +
                                        "' declares no modality");
        }
    }
    return build_registry(std::span<const std::vector<std::string>>(sets));
}

}  // namespace hetseg
