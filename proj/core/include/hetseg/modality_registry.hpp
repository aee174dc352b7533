// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hetseg {

struct DatabaseManifest;

/// Raised when a modality name is not part of a registry.
class UnknownModality : public std::out_of_range {
public:
    explicit UnknownModality(const std::string& name)
        : std::out_of_range("unknown modality '" + name + "'"), name_(name) {}
    [[nodiscard]] const std::string& name() const { return name_; }

private:
    std::string name_;
};

/// Modalities with a fixed channel rank. Any registry containing a subset of
/// these lists them first, in this order.
inline constexpr const char* kCanonicalModalities[] = {"PD", "FLAIR", "SWI", "T1", "T1c", "T2", "DWI"};

/// Ordered vocabulary of modality names. Channel i of every model input is
/// modality names()[i]; the order is positional and never rearranged after
/// construction.
class ModalityRegistry {
public:
    ModalityRegistry() = default;

    /// Takes the names as the exact channel order. Throws on duplicates or
    /// empty names.
    explicit ModalityRegistry(std::vector<std::string> ordered_names);

    /// The seven canonical modalities in canonical order.
    static ModalityRegistry canonical();

    [[nodiscard]] std::size_t size() const { return names_.size(); }
    [[nodiscard]] bool empty() const { return names_.empty(); }
    [[nodiscard]] const std::vector<std::string>& names() const { return names_; }
    [[nodiscard]] const std::string& name(std::size_t channel) const { return names_.at(channel); }
    [[nodiscard]] bool contains(const std::string& name) const { return index_.count(name) != 0; }

    /// Stable 0-based channel of `name`; throws UnknownModality.
    [[nodiscard]] std::size_t channel_of(const std::string& name) const;

    [[nodiscard]] bool operator==(const ModalityRegistry& other) const { return names_ == other.names_; }

private:
    std::vector<std::string> names_;
    std::map<std::string, std::size_t> index_;
};

/// Union of the manifests' modalities. Canonical modalities come first in
/// canonical order, the rest follow in order of first declaration.
/// Throws std::invalid_argument on an empty list or a manifest that
/// declares no modality.
ModalityRegistry build_registry(std::span<const DatabaseManifest> manifests);

/// Same rule applied to raw modality lists.
ModalityRegistry build_registry(std::span<const std::vector<std::string>> modality_sets);

}  // namespace hetseg
