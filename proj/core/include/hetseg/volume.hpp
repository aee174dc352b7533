// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hetseg {

/// Voxel grid extent, x fastest in memory (NIfTI order).
struct Shape3 {
    std::int64_t x = 0;
    std::int64_t y = 0;
    std::int64_t z = 0;

    [[nodiscard]] std::int64_t voxels() const { return x * y * z; }
    [[nodiscard]] bool operator==(const Shape3&) const = default;
    [[nodiscard]] std::string str() const {
        return std::to_string(x) + "x" + std::to_string(y) + "x" + std::to_string(z);
    }
};

/// Voxel size in millimetres.
struct Spacing3 {
    double x = 1.0;
    double y = 1.0;
    double z = 1.0;

    [[nodiscard]] bool operator==(const Spacing3&) const = default;
    [[nodiscard]] bool is_isotropic_unit(double tol = 1e-6) const {
        return std::abs(x - 1.0) < tol && std::abs(y - 1.0) < tol && std::abs(z - 1.0) < tol;
    }
};

struct Index3 {
    std::int64_t x = 0;
    std::int64_t y = 0;
    std::int64_t z = 0;

    [[nodiscard]] bool operator==(const Index3&) const = default;
};

/// Dense single-channel 3D array.
template <typename T>
class Volume {
public:
    Volume() = default;
    explicit Volume(Shape3 shape, T fill = T{})
        : shape_(shape), data_(static_cast<std::size_t>(shape.voxels()), fill) {
        if (shape.x <= 0 || shape.y <= 0 || shape.z <= 0) {
            throw std::invalid_argument("Volume: non-positive extent " + shape.str());
        }
    }
    Volume(Shape3 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
        if (static_cast<std::int64_t>(data_.size()) != shape.voxels()) {
            throw std::invalid_argument("Volume: data size does not match shape " + shape.str());
        }
    }

    [[nodiscard]] const Shape3& shape() const { return shape_; }
    [[nodiscard]] std::size_t size() const { return data_.size(); }
    [[nodiscard]] bool empty() const { return data_.empty(); }

    [[nodiscard]] std::size_t offset(std::int64_t x, std::int64_t y, std::int64_t z) const {
        return static_cast<std::size_t>(x + shape_.x * (y + shape_.y * z));
    }
    [[nodiscard]] T& at(std::int64_t x, std::int64_t y, std::int64_t z) { return data_[offset(x, y, z)]; }
    [[nodiscard]] const T& at(std::int64_t x, std::int64_t y, std::int64_t z) const {
        return data_[offset(x, y, z)];
    }
    [[nodiscard]] T& operator[](std::size_t i) { return data_[i]; }
    [[nodiscard]] const T& operator[](std::size_t i) const { return data_[i]; }

    [[nodiscard]] std::span<T> values() { return data_; }
    [[nodiscard]] std::span<const T> values() const { return data_; }
    [[nodiscard]] std::vector<T>& raw() { return data_; }
    [[nodiscard]] const std::vector<T>& raw() const { return data_; }

    [[nodiscard]] bool operator==(const Volume&) const = default;

private:
    Shape3 shape_{};
    std::vector<T> data_;
};

using FloatVolume = Volume<float>;
using MaskVolume = Volume<std::uint8_t>;

}  // namespace hetseg
