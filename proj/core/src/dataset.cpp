// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetseg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hetseg/nifti.hpp"

namespace hetseg {

std::size_t CaseSample::present_count() const {
    return static_cast<std::size_t>(std::count(presence.begin(), presence.end(), true));
}

std::span<float> CaseSample::channel(std::size_t c) {
    return std::span<float>(image).subspan(c * voxels(), voxels());
}

std::span<const float> CaseSample::channel(std::size_t c) const {
    return std::span<const float>(image).subspan(c * voxels(), voxels());
}

void CaseSample::blank_channel(std::size_t c) {
    auto ch = channel(c);
    std::fill(ch.begin(), ch.end(), 0.0f);
    presence.at(c) = false;
}

void check_sample(const CaseSample& s) {
    const std::string where = s.database_id + "/" + s.case_id;
    if (s.image.size() != s.channels() * s.voxels()) throw DataError(where + ": image size mismatch");
    if (s.label.shape() != s.shape) throw DataError(where + ": label shape " + s.label.shape().str() +
                                                    " differs from image shape " + s.shape.str());
    for (auto v : s.label.values()) {
        if (v > 1) throw DataError(where + ": label is not binary");
    }
    for (std::size_t c = 0; c < s.channels(); ++c) {
        if (s.presence[c]) continue;
        auto ch = s.channel(c);
        if (std::any_of(ch.begin(), ch.end(), [](float v) { return v != 0.0f; })) {
            throw DataError(where + ": absent channel " + std::to_string(c) + " is not zero");
        }
    }
}

std::vector<double> zscore(std::span<const double> values, std::span<const std::uint8_t> mask) {
    if (values.size() != mask.size()) throw DataError("zscore: mask size differs from volume size");
    std::size_t n = 0;
    double sum = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!mask[i]) continue;
        ++n;
        sum += values[i];
        lo = std::min(lo, values[i]);
        hi = std::max(hi, values[i]);
    }
    if (n < 2) throw DataError("zscore: mask selects fewer than two voxels");
    if (!(hi > lo)) throw DataError("zscore: zero variance inside mask");
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (mask[i]) ss += (values[i] - mean) * (values[i] - mean);
    }
    const double sd = std::sqrt(ss / static_cast<double>(n));
    if (!(sd > 0.0) || !std::isfinite(sd)) throw DataError("zscore: zero variance inside mask");

    std::vector<double> out(values.size(), 0.0);
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (mask[i]) out[i] = (values[i] - mean) / sd;
    }
    return out;
}

FloatVolume zscore(const FloatVolume& volume, const MaskVolume& mask) {
    if (volume.shape() != mask.shape()) throw DataError("zscore: mask shape differs from volume shape");
    std::vector<double> values(volume.raw().begin(), volume.raw().end());
    auto z = zscore(values, mask.values());
    std::vector<float> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        out[i] = static_cast<float>(z[i]);
        if (!std::isfinite(out[i])) throw DataError("zscore: non-finite voxel after normalization");
    }
    return FloatVolume(volume.shape(), std::move(out));
}

MaskVolume nonzero_mask(const FloatVolume& volume) {
    MaskVolume m(volume.shape());
    for (std::size_t i = 0; i < volume.size(); ++i) m[i] = volume[i] != 0.0f ? 1 : 0;
    return m;
}

MaskVolume merge_labels(const FloatVolume& label) {
    MaskVolume m(label.shape());
    for (std::size_t i = 0; i < label.size(); ++i) m[i] = label[i] > 0.0f ? 1 : 0;
    return m;
}

Shape3 resampled_shape(const Shape3& s, const Spacing3& from, const Spacing3& to) {
    auto axis = [](std::int64_t n, double f, double t) {
        return std::max<std::int64_t>(1, std::llround(static_cast<double>(n) * f / t));
    };
    return {axis(s.x, from.x, to.x), axis(s.y, from.y, to.y), axis(s.z, from.z, to.z)};
}

namespace {

struct AxisSample {
    std::int64_t i0;
    std::int64_t i1;
    double w1;
};

std::vector<AxisSample> axis_samples(std::int64_t out_n, std::int64_t in_n, double scale) {
    std::vector<AxisSample> out(static_cast<std::size_t>(out_n));
    for (std::int64_t i = 0; i < out_n; ++i) {
        const double p = std::clamp(static_cast<double>(i) * scale, 0.0, static_cast<double>(in_n - 1));
        const auto i0 = static_cast<std::int64_t>(std::floor(p));
        const auto i1 = std::min(i0 + 1, in_n - 1);
        out[static_cast<std::size_t>(i)] = {i0, i1, p - static_cast<double>(i0)};
    }
    return out;
}

}  // namespace

FloatVolume resample_linear(const FloatVolume& v, const Spacing3& from, const Spacing3& to) {
    const Shape3 out_shape = resampled_shape(v.shape(), from, to);
    const auto ax = axis_samples(out_shape.x, v.shape().x, to.x / from.x);
    const auto ay = axis_samples(out_shape.y, v.shape().y, to.y / from.y);
    const auto az = axis_samples(out_shape.z, v.shape().z, to.z / from.z);
    FloatVolume out(out_shape);
    for (std::int64_t z = 0; z < out_shape.z; ++z) {
        const auto& sz = az[static_cast<std::size_t>(z)];
        for (std::int64_t y = 0; y < out_shape.y; ++y) {
            const auto& sy = ay[static_cast<std::size_t>(y)];
            for (std::int64_t x = 0; x < out_shape.x; ++x) {
                const auto& sx = ax[static_cast<std::size_t>(x)];
                auto lerp_x = [&](std::int64_t yy, std::int64_t zz) {
                    return (1.0 - sx.w1) * v.at(sx.i0, yy, zz) + sx.w1 * v.at(sx.i1, yy, zz);
                };
                const double c0 = (1.0 - sy.w1) * lerp_x(sy.i0, sz.i0) + sy.w1 * lerp_x(sy.i1, sz.i0);
                const double c1 = (1.0 - sy.w1) * lerp_x(sy.i0, sz.i1) + sy.w1 * lerp_x(sy.i1, sz.i1);
                out.at(x, y, z) = static_cast<float>((1.0 - sz.w1) * c0 + sz.w1 * c1);
            }
        }
    }
    return out;
}

MaskVolume resample_nearest(const MaskVolume& v, const Spacing3& from, const Spacing3& to) {
    const Shape3 out_shape = resampled_shape(v.shape(), from, to);
    auto nearest = [](std::int64_t i, double scale, std::int64_t n) {
        return std::clamp<std::int64_t>(std::llround(static_cast<double>(i) * scale), 0, n - 1);
    };
    MaskVolume out(out_shape);
    for (std::int64_t z = 0; z < out_shape.z; ++z) {
        const auto iz = nearest(z, to.z / from.z, v.shape().z);
        for (std::int64_t y = 0; y < out_shape.y; ++y) {
            const auto iy = nearest(y, to.y / from.y, v.shape().y);
            for (std::int64_t x = 0; x < out_shape.x; ++x) {
                out.at(x, y, z) = v.at(nearest(x, to.x / from.x, v.shape().x), iy, iz);
            }
        }
    }
    return out;
}

CaseSample load_case(const DatabaseManifest& manifest, const std::string& case_id, const ModalityRegistry& registry,
                     const LoadOptions& options) {
    const CaseRecord& record = manifest.find_case(case_id);
    const std::string where = manifest.database_id + "/" + case_id;

    std::vector<std::string> wanted;
    if (options.modalities) {
        for (const auto& m : *options.modalities) {
            if (!record.images.count(m)) throw DataError(where + ": modality '" + m + "' not available");
            wanted.push_back(m);
        }
    } else {
        wanted = record.modalities();
    }
    if (wanted.empty()) throw DataError(where + ": no modality selected");

    CaseSample s;
    s.database_id = manifest.database_id;
    s.case_id = case_id;
    s.presence.assign(registry.size(), false);

    bool first = true;
    Spacing3 source_spacing;
    Shape3 raw_shape;
    std::vector<std::pair<std::size_t, FloatVolume>> channels;
    for (const auto& m : wanted) {
        const std::size_t c = registry.channel_of(m);
        NiftiVolume nv = read_nifti(manifest.resolve(record.images.at(m)));
        if (first) {
            source_spacing = nv.spacing;
            raw_shape = nv.data.shape();
            first = false;
        } else if (!(nv.data.shape() == raw_shape)) {
            throw DataError(where + ": shape mismatch between modalities (" + nv.data.shape().str() + " vs " +
                            raw_shape.str() + ")");
        } else if (!(nv.spacing == source_spacing)) {
            throw DataError(where + ": modality '" + m + "' spacing differs from the other volumes");
        }
        channels.emplace_back(c, std::move(nv.data));
    }

    const bool resample = options.resample && !(source_spacing == options.target_spacing);
    s.spacing = resample ? options.target_spacing : source_spacing;

    FloatVolume label_raw;
    if (!record.label.empty()) {
        auto nl = read_nifti(manifest.resolve(record.label));
        if (!(nl.data.shape() == raw_shape)) {
            throw DataError(where + ": label shape " + nl.data.shape().str() + " differs from image shape " +
                            raw_shape.str());
        }
        MaskVolume merged = merge_labels(nl.data);
        s.label = resample ? resample_nearest(merged, source_spacing, options.target_spacing) : std::move(merged);
    } else {
        s.has_label = false;
    }

    s.shape = resample ? resampled_shape(raw_shape, source_spacing, options.target_spacing) : raw_shape;
    if (!s.has_label) s.label = MaskVolume(s.shape);
    s.image.assign(registry.size() * s.voxels(), 0.0f);

    for (auto& [c, vol] : channels) {
        FloatVolume v = resample ? resample_linear(vol, source_spacing, options.target_spacing) : std::move(vol);
        const MaskVolume mask = options.mask == NormalizationMask::nonzero ? nonzero_mask(v) : MaskVolume(v.shape(), 1);
        FloatVolume z;
        try {
            z = zscore(v, mask);
        } catch (const DataError& e) {
            throw DataError(where + " modality '" + registry.name(c) + "': " + e.what());
        }
        std::copy(z.raw().begin(), z.raw().end(), s.channel(c).begin());
        s.presence[c] = true;
    }
    return s;
}

CaseSample restrict_modalities(const CaseSample& sample, const ModalityRegistry& registry,
                               std::span<const std::string> keep) {
    std::vector<bool> kept(registry.size(), false);
    for (const auto& m : keep) kept[registry.channel_of(m)] = true;
    CaseSample out = sample;
    for (std::size_t c = 0; c < out.channels(); ++c) {
        if (!kept[c] && out.presence[c]) out.blank_channel(c);
    }
    return out;
}

}  // namespace hetseg
