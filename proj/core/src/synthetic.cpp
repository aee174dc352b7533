// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetseg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <stdexcept>

#include "hetseg/nifti.hpp"
#include "hetseg/rng.hpp"

namespace hetseg {

ModalityProfile modality_profile(const std::string& modality) {
    static const std::map<std::string, ModalityProfile> table = {
        {"PD", {110.0, 15.0, 30.0}},  {"FLAIR", {100.0, 20.0, 45.0}}, {"SWI", {120.0, 20.0, -35.0}},
        {"T1", {130.0, 25.0, -35.0}}, {"T1c", {125.0, 25.0, 40.0}},   {"T2", {90.0, -20.0, 45.0}},
        {"DWI", {80.0, 10.0, 50.0}},
    };
    auto it = table.find(modality);
    if (it != table.end()) return it->second;
    // Unlisted modalities get a stable profile derived from the name.
    const auto h = splitmix64(stable_hash(modality));
    const double sign = (h & 1u) ? 1.0 : -1.0;
    return {90.0 + static_cast<double>(h % 40), 20.0, sign * (30.0 + static_cast<double>((h >> 8) % 20))};
}

void validate_synthetic_spec(const SyntheticSpec& spec) {
    if (spec.train_cases + spec.eval_cases < 1 || spec.train_cases < 0 || spec.eval_cases < 0) {
        throw std::invalid_argument("synthetic database needs at least one case");
    }
    if (spec.shape.x < 16 || spec.shape.y < 16 || spec.shape.z < 16) {
        throw std::invalid_argument("synthetic shape must be at least 16^3, got " + spec.shape.str());
    }
    if (spec.modalities.empty()) throw std::invalid_argument("synthetic database needs at least one modality");
    const auto& l = spec.lesions;
    if (l.min_lesions < 0 || l.max_lesions < l.min_lesions) throw std::invalid_argument("bad lesion count range");
    if (l.min_radius <= 0.0 || l.max_radius < l.min_radius) throw std::invalid_argument("bad lesion radius range");
    const double half = 0.5 * static_cast<double>(std::min({spec.shape.x, spec.shape.y, spec.shape.z}));
    if (l.max_radius > half) {
        throw std::invalid_argument("lesion radius " + std::to_string(l.max_radius) + " exceeds half the shape (" +
                                    std::to_string(half) + ")");
    }
}

namespace {

struct Ellipsoid {
    double cx, cy, cz;
    double rx, ry, rz;

    [[nodiscard]] double level(double x, double y, double z) const {
        const double dx = (x - cx) / rx;
        const double dy = (y - cy) / ry;
        const double dz = (z - cz) / rz;
        return dx * dx + dy * dy + dz * dz;
    }
};

struct Wave {
    double kx, ky, kz, phase, amp;
};

}  // namespace

SyntheticCase synthesize_case(const SyntheticSpec& spec, int index) {
    validate_synthetic_spec(spec);
    Rng rng = substream(spec.seed, {stable_hash(spec.database_id), static_cast<std::uint64_t>(index)});
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    const Shape3 s = spec.shape;
    const double nx = static_cast<double>(s.x);
    const double ny = static_cast<double>(s.y);
    const double nz = static_cast<double>(s.z);

    const Ellipsoid brain{(nx - 1) / 2 + uniform(-1, 1), (ny - 1) / 2 + uniform(-1, 1), (nz - 1) / 2 + uniform(-1, 1),
                          nx * uniform(0.40, 0.46),      ny * uniform(0.40, 0.46),      nz * uniform(0.40, 0.46)};

    std::vector<Wave> waves;
    for (int i = 0; i < 3; ++i) {
        const double two_pi = 2.0 * std::numbers::pi;
        waves.push_back({two_pi * uniform(0.5, 2.0) / nx, two_pi * uniform(0.5, 2.0) / ny,
                         two_pi * uniform(0.5, 2.0) / nz, uniform(0.0, two_pi), uniform(0.2, 0.4)});
    }

    const auto& lm = spec.lesions;
    const int n_lesions = std::uniform_int_distribution<int>(lm.min_lesions, lm.max_lesions)(rng);
    std::vector<Ellipsoid> lesions;
    for (int i = 0; i < n_lesions; ++i) {
        const double r = uniform(lm.min_radius, lm.max_radius);
        Ellipsoid e{};
        e.rx = r * uniform(0.8, 1.2);
        e.ry = r * uniform(0.8, 1.2);
        e.rz = r * uniform(0.8, 1.2);
        // Keep lesion centres inside the brain, away from its rim when possible.
        for (int attempt = 0; attempt < 64; ++attempt) {
            e.cx = uniform(r, nx - 1 - r);
            e.cy = uniform(r, ny - 1 - r);
            e.cz = uniform(r, nz - 1 - r);
            if (brain.level(e.cx, e.cy, e.cz) < 0.5) break;
        }
        lesions.push_back(e);
    }

    SyntheticCase out;
    out.label = MaskVolume(s);
    FloatVolume anatomy(s);
    MaskVolume inside(s);
    FloatVolume lesion_field(s);
    for (std::int64_t z = 0; z < s.z; ++z) {
        for (std::int64_t y = 0; y < s.y; ++y) {
            for (std::int64_t x = 0; x < s.x; ++x) {
                const double fx = static_cast<double>(x);
                const double fy = static_cast<double>(y);
                const double fz = static_cast<double>(z);
                if (brain.level(fx, fy, fz) > 1.0) continue;
                inside.at(x, y, z) = 1;
                double t = 0.0;
                for (const auto& w : waves) t += w.amp * std::sin(w.kx * fx + w.ky * fy + w.kz * fz + w.phase);
                anatomy.at(x, y, z) = static_cast<float>(t);
                for (std::size_t li = 0; li < lesions.size(); ++li) {
                    const double lv = lesions[li].level(fx, fy, fz);
                    if (lv > 1.0) continue;
                    lesion_field.at(x, y, z) = 1.0f;
                    std::uint8_t cls = 1;
                    if (spec.multi_class_labels) cls = lv < 0.35 ? 4 : (li % 2 == 0 ? 1 : 2);
                    out.label.at(x, y, z) = std::max(out.label.at(x, y, z), cls);
                }
            }
        }
    }

    std::normal_distribution<double> noise(0.0, 1.0);
    for (const auto& m : spec.modalities) {
        ModalityProfile p = modality_profile(m);
        if (auto it = spec.contrast_override.find(m); it != spec.contrast_override.end()) p.lesion_contrast = it->second;
        Rng noise_rng = substream(spec.seed, {stable_hash(spec.database_id),
                                              static_cast<std::uint64_t>(index), stable_hash(m)});
        FloatVolume img(s);
        for (std::size_t i = 0; i < img.size(); ++i) {
            if (!inside[i]) continue;
            double v = p.base + p.gain * anatomy[i] + lm.contrast_scale * p.lesion_contrast * lesion_field[i] +
                       spec.noise_sigma * noise(noise_rng);
            img[i] = static_cast<float>(std::max(v, 1.0));
        }
        out.images.emplace(m, std::move(img));
    }
    return out;
}

DatabaseManifest generate_synthetic_database(const std::filesystem::path& root, const SyntheticSpec& spec) {
    validate_synthetic_spec(spec);
    DatabaseManifest manifest;
    manifest.database_id = spec.database_id;
    manifest.modalities = spec.modalities;
    manifest.root = root;

    const int total = spec.train_cases + spec.eval_cases;
    for (int i = 0; i < total; ++i) {
        char id[32];
        std::snprintf(id, sizeof(id), "case%03d", i);
        const std::filesystem::path rel = std::filesystem::path(spec.database_id) / id;
        std::filesystem::create_directories(root / rel);

        SyntheticCase c = synthesize_case(spec, i);
        CaseRecord record;
        record.case_id = id;
        record.split = i < spec.train_cases ? Split::train : Split::eval;
        for (const auto& [m, img] : c.images) {
            const auto path = rel / (m + ".nii.gz");
            write_nifti(root / path, img, spec.spacing);
            record.images[m] = path;
        }
        record.label = rel / "label.nii.gz";
        write_nifti(root / record.label, c.label, spec.spacing);
        manifest.cases.push_back(std::move(record));
    }
    return manifest;
}

}  // namespace hetseg
