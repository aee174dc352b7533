// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetseg/sampler.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace hetseg {

EpochPlan plan_epoch(std::span<const DatabaseManifest> manifests, Rng& rng) {
    std::size_t target = 0;
    for (const auto& m : manifests) target = std::max(target, m.count(Split::train));
    if (target == 0) throw std::invalid_argument("plan_epoch: no train cases");

    EpochPlan plan;
    for (const auto& m : manifests) {
        const auto cases = m.cases_in(Split::train);
        if (cases.empty()) continue;
        const std::size_t n = cases.size();
        std::vector<std::size_t> order;
        order.reserve(target);
        for (std::size_t rep = 0; rep < target / n; ++rep) {
            for (std::size_t i = 0; i < n; ++i) order.push_back(i);
        }
        std::vector<std::size_t> extra(n);
        std::iota(extra.begin(), extra.end(), 0);
        std::shuffle(extra.begin(), extra.end(), rng);
        extra.resize(target % n);
        order.insert(order.end(), extra.begin(), extra.end());

        for (std::size_t i : order) plan.draws.push_back({m.database_id, cases[i]->case_id});
        plan.per_database[m.database_id] = order.size();
    }
    std::shuffle(plan.draws.begin(), plan.draws.end(), rng);
    return plan;
}

std::size_t draw_drop_count(std::size_t present, Rng& rng) {
    if (present <= 1) return 0;
    return std::uniform_int_distribution<std::size_t>(0, present - 1)(rng);
}

CaseSample apply_drop(const CaseSample& sample, const DropPolicy& policy, Rng& rng) {
    if (!policy.enabled || policy.exempt_databases.count(sample.database_id)) return sample;

    std::vector<std::size_t> present;
    for (std::size_t c = 0; c < sample.channels(); ++c) {
        if (sample.presence[c]) present.push_back(c);
    }
    const std::size_t n = draw_drop_count(present.size(), rng);
    if (n == 0) return sample;

    // Partial Fisher-Yates: the first n entries become a uniform n-subset.
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = std::uniform_int_distribution<std::size_t>(i, present.size() - 1)(rng);
        std::swap(present[i], present[j]);
    }
    CaseSample out = sample;
    for (std::size_t i = 0; i < n; ++i) out.blank_channel(present[i]);
    return out;
}

Shape3 clip_patch_shape(const Shape3& patch, const Shape3& volume) {
    return {std::min(patch.x, volume.x), std::min(patch.y, volume.y), std::min(patch.z, volume.z)};
}

Patch extract_patch(const CaseSample& sample, const Shape3& ps, double foreground_bias, Rng& rng) {
    const Shape3 vs = sample.shape;
    if (ps.x <= 0 || ps.y <= 0 || ps.z <= 0) throw std::invalid_argument("extract_patch: empty patch shape");
    if (ps.x > vs.x || ps.y > vs.y || ps.z > vs.z) {
        throw std::invalid_argument("extract_patch: patch " + ps.str() + " larger than volume " + vs.str());
    }

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const bool want_fg = unit(rng) < foreground_bias;

    Patch out;
    if (want_fg) {
        std::vector<std::size_t> lesion;
        for (std::size_t i = 0; i < sample.label.size(); ++i) {
            if (sample.label[i]) lesion.push_back(i);
        }
        if (!lesion.empty()) {
            const std::size_t pick = lesion[std::uniform_int_distribution<std::size_t>(0, lesion.size() - 1)(rng)];
            const auto idx = static_cast<std::int64_t>(pick);
            const Index3 centre{idx % vs.x, (idx / vs.x) % vs.y, idx / (vs.x * vs.y)};
            out.origin = {std::clamp<std::int64_t>(centre.x - ps.x / 2, 0, vs.x - ps.x),
                          std::clamp<std::int64_t>(centre.y - ps.y / 2, 0, vs.y - ps.y),
                          std::clamp<std::int64_t>(centre.z - ps.z / 2, 0, vs.z - ps.z)};
            out.lesion_centered = true;
        }
    }
    if (!out.lesion_centered) {
        auto pick = [&](std::int64_t room) { return std::uniform_int_distribution<std::int64_t>(0, room)(rng); };
        out.origin = {pick(vs.x - ps.x), pick(vs.y - ps.y), pick(vs.z - ps.z)};
    }

    if (ps == vs) {
        out.sample = sample;
        return out;
    }

    CaseSample& p = out.sample;
    p.database_id = sample.database_id;
    p.case_id = sample.case_id;
    p.shape = ps;
    p.spacing = sample.spacing;
    p.presence = sample.presence;
    p.has_label = sample.has_label;
    p.image.assign(sample.channels() * static_cast<std::size_t>(ps.voxels()), 0.0f);
    p.label = MaskVolume(ps);

    const Index3 o = out.origin;
    for (std::size_t c = 0; c < sample.channels(); ++c) {
        auto src = sample.channel(c);
        auto dst = p.channel(c);
        for (std::int64_t z = 0; z < ps.z; ++z) {
            for (std::int64_t y = 0; y < ps.y; ++y) {
                const auto s0 = static_cast<std::size_t>(o.x + vs.x * ((o.y + y) + vs.y * (o.z + z)));
                const auto d0 = static_cast<std::size_t>(ps.x * (y + ps.y * z));
                std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(s0), ps.x,
                            dst.begin() + static_cast<std::ptrdiff_t>(d0));
            }
        }
    }
    for (std::int64_t z = 0; z < ps.z; ++z) {
        for (std::int64_t y = 0; y < ps.y; ++y) {
            for (std::int64_t x = 0; x < ps.x; ++x) {
                p.label.at(x, y, z) = sample.label.at(o.x + x, o.y + y, o.z + z);
            }
        }
    }
    return out;
}

}  // namespace hetseg
