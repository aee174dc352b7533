// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "hetseg/manifest.hpp"

namespace hetseg {
namespace {

void require_same_shape(const MaskVolume& a, const MaskVolume& b, const char* what) {
    if (!(a.shape() == b.shape())) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " +
                                    b.shape().str());
    }
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) along one line
// with sample spacing h. f and out are strided views of the volume buffer.
void distance_1d(const double* f, double* out, std::int64_t n, std::int64_t stride, double h,
                 std::vector<std::int64_t>& v, std::vector<double>& z) {
    v.resize(static_cast<std::size_t>(n));
    z.resize(static_cast<std::size_t>(n) + 1);
    auto F = [&](std::int64_t i) { return f[i * stride]; };
    auto pos = [&](std::int64_t i) { return static_cast<double>(i) * h; };

    std::int64_t k = -1;
    for (std::int64_t q = 0; q < n; ++q) {
        if (F(q) == kInf) continue;
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
            continue;
        }
        while (true) {
            const std::int64_t p = v[static_cast<std::size_t>(k)];
            const double s = ((F(q) + pos(q) * pos(q)) - (F(p) + pos(p) * pos(p))) / (2.0 * (pos(q) - pos(p)));
            if (s <= z[static_cast<std::size_t>(k)]) {
                if (--k < 0) {
                    k = 0;
                    v[0] = q;
                    z[0] = -kInf;
                    z[1] = kInf;
                    break;
                }
                continue;
            }
            ++k;
            v[static_cast<std::size_t>(k)] = q;
            z[static_cast<std::size_t>(k)] = s;
            z[static_cast<std::size_t>(k) + 1] = kInf;
            break;
        }
    }

    if (k < 0) {
        for (std::int64_t q = 0; q < n; ++q) out[q * stride] = kInf;
        return;
    }
    k = 0;
    for (std::int64_t q = 0; q < n; ++q) {
        while (z[static_cast<std::size_t>(k) + 1] < pos(q)) ++k;
        const std::int64_t p = v[static_cast<std::size_t>(k)];
        const double d = pos(q) - pos(p);
        out[q * stride] = d * d + F(p);
    }
}

double mean_distance(const MaskVolume& from_surface, const std::vector<double>& sq_dist) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < from_surface.size(); ++i) {
        if (!from_surface[i]) continue;
        sum += std::sqrt(sq_dist[i]);
        ++n;
    }
    return sum / static_cast<double>(n);
}

}  // namespace

Confusion confusion(const MaskVolume& pred, const MaskVolume& gt) {
    require_same_shape(pred, gt, "confusion");
    Confusion c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] != 0;
        const bool g = gt[i] != 0;
        if (p && g) ++c.tp;
        else if (p) ++c.fp;
        else if (g) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double dice(const MaskVolume& pred, const MaskVolume& gt) {
    const Confusion c = confusion(pred, gt);
    const std::size_t denom = 2 * c.tp + c.fp + c.fn;
    if (denom == 0) return 1.0;
    return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

SensitivityPrecision sensitivity_precision(const MaskVolume& pred, const MaskVolume& gt) {
    const Confusion c = confusion(pred, gt);
    const double sens = (c.tp + c.fn) == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    const double prec = (c.tp + c.fp) == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    return {sens, prec};
}

MaskVolume surface(const MaskVolume& mask) {
    const Shape3 s = mask.shape();
    MaskVolume out(s);
    for (std::int64_t z = 0; z < s.z; ++z) {
        for (std::int64_t y = 0; y < s.y; ++y) {
            for (std::int64_t x = 0; x < s.x; ++x) {
                if (!mask.at(x, y, z)) continue;
                const bool border = x == 0 || y == 0 || z == 0 || x == s.x - 1 || y == s.y - 1 || z == s.z - 1;
                const bool edge = border || !mask.at(x - 1, y, z) || !mask.at(x + 1, y, z) || !mask.at(x, y - 1, z) ||
                                  !mask.at(x, y + 1, z) || !mask.at(x, y, z - 1) || !mask.at(x, y, z + 1);
                out.at(x, y, z) = edge ? 1 : 0;
            }
        }
    }
    return out;
}

std::vector<double> squared_distance_transform(const MaskVolume& seeds, const Spacing3& spacing) {
    const Shape3 s = seeds.shape();
    std::vector<double> a(seeds.size());
    for (std::size_t i = 0; i < seeds.size(); ++i) a[i] = seeds[i] ? 0.0 : kInf;
    std::vector<double> b(seeds.size());
    std::vector<std::int64_t> v;
    std::vector<double> z;

    for (std::int64_t k = 0; k < s.z; ++k) {
        for (std::int64_t j = 0; j < s.y; ++j) {
            const auto base = static_cast<std::size_t>(s.x * (j + s.y * k));
            distance_1d(a.data() + base, b.data() + base, s.x, 1, spacing.x, v, z);
        }
    }
    for (std::int64_t k = 0; k < s.z; ++k) {
        for (std::int64_t i = 0; i < s.x; ++i) {
            const auto base = static_cast<std::size_t>(i + s.x * s.y * k);
            distance_1d(b.data() + base, a.data() + base, s.y, s.x, spacing.y, v, z);
        }
    }
    for (std::int64_t j = 0; j < s.y; ++j) {
        for (std::int64_t i = 0; i < s.x; ++i) {
            const auto base = static_cast<std::size_t>(i + s.x * j);
            distance_1d(a.data() + base, b.data() + base, s.z, s.x * s.y, spacing.z, v, z);
        }
    }
    return b;
}

double assd(const MaskVolume& pred, const MaskVolume& gt, const Spacing3& spacing) {
    require_same_shape(pred, gt, "assd");
    const auto nonempty = [](const MaskVolume& m) {
        return std::any_of(m.raw().begin(), m.raw().end(), [](std::uint8_t v) { return v != 0; });
    };
    if (!nonempty(pred) || !nonempty(gt)) throw EmptyMaskError();

    const MaskVolume sp = surface(pred);
    const MaskVolume sg = surface(gt);
    const double pred_to_gt = mean_distance(sp, squared_distance_transform(sg, spacing));
    const double gt_to_pred = mean_distance(sg, squared_distance_transform(sp, spacing));
    return 0.5 * (pred_to_gt + gt_to_pred);
}

MaskVolume binarize(const FloatVolume& probability, double threshold) {
    MaskVolume m(probability.shape());
    for (std::size_t i = 0; i < probability.size(); ++i) m[i] = probability[i] >= threshold ? 1 : 0;
    return m;
}

std::string subset_label(std::span<const std::string> subset) {
    std::string out;
    for (const auto& m : subset) {
        if (!out.empty()) out += '+';
        out += m;
    }
    return out;
}

namespace {

std::vector<std::string> present_modalities(const CaseSample& s, const ModalityRegistry& registry) {
    std::vector<std::string> out;
    for (std::size_t c = 0; c < s.channels(); ++c) {
        if (s.presence[c]) out.push_back(registry.name(c));
    }
    return out;
}

}  // namespace

CaseMetrics evaluate_case(const Predictor& predict, const CaseSample& sample, const ModalityRegistry& registry,
                          double threshold) {
    const FloatVolume prob = predict(sample);
    if (!(prob.shape() == sample.shape)) {
        throw std::runtime_error("predictor returned shape " + prob.shape().str() + " for input " + sample.shape.str());
    }
    const MaskVolume pred = binarize(prob, threshold);
    CaseMetrics m;
    m.database_id = sample.database_id;
    m.case_id = sample.case_id;
    m.subset = present_modalities(sample, registry);
    m.dice = dice(pred, sample.label);
    const auto sp = sensitivity_precision(pred, sample.label);
    m.sensitivity = sp.sensitivity;
    m.precision = sp.precision;
    try {
        m.assd_mm = assd(pred, sample.label, sample.spacing);
    } catch (const EmptyMaskError&) {
        m.assd_mm.reset();
    }
    return m;
}

void summarize(MetricsReport& report, bool include_full_in_drop) {
    report.groups.clear();
    std::map<std::pair<std::string, std::string>, std::size_t> index;
    struct Acc {
        double dice = 0, sens = 0, prec = 0, assd = 0;
        std::size_t n = 0, n_assd = 0;
    };
    std::vector<Acc> acc;
    for (const auto& r : report.records) {
        const auto key = std::pair{r.database_id, subset_label(r.subset)};
        auto [it, inserted] = index.emplace(key, report.groups.size());
        if (inserted) {
            GroupSummary g;
            g.database_id = r.database_id;
            g.subset = r.subset;
            report.groups.push_back(g);
            acc.emplace_back();
        }
        Acc& a = acc[it->second];
        a.dice += r.dice;
        a.sens += r.sensitivity;
        a.prec += r.precision;
        ++a.n;
        if (r.assd_mm) {
            a.assd += *r.assd_mm;
            ++a.n_assd;
        }
    }
    for (std::size_t i = 0; i < report.groups.size(); ++i) {
        auto& g = report.groups[i];
        const Acc& a = acc[i];
        g.cases = a.n;
        g.mean_dice = a.dice / static_cast<double>(a.n);
        g.mean_sensitivity = a.sens / static_cast<double>(a.n);
        g.mean_precision = a.prec / static_cast<double>(a.n);
        g.assd_excluded = a.n - a.n_assd;
        if (a.n_assd > 0) g.mean_assd_mm = a.assd / static_cast<double>(a.n_assd);
    }

    // The full subset of a database is its widest group.
    std::map<std::string, std::size_t> full;
    for (std::size_t i = 0; i < report.groups.size(); ++i) {
        const auto& g = report.groups[i];
        auto it = full.find(g.database_id);
        if (it == full.end() || report.groups[it->second].subset.size() < g.subset.size()) full[g.database_id] = i;
    }
    double drop_sum = 0.0;
    std::size_t drop_n = 0;
    bool any_sweep = false;
    for (std::size_t i = 0; i < report.groups.size(); ++i) {
        auto& g = report.groups[i];
        const auto& ref = report.groups[full[g.database_id]];
        g.dice_drop = g.mean_dice - ref.mean_dice;
        const bool is_full = i == full[g.database_id];
        if (!is_full) any_sweep = true;
        if (!is_full || include_full_in_drop) {
            drop_sum += *g.dice_drop;
            ++drop_n;
        }
    }
    report.mean_dice_drop.reset();
    if (any_sweep && drop_n > 0) report.mean_dice_drop = drop_sum / static_cast<double>(drop_n);

    double d = 0, s = 0, p = 0, as = 0;
    std::size_t n_assd = 0;
    for (const auto& r : report.records) {
        d += r.dice;
        s += r.sensitivity;
        p += r.precision;
        if (r.assd_mm) {
            as += *r.assd_mm;
            ++n_assd;
        }
    }
    const auto n = static_cast<double>(std::max<std::size_t>(report.records.size(), 1));
    report.grand_mean_dice = d / n;
    report.grand_mean_sensitivity = s / n;
    report.grand_mean_precision = p / n;
    report.assd_excluded = report.records.size() - n_assd;
    report.grand_mean_assd_mm.reset();
    if (n_assd > 0) report.grand_mean_assd_mm = as / static_cast<double>(n_assd);
}

MetricsReport evaluate(const Predictor& predict, std::span<const CaseSample> samples, const ModalityRegistry& registry,
                       const std::optional<std::vector<std::string>>& modalities, double threshold) {
    MetricsReport report;
    for (const auto& s : samples) {
        if (modalities) {
            for (const auto& m : *modalities) {
                if (!s.presence.at(registry.channel_of(m))) {
                    throw DataError(s.database_id + "/" + s.case_id + ": requested modality '" + m +
                                    "' is not available");
                }
            }
            report.records.push_back(evaluate_case(predict, restrict_modalities(s, registry, *modalities), registry,
                                                   threshold));
        } else {
            report.records.push_back(evaluate_case(predict, s, registry, threshold));
        }
    }
    summarize(report);
    return report;
}

MetricsReport subset_sweep(const Predictor& predict, std::span<const CaseSample> samples,
                           const ModalityRegistry& registry, const SweepOptions& options) {
    MetricsReport report;
    for (const auto& s : samples) {
        const auto present = present_modalities(s, registry);
        if (present.size() > options.max_modalities) {
            throw std::invalid_argument("subset_sweep: " + s.database_id + " has " + std::to_string(present.size()) +
                                        " modalities, above the sweep limit of " +
                                        std::to_string(options.max_modalities));
        }
        const std::size_t k = present.size();
        const std::size_t full_mask = (std::size_t{1} << k) - 1;
        // Full set first so it matches plain evaluation record order.
        for (std::size_t bits = full_mask; bits >= 1; --bits) {
            std::vector<std::string> keep;
            for (std::size_t i = 0; i < k; ++i) {
                if (bits & (std::size_t{1} << i)) keep.push_back(present[i]);
            }
            const CaseSample input = bits == full_mask ? s : restrict_modalities(s, registry, keep);
            report.records.push_back(evaluate_case(predict, input, registry, options.threshold));
        }
    }
    summarize(report, options.include_full_in_drop);
    // Single-modality databases have nothing to drop.
    if (!report.mean_dice_drop) report.mean_dice_drop = 0.0;
    return report;
}

void write_csv(const std::filesystem::path& path, const MetricsReport& report) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "database_id,case_id,subset,dice,sensitivity,precision,assd_mm\n";
    out << std::setprecision(17);
    for (const auto& r : report.records) {
        out << r.database_id << ',' << r.case_id << ',' << subset_label(r.subset) << ',' << r.dice << ','
            << r.sensitivity << ',' << r.precision << ',';
        if (r.assd_mm) out << *r.assd_mm;
        out << '\n';
    }
}

nlohmann::json summary_json(const MetricsReport& report) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& g : report.groups) {
        groups.push_back({{"database_id", g.database_id},
                          {"subset", g.subset},
                          {"cases", g.cases},
                          {"mean_dice", g.mean_dice},
                          {"mean_sensitivity", g.mean_sensitivity},
                          {"mean_precision", g.mean_precision},
                          {"mean_assd_mm", opt(g.mean_assd_mm)},
                          {"assd_excluded", g.assd_excluded},
                          {"dice_drop", opt(g.dice_drop)}});
    }
    return {{"records", report.records.size()},
            {"grand_mean_dice", report.grand_mean_dice},
            {"grand_mean_sensitivity", report.grand_mean_sensitivity},
            {"grand_mean_precision", report.grand_mean_precision},
            {"grand_mean_assd_mm", opt(report.grand_mean_assd_mm)},
            {"assd_excluded", report.assd_excluded},
            {"mean_dice_drop", opt(report.mean_dice_drop)},
            {"groups", groups}};
}

namespace {

std::optional<RunStat> run_stat(const std::vector<double>& v) {
    if (v.empty()) return std::nullopt;
    RunStat s;
    s.runs = v.size();
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return s;
}

}  // namespace

RunAverage average_runs(std::span<const MetricsReport> reports) {
    if (reports.empty()) throw std::invalid_argument("average_runs: no reports");
    std::vector<double> dice, sens, prec, assd, drop;
    for (const auto& r : reports) {
        dice.push_back(r.grand_mean_dice);
        sens.push_back(r.grand_mean_sensitivity);
        prec.push_back(r.grand_mean_precision);
        if (r.grand_mean_assd_mm) assd.push_back(*r.grand_mean_assd_mm);
        if (r.mean_dice_drop) drop.push_back(*r.mean_dice_drop);
    }
    RunAverage a;
    a.runs = reports.size();
    a.dice = *run_stat(dice);
    a.sensitivity = *run_stat(sens);
    a.precision = *run_stat(prec);
    a.assd_mm = run_stat(assd);
    a.dice_drop = run_stat(drop);
    return a;
}

nlohmann::json to_json(const RunAverage& avg) {
    auto stat = [](const std::optional<RunStat>& s) -> nlohmann::json {
        if (!s) return nullptr;
        return {{"mean", s->mean}, {"stddev", s->stddev}, {"runs", s->runs}};
    };
    return {{"runs", avg.runs},
            {"dice", stat(avg.dice)},
            {"sensitivity", stat(avg.sensitivity)},
            {"precision", stat(avg.precision)},
            {"assd_mm", stat(avg.assd_mm)},
            {"dice_drop", stat(avg.dice_drop)}};
}

void write_summary_json(const std::filesystem::path& path, const MetricsReport& report) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << summary_json(report).dump(2) << '\n';
}

}  // namespace hetseg
