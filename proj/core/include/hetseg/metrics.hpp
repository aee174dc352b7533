// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hetseg/dataset.hpp"
#include "hetseg/modality_registry.hpp"
#include "hetseg/volume.hpp"

namespace hetseg {

/// ASSD is undefined when either mask has no foreground.
class EmptyMaskError : public std::domain_error {
public:
    EmptyMaskError() : std::domain_error("assd: empty mask") {}
};

struct Confusion {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;
};

[[nodiscard]] Confusion confusion(const MaskVolume& pred, const MaskVolume& gt);

/// 2|P∩G| / (|P|+|G|); 1 when both masks are empty.
[[nodiscard]] double dice(const MaskVolume& pred, const MaskVolume& gt);

struct SensitivityPrecision {
    double sensitivity;
    double precision;
};

/// TP/(TP+FN) and TP/(TP+FP); an empty ground truth gives sensitivity 1, an
/// empty prediction gives precision 1.
[[nodiscard]] SensitivityPrecision sensitivity_precision(const MaskVolume& pred, const MaskVolume& gt);

/// Foreground voxels with a background 6-neighbour; the volume border counts
/// as background.
[[nodiscard]] MaskVolume surface(const MaskVolume& mask);

/// Exact squared Euclidean distance (mm^2) from every voxel to the nearest
/// nonzero voxel of `seeds`; +inf everywhere if `seeds` is empty.
[[nodiscard]] std::vector<double> squared_distance_transform(const MaskVolume& seeds, const Spacing3& spacing);

/// Average symmetric surface distance in mm: the mean of the two directed
/// mean nearest-surface distances. Throws EmptyMaskError.
[[nodiscard]] double assd(const MaskVolume& pred, const MaskVolume& gt, const Spacing3& spacing);

[[nodiscard]] MaskVolume binarize(const FloatVolume& probability, double threshold = 0.5);

struct CaseMetrics {
    std::string database_id;
    std::string case_id;
    std::vector<std::string> subset;
    double dice = 0.0;
    double sensitivity = 0.0;
    double precision = 0.0;
    std::optional<double> assd_mm;
};

struct GroupSummary {
    std::string database_id;
    std::vector<std::string> subset;
    std::size_t cases = 0;
    double mean_dice = 0.0;
    double mean_sensitivity = 0.0;
    double mean_precision = 0.0;
    std::optional<double> mean_assd_mm;
    std::size_t assd_excluded = 0;
    /// mean_dice minus the same database's full-subset mean_dice.
    std::optional<double> dice_drop;
};

struct MetricsReport {
    std::vector<CaseMetrics> records;
    /// One entry per (database, subset), in first-appearance order.
    std::vector<GroupSummary> groups;
    double grand_mean_dice = 0.0;
    double grand_mean_sensitivity = 0.0;
    double grand_mean_precision = 0.0;
    std::optional<double> grand_mean_assd_mm;
    std::size_t assd_excluded = 0;
    /// Mean of dice_drop over every (database, dropped-subset) group; 0 when
    /// no database has a proper subset.
    std::optional<double> mean_dice_drop;
};

/// Recomputes groups and aggregates from `report.records`. Proper subsets
/// only enter mean_dice_drop unless include_full_in_drop is set.
void summarize(MetricsReport& report, bool include_full_in_drop = false);

/// Maps a sample (absent channels zero) to a lesion probability map.
using Predictor = std::function<FloatVolume(const CaseSample&)>;

CaseMetrics evaluate_case(const Predictor& predict, const CaseSample& sample, const ModalityRegistry& registry,
                          double threshold = 0.5);

/// Evaluates every sample as given, or restricted to `modalities` when set
/// (every other channel blanked).
MetricsReport evaluate(const Predictor& predict, std::span<const CaseSample> samples, const ModalityRegistry& registry,
                       const std::optional<std::vector<std::string>>& modalities = std::nullopt,
                       double threshold = 0.5);

struct SweepOptions {
    std::size_t max_modalities = 6;
    bool include_full_in_drop = false;
    double threshold = 0.5;
};

/// Evaluates every non-empty subset of each sample's present modalities
/// (2^k - 1 runs for k modalities) and reports the Dice drop against the
/// full set. Throws std::invalid_argument when k exceeds max_modalities.
MetricsReport subset_sweep(const Predictor& predict, std::span<const CaseSample> samples,
                           const ModalityRegistry& registry, const SweepOptions& options = {});

/// "FLAIR+T1" style label.
[[nodiscard]] std::string subset_label(std::span<const std::string> subset);

/// Mean and sample standard deviation (0 for a single value).
struct RunStat {
    double mean = 0.0;
    double stddev = 0.0;
    std::size_t runs = 0;
};

/// Aggregates of several runs (e.g. seeds) of the same protocol. Each run
/// contributes its grand means once; optional aggregates average over the
/// runs that have them.
struct RunAverage {
    std::size_t runs = 0;
    RunStat dice, sensitivity, precision;
    std::optional<RunStat> assd_mm, dice_drop;
};

/// Throws std::invalid_argument on an empty list.
[[nodiscard]] RunAverage average_runs(std::span<const MetricsReport> reports);
[[nodiscard]] nlohmann::json to_json(const RunAverage& avg);

void write_csv(const std::filesystem::path& path, const MetricsReport& report);
[[nodiscard]] nlohmann::json summary_json(const MetricsReport& report);
void write_summary_json(const std::filesystem::path& path, const MetricsReport& report);

}  // namespace hetseg
