#pragma once

// Registration quality metrics: Dice, (percentile) Hausdorff distance,
// landmark error, with a border margin discarded first.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "morea/mesh.hpp"
#include "morea/volume.hpp"

namespace morea {

inline constexpr double kDefaultMetricMarginMm = 15.0;

/// 2|A n B| / (|A| + |B|); 1 when both masks are empty.
double dice(const LabelMask &a, const LabelMask &b);

/// Symmetric percentile Hausdorff distance (mm). `percentile` in (0, 100];
/// per direction the nearest-rank percentile of the minimal distances is taken.
double hausdorff(std::span<const Vec3> a, std::span<const Vec3> b, double percentile = 100.0);

/// Centers of foreground voxels with a background (or out-of-grid) 6-neighbor.
std::vector<Vec3> surface_points_from_mask(const LabelMask &m);

/// Backward warp: out(v) = m(v + inverse(v)), nearest-neighbor.
LabelMask warp_mask(const LabelMask &m, const DeformationVectorField &inverse);

struct LandmarkStats {
    double mean_mm = 0.0;
    double sd_mm = 0.0;
    std::vector<double> per_pair_mm;
};

/// Distance between each forward-transformed source landmark and its target.
LandmarkStats landmark_error(std::span<const LandmarkPair> pairs, const DualMeshGenotype &g);
/// Same, with source landmarks moved by a trilinearly sampled forward DVF.
LandmarkStats landmark_error(std::span<const LandmarkPair> pairs, const DeformationVectorField &forward);

/// Trilinear sample of a vector field, clamped to the grid.
Vec3 sample_dvf(const DeformationVectorField &dvf, const Vec3 &p);

struct LabelMetrics {
    std::string label;
    double dice = 0.0;
    /// Empty when either cropped mask has no foreground.
    std::optional<double> hausdorff_mm;
    std::optional<double> hausdorff95_mm;
};

struct MetricReport {
    double margin_mm = kDefaultMetricMarginMm;
    std::vector<LabelMetrics> labels;
    std::optional<LandmarkStats> landmarks;
    /// Mean and 95th percentile of the DVF error against an analytic field.
    std::optional<double> dvf_error_mean_mm;
    std::optional<double> dvf_error_p95_mm;
};

/// Metrics of one predicted/reference mask pair after cropping both by `margin_mm`.
LabelMetrics compare_masks(const LabelMask &predicted, const LabelMask &reference, double margin_mm);

void save_report_json(const std::filesystem::path &path, const MetricReport &r);
void save_report_csv(const std::filesystem::path &path, const MetricReport &r);

} // namespace morea
