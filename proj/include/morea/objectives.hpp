#pragma once

// The three registration objectives with per-tet caching for partial
// (gray-box) re-evaluation.

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "morea/mesh.hpp"
#include "morea/volume.hpp"

namespace morea {

struct ObjectiveVector {
    double magnitude = 0.0;
    double intensity = 0.0;
    double guidance = 0.0;

    double operator[](std::size_t i) const { return i == 0 ? magnitude : (i == 1 ? intensity : guidance); }
    bool operator==(const ObjectiveVector &) const = default;
};

inline constexpr std::size_t kNumObjectives = 3;

/// a dominates b (minimization): no worse everywhere, better somewhere.
bool dominates(const ObjectiveVector &a, const ObjectiveVector &b);
bool weakly_dominates(const ObjectiveVector &a, const ObjectiveVector &b);

/// Foreground/background aware squared difference.
inline double h_intensity(double a, double b) {
    const bool fa = a > 0.0;
    const bool fb = b > 0.0;
    if (fa && fb) return (a - b) * (a - b);
    if (!fa && !fb) return 0.0;
    return 1.0;
}

/// Number of samples for a tet of the given volume.
int tet_sample_count(double tet_volume_mm3, double sampling_rate, double voxel_volume_mm3);

/// Barycentric sample weights for a tet, seeded by its quantized vertex
/// coordinates. Throws DataError for a degenerate tet.
std::vector<std::array<double, 4>> sample_tet_points(const std::array<Vec3, 4> &tet, double sampling_rate,
                                                     double voxel_volume_mm3);

enum class MagnitudeMetric { Biomechanical, Homogeneous };

struct ElasticityMap {
    std::vector<double> factors;
    std::map<std::string, double> label_factors;
};

/// Per-tet c = sum(fraction_obj * factor_obj) + (1 - sum fraction) * 1.0, with
/// fractions measured on the tet's own source-side samples. A sample counts
/// toward the first configured mask containing it.
ElasticityMap compute_elasticity_factors(const DualMeshGenotype &g, std::span<const LabelMask> masks,
                                         const std::map<std::string, double> &label_factors, double sampling_rate,
                                         double voxel_volume_mm3);
ElasticityMap homogeneous_elasticity(std::size_t num_tets);

struct GuidanceField {
    double radius_mm = 0.0;
    struct Pair {
        std::string label;
        DistanceMap source;
        DistanceMap target;
        double source_weight = 0.0;
        double target_weight = 0.0;
    };
    std::vector<Pair> pairs;
};

/// Distance maps of every pair on both sides; r = 0.025 * source x-extent.
GuidanceField build_guidance_field(const GuidanceSet &guidance, const Geometry &source_geometry,
                                   const Geometry &target_geometry);

/// Both images mapped to [0, 1] with their joint minimum and maximum.
void normalize_intensities(Volume &source, Volume &target);

/// Contribution of one tet. Samples of both sides are counted separately.
struct TetTerms {
    double magnitude = 0.0;
    double intensity = 0.0;
    double guidance = 0.0;
    std::int64_t samples = 0;
};

struct Accumulators {
    std::vector<TetTerms> per_tet;
    double magnitude = 0.0;
    double intensity = 0.0;
    double guidance = 0.0;
    std::int64_t samples = 0;

    ObjectiveVector objectives() const;
};

class Evaluator {
  public:
    /// Images must already be normalized.
    Evaluator(const Volume &source, const Volume &target, const GuidanceField &guidance, ElasticityMap elasticity,
              double sampling_rate);

    TetTerms evaluate_tet(const DualMeshGenotype &g, std::size_t t) const;
    /// Terms of the given tets, in the given order.
    std::vector<TetTerms> evaluate_tets(const DualMeshGenotype &g, std::span<const int> tets) const;

    /// Raw sums over a tet subset (not normalized).
    TetTerms partial_sums(const DualMeshGenotype &g, std::span<const int> tets) const;

    Accumulators initialize(const DualMeshGenotype &g) const;
    ObjectiveVector full_evaluate(const DualMeshGenotype &g) const;

    /// Objectives after replacing the cached terms of `tets` with `fresh`,
    /// without modifying `acc`.
    ObjectiveVector preview(const Accumulators &acc, std::span<const int> tets, std::span<const TetTerms> fresh) const;
    void apply(Accumulators &acc, std::span<const int> tets, std::span<const TetTerms> fresh) const;
    /// Re-evaluates `tets` against the moved genotype and updates `acc`.
    ObjectiveVector partial_update(const DualMeshGenotype &g, Accumulators &acc, std::span<const int> tets) const;
    /// Recomputes the totals from the per-tet cache (order independent).
    void resync(Accumulators &acc) const;

    double sampling_rate() const { return rate_; }
    double voxel_volume() const { return voxel_volume_; }
    const ElasticityMap &elasticity() const { return elasticity_; }

  private:
    const Volume *source_;
    const Volume *target_;
    const GuidanceField *guidance_;
    ElasticityMap elasticity_;
    double rate_;
    double voxel_volume_;
    /// Distance maps sit on the image grids, so one stencil serves all lookups.
    bool shared_grids_ = false;
};

} // namespace morea
