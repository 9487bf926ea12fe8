#pragma once

// Synthetic registration problems with an analytic radial deformation, and
// the on-disk problem bundle shared with real data.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "morea/mesh.hpp"
#include "morea/volume.hpp"

namespace morea {

/// Radial map about `center`: the sphere of radius r0 goes to radius r1
/// (uniform scaling inside), a cubic Hermite blend up to `falloff`, identity beyond.
struct RadialField {
    Vec3 center;
    double r0 = 30.0;
    double r1 = 21.0;
    double falloff = 40.0;

    /// Throws ConfigError unless 0 < r1 < r0 < falloff and the map is monotone.
    void validate() const;
    /// Radius after the map.
    double radial(double r) const;
    double radial_derivative(double r) const;
    double radial_inverse(double rho) const;
    Vec3 forward(const Vec3 &x) const;
    Vec3 inverse(const Vec3 &y) const;
    Vec3 displacement(const Vec3 &x) const { return forward(x) - x; }
};

enum class ShapeKind { Ball, Ellipsoid, Box };

struct SynthObject {
    std::string label;
    ShapeKind shape = ShapeKind::Ball;
    Vec3 center;
    /// Radius (ball, x component), semi-axes (ellipsoid) or half-extents (box), mm.
    Vec3 size;
    double intensity = 0.5;
    double elasticity = 1.0;
    bool guidance = true;

    bool contains(const Vec3 &p) const;
};

struct SynthSpec {
    Geometry geometry;
    /// Painted in order; later objects cover earlier ones.
    std::vector<SynthObject> objects;
    RadialField field;
    /// Fraction of surface voxels kept as guidance points.
    double guidance_density = 1.0;
    int landmark_count = 10;
    /// Landmarks are drawn where the analytic displacement is at most this large.
    double landmark_max_displacement_mm = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// 64^3 at 1.5 mm: body ellipsoid, bowel ellipsoid, shrinking "bladder" ball
/// (20 -> 14 voxels) and a rigid "bone" box outside the deformation.
SynthSpec default_synth_spec();

struct ProblemBundle {
    Volume source;
    Volume target;
    std::vector<LabelMask> source_masks;
    std::vector<LabelMask> target_masks;
    GuidanceSet guidance;
    std::vector<LandmarkPair> landmarks;
    std::map<std::string, double> elasticity;
    std::optional<RadialField> field;
    std::optional<DeformationVectorField> truth_forward;
    std::optional<DeformationVectorField> truth_inverse;

    const LabelMask *source_mask(const std::string &label) const;
    const LabelMask *target_mask(const std::string &label) const;
};

ProblemBundle generate_case(const SynthSpec &spec);

/// Analytic field sampled at voxel centers (coverage everywhere).
DeformationVectorField sample_radial_field(const RadialField &f, const Geometry &g, Direction d);

/// Smallest Jacobian determinant of the forward map over the voxel grid
/// (central differences).
double min_jacobian_determinant(const RadialField &f, const Geometry &g);

struct DvfError {
    double mean_mm = 0.0;
    double p95_mm = 0.0;
    std::size_t voxels = 0;
};

/// |dvf - analytic| over covered voxels of the interior left after removing `margin_mm`.
DvfError analytic_dvf_error(const DeformationVectorField &dvf, const RadialField &f, double margin_mm = 15.0);

void save_synth_spec(const std::filesystem::path &path, const SynthSpec &spec);
SynthSpec load_synth_spec(const std::filesystem::path &path);

/// Directory layout: problem.json manifest plus volumes, masks, guidance,
/// landmarks and (optionally) the analytic field.
void save_problem(const std::filesystem::path &dir, const ProblemBundle &p);
ProblemBundle load_problem(const std::filesystem::path &dir);

} // namespace morea
