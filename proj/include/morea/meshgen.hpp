#pragma once

// Initial mesh construction: point placement, Marching Cubes surface points
// and Bowyer-Watson Delaunay tetrahedralization.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "morea/mesh.hpp"
#include "morea/volume.hpp"

namespace morea {

enum class PlacementMethod { Random, Contours };

struct PointPlacementConfig {
    PlacementMethod method = PlacementMethod::Contours;
    int total_points = 600;
    /// Share of total_points placed by the Sobol sequence instead of on contours.
    double random_fraction = 0.1;
    /// Relative contour budget per guidance label; missing labels weigh 1.
    std::map<std::string, double> allocation_weights;
    std::optional<std::string> surface_object;
    int surface_points = 60;
    double bbox_padding_mm = 30.0;

    void validate() const;
};

/// Indices of a farthest-point-first subset. The first pick is the candidate
/// farthest from the candidates' centroid; ties resolve to the lowest index.
std::vector<std::size_t> farthest_point_subset(std::span<const Vec3> candidates, std::size_t count);

/// Contour points per label plus Sobol-placed random points inside `region`.
std::vector<Vec3> select_contour_points(const GuidanceSet &guidance, const PointPlacementConfig &cfg,
                                        const Geometry &region, std::uint64_t seed);

struct SurfaceMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;

    /// V - E + F over the shared-vertex triangle mesh.
    long euler_characteristic() const;
};

/// Iso-surface of the mask (treated as 0 outside the grid), triangles
/// oriented with normals pointing out of the object.
SurfaceMesh marching_cubes(const LabelMask &mask, double iso = 0.5);

struct Box {
    Vec3 lo;
    Vec3 hi;
};

struct Tetrahedralization {
    /// Input points, possibly jittered by at most 1e-7 mm per coordinate.
    std::vector<Vec3> points;
    /// Positively oriented tets.
    std::vector<Tet> tets;
    bool perturbed = false;
};

/// Bowyer-Watson over `points`; with a bbox its 8 corners are appended first.
Tetrahedralization delaunay_tetrahedralize(std::span<const Vec3> points, const std::optional<Box> &bbox = std::nullopt);

struct InitialMesh {
    DualMeshGenotype genotype;
    ReferenceSigns signs;
    std::size_t placed_points = 0;
    std::size_t surface_points = 0;
};

/// Mesh covering the image region grown by cfg.bbox_padding_mm on every side.
InitialMesh build_initial_genotype(const Geometry &geometry, const GuidanceSet &guidance,
                                   std::span<const LabelMask> masks, const PointPlacementConfig &cfg,
                                   std::uint64_t seed);

} // namespace morea
