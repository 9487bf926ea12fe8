#pragma once

// Dual-dynamic tetrahedral genotype: one topology, two coordinate sets.

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "morea/vec3.hpp"
#include "morea/volume.hpp"

namespace morea {

using Tet = std::array<int, 4>;

enum class Side { Source, Target };
enum class Direction { Forward, Inverse };

inline Side from_side(Direction d) { return d == Direction::Forward ? Side::Source : Side::Target; }
inline Side to_side(Direction d) { return d == Direction::Forward ? Side::Target : Side::Source; }
const char *side_name(Side s);
const char *direction_name(Direction d);

/// Vertex pairs of the six tetrahedron edges.
inline constexpr std::array<std::array<int, 2>, 6> kTetEdges{{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};

/// Local vertex indices of the face opposite vertex i.
inline constexpr std::array<std::array<int, 3>, 4> kTetFaces{{{1, 2, 3}, {0, 3, 2}, {0, 1, 3}, {0, 2, 1}}};

class TetTopology {
  public:
    TetTopology() = default;
    /// Validates indices and derives per-point incidence and face adjacency.
    TetTopology(int num_points, std::vector<Tet> tets);

    int num_points() const { return num_points_; }
    std::size_t num_tets() const { return tets_.size(); }
    const std::vector<Tet> &tets() const { return tets_; }
    const Tet &tet(std::size_t t) const { return tets_[t]; }

    /// Tets using point p, ascending.
    std::span<const int> incident(int p) const {
        const auto b = static_cast<std::size_t>(incident_offsets_[static_cast<std::size_t>(p)]);
        const auto e = static_cast<std::size_t>(incident_offsets_[static_cast<std::size_t>(p) + 1]);
        return {incident_.data() + b, e - b};
    }
    /// Neighbor across the face opposite local vertex i, or -1 on the hull.
    int neighbor(std::size_t t, int i) const { return neighbors_[t][static_cast<std::size_t>(i)]; }

    /// Unique vertex-vertex edges as (a, b) with a < b, sorted.
    std::vector<std::array<int, 2>> unique_edges() const;

  private:
    int num_points_ = 0;
    std::vector<Tet> tets_;
    std::vector<int> incident_offsets_;
    std::vector<int> incident_;
    std::vector<std::array<int, 4>> neighbors_;
};

double signed_volume(const Vec3 &p0, const Vec3 &p1, const Vec3 &p2, const Vec3 &p3);

/// Lengths of the 6 vertex-vertex edges followed by the 4 spokes (vertex to
/// the centroid of its opposite face).
std::array<double, 10> tet_edge_lengths(const Vec3 &p0, const Vec3 &p1, const Vec3 &p2, const Vec3 &p3);

struct DualMeshGenotype {
    std::shared_ptr<const TetTopology> topology;
    std::vector<Vec3> source;
    std::vector<Vec3> target;

    std::size_t num_points() const { return source.size(); }
    std::vector<Vec3> &coords(Side s) { return s == Side::Source ? source : target; }
    const std::vector<Vec3> &coords(Side s) const { return s == Side::Source ? source : target; }

    std::array<Vec3, 4> tet_points(Side s, std::size_t t) const {
        const auto &c = coords(s);
        const Tet &v = topology->tet(t);
        return {c[static_cast<std::size_t>(v[0])], c[static_cast<std::size_t>(v[1])],
                c[static_cast<std::size_t>(v[2])], c[static_cast<std::size_t>(v[3])]};
    }
    double tet_volume(Side s, std::size_t t) const {
        const auto p = tet_points(s, t);
        return signed_volume(p[0], p[1], p[2], p[3]);
    }
};

/// Both meshes start from the same coordinates.
DualMeshGenotype make_identity_genotype(std::shared_ptr<const TetTopology> topology, std::vector<Vec3> points);

struct ReferenceSigns {
    std::vector<std::int8_t> source;
    std::vector<std::int8_t> target;

    std::int8_t sign(Side s, std::size_t t) const { return s == Side::Source ? source[t] : target[t]; }
};

/// Throws DataError if any tet is degenerate in the given configuration.
ReferenceSigns compute_reference_signs(const DualMeshGenotype &g);

struct FoldViolation {
    int tet = 0;
    double severity = 0.0;
};

/// True when the tet's current orientation disagrees with its reference sign.
/// A zero volume always counts as a violation.
inline bool violates(double volume, std::int8_t reference) {
    return reference > 0 ? !(volume > 0.0) : !(volume < 0.0);
}

std::vector<FoldViolation> detect_folds(const DualMeshGenotype &g, Side side, const ReferenceSigns &ref);
std::vector<FoldViolation> detect_folds(const DualMeshGenotype &g, Side side, const ReferenceSigns &ref,
                                        std::span<const int> tets);
bool fold_free(const DualMeshGenotype &g, const ReferenceSigns &ref);

/// Weights (w0..w3) with w0 + w1 + w2 + w3 = 1 and sum(w_i p_i) = p.
/// Throws DataError for a degenerate tet.
std::array<double, 4> barycentric_coords(const std::array<Vec3, 4> &tet, const Vec3 &p);

inline constexpr double kInsideTolerance = 1e-9;

/// Point location on one side of a genotype: tet walk from the previous hit
/// with a bucketed exhaustive fallback. Not thread-safe (keeps a walk hint).
class PointLocator {
  public:
    PointLocator(const DualMeshGenotype &g, Side side);

    std::optional<int> locate(const Vec3 &p);
    /// Exhaustive scan in tet order; the reference the fast path is tested against.
    std::optional<int> locate_brute_force(const Vec3 &p) const;

    /// Weights of p in the given tet on this side.
    std::array<double, 4> weights(int tet, const Vec3 &p) const;

  private:
    bool contains(int tet, const Vec3 &p, std::array<double, 4> &w) const;
    std::optional<int> walk(int start, const Vec3 &p);
    std::optional<int> bucket_search(const Vec3 &p) const;

    const DualMeshGenotype *g_;
    Side side_;
    int hint_ = 0;
    Vec3 lo_;
    Vec3 cell_;
    std::array<int, 3> res_{1, 1, 1};
    std::vector<int> bucket_offsets_;
    std::vector<int> bucket_tets_;
};

std::optional<Vec3> try_transform_point(const DualMeshGenotype &g, PointLocator &from_side, const Vec3 &p,
                                        Direction direction);
/// Throws DataError if p lies outside the from-side hull.
Vec3 transform_point(const DualMeshGenotype &g, const Vec3 &p, Direction direction);

struct DeformationVectorField : Grid<Vec3> {
    Direction direction = Direction::Forward;
    LabelMask coverage;

    DeformationVectorField() = default;
    DeformationVectorField(const Geometry &g, Direction d)
        : Grid<Vec3>(g, Vec3{}), direction(d), coverage(g, "coverage") {}
};

/// Displacement `transform_point(c) - c` at every voxel center c; voxels
/// outside the from-side hull get zero displacement and coverage 0.
DeformationVectorField rasterize_dvf(const DualMeshGenotype &g, Direction direction, const Geometry &geometry);

void save_dvf(const std::filesystem::path &path, const DeformationVectorField &dvf);
DeformationVectorField load_dvf(const std::filesystem::path &path);
/// Path of the coverage-mask sidecar written next to a DVF.
std::filesystem::path dvf_coverage_path(const std::filesystem::path &path);

void save_genotype(const std::filesystem::path &path, const DualMeshGenotype &g);
DualMeshGenotype load_genotype(const std::filesystem::path &path);

} // namespace morea
