#pragma once

// Scalar volumes, binary masks, distance maps and the on-disk volume format.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "morea/vec3.hpp"

namespace morea {

/// Voxel lattice description shared by every grid-valued type.
///
/// World coordinates follow `point_mm = origin_mm + index * spacing_mm`, so the
/// origin is the center of voxel (0,0,0). Data is stored x-fastest.
struct Geometry {
    std::array<int, 3> dims{1, 1, 1};
    Vec3 spacing_mm{1.0, 1.0, 1.0};
    Vec3 origin_mm{0.0, 0.0, 0.0};

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
               static_cast<std::size_t>(dims[2]);
    }
    std::size_t index(int i, int j, int k) const {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(dims[0]) *
                   (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(k));
    }
    std::array<int, 3> unravel(std::size_t idx) const {
        const auto nx = static_cast<std::size_t>(dims[0]);
        const auto ny = static_cast<std::size_t>(dims[1]);
        return {static_cast<int>(idx % nx), static_cast<int>((idx / nx) % ny), static_cast<int>(idx / (nx * ny))};
    }
    Vec3 world(int i, int j, int k) const {
        return {origin_mm.x + i * spacing_mm.x, origin_mm.y + j * spacing_mm.y, origin_mm.z + k * spacing_mm.z};
    }
    Vec3 continuous_index(const Vec3 &p) const {
        return {(p.x - origin_mm.x) / spacing_mm.x, (p.y - origin_mm.y) / spacing_mm.y,
                (p.z - origin_mm.z) / spacing_mm.z};
    }
    /// Physical size of the sampled region (voxel count times spacing per axis).
    Vec3 extent_mm() const { return {dims[0] * spacing_mm.x, dims[1] * spacing_mm.y, dims[2] * spacing_mm.z}; }
    /// Axis-aligned box spanned by the voxel centers.
    Vec3 lower_mm() const { return origin_mm; }
    Vec3 upper_mm() const { return world(dims[0] - 1, dims[1] - 1, dims[2] - 1); }
    double voxel_volume_mm3() const { return spacing_mm.x * spacing_mm.y * spacing_mm.z; }

    /// Throws DataError on non-positive dims or spacing.
    void validate() const;

    bool operator==(const Geometry &o) const = default;
};

template <class T>
struct Grid {
    Geometry geometry;
    std::vector<T> data;

    Grid() = default;
    explicit Grid(const Geometry &g, T fill = T{}) : geometry(g), data(g.voxel_count(), fill) {}

    T &at(int i, int j, int k) { return data[geometry.index(i, j, k)]; }
    const T &at(int i, int j, int k) const { return data[geometry.index(i, j, k)]; }
};

using Volume = Grid<float>;

struct LabelMask : Grid<std::uint8_t> {
    std::string label;

    LabelMask() = default;
    LabelMask(const Geometry &g, std::string name) : Grid<std::uint8_t>(g, 0), label(std::move(name)) {}

    std::size_t count() const;
};

/// Per-voxel Euclidean distance (mm) to a point set.
using DistanceMap = Grid<double>;

enum class Dtype { F32, U8, I16, F32x3 };

const char *dtype_name(Dtype d);

struct VolumePaths {
    std::filesystem::path header;
    std::filesystem::path payload;
};

/// Accepts `<name>`, `<name>.vol.json` or `<name>.vol.raw` and returns both file paths.
VolumePaths volume_paths(const std::filesystem::path &path);

Volume load_volume(const std::filesystem::path &path);
void save_volume(const std::filesystem::path &path, const Volume &v, Dtype dtype = Dtype::F32);

LabelMask load_mask(const std::filesystem::path &path);
void save_mask(const std::filesystem::path &path, const LabelMask &m);

/// Corner indices and weights of a trilinear lookup; reusable across grids
/// that share one geometry.
struct TrilinearStencil {
    std::size_t idx[8];
    double t[3];

    /// Positions outside the grid clamp to the nearest border voxel.
    TrilinearStencil(const Geometry &g, const Vec3 &p) {
        const Vec3 u = g.continuous_index(p);
        int i0[3];
        int i1[3];
        for (int a = 0; a < 3; ++a) {
            const int n = g.dims[a];
            double c = u[a];
            if (!(c > 0.0)) c = 0.0; // also maps NaN to the border
            if (c > n - 1) c = n - 1;
            int lo = static_cast<int>(c);
            if (lo > n - 2) lo = n > 1 ? n - 2 : 0;
            i0[a] = lo;
            i1[a] = n > 1 ? lo + 1 : lo;
            t[a] = c - lo;
        }
        idx[0] = g.index(i0[0], i0[1], i0[2]);
        idx[1] = g.index(i1[0], i0[1], i0[2]);
        idx[2] = g.index(i0[0], i1[1], i0[2]);
        idx[3] = g.index(i1[0], i1[1], i0[2]);
        idx[4] = g.index(i0[0], i0[1], i1[2]);
        idx[5] = g.index(i1[0], i0[1], i1[2]);
        idx[6] = g.index(i0[0], i1[1], i1[2]);
        idx[7] = g.index(i1[0], i1[1], i1[2]);
    }

    template <class T>
    double apply(const std::vector<T> &d) const {
        const auto at = [&](int c) { return static_cast<double>(d[idx[c]]); };
        const double c00 = at(0) * (1.0 - t[0]) + at(1) * t[0];
        const double c10 = at(2) * (1.0 - t[0]) + at(3) * t[0];
        const double c01 = at(4) * (1.0 - t[0]) + at(5) * t[0];
        const double c11 = at(6) * (1.0 - t[0]) + at(7) * t[0];
        const double c0 = c00 * (1.0 - t[1]) + c10 * t[1];
        const double c1 = c01 * (1.0 - t[1]) + c11 * t[1];
        return c0 * (1.0 - t[2]) + c1 * t[2];
    }
};

/// Trilinear interpolation between voxel centers; positions outside the grid
/// clamp to the nearest border voxel.
template <class T>
inline double trilinear_sample(const Grid<T> &v, const Vec3 &p) {
    return TrilinearStencil(v.geometry, p).apply(v.data);
}

/// Nearest-voxel lookup with the same border clamping.
template <class T>
inline T nearest_sample(const Grid<T> &v, const Vec3 &p) {
    const Geometry &g = v.geometry;
    const Vec3 u = g.continuous_index(p);
    int idx[3];
    for (int a = 0; a < 3; ++a) {
        double c = std::floor(u[a] + 0.5);
        if (!(c > 0.0)) c = 0.0;
        if (c > g.dims[a] - 1) c = g.dims[a] - 1;
        idx[a] = static_cast<int>(c);
    }
    return v.data[g.index(idx[0], idx[1], idx[2])];
}

/// Resamples onto a new spacing that covers the same physical extent.
Volume resample(const Volume &v, const Vec3 &new_spacing_mm);

/// Removes `margin_mm` (rounded to whole voxels) from each side of every axis.
template <class T>
Grid<T> crop_margin(const Grid<T> &v, double margin_mm);
LabelMask crop_margin(const LabelMask &m, double margin_mm);

/// Number of whole voxels dropped per side for a given margin.
std::array<int, 3> margin_voxels(const Geometry &g, double margin_mm);

/// Exact squared distances (mm^2) from every voxel center to the nearest point.
std::vector<double> squared_distance_field(std::span<const Vec3> points, const Geometry &geometry);

DistanceMap distance_map_from_points(std::span<const Vec3> points, const Geometry &geometry);

/// Voxel centers of the mask's foreground, in mm.
std::vector<Vec3> foreground_points(const LabelMask &m);

// Guidance and landmark data -------------------------------------------------

struct GuidancePair {
    std::string label;
    std::vector<Vec3> source_points;
    std::vector<Vec3> target_points;
};

struct GuidanceSet {
    std::vector<GuidancePair> pairs;

    std::size_t total_source() const;
    std::size_t total_target() const;
    /// Throws DataError if a pair is empty on either side.
    void validate() const;
};

GuidanceSet load_guidance(const std::filesystem::path &path);
void save_guidance(const std::filesystem::path &path, const GuidanceSet &g);

struct LandmarkPair {
    Vec3 source;
    Vec3 target;
};

std::vector<LandmarkPair> load_landmarks(const std::filesystem::path &path);
void save_landmarks(const std::filesystem::path &path, std::span<const LandmarkPair> pairs);

} // namespace morea
