#pragma once

// Small meshes shared by the unit tests.

#include <algorithm>
#include <array>
#include <memory>
#include <random>
#include <vector>

#include "morea/mesh.hpp"

namespace morea::test {

// Regular grid of n^3 cubes, each split into 6 Kuhn tets, positively oriented.
inline DualMeshGenotype kuhn_grid(int n, double spacing = 1.0, Vec3 origin = {}) {
    const int m = n + 1;
    std::vector<Vec3> pts;
    for (int k = 0; k < m; ++k)
        for (int j = 0; j < m; ++j)
            for (int i = 0; i < m; ++i) pts.push_back(origin + Vec3{i * spacing, j * spacing, k * spacing});
    const auto id = [m](int i, int j, int k) { return i + m * (j + m * k); };
    std::vector<Tet> tets;
    std::array<int, 3> perm{0, 1, 2};
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                std::array<int, 3> p = perm;
                do {
                    std::array<int, 3> c{i, j, k};
                    Tet t{};
                    t[0] = id(c[0], c[1], c[2]);
                    for (int s = 0; s < 3; ++s) {
                        ++c[static_cast<std::size_t>(p[static_cast<std::size_t>(s)])];
                        t[static_cast<std::size_t>(s) + 1] = id(c[0], c[1], c[2]);
                    }
                    const double v = signed_volume(pts[static_cast<std::size_t>(t[0])], pts[static_cast<std::size_t>(t[1])],
                                                   pts[static_cast<std::size_t>(t[2])], pts[static_cast<std::size_t>(t[3])]);
                    if (v < 0) std::swap(t[2], t[3]);
                    tets.push_back(t);
                } while (std::next_permutation(p.begin(), p.end()));
            }
    auto topo = std::make_shared<TetTopology>(static_cast<int>(pts.size()), std::move(tets));
    return make_identity_genotype(std::move(topo), std::move(pts));
}

// Jitters interior grid points on one side without creating folds.
inline void jitter_side(DualMeshGenotype &g, Side side, double amplitude, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-amplitude, amplitude);
    auto &c = g.coords(side);
    for (auto &p : c) p += Vec3{u(rng), u(rng), u(rng)};
}

} // namespace morea::test

#include "morea/meshgen.hpp"
#include "morea/objectives.hpp"

namespace morea::test {

// Two ball images (radius 6 vs 4.5 voxels) on a 20^3 grid plus their
// surface point sets as guidance.
struct BallProblem {
    Volume source;
    Volume target;
    LabelMask source_mask;
    GuidanceSet guidance;
    GuidanceField field;
};

inline BallProblem ball_problem() {
    Geometry g;
    g.dims = {20, 20, 20};
    g.spacing_mm = {1.5, 1.5, 1.5};
    BallProblem p;
    p.source = Volume(g);
    p.target = Volume(g);
    p.source_mask = LabelMask(g, "ball");
    GuidancePair pair{"ball", {}, {}};
    for (int k = 0; k < 20; ++k)
        for (int j = 0; j < 20; ++j)
            for (int i = 0; i < 20; ++i) {
                const double r = std::sqrt((i - 9.5) * (i - 9.5) + (j - 9.5) * (j - 9.5) + (k - 9.5) * (k - 9.5));
                if (r <= 6.0) {
                    p.source.at(i, j, k) = 0.8f;
                    p.source_mask.at(i, j, k) = 1;
                }
                if (r <= 4.5) p.target.at(i, j, k) = 0.8f;
                if (r > 8.0) {
                    p.source.at(i, j, k) = 0.3f;
                    p.target.at(i, j, k) = 0.3f;
                }
                if (r <= 6.0 && r > 5.0) pair.source_points.push_back(g.world(i, j, k));
                if (r <= 4.5 && r > 3.5) pair.target_points.push_back(g.world(i, j, k));
            }
    p.guidance.pairs.push_back(pair);
    normalize_intensities(p.source, p.target);
    p.field = build_guidance_field(p.guidance, g, g);
    return p;
}

// Delaunay mesh over the ball problem's box with exactly `tets` tets.
inline DualMeshGenotype mesh_with_tet_count(std::size_t tets, std::uint64_t seed = 1) {
    for (std::uint64_t s = seed;; ++s) {
        std::mt19937_64 rng(s);
        std::uniform_real_distribution<double> u(3.0, 25.0);
        for (int n = 4; n < 40; ++n) {
            std::vector<Vec3> pts;
            std::mt19937_64 r2(s * 1000 + static_cast<std::uint64_t>(n));
            for (int i = 0; i < n; ++i) pts.push_back({u(r2), u(r2), u(r2)});
            const auto tz = delaunay_tetrahedralize(pts, Box{{-1, -1, -1}, {29.5, 29.5, 29.5}});
            if (tz.tets.size() == tets) {
                auto topo = std::make_shared<TetTopology>(static_cast<int>(tz.points.size()), tz.tets);
                return make_identity_genotype(std::move(topo), tz.points);
            }
        }
    }
}

} // namespace morea::test

#include "morea/synth.hpp"

namespace morea::test {

// The default preset's objects on a 32^3 grid at 3 mm (same physical extent).
inline SynthSpec coarse_synth_spec() {
    SynthSpec s = default_synth_spec();
    s.geometry.dims = {32, 32, 32};
    s.geometry.spacing_mm = {3.0, 3.0, 3.0};
    s.guidance_density = 0.5;
    return s;
}

inline std::string tiny_run_config(std::uint64_t seed, int threads = 1) {
    return "seed = " + std::to_string(seed) +
           "\n"
           "num_threads = " +
           std::to_string(threads) +
           "\n"
           "ea_num_generations = 4\n"
           "ea_population_size = 8\n"
           "ea_num_clusters = 2\n"
           "ea_archive_size = 30\n"
           "ea_adaptive_steering_activated_at_num_generations = 2\n"
           "morea_mesh_num_points = 60\n"
           "morea_mesh_random_fraction = 0.3\n"
           "morea_mesh_bbox_padding_mm = 6.0\n"
           "morea_sampling_rate = 0.25\n";
}

} // namespace morea::test
