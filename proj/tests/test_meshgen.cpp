#include <doctest.h>

#include <map>
#include <random>

#include "morea/error.hpp"
#include "morea/meshgen.hpp"
#include "morea/sobol.hpp"

using namespace morea;

namespace {

std::vector<Vec3> random_points(std::size_t n, std::uint64_t seed, double extent = 10.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, extent);
    std::vector<Vec3> p(n);
    for (auto &q : p) q = {u(rng), u(rng), u(rng)};
    return p;
}

// Largest relative violation of the empty-circumsphere property.
double worst_sphere_violation(const Tetrahedralization &tz) {
    double worst = 0.0;
    for (const Tet &t : tz.tets) {
        const Vec3 &a = tz.points[static_cast<std::size_t>(t[0])];
        const Vec3 u = tz.points[static_cast<std::size_t>(t[1])] - a;
        const Vec3 v = tz.points[static_cast<std::size_t>(t[2])] - a;
        const Vec3 w = tz.points[static_cast<std::size_t>(t[3])] - a;
        const double d = 2.0 * dot(u, cross(v, w));
        const Vec3 center = a + (cross(v, w) * norm2(u) + cross(w, u) * norm2(v) + cross(u, v) * norm2(w)) / d;
        const double r = distance(center, a);
        for (const Vec3 &p : tz.points) worst = std::max(worst, (r - distance(p, center)) / r);
    }
    return worst;
}

} // namespace

TEST_CASE("sobol sequence") {
    const Sobol4 s;
    // First points of the unscrambled sequence.
    CHECK(s.point_bits(1)[0] == 0x80000000u);
    CHECK(s.point_bits(2)[0] == 0x40000000u);
    CHECK(s.point_bits(3)[1] == 0x40000000u);
    // Every dimension stratifies the first 2^k points into 2^k cells.
    for (int d = 0; d < kSobolDims; ++d) {
        std::vector<int> hits(64, 0);
        for (std::uint32_t i = 0; i < 64; ++i) ++hits[s.point_bits(i)[static_cast<std::size_t>(d)] >> 26];
        for (int h : hits) CHECK(h == 1);
    }
    const Sobol4 a(scramble_words(17)), b(scramble_words(17));
    CHECK(a.point(5) == b.point(5));
    for (double r : a.point(0)) {
        CHECK(r > 0.0);
        CHECK(r < 1.0);
    }
    const std::array<Vec3, 2> p{Vec3{1.00001, 2, 3}, Vec3{4, 5, 6}};
    const std::array<Vec3, 2> q{Vec3{1.000014, 2, 3}, Vec3{4, 5, 6}};
    CHECK(hash_coordinates(p) == hash_coordinates(q));
    const std::array<Vec3, 2> r{Vec3{1.0002, 2, 3}, Vec3{4, 5, 6}};
    CHECK(hash_coordinates(p) != hash_coordinates(r));
}

TEST_CASE("farthest point subset") {
    std::vector<Vec3> line;
    for (int i = 0; i < 100; ++i) line.push_back({i * 0.5, 0, 0});
    const auto pick = farthest_point_subset(line, 4);
    REQUIRE(pick.size() == 4);
    CHECK(std::find(pick.begin(), pick.end(), 0u) != pick.end());
    CHECK(std::find(pick.begin(), pick.end(), 99u) != pick.end());
}

TEST_CASE("farthest point subset beats single swaps of its last pick") {
    for (int trial = 0; trial < 20; ++trial) {
        const auto cand = random_points(30, 300 + static_cast<std::uint64_t>(trial));
        const auto pick = farthest_point_subset(cand, 6);
        const auto min_gap = [&](const std::vector<std::size_t> &ids) {
            double m = 1e300;
            for (std::size_t i = 0; i < ids.size(); ++i)
                for (std::size_t j = i + 1; j < ids.size(); ++j) m = std::min(m, distance(cand[ids[i]], cand[ids[j]]));
            return m;
        };
        const double greedy = min_gap(pick);
        for (std::size_t c = 0; c < cand.size(); ++c) {
            if (std::find(pick.begin(), pick.end(), c) != pick.end()) continue;
            auto alt = pick;
            alt.back() = c;
            CHECK(greedy >= min_gap(alt) - 1e-12);
        }
    }
}

TEST_CASE("contour point selection") {
    GuidanceSet gs;
    GuidancePair a{"a", {}, {{0, 0, 0}}};
    for (int i = 0; i < 100; ++i) a.source_points.push_back({10.0 + 0.2 * i, 20, 20});
    GuidancePair b{"b", {}, {{0, 0, 0}}};
    for (int i = 0; i < 80; ++i) b.source_points.push_back({25, 10.0 + 0.25 * i, 30});
    gs.pairs = {a, b};
    Geometry geo;
    geo.dims = {40, 40, 40};

    PointPlacementConfig cfg;
    cfg.total_points = 40;
    cfg.random_fraction = 0.0;
    const auto all_contour = select_contour_points(gs, cfg, geo, 1);
    CHECK(all_contour.size() == 40);
    for (const Vec3 &p : all_contour) CHECK((p.y == 20.0 || p.x == 25.0));

    cfg.random_fraction = 0.25;
    const auto mixed = select_contour_points(gs, cfg, geo, 7);
    CHECK(mixed.size() == 40);
    CHECK(mixed == select_contour_points(gs, cfg, geo, 7));
    CHECK(mixed != select_contour_points(gs, cfg, geo, 8));
    for (std::size_t i = 0; i < mixed.size(); ++i)
        for (std::size_t j = i + 1; j < mixed.size(); ++j) CHECK(distance(mixed[i], mixed[j]) > 1e-6);

    cfg.allocation_weights["a"] = 3.0;
    cfg.allocation_weights["b"] = 1.0;
    const auto weighted = select_contour_points(gs, cfg, geo, 7);
    CHECK(std::count_if(weighted.begin(), weighted.end(), [](const Vec3 &p) { return p.y == 20.0 && p.z == 20.0; }) ==
          23);

    cfg.total_points = 400;
    cfg.random_fraction = 0.0;
    CHECK_THROWS_AS(select_contour_points(gs, cfg, geo, 7), DataError);
}

TEST_CASE("marching cubes on a digital ball") {
    Geometry g;
    g.dims = {32, 32, 32};
    g.spacing_mm = {1.5, 1.5, 1.5};
    LabelMask ball(g, "ball");
    for (int k = 0; k < 32; ++k)
        for (int j = 0; j < 32; ++j)
            for (int i = 0; i < 32; ++i)
                ball.at(i, j, k) = (i - 15.5) * (i - 15.5) + (j - 15.5) * (j - 15.5) + (k - 15.5) * (k - 15.5) <= 64.0;
    const SurfaceMesh s = marching_cubes(ball);
    CHECK(s.euler_characteristic() == 2);

    // Watertight: every undirected edge is used by exactly two triangles,
    // once in each direction.
    std::map<std::pair<int, int>, int> directed;
    for (const auto &t : s.triangles)
        for (int e = 0; e < 3; ++e) ++directed[{t[static_cast<std::size_t>(e)], t[static_cast<std::size_t>((e + 1) % 3)]}];
    for (const auto &[e, n] : directed) {
        CHECK(n == 1);
        CHECK(directed.count({e.second, e.first}) == 1);
    }
    double enclosed = 0.0;
    for (const auto &t : s.triangles) {
        const Vec3 &a = s.vertices[static_cast<std::size_t>(t[0])];
        const Vec3 &b = s.vertices[static_cast<std::size_t>(t[1])];
        const Vec3 &c = s.vertices[static_cast<std::size_t>(t[2])];
        CHECK(norm2(cross(b - a, c - a)) > 0.0);
        enclosed += dot(a, cross(b, c)) / 6.0;
    }
    // Outward normals give a positive volume close to the voxel count.
    const double voxels = static_cast<double>(ball.count()) * g.voxel_volume_mm3();
    CHECK(enclosed > 0.8 * voxels);
    CHECK(enclosed < 1.05 * voxels);
    // Vertices sit at midpoints of grid edges.
    for (const Vec3 &v : s.vertices) {
        const Vec3 u = g.continuous_index(v);
        const double frac = std::abs(u.x - std::round(u.x)) + std::abs(u.y - std::round(u.y)) + std::abs(u.z - std::round(u.z));
        CHECK(frac == doctest::Approx(0.5));
    }
}

TEST_CASE("marching cubes edge cases") {
    Geometry g;
    g.dims = {6, 5, 4};
    LabelMask empty(g, "e");
    CHECK_THROWS_AS(marching_cubes(empty), DataError);

    LabelMask full(g, "f");
    std::fill(full.data.begin(), full.data.end(), std::uint8_t{1});
    const SurfaceMesh s = marching_cubes(full);
    CHECK(s.euler_characteristic() == 2);
    for (const Vec3 &v : s.vertices) {
        const bool on_border = v.x == -0.5 || v.x == 5.5 || v.y == -0.5 || v.y == 4.5 || v.z == -0.5 || v.z == 3.5;
        CHECK(on_border);
    }

    // Two voxels touching only along an edge stay separate surfaces.
    LabelMask diag(g, "d");
    diag.at(2, 2, 2) = 1;
    diag.at(3, 3, 2) = 1;
    CHECK(marching_cubes(diag).euler_characteristic() == 4);
}

TEST_CASE("delaunay small configurations") {
    const std::vector<Vec3> four{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    const auto one = delaunay_tetrahedralize(four);
    CHECK(one.tets.size() == 1);

    auto five = four;
    five.push_back({0.2, 0.2, 0.2});
    const auto split = delaunay_tetrahedralize(five);
    CHECK(split.tets.size() == 4);
    for (const Tet &t : split.tets) CHECK(std::find(t.begin(), t.end(), 4) != t.end());

    const std::vector<Vec3> flat{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}, {2, 3, 0}};
    CHECK_THROWS_AS(delaunay_tetrahedralize(flat), DataError);
}

TEST_CASE("delaunay empty circumsphere on random sets") {
    for (int trial = 0; trial < 20; ++trial) {
        const auto pts = random_points(100, 1000 + static_cast<std::uint64_t>(trial));
        const auto tz = delaunay_tetrahedralize(pts);
        CHECK(worst_sphere_violation(tz) <= 1e-9);
        double vol = 0.0;
        for (const Tet &t : tz.tets) {
            const double v = signed_volume(tz.points[static_cast<std::size_t>(t[0])], tz.points[static_cast<std::size_t>(t[1])],
                                           tz.points[static_cast<std::size_t>(t[2])], tz.points[static_cast<std::size_t>(t[3])]);
            CHECK(v > 0.0);
            vol += v;
        }
        CHECK(vol > 0.0);
    }
}

TEST_CASE("delaunay with a bounding box covers the box") {
    const auto pts = random_points(60, 77, 8.0);
    const Box box{{-1, -1, -1}, {9, 9, 9}};
    const auto tz = delaunay_tetrahedralize(pts, box);
    CHECK(tz.points.size() == 68);
    CHECK(worst_sphere_violation(tz) <= 1e-9);
    double vol = 0.0;
    for (const Tet &t : tz.tets)
        vol += signed_volume(tz.points[static_cast<std::size_t>(t[0])], tz.points[static_cast<std::size_t>(t[1])],
                             tz.points[static_cast<std::size_t>(t[2])], tz.points[static_cast<std::size_t>(t[3])]);
    CHECK(vol == doctest::Approx(1000.0).epsilon(1e-6));
}

TEST_CASE("initial genotype") {
    Geometry geo;
    geo.dims = {20, 20, 20};
    geo.spacing_mm = {1.5, 1.5, 1.5};
    LabelMask ball(geo, "ball");
    GuidanceSet gs;
    GuidancePair pair{"ball", {}, {}};
    for (int k = 0; k < 20; ++k)
        for (int j = 0; j < 20; ++j)
            for (int i = 0; i < 20; ++i) {
                const double r2 = (i - 9.5) * (i - 9.5) + (j - 9.5) * (j - 9.5) + (k - 9.5) * (k - 9.5);
                ball.at(i, j, k) = r2 <= 36.0;
                if (r2 <= 36.0 && r2 > 25.0) pair.source_points.push_back(geo.world(i, j, k));
            }
    pair.target_points = pair.source_points;
    gs.pairs.push_back(pair);

    PointPlacementConfig cfg;
    cfg.total_points = 80;
    cfg.surface_object = "ball";
    cfg.surface_points = 20;
    const std::vector<LabelMask> masks{ball};
    const auto m = build_initial_genotype(geo, gs, masks, cfg, 3);
    CHECK(m.placed_points == 80);
    CHECK(m.surface_points == 20);
    CHECK(m.genotype.num_points() == 80 + 20 + 8);
    CHECK(fold_free(m.genotype, m.signs));
    CHECK(m.genotype.source == m.genotype.target);

    const auto again = build_initial_genotype(geo, gs, masks, cfg, 3);
    CHECK(again.genotype.topology->tets() == m.genotype.topology->tets());
    CHECK(again.genotype.source == m.genotype.source);

    PointLocator loc(m.genotype, Side::Source);
    std::size_t missing = 0;
    for (int k = 0; k < 20; ++k)
        for (int j = 0; j < 20; ++j)
            for (int i = 0; i < 20; ++i) missing += !loc.locate(geo.world(i, j, k)).has_value();
    for (const Vec3 &p : pair.source_points) missing += !loc.locate(p).has_value();
    CHECK(missing == 0);
}
