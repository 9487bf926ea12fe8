#include <doctest.h>

#include <filesystem>
#include <random>

#include "fixtures.hpp"
#include "morea/error.hpp"
#include "morea/mesh.hpp"

using namespace morea;
namespace fs = std::filesystem;

TEST_CASE("signed volume") {
    const Vec3 o{0, 0, 0}, x{1, 0, 0}, y{0, 1, 0}, z{0, 0, 1};
    CHECK(signed_volume(o, x, y, z) == doctest::Approx(1.0 / 6.0));
    CHECK(signed_volume(o, y, x, z) == doctest::Approx(-1.0 / 6.0));
    CHECK(signed_volume(o, x, y, Vec3{1, 1, 0}) == 0.0);
}

TEST_CASE("edge lengths include centroid spokes") {
    const auto len = tet_edge_lengths({0, 0, 0}, {3, 0, 0}, {0, 3, 0}, {0, 0, 3});
    CHECK(len[0] == doctest::Approx(3.0));
    CHECK(len[3] == doctest::Approx(std::sqrt(18.0)));
    // Vertex 0 to centroid (1,1,1) of the opposite face.
    CHECK(len[6] == doctest::Approx(std::sqrt(3.0)));
}

TEST_CASE("topology incidence and adjacency") {
    const auto g = test::kuhn_grid(2);
    const auto &topo = *g.topology;
    CHECK(topo.num_tets() == 48);
    for (int p = 0; p < topo.num_points(); ++p)
        for (int t : topo.incident(p)) {
            const Tet &v = topo.tet(static_cast<std::size_t>(t));
            CHECK(std::find(v.begin(), v.end(), p) != v.end());
        }
    std::size_t hull_faces = 0;
    for (std::size_t t = 0; t < topo.num_tets(); ++t)
        for (int i = 0; i < 4; ++i) {
            const int n = topo.neighbor(t, i);
            if (n < 0) {
                ++hull_faces;
                continue;
            }
            bool back = false;
            for (int j = 0; j < 4; ++j) back |= topo.neighbor(static_cast<std::size_t>(n), j) == static_cast<int>(t);
            CHECK(back);
        }
    // 6 box faces x 4 unit squares x 2 triangles.
    CHECK(hull_faces == 48);
    CHECK_THROWS_AS(TetTopology(4, {{0, 1, 2, 2}}), DataError);
    CHECK_THROWS_AS(TetTopology(4, {{0, 1, 2, 4}}), DataError);
}

TEST_CASE("fold detection") {
    auto g = test::kuhn_grid(2);
    const auto ref = compute_reference_signs(g);
    CHECK(detect_folds(g, Side::Source, ref).empty());
    CHECK(fold_free(g, ref));

    // Push the central point through the far side of its star.
    const int center = 1 + 3 * (1 + 3 * 1);
    g.target[static_cast<std::size_t>(center)] = {1.9, 0.2, 1.0};
    const auto v = detect_folds(g, Side::Target, ref);
    REQUIRE(!v.empty());
    const auto inc = g.topology->incident(center);
    for (const auto &f : v) {
        CHECK(std::find(inc.begin(), inc.end(), f.tet) != inc.end());
        CHECK(f.severity == std::abs(g.tet_volume(Side::Target, static_cast<std::size_t>(f.tet))));
    }
    CHECK(detect_folds(g, Side::Source, ref).empty());
    CHECK(!fold_free(g, ref));
}

TEST_CASE("fold detection matches per-tet recomputation on random genotypes") {
    for (int trial = 0; trial < 20; ++trial) {
        auto g = test::kuhn_grid(3);
        const auto ref = compute_reference_signs(g);
        test::jitter_side(g, Side::Target, 0.2 + 0.05 * trial, 50 + static_cast<std::uint64_t>(trial));
        std::vector<int> expected;
        for (std::size_t t = 0; t < g.topology->num_tets(); ++t) {
            const auto p = g.tet_points(Side::Target, t);
            const double vol = dot(p[1] - p[0], cross(p[2] - p[0], p[3] - p[0]));
            if (!(vol > 0.0)) expected.push_back(static_cast<int>(t));
        }
        std::vector<int> got;
        for (const auto &f : detect_folds(g, Side::Target, ref)) got.push_back(f.tet);
        CHECK(got == expected);
        CHECK(fold_free(g, ref) == expected.empty());
    }
}

TEST_CASE("barycentric coordinates") {
    const std::array<Vec3, 4> t{Vec3{0.3, -1, 2}, Vec3{4, 0.5, 2.2}, Vec3{1, 3, 1.5}, Vec3{1.2, 0.9, 5}};
    const auto w0 = barycentric_coords(t, t[0]);
    CHECK(w0[0] == doctest::Approx(1.0));
    CHECK(w0[1] == doctest::Approx(0.0));
    const Vec3 c = (t[0] + t[1] + t[2] + t[3]) / 4.0;
    for (double w : barycentric_coords(t, c)) CHECK(w == doctest::Approx(0.25));
    const auto out = barycentric_coords(t, {10, 10, 10});
    CHECK(std::min({out[0], out[1], out[2], out[3]}) < 0.0);

    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int n = 0; n < 1000; ++n) {
        double a = u(rng), b = u(rng), cc = u(rng), d = u(rng);
        const double s = a + b + cc + d;
        const Vec3 p = t[0] * (a / s) + t[1] * (b / s) + t[2] * (cc / s) + t[3] * (d / s);
        const auto w = barycentric_coords(t, p);
        CHECK(std::abs(w[0] + w[1] + w[2] + w[3] - 1.0) < 1e-12);
        const Vec3 r = t[0] * w[0] + t[1] * w[1] + t[2] * w[2] + t[3] * w[3];
        CHECK(distance(r, p) < 1e-9);
    }
    CHECK_THROWS_AS(barycentric_coords({Vec3{0, 0, 0}, Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{1, 1, 0}}, {0, 0, 0}),
                    DataError);
}

TEST_CASE("point location agrees with exhaustive scan") {
    auto g = test::kuhn_grid(5, 2.0);
    test::jitter_side(g, Side::Source, 0.15, 9);
    // Keep the hull box intact so every random query in the box is inside.
    auto base = test::kuhn_grid(5, 2.0);
    for (std::size_t i = 0; i < g.source.size(); ++i)
        for (std::size_t a = 0; a < 3; ++a)
            if (base.source[i][a] == 0.0 || base.source[i][a] == 10.0) g.source[i][a] = base.source[i][a];
    const auto ref = compute_reference_signs(base);
    REQUIRE(detect_folds(g, Side::Source, ref).empty());

    PointLocator loc(g, Side::Source);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    for (int n = 0; n < 1000; ++n) {
        const Vec3 p{u(rng), u(rng), u(rng)};
        const auto fast = loc.locate(p);
        const auto slow = loc.locate_brute_force(p);
        REQUIRE(fast.has_value());
        REQUIRE(slow.has_value());
        if (*fast != *slow) {
            // Points on shared faces may legally belong to either tet.
            const auto w = loc.weights(*fast, p);
            CHECK(std::min({w[0], w[1], w[2], w[3]}) >= -kInsideTolerance);
        }
    }
    for (std::size_t t = 0; t < g.topology->num_tets(); t += 7) {
        const auto p = g.tet_points(Side::Source, t);
        CHECK(loc.locate((p[0] + p[1] + p[2] + p[3]) / 4.0) == static_cast<int>(t));
    }
    CHECK(!loc.locate({100, 100, 100}).has_value());
    CHECK(!loc.locate({-0.5, 3, 3}).has_value());
}

TEST_CASE("transform point") {
    auto g = test::kuhn_grid(3, 2.0);
    const Vec3 p{1.3, 2.7, 4.1};
    CHECK(distance(transform_point(g, p, Direction::Forward), p) < 1e-12);
    for (auto &q : g.target) q += Vec3{0.5, -1.0, 2.0};
    CHECK(distance(transform_point(g, p, Direction::Forward), p + Vec3{0.5, -1.0, 2.0}) < 1e-12);
    CHECK_THROWS_AS(transform_point(g, {50, 0, 0}, Direction::Forward), DataError);

    // Forward then inverse composes to the identity.
    auto h = test::kuhn_grid(4, 2.0);
    for (std::size_t i = 0; i < h.target.size(); ++i) {
        const Vec3 s = h.source[i];
        h.target[i] = s + Vec3{0.1 * std::sin(s.y), 0.1 * std::cos(s.x), 0.05 * s.x};
    }
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.01, 7.99);
    PointLocator fwd(h, Side::Source);
    PointLocator inv(h, Side::Target);
    for (int n = 0; n < 100; ++n) {
        const Vec3 p{u(rng), u(rng), u(rng)};
        const auto q = try_transform_point(h, fwd, p, Direction::Forward);
        REQUIRE(q.has_value());
        const auto back = try_transform_point(h, inv, *q, Direction::Inverse);
        REQUIRE(back.has_value());
        CHECK(distance(*back, p) < 1e-6);
    }

    // Piecewise linearity inside one tet.
    const auto tp = h.tet_points(Side::Source, 17);
    const Vec3 a = (tp[0] * 2.0 + tp[1] + tp[2] + tp[3]) / 5.0;
    const Vec3 b = (tp[0] + tp[1] + tp[2] * 3.0 + tp[3]) / 6.0;
    const Vec3 mid = a * 0.3 + b * 0.7;
    const Vec3 tm = transform_point(h, mid, Direction::Forward);
    const Vec3 ta = transform_point(h, a, Direction::Forward);
    const Vec3 tb = transform_point(h, b, Direction::Forward);
    CHECK(distance(tm, ta * 0.3 + tb * 0.7) < 1e-9);
}

TEST_CASE("rasterized DVF") {
    auto g = test::kuhn_grid(4, 2.0, {-1.0, -1.0, -1.0});
    Geometry geo;
    geo.dims = {9, 9, 9};
    geo.spacing_mm = {1.0, 1.0, 1.0};
    geo.origin_mm = {-1.0, -1.0, -1.0};
    const auto zero = rasterize_dvf(g, Direction::Forward, geo);
    for (const auto &d : zero.data) CHECK(d == Vec3{});
    CHECK(zero.coverage.count() == geo.voxel_count());

    // Affine motion of the target mesh.
    for (auto &p : g.target) p = Vec3{1.1 * p.x + 0.1 * p.y, 0.95 * p.y, p.z - 0.2 * p.x} + Vec3{0.3, 0.2, -0.1};
    const auto dvf = rasterize_dvf(g, Direction::Forward, geo);
    for (std::size_t v = 0; v < geo.voxel_count(); ++v) {
        const auto ijk = geo.unravel(v);
        const Vec3 c = geo.world(ijk[0], ijk[1], ijk[2]);
        const Vec3 expect = Vec3{1.1 * c.x + 0.1 * c.y, 0.95 * c.y, c.z - 0.2 * c.x} + Vec3{0.3, 0.2, -0.1} - c;
        CHECK(distance(dvf.data[v], expect) < 1e-6);
    }

    // Voxels outside the hull are zero and uncovered.
    Geometry wide = geo;
    wide.dims = {12, 9, 9};
    const auto w = rasterize_dvf(g, Direction::Forward, wide);
    CHECK(w.coverage.at(11, 4, 4) == 0);
    CHECK(w.data[wide.index(11, 4, 4)] == Vec3{});
    CHECK(w.coverage.at(3, 4, 4) == 1);

    const fs::path p = fs::temp_directory_path() / "morea_test_mesh" / "fwd";
    save_dvf(p, w);
    const auto r = load_dvf(p);
    CHECK(r.direction == Direction::Forward);
    CHECK(r.coverage.data == w.coverage.data);
    for (std::size_t v = 0; v < r.data.size(); ++v)
        CHECK(distance(r.data[v], w.data[v]) < 1e-5);
}

TEST_CASE("genotype round trip") {
    auto g = test::kuhn_grid(2);
    test::jitter_side(g, Side::Target, 0.1, 4);
    const fs::path p = fs::temp_directory_path() / "morea_test_mesh" / "geno.json";
    save_genotype(p, g);
    const auto r = load_genotype(p);
    CHECK(r.topology->tets() == g.topology->tets());
    CHECK(r.source == g.source);
    CHECK(r.target == g.target);
}
