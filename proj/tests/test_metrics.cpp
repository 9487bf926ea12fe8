#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "morea/error.hpp"
#include "morea/metrics.hpp"

using namespace morea;

namespace {

Geometry cube(int n, double s = 1.0) {
    Geometry g;
    g.dims = {n, n, n};
    g.spacing_mm = {s, s, s};
    return g;
}

LabelMask random_blob(const Geometry &g, std::mt19937_64 &rng, const std::string &label) {
    LabelMask m(g, label);
    std::uniform_real_distribution<double> u(0, 1);
    const Vec3 c{u(rng) * g.dims[0], u(rng) * g.dims[1], u(rng) * g.dims[2]};
    const double r = 3 + u(rng) * 8;
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i)
                m.at(i, j, k) = (distance(Vec3(i, j, k), c) <= r && u(rng) < 0.9) ? 1 : 0;
    return m;
}

double brute_dice(const LabelMask &a, const LabelMask &b) {
    double na = 0, nb = 0, both = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        na += a.data[i] != 0;
        nb += b.data[i] != 0;
        both += a.data[i] && b.data[i];
    }
    return na + nb == 0 ? 1.0 : 2 * both / (na + nb);
}

double brute_directed(const std::vector<Vec3> &a, const std::vector<Vec3> &b, double pct) {
    std::vector<double> d;
    for (const auto &p : a) {
        double best = INFINITY;
        for (const auto &q : b) best = std::min(best, distance2(p, q));
        d.push_back(std::sqrt(best));
    }
    std::sort(d.begin(), d.end());
    const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(pct / 100.0 * d.size() - 1e-9)));
    return d[k - 1];
}

} // namespace

TEST_CASE("dice") {
    const auto g = cube(4);
    LabelMask a(g, "a"), b(g, "b");
    CHECK(dice(a, b) == 1.0);
    a.at(0, 0, 0) = 1;
    a.at(1, 0, 0) = 1;
    CHECK(dice(a, a) == 1.0);
    CHECK(dice(a, b) == 0.0);
    b.at(1, 0, 0) = 1;
    b.at(2, 0, 0) = 1;
    CHECK(dice(a, b) == 0.5);
    CHECK_THROWS_AS(dice(a, LabelMask(cube(5), "c")), DataError);

    std::mt19937_64 rng(1);
    for (int t = 0; t < 5; ++t) {
        const auto x = random_blob(cube(32), rng, "x");
        const auto y = random_blob(cube(32), rng, "y");
        CHECK(dice(x, y) == brute_dice(x, y));
        CHECK(dice(x, y) == dice(y, x));
    }
}

TEST_CASE("hausdorff") {
    std::vector<Vec3> a{{0, 0, 0}};
    std::vector<Vec3> b{{3, 4, 0}};
    CHECK(hausdorff(a, a) == 0.0);
    CHECK(hausdorff(a, b) == 5.0);
    CHECK_THROWS_AS(hausdorff(a, std::vector<Vec3>{}), DataError);

    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0, 50);
    for (int t = 0; t < 10; ++t) {
        std::vector<Vec3> p(200), q(200);
        for (auto &v : p) v = {u(rng), u(rng), u(rng)};
        for (auto &v : q) v = {u(rng) * 0.8, u(rng), u(rng) + 3};
        const double h100 = std::max(brute_directed(p, q, 100), brute_directed(q, p, 100));
        const double h95 = std::max(brute_directed(p, q, 95), brute_directed(q, p, 95));
        CHECK(hausdorff(p, q, 100) == h100);
        CHECK(hausdorff(p, q, 95) == h95);
        CHECK(hausdorff(p, q, 95) <= hausdorff(p, q, 100));
        CHECK(hausdorff(p, q) == hausdorff(q, p));
    }
}

TEST_CASE("surface points") {
    const auto g = cube(7);
    LabelMask m(g, "m");
    CHECK_THROWS_AS(surface_points_from_mask(m), DataError);
    m.at(3, 3, 3) = 1;
    REQUIRE(surface_points_from_mask(m).size() == 1);
    CHECK(surface_points_from_mask(m)[0] == Vec3{3, 3, 3});
    for (int k = 2; k <= 4; ++k)
        for (int j = 2; j <= 4; ++j)
            for (int i = 2; i <= 4; ++i) m.at(i, j, k) = 1;
    CHECK(surface_points_from_mask(m).size() == 26);

    // Digital ball touching the border, against a neighborhood scan.
    const auto g2 = cube(20);
    LabelMask ball(g2, "ball");
    for (int k = 0; k < 20; ++k)
        for (int j = 0; j < 20; ++j)
            for (int i = 0; i < 20; ++i) ball.at(i, j, k) = distance(Vec3(i, j, k), Vec3(5, 9, 9)) <= 7.2;
    std::size_t expect = 0;
    for (int k = 0; k < 20; ++k)
        for (int j = 0; j < 20; ++j)
            for (int i = 0; i < 20; ++i) {
                if (!ball.at(i, j, k)) continue;
                bool s = false;
                const int d[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
                for (const auto &o : d) {
                    const int x = i + o[0], y = j + o[1], z = k + o[2];
                    s = s || x < 0 || y < 0 || z < 0 || x >= 20 || y >= 20 || z >= 20 || !ball.at(x, y, z);
                }
                expect += s;
            }
    CHECK(surface_points_from_mask(ball).size() == expect);
}

TEST_CASE("warp mask") {
    const auto g = cube(16, 1.5);
    LabelMask m(g, "m");
    for (int k = 0; k < 16; ++k)
        for (int j = 0; j < 16; ++j)
            for (int i = 0; i < 16; ++i) m.at(i, j, k) = distance(Vec3(i, j, k), Vec3(7.5, 7.5, 7.5)) <= 5;
    DeformationVectorField zero(g, Direction::Inverse);
    CHECK(warp_mask(m, zero).data == m.data);

    // Shift by 2 voxels along x: out(v) = m(v + 2).
    DeformationVectorField t(g, Direction::Inverse);
    for (auto &v : t.data) v = {3.0, 0, 0};
    const auto w = warp_mask(m, t);
    for (int k = 0; k < 16; ++k)
        for (int j = 0; j < 16; ++j)
            for (int i = 0; i < 16; ++i) CHECK(w.at(i, j, k) == (i + 2 < 16 ? m.at(i + 2, j, k) : 0));
    CHECK_THROWS_AS(warp_mask(m, DeformationVectorField(g, Direction::Forward)), DataError);
}

TEST_CASE("landmark error") {
    auto g = test::kuhn_grid(2, 5.0);
    std::vector<LandmarkPair> pairs{{{1, 2, 3}, {1, 2, 3}}, {{7, 7, 2}, {7, 7, 2}}};
    auto s = landmark_error(pairs, g);
    CHECK(s.mean_mm == doctest::Approx(0.0));
    CHECK(s.sd_mm == doctest::Approx(0.0));
    for (auto &p : g.target) p += Vec3{1, -2, 0.5};
    for (auto &p : pairs) p.target += Vec3{1, -2, 0.5};
    s = landmark_error(pairs, g);
    CHECK(s.mean_mm < 1e-12);
    pairs[1].target += Vec3{3, 0, 4};
    s = landmark_error(pairs, g);
    CHECK(s.mean_mm == doctest::Approx(2.5));
    CHECK(s.sd_mm == doctest::Approx(2.5));
    pairs.push_back({{50, 0, 0}, {0, 0, 0}});
    CHECK_THROWS_AS(landmark_error(pairs, g), DataError);
}

TEST_CASE("compare masks with margin") {
    const auto g = cube(30, 1.0);
    LabelMask a(g, "x"), b(g, "x");
    // Differences confined to the border band.
    for (int k = 10; k < 20; ++k)
        for (int j = 10; j < 20; ++j)
            for (int i = 10; i < 20; ++i) a.at(i, j, k) = b.at(i, j, k) = 1;
    for (int k = 0; k < 3; ++k) a.at(1, 1, k) = 1;
    const auto raw = compare_masks(a, b, 0.0);
    const auto cropped = compare_masks(a, b, 5.0);
    CHECK(raw.dice < 1.0);
    CHECK(cropped.dice == 1.0);
    CHECK(*cropped.hausdorff_mm == 0.0);
    CHECK(*raw.hausdorff95_mm <= *raw.hausdorff_mm);
}
