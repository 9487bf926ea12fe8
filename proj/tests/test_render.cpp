#include <doctest.h>

#include <filesystem>
#include <set>

#include "morea/error.hpp"
#include "morea/render.hpp"

using namespace morea;

namespace {

Geometry grid_geometry() {
    Geometry g;
    g.dims = {24, 20, 6};
    g.spacing_mm = {2.0, 2.0, 2.0};
    return g;
}

Volume gradient(const Geometry &g) {
    Volume v(g);
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i) v.at(i, j, k) = static_cast<float>(i + j);
    return v;
}

std::set<std::pair<int, int>> pixels_of(const Image &img, std::array<std::uint8_t, 3> c) {
    std::set<std::pair<int, int>> out;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (img.get(x, y) == c) out.insert({x, y});
    return out;
}

} // namespace

TEST_CASE("zero field grid is regular") {
    const Geometry g = grid_geometry();
    Volume v(g);
    DeformationVectorField zero(g, Direction::Forward);
    RenderOptions opt;
    opt.mode = RenderMode::Grid;
    const Image img = render_slice(v, {}, &zero, nullptr, opt);
    CHECK(img.width == 24 * 4);
    CHECK(img.height == 20 * 4);
    const auto lit = pixels_of(img, {255, 215, 0});
    REQUIRE_FALSE(lit.empty());
    // Every lit pixel lies on a straight grid line through a voxel center.
    std::set<int> cols, rows;
    for (const auto &[x, y] : lit) {
        const bool on_col = (x - 2) % 16 == 0;
        const bool on_row = (y - 14) % 16 == 0;
        CHECK((on_col || on_row));
        if (on_col) cols.insert(x);
        if (on_row) rows.insert(y);
    }
    CHECK(cols.size() == 6);
    CHECK(rows.size() == 5);
    // Same image without a field.
    CHECK(render_slice(v, {}, nullptr, nullptr, opt).rgb == img.rgb);
}

TEST_CASE("translation arrows are uniform") {
    const Geometry g = grid_geometry();
    Volume v(g);
    DeformationVectorField shift(g, Direction::Forward);
    for (Vec3 &d : shift.data) d = {4.0, 2.0, 0.0};
    RenderOptions opt;
    opt.mode = RenderMode::Arrows;
    const Image img = render_slice(v, {}, &shift, nullptr, opt);
    const auto lit = pixels_of(img, {255, 60, 60});
    // Each arrow occupies the same pixel pattern relative to its base.
    std::vector<std::set<std::pair<int, int>>> arrows;
    for (int v0 = 2; v0 < 20; v0 += 4)
        for (int u0 = 2; u0 < 24; u0 += 4) {
            const int bx = u0 * 4 + 2, by = (19 - v0) * 4 + 2;
            std::set<std::pair<int, int>> rel;
            for (const auto &[x, y] : lit)
                if (std::abs(x - bx) <= 9 && std::abs(y - by) <= 9) rel.insert({x - bx, y - by});
            arrows.push_back(rel);
        }
    REQUIRE(arrows.size() == 30);
    // Interior arrows (away from the image border) are identical.
    CHECK_FALSE(arrows[7].empty());
    CHECK(arrows[7] == arrows[8]);
    CHECK(arrows[7] == arrows[13]);
    CHECK(arrows[7].contains({8, -4}));
}

TEST_CASE("identity contour overlay matches the source contours") {
    const Geometry g = grid_geometry();
    const Volume v = gradient(g);
    LabelMask m(g, "box");
    for (int k = 0; k < 6; ++k)
        for (int j = 5; j < 14; ++j)
            for (int i = 3; i < 17; ++i) m.at(i, j, k) = 1;
    DeformationVectorField identity(g, Direction::Inverse);
    RenderOptions opt;
    const std::vector<LabelMask> masks{m};
    const Image warped = render_slice(v, masks, nullptr, &identity, opt);
    const Image direct = render_slice(v, masks, nullptr, nullptr, opt);
    const auto a = pixels_of(warped, contour_color(0));
    CHECK(a == pixels_of(direct, contour_color(0)));
    // Outline = boundary voxels of the 14 x 9 rectangle, 4x4 pixels each.
    CHECK(a.size() == static_cast<std::size_t>((2 * 14 + 2 * 9 - 4) * 16));
}

TEST_CASE("render errors and ppm io") {
    const Geometry g = grid_geometry();
    const Volume v = gradient(g);
    RenderOptions opt;
    opt.index = 6;
    CHECK_THROWS_AS(render_slice(v, {}, nullptr, nullptr, opt), DataError);
    opt.index = 0;
    opt.axis = 3;
    CHECK_THROWS_AS(render_slice(v, {}, nullptr, nullptr, opt), DataError);
    opt.axis = 0;
    opt.index = 23;
    const Image img = render_slice(v, {}, nullptr, nullptr, opt);
    CHECK(img.width == 20 * 4);
    CHECK(img.height == 6 * 4);
    const auto path = std::filesystem::temp_directory_path() / "morea_render_test.ppm";
    save_ppm(path, img);
    const Image back = load_ppm(path);
    CHECK(back.width == img.width);
    CHECK(back.rgb == img.rgb);
    std::filesystem::remove(path);
}
