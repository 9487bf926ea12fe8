#include <doctest.h>

#include <cmath>

#include "morea/error.hpp"
#include "morea/metrics.hpp"
#include "morea/synth.hpp"

using namespace morea;

TEST_CASE("radial field") {
    const auto spec = default_synth_spec();
    const RadialField &f = spec.field;
    CHECK(norm(f.displacement(f.center)) == 0.0);
    for (const Vec3 dir : {Vec3{1, 0, 0}, Vec3{0, -1, 0}, Vec3{0.6, 0.0, 0.8}}) {
        const Vec3 x = f.center + dir * f.r0;
        const Vec3 u = f.displacement(x);
        CHECK(norm(u) == doctest::Approx(f.r0 - f.r1));
        CHECK(dot(u, dir) < 0.0);
        CHECK(norm(f.displacement(f.center + dir * (f.falloff + 1))) == 0.0);
    }
    // C1 continuity at both ends of the blend.
    for (double r : {f.r0, f.falloff}) {
        CHECK(f.radial(r - 1e-9) == doctest::Approx(f.radial(r + 1e-9)).epsilon(1e-9));
        CHECK(f.radial_derivative(r - 1e-7) == doctest::Approx(f.radial_derivative(r + 1e-7)).epsilon(1e-5));
    }
    for (double rho = 0.0; rho < 50; rho += 0.37) CHECK(f.radial(f.radial_inverse(rho)) == doctest::Approx(rho).epsilon(1e-12));
    CHECK(min_jacobian_determinant(f, spec.geometry) > 0.0);

    RadialField bad = f;
    bad.r1 = bad.r0 + 1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("default case") {
    auto spec = default_synth_spec();
    const auto p = generate_case(spec);
    for (float v : p.source.data) CHECK((v >= 0.0f && v <= 1.0f));
    REQUIRE(p.source_mask("bladder"));
    REQUIRE(p.target_mask("bladder"));
    CHECK(p.guidance.pairs.size() == 3);
    CHECK(p.landmarks.size() == 10);
    for (const auto &l : p.landmarks) CHECK(distance(l.source, l.target) <= 1.0 + 1e-12);
    CHECK(p.elasticity.at("bone") == 10.0);

    // Bladder radius 20 -> 14 voxels: volume ratio near (14/20)^3.
    const double ratio = static_cast<double>(p.target_mask("bladder")->count()) /
                         static_cast<double>(p.source_mask("bladder")->count());
    CHECK(ratio == doctest::Approx(std::pow(0.7, 3)).epsilon(0.03));
    // Bone sits outside the deformation.
    CHECK(p.source_mask("bone")->data == p.target_mask("bone")->data);

    // Warping the source mask with the analytic inverse reproduces the target
    // mask up to a one-voxel shell.
    const auto warped = warp_mask(*p.source_mask("bladder"), *p.truth_inverse);
    const auto &tgt = *p.target_mask("bladder");
    const auto shell = surface_points_from_mask(tgt);
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < tgt.data.size(); ++i) mismatches += warped.data[i] != tgt.data[i];
    CHECK(mismatches <= shell.size());
    CHECK(dice(warped, tgt) > 0.97);

    const auto again = generate_case(spec);
    CHECK(again.target.data == p.target.data);
    CHECK(again.guidance.pairs[0].target_points == p.guidance.pairs[0].target_points);
}

TEST_CASE("analytic dvf error") {
    const auto spec = default_synth_spec();
    const auto &g = spec.geometry;
    auto exact = sample_radial_field(spec.field, g, Direction::Forward);
    CHECK(analytic_dvf_error(exact, spec.field).mean_mm == 0.0);
    auto off = exact;
    for (auto &v : off.data) v += Vec3{0.6, 0.0, 0.8};
    CHECK(analytic_dvf_error(off, spec.field).mean_mm == doctest::Approx(1.0));

    DeformationVectorField id(g, Direction::Forward);
    std::fill(id.coverage.data.begin(), id.coverage.data.end(), std::uint8_t{1});
    double sum = 0.0;
    std::size_t n = 0;
    for (int k = 10; k < 54; ++k)
        for (int j = 10; j < 54; ++j)
            for (int i = 10; i < 54; ++i) {
                sum += norm(spec.field.displacement(g.world(i, j, k)));
                ++n;
            }
    const auto e = analytic_dvf_error(id, spec.field);
    CHECK(e.voxels == n);
    CHECK(e.mean_mm == doctest::Approx(sum / static_cast<double>(n)).epsilon(1e-12));
}
