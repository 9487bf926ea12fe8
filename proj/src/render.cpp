#include "morea/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "morea/error.hpp"
#include "morea/metrics.hpp"

namespace morea {

namespace {

constexpr std::array<std::array<std::uint8_t, 3>, 8> kPalette{{{230, 25, 75},
                                                               {60, 180, 75},
                                                               {0, 130, 200},
                                                               {245, 130, 48},
                                                               {145, 30, 180},
                                                               {70, 240, 240},
                                                               {240, 50, 230},
                                                               {210, 245, 60}}};
constexpr std::array<std::uint8_t, 3> kGridColor{255, 215, 0};
constexpr std::array<std::uint8_t, 3> kArrowColor{255, 60, 60};

// In-plane axes (u, v) for a slice perpendicular to `axis`.
std::array<int, 2> plane_axes(int axis) {
    switch (axis) {
    case 0: return {1, 2};
    case 1: return {0, 2};
    default: return {0, 1};
    }
}

void draw_line(Image &img, double x0, double y0, double x1, double y1, std::array<std::uint8_t, 3> c) {
    const int steps = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
    for (int s = 0; s <= steps; ++s) {
        const double t = static_cast<double>(s) / steps;
        img.set(static_cast<int>(std::floor(x0 + t * (x1 - x0))), static_cast<int>(std::floor(y0 + t * (y1 - y0))), c);
    }
}

} // namespace

std::array<std::uint8_t, 3> contour_color(std::size_t n) { return kPalette[n % kPalette.size()]; }

Image render_slice(const Volume &volume, std::span<const LabelMask> masks, const DeformationVectorField *forward,
                   const DeformationVectorField *inverse, const RenderOptions &opt) {
    const Geometry &g = volume.geometry;
    if (opt.axis < 0 || opt.axis > 2) throw DataError("slice axis must be 0, 1 or 2");
    if (opt.scale < 1) throw ConfigError("render scale must be positive");
    const int depth = g.dims[static_cast<std::size_t>(opt.axis)];
    const int slice = opt.index < 0 ? depth / 2 : opt.index;
    if (slice >= depth) throw DataError("slice index " + std::to_string(slice) + " out of range");
    for (const LabelMask &m : masks)
        if (!(m.geometry == g)) throw DataError("mask '" + m.label + "' does not match the volume geometry");
    if (forward && !(forward->geometry == g)) throw DataError("forward DVF does not match the volume geometry");
    if (inverse && !(inverse->geometry == g)) throw DataError("inverse DVF does not match the volume geometry");

    const auto [ua, va] = plane_axes(opt.axis);
    const int nu = g.dims[static_cast<std::size_t>(ua)];
    const int nv = g.dims[static_cast<std::size_t>(va)];
    const int s = opt.scale;
    Image img(nu * s, nv * s);
    const auto voxel = [&](int u, int v) {
        std::array<int, 3> ijk{};
        ijk[static_cast<std::size_t>(opt.axis)] = slice;
        ijk[static_cast<std::size_t>(ua)] = u;
        ijk[static_cast<std::size_t>(va)] = v;
        return ijk;
    };
    // Rows run top to bottom with increasing v flipped, so +v points up.
    const auto py = [&](double v) { return (nv - 1 - v) * s; };

    float lo = std::numeric_limits<float>::infinity(), hi = -lo;
    for (float x : volume.data) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    const float range = hi > lo ? hi - lo : 1.0f;
    for (int v = 0; v < nv; ++v)
        for (int u = 0; u < nu; ++u) {
            const auto ijk = voxel(u, v);
            const auto gray = static_cast<std::uint8_t>(
                std::lround(255.0f * (volume.at(ijk[0], ijk[1], ijk[2]) - lo) / range));
            for (int dy = 0; dy < s; ++dy)
                for (int dx = 0; dx < s; ++dx) img.set(u * s + dx, (nv - 1 - v) * s + dy, {gray, gray, gray});
        }

    switch (opt.mode) {
    case RenderMode::Contours:
        for (std::size_t n = 0; n < masks.size(); ++n) {
            const LabelMask shown = inverse ? warp_mask(masks[n], *inverse) : masks[n];
            const auto in = [&](int u, int v) {
                if (u < 0 || v < 0 || u >= nu || v >= nv) return false;
                const auto ijk = voxel(u, v);
                return shown.at(ijk[0], ijk[1], ijk[2]) != 0;
            };
            for (int v = 0; v < nv; ++v)
                for (int u = 0; u < nu; ++u) {
                    if (!in(u, v)) continue;
                    if (in(u - 1, v) && in(u + 1, v) && in(u, v - 1) && in(u, v + 1)) continue;
                    for (int dy = 0; dy < s; ++dy)
                        for (int dx = 0; dx < s; ++dx) img.set(u * s + dx, (nv - 1 - v) * s + dy, contour_color(n));
                }
        }
        break;
    case RenderMode::Grid: {
        if (opt.grid_step < 1) throw ConfigError("grid step must be positive");
        constexpr int kSub = 4;
        const auto moved = [&](double u, double v) {
            std::array<double, 3> idx{};
            idx[static_cast<std::size_t>(opt.axis)] = slice;
            idx[static_cast<std::size_t>(ua)] = u;
            idx[static_cast<std::size_t>(va)] = v;
            const Vec3 p = g.origin_mm + Vec3{idx[0] * g.spacing_mm.x, idx[1] * g.spacing_mm.y, idx[2] * g.spacing_mm.z};
            const Vec3 d = forward ? sample_dvf(*forward, p) : Vec3{};
            return std::array<double, 2>{u + d[static_cast<std::size_t>(ua)] / g.spacing_mm[static_cast<std::size_t>(ua)],
                                         v + d[static_cast<std::size_t>(va)] / g.spacing_mm[static_cast<std::size_t>(va)]};
        };
        const auto px = [&](double u) { return u * s + s / 2.0; };
        for (int line = 0; line < nu; line += opt.grid_step)
            for (int k = 0; k < (nv - 1) * kSub; ++k) {
                const auto a = moved(line, static_cast<double>(k) / kSub);
                const auto b = moved(line, static_cast<double>(k + 1) / kSub);
                draw_line(img, px(a[0]), py(a[1]) + s / 2.0, px(b[0]), py(b[1]) + s / 2.0, kGridColor);
            }
        for (int line = 0; line < nv; line += opt.grid_step)
            for (int k = 0; k < (nu - 1) * kSub; ++k) {
                const auto a = moved(static_cast<double>(k) / kSub, line);
                const auto b = moved(static_cast<double>(k + 1) / kSub, line);
                draw_line(img, px(a[0]), py(a[1]) + s / 2.0, px(b[0]), py(b[1]) + s / 2.0, kGridColor);
            }
        break;
    }
    case RenderMode::Arrows: {
        if (opt.arrow_step < 1) throw ConfigError("arrow step must be positive");
        for (int v = opt.arrow_step / 2; v < nv; v += opt.arrow_step)
            for (int u = opt.arrow_step / 2; u < nu; u += opt.arrow_step) {
                const auto ijk = voxel(u, v);
                const Vec3 d = forward ? forward->at(ijk[0], ijk[1], ijk[2]) : Vec3{};
                const double du = d[static_cast<std::size_t>(ua)] / g.spacing_mm[static_cast<std::size_t>(ua)];
                const double dv = d[static_cast<std::size_t>(va)] / g.spacing_mm[static_cast<std::size_t>(va)];
                const double x0 = u * s + s / 2.0, y0 = py(v) + s / 2.0;
                const double x1 = x0 + du * s * opt.arrow_scale, y1 = y0 - dv * s * opt.arrow_scale;
                draw_line(img, x0, y0, x1, y1, kArrowColor);
                for (int dy = -1; dy <= 0; ++dy)
                    for (int dx = -1; dx <= 0; ++dx)
                        img.set(static_cast<int>(std::floor(x1)) + dx, static_cast<int>(std::floor(y1)) + dy, kArrowColor);
            }
        break;
    }
    }
    return img;
}

void save_ppm(const std::filesystem::path &path, const Image &img) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw RuntimeFailure("cannot write " + path.string());
    f << "P6\n" << img.width << ' ' << img.height << "\n255\n";
    f.write(reinterpret_cast<const char *>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
}

Image load_ppm(const std::filesystem::path &path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path.string());
    std::string magic;
    int w = 0, h = 0, maxv = 0;
    f >> magic >> w >> h >> maxv;
    if (magic != "P6" || w <= 0 || h <= 0 || maxv != 255) throw DataError("unsupported PPM " + path.string());
    f.get();
    Image img(w, h);
    f.read(reinterpret_cast<char *>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    if (!f) throw DataError("truncated PPM " + path.string());
    return img;
}

} // namespace morea
