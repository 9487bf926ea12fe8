#pragma once

// Static slice renders written as binary PPM images.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "morea/mesh.hpp"
#include "morea/volume.hpp"

namespace morea {

struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;

    Image() = default;
    Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3, 0) {}

    void set(int x, int y, std::array<std::uint8_t, 3> c) {
        if (x < 0 || y < 0 || x >= width || y >= height) return;
        const auto i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3;
        rgb[i] = c[0];
        rgb[i + 1] = c[1];
        rgb[i + 2] = c[2];
    }
    std::array<std::uint8_t, 3> get(int x, int y) const {
        const auto i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3;
        return {rgb[i], rgb[i + 1], rgb[i + 2]};
    }
};

enum class RenderMode { Contours, Grid, Arrows };

struct RenderOptions {
    RenderMode mode = RenderMode::Contours;
    /// 0 = x, 1 = y, 2 = z; the slice is perpendicular to this axis.
    int axis = 2;
    /// Negative selects the middle slice.
    int index = -1;
    int scale = 4;
    int grid_step = 4;
    int arrow_step = 4;
    double arrow_scale = 1.0;
};

/// Color of the n-th contour.
std::array<std::uint8_t, 3> contour_color(std::size_t n);

/// Grayscale slice of `volume`.
/// Contours: outlines of `masks`, first warped by `inverse` when given.
/// Grid: the slice's regular grid moved by `forward` (zero field when null).
/// Arrows: in-plane `forward` displacements on a regular lattice.
/// Throws DataError for an out-of-range slice or mismatched geometries.
Image render_slice(const Volume &volume, std::span<const LabelMask> masks, const DeformationVectorField *forward,
                   const DeformationVectorField *inverse, const RenderOptions &opt);

void save_ppm(const std::filesystem::path &path, const Image &img);
Image load_ppm(const std::filesystem::path &path);

} // namespace morea
