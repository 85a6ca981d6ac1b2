#pragma once

#include "occtrack/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

namespace occtrack {

enum class RenderMode { occupancy, classes, composite };

/// Parses "occupancy", "classes" or "composite"; throws std::invalid_argument otherwise.
RenderMode parse_render_mode(std::string_view name);

using Rgb = std::array<std::uint8_t, 3>;

/// Class palette: background gray, pedestrian red, car blue, cyclist green; unoccupied black.
Rgb class_color(std::uint8_t cls);

/// Binary P5 image of an M x M probability grid, p mapped linearly to round(255 p).
std::vector<std::uint8_t> render_pgm(const Eigen::ArrayXXf& probability);

/// Binary P6 image of a class grid (kIgnoreLabel = unoccupied).
std::vector<std::uint8_t> render_classes_ppm(const ByteGrid& classes);

/// Class colours scaled by occupancy probability.
std::vector<std::uint8_t> render_composite_ppm(const ByteGrid& classes, const Eigen::ArrayXXf& probability);

}  // namespace occtrack
