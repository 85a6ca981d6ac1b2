#include "occtrack/render.hpp"

#include "occtrack/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace occtrack {
namespace {

std::vector<std::uint8_t> header(const char* magic, Eigen::Index w, Eigen::Index h) {
  const std::string s = std::string(magic) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  return {s.begin(), s.end()};
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

RenderMode parse_render_mode(std::string_view name) {
  if (name == "occupancy") return RenderMode::occupancy;
  if (name == "classes") return RenderMode::classes;
  if (name == "composite") return RenderMode::composite;
  throw std::invalid_argument("unknown render mode '" + std::string(name) + "'");
}

Rgb class_color(std::uint8_t cls) {
  switch (cls) {
    case 0: return {128, 128, 128};
    case 1: return {255, 0, 0};
    case 2: return {0, 0, 255};
    case 3: return {0, 200, 0};
    default: return {0, 0, 0};
  }
}

// Rows are written top to bottom in grid row order (row 0 first).
std::vector<std::uint8_t> render_pgm(const Eigen::ArrayXXf& probability) {
  auto out = header("P5", probability.cols(), probability.rows());
  for (Eigen::Index y = 0; y < probability.rows(); ++y)
    for (Eigen::Index x = 0; x < probability.cols(); ++x) out.push_back(to_byte(probability(y, x)));
  return out;
}

std::vector<std::uint8_t> render_classes_ppm(const ByteGrid& classes) {
  auto out = header("P6", classes.cols(), classes.rows());
  for (Eigen::Index y = 0; y < classes.rows(); ++y)
    for (Eigen::Index x = 0; x < classes.cols(); ++x) {
      const auto c = class_color(classes(y, x));
      out.insert(out.end(), c.begin(), c.end());
    }
  return out;
}

std::vector<std::uint8_t> render_composite_ppm(const ByteGrid& classes, const Eigen::ArrayXXf& probability) {
  if (classes.rows() != probability.rows() || classes.cols() != probability.cols())
    throw ShapeError("composite render: class and probability grids differ in size");
  auto out = header("P6", classes.cols(), classes.rows());
  for (Eigen::Index y = 0; y < classes.rows(); ++y)
    for (Eigen::Index x = 0; x < classes.cols(); ++x) {
      const auto cls = classes(y, x);
      // Unlabeled but possibly occupied cells are drawn in white.
      const Rgb base = cls == kIgnoreLabel ? Rgb{255, 255, 255} : class_color(cls);
      const double p = std::clamp<double>(probability(y, x), 0.0, 1.0);
      for (auto ch : base) out.push_back(static_cast<std::uint8_t>(std::lround(ch * p)));
    }
  return out;
}

}  // namespace occtrack
