#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "duet/geometry.hpp"

namespace duet {

enum class CameraId { Primary, Assistant };

/// Dense per-pixel scalar field (depth or confidence), row-major H x W.
/// Values live at integer pixel centers; sample() interpolates bilinearly
/// with clamping at the border.
struct Grid {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Grid() = default;
  Grid(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

  double at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
  double& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }

  bool inside(const Vec2& px) const {
    return px.x() >= 0.0 && px.y() >= 0.0 && px.x() <= width - 1.0 &&
           px.y() <= height - 1.0;
  }

  double sample(const Vec2& px) const {
    const double x = std::clamp(px.x(), 0.0, static_cast<double>(width - 1));
    const double y = std::clamp(px.y(), 0.0, static_cast<double>(height - 1));
    const int x0 = std::min(static_cast<int>(x), width - 2 >= 0 ? width - 2 : 0);
    const int y0 = std::min(static_cast<int>(y), height - 2 >= 0 ? height - 2 : 0);
    const int x1 = std::min(x0 + 1, width - 1);
    const int y1 = std::min(y0 + 1, height - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    return (1 - fx) * (1 - fy) * at(x0, y0) + fx * (1 - fy) * at(x1, y0) +
           (1 - fx) * fy * at(x0, y1) + fx * fy * at(x1, y1);
  }

  /// Depth sample: harmonic (inverse-depth) interpolation, which is exact
  /// for planar surfaces since 1/z is linear in pixel coordinates. Returns
  /// 0 when any corner is non-positive or the corners disagree by more than
  /// 2.5x, i.e. the footprint straddles an occlusion seam.
  double sample_strict(const Vec2& px) const {
    const double x = std::clamp(px.x(), 0.0, static_cast<double>(width - 1));
    const double y = std::clamp(px.y(), 0.0, static_cast<double>(height - 1));
    const int x0 = std::min(static_cast<int>(x), width - 2 >= 0 ? width - 2 : 0);
    const int y0 = std::min(static_cast<int>(y), height - 2 >= 0 ? height - 2 : 0);
    const int x1 = std::min(x0 + 1, width - 1);
    const int y1 = std::min(y0 + 1, height - 1);
    const double d00 = at(x0, y0), d10 = at(x1, y0);
    const double d01 = at(x0, y1), d11 = at(x1, y1);
    if (d00 <= 0.0 || d10 <= 0.0 || d01 <= 0.0 || d11 <= 0.0) return 0.0;
    const double lo = std::min(std::min(d00, d10), std::min(d01, d11));
    const double hi = std::max(std::max(d00, d10), std::max(d01, d11));
    if (hi > 1.35 * lo) return 0.0;
    const double fx = x - x0;
    const double fy = y - y0;
    const double inv = (1 - fx) * (1 - fy) / d00 + fx * (1 - fy) / d10 +
                       (1 - fx) * fy / d01 + fx * fy / d11;
    return 1.0 / inv;
  }
};

}  // namespace duet
