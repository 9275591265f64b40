#include "vsdlab/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

namespace vsdlab {

void write_density_ppm(std::ostream& out, const GridSpec& grid, const std::vector<double>& log_values,
                       const std::vector<Vector>& particles) {
  grid.validate();
  if (grid.dimension() != 2) throw DimensionError("density image needs a 2D grid");
  if (log_values.size() != grid.size()) throw DimensionError("density image: value count does not match grid");
  const auto w = static_cast<std::size_t>(grid.points[0]);
  const auto h = static_cast<std::size_t>(grid.points[1]);

  double max_log = -std::numeric_limits<double>::infinity();
  for (double v : log_values) {
    if (std::isfinite(v)) max_log = std::max(max_log, v);
  }
  std::vector<std::uint8_t> px(w * h * 3, 0);
  for (std::size_t ix = 0; ix < w; ++ix) {
    for (std::size_t iy = 0; iy < h; ++iy) {
      const double lv = log_values[ix * h + iy];
      const double rel = std::isfinite(max_log) && std::isfinite(lv) ? std::exp(lv - max_log) : 0.0;
      const auto g = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(rel, 0.0, 1.0)));
      const std::size_t row = h - 1 - iy;
      const std::size_t o = (row * w + ix) * 3;
      px[o] = px[o + 1] = px[o + 2] = g;
    }
  }

  const Interval bx = grid.bounds[0];
  const Interval by = grid.bounds[1];
  for (const auto& p : particles) {
    require_dim(p, 2, "image particle");
    const double fx = (p[0] - bx.lo) / (bx.hi - bx.lo) * static_cast<double>(w - 1);
    const double fy = (p[1] - by.lo) / (by.hi - by.lo) * static_cast<double>(h - 1);
    if (!std::isfinite(fx) || !std::isfinite(fy)) continue;
    const long cx = std::lround(fx);
    const long cy = std::lround(fy);
    for (long dx = -1; dx <= 1; ++dx) {
      for (long dy = -1; dy <= 1; ++dy) {
        const long x = cx + dx;
        const long y = cy + dy;
        if (x < 0 || y < 0 || x >= static_cast<long>(w) || y >= static_cast<long>(h)) continue;
        const std::size_t row = h - 1 - static_cast<std::size_t>(y);
        const std::size_t o = (row * w + static_cast<std::size_t>(x)) * 3;
        px[o] = 255;
        px[o + 1] = 0;
        px[o + 2] = 0;
      }
    }
  }

  out << "P6\n" << w << ' ' << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
}

}  // namespace vsdlab
