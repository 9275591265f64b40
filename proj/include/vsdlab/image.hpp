#pragma once

#include "vsdlab/metrics.hpp"
#include "vsdlab/types.hpp"

#include <ostream>
#include <vector>

namespace vsdlab {

// Binary P6 image of a 2D log-density sampled on `grid` (first axis
// horizontal, second vertical with larger values at the top), grayscale
// normalized by the maximum density, with a red 3x3 marker at each particle.
// Output depends only on the inputs.
void write_density_ppm(std::ostream& out, const GridSpec& grid, const std::vector<double>& log_values,
                       const std::vector<Vector>& particles);

}  // namespace vsdlab
