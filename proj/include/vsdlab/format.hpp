#pragma once

#include <string>

namespace vsdlab {

// Shortest round-trip decimal form; "nan", "inf", "-inf" for non-finite.
std::string format_double(double v);

}  // namespace vsdlab
