#pragma once

#include "vsdlab/distill.hpp"

#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace vsdlab {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kCheckpointVersion = 1;

// Text snapshot of a distillation run. Doubles are written in shortest
// round-trip form, so a restored state continues bit for bit. The RNG needs
// no saved counters: every draw is keyed by (seed, step), and `next_step`
// fixes where the streams resume.
struct Checkpoint {
  std::string config_text;  // echo of the run configuration
  std::uint64_t seed = 0;
  DistillState state;
};

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
// Throws CheckpointError on a version mismatch or malformed input.
Checkpoint read_checkpoint(std::istream& in);

}  // namespace vsdlab
