#pragma once

#include <cstdint>
#include <vector>

#include "vldac/errors.hpp"
#include "vldac/utils/hash.hpp"

namespace vldac {

struct ObsDims {
  int frame_stack = 0;
  int channels = 0;
  int height = 0;
  int width = 0;
  int context_len = 0;

  int flat_size() const { return frame_stack * channels * height * width; }
  bool operator==(const ObsDims&) const = default;
};

// A stacked-grid observation. Cells store one cell-type id per grid position
// per frame (compact); frames_flat() expands to one-hot channel planes
// [L,C,H,W], which is what the encoder consumes. Context tokens carry the
// episode instruction in the policy's vocabulary.
struct Observation {
  ObsDims dims;
  std::vector<std::uint8_t> cells;  // [L * H * W], values < dims.channels
  std::vector<int> context_tokens;  // length dims.context_len

  std::vector<double> frames_flat() const;
  std::uint64_t fingerprint() const;
  void validate() const;  // throws ObservationError

  bool operator==(const Observation&) const = default;
};

}  // namespace vldac
