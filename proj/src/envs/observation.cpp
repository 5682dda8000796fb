#include "vldac/envs/observation.hpp"

#include <string>

namespace vldac {

std::vector<double> Observation::frames_flat() const {
  validate();
  const int L = dims.frame_stack, C = dims.channels, H = dims.height, W = dims.width;
  std::vector<double> out(static_cast<size_t>(L) * C * H * W, 0.0);
  const size_t plane = static_cast<size_t>(H) * W;
  for (int l = 0; l < L; ++l) {
    for (size_t p = 0; p < plane; ++p) {
      const std::uint8_t c = cells[static_cast<size_t>(l) * plane + p];
      out[(static_cast<size_t>(l) * C + c) * plane + p] = 1.0;
    }
  }
  return out;
}

std::uint64_t Observation::fingerprint() const {
  std::uint64_t h = fnv1a64(cells.data(), cells.size());
  h = fnv1a64(&dims, 0, h);  // keep dims out of byte-hash (padding); mix fields below
  for (int v : {dims.frame_stack, dims.channels, dims.height, dims.width, dims.context_len})
    h = fnv1a64(&v, sizeof(v), h);
  for (int t : context_tokens) h = fnv1a64(&t, sizeof(t), h);
  return h;
}

void Observation::validate() const {
  if (dims.frame_stack <= 0 || dims.channels <= 0 || dims.height <= 0 || dims.width <= 0)
    throw ObservationError("observation: non-positive dims");
  const size_t want = static_cast<size_t>(dims.frame_stack) * dims.height * dims.width;
  if (cells.size() != want)
    throw ObservationError("observation: cell count " + std::to_string(cells.size()) +
                           " != expected " + std::to_string(want));
  for (std::uint8_t c : cells)
    if (c >= dims.channels) throw ObservationError("observation: cell type out of channel range");
  if (static_cast<int>(context_tokens.size()) != dims.context_len)
    throw ObservationError("observation: context length mismatch");
}

}  // namespace vldac
