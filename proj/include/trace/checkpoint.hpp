#ifndef TRACE_CHECKPOINT_HPP
#define TRACE_CHECKPOINT_HPP

#include <cstdint>
#include <string>

#include "trace/model.hpp"

namespace trace {

/// Single-file checkpoint: the magic string "TRACEHDv1" and a newline, an
/// 8-byte little-endian manifest length, a JSON manifest (configs, seed,
/// tensor directory with name/shape/offset/trainable), then raw 32-bit
/// little-endian tensor payloads in manifest order. Values are stored in
/// 32-bit precision, so a round-trip perturbs parameters by float rounding;
/// predictions move by less than 1e-5.
void save_checkpoint(const TraceModel& model, const std::string& path, std::uint64_t seed = 0);

struct LoadedCheckpoint {
  TraceModel model;
  std::uint64_t seed = 0;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace trace

#endif
