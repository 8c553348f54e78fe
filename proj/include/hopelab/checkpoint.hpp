#pragma once

// Checkpoint container:
//
//   bytes 0..7    magic "HOPECKPT"
//   bytes 8..11   format version, uint32 little-endian
//   bytes 12..19  header length H, uint64 little-endian
//   next H bytes  UTF-8 JSON header:
//                   {"model": {...}, "train": {...}, "step": n, "rng_state": "...",
//                    "tensors": [{"name", "shape", "dtype", "offset", "nbytes"}, ...]}
//   remainder     tensor payloads, little-endian, offsets relative to payload start
//
// Tensors are "param/<name>", "adam_m/<name>" and "adam_v/<name>" for every
// entry of the model's ParameterLayout (optimizer tensors only when present).

#include <cstdint>
#include <string>
#include <string_view>

#include "hopelab/train.hpp"

namespace hope {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError (bad magic, version, truncation, malformed header) or
/// ShapeMismatch (tensor directory disagrees with the stored model config).
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace hope
