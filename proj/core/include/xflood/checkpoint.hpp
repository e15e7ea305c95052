#pragma once

#include <string>

#include "xflood/params.hpp"

namespace xflood {

// File layout, all integers little-endian:
//   "XFLD" | version u8 (=1) | entry count u64
//   per entry, in name order:
//     name length u32 | UTF-8 name | rank u8 | extents u64 x rank | values f64 x numel
// Optimizer moments are not stored. Buffers are recognised by name on load.

inline constexpr std::uint8_t kCheckpointVersion = 1;

std::string encode_checkpoint(const ParamStore& params);
/// Throws ParseError with the byte offset of the first malformed field.
ParamStore decode_checkpoint(const std::string& bytes);

void save_checkpoint(const ParamStore& params, const std::string& path);
ParamStore load_checkpoint(const std::string& path);

/// Expected file size: 13-byte header plus, per entry, 5 + name + 8 * rank + 8 * numel.
std::size_t checkpoint_size(const ParamStore& params);

}  // namespace xflood
