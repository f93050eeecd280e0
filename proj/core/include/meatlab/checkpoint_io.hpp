#pragma once

#include "meatlab/checkpoint.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace meat {

// Checkpoint file layout (all integers and floats little-endian):
//
//   offset 0   char[8]  magic "MEATCKPT"
//          8   u32      format version
//         12   u8       byte-order tag 'L'; 3 reserved zero bytes
//         16   u64      payload length P
//         24   P bytes  payload
//     24 + P   u32      CRC-32 (zlib polynomial) of bytes [0, 24 + P)
//
// Payload: i64 epoch; u32 tensor count, then per tensor: str layer, str name,
// tensor; u64 BN batch counter; u32 BN layer count, then per layer: str layer,
// tensor mean, tensor var. A str is u32 length + bytes; a tensor is u32 rank,
// u64 dims[rank], f32 values[product(dims)].
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws TruncatedError, VersionError, ChecksumError or FormatError; never returns a partial value.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Writes through a temporary file and renames, so readers never see a half-written checkpoint.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Writes `bytes` to `path` via a sibling temporary and rename.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

} // namespace meat
