#pragma once

#include <filesystem>
#include <string>

#include "museum/museum.hpp"

namespace museum {

// Single-file archive:
//   "MUSEUMCK" | u32 version | u64 manifest bytes | manifest JSON
//   | u64 blob bytes | little-endian float32 tensors at manifest offsets
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const Museum& museum);
Museum deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const Museum& museum, const std::filesystem::path& path);
// IoError when unreadable; FormatError on a bad magic, version mismatch,
// corrupt manifest or truncated blob.
Museum load_checkpoint(const std::filesystem::path& path);

// Lower-case hex SHA-256.
std::string sha256_hex(const std::string& bytes);
std::string file_sha256(const std::filesystem::path& path);

}  // namespace museum
