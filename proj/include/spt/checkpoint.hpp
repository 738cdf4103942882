#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spt/tensor.hpp"

namespace spt {

// Binary checkpoint: magic, format version, a named tensor table with raw
// little-endian f64 payloads, a config snapshot and the run seed, all guarded
// by a trailing CRC-32. Round trips are bit-exact.
struct Checkpoint {
  uint32_t version = 1;
  uint64_t seed = 0;
  std::string config_json;
  std::vector<NamedTensor> tensors;
};

inline constexpr char kCheckpointMagic[8] = {'S', 'P', 'T', 'C',
                                             'K', 'P', 'T', '1'};
inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<NamedTensor>& tensors,
                     const std::string& config_json, uint64_t seed);

// Throws FormatError on bad magic/version/checksum, IoError (with the byte
// offset) on truncation or unreadable files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

uint32_t crc32(const uint8_t* data, size_t len, uint32_t seed = 0);

}  // namespace spt
