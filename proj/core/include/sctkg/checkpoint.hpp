#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sctkg {

// Flat binary container of named arrays.
//
// Layout (all integers unsigned 32-bit little-endian, floats IEEE-754
// 32-bit little-endian):
//   magic "SKGC" | version | config_hash | entry_count
//   per entry: name_len | name bytes (UTF-8) | rank | dims[rank] | values
struct NamedArray {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

struct CheckpointHeader {
  std::uint32_t version = 1;
  std::uint32_t config_hash = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const std::string& path, const std::vector<NamedArray>& arrays,
                      std::uint32_t config_hash);

std::vector<NamedArray> read_checkpoint(const std::string& path,
                                        CheckpointHeader* header = nullptr);

}  // namespace sctkg
