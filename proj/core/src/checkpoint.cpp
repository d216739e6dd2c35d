#include "sctkg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "sctkg/error.hpp"

namespace sctkg {

namespace {

constexpr char kMagic[4] = {'S', 'K', 'G', 'C'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char bytes[4] = {
      static_cast<unsigned char>(v & 0xff),
      static_cast<unsigned char>((v >> 8) & 0xff),
      static_cast<unsigned char>((v >> 16) & 0xff),
      static_cast<unsigned char>((v >> 24) & 0xff),
  };
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) {
    throw ParseError(path, 0, "truncated checkpoint");
  }
  return static_cast<std::uint32_t>(bytes[0]) |
         (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) |
         (static_cast<std::uint32_t>(bytes[3]) << 24);
}

void put_f32(std::ostream& out, float f) {
  put_u32(out, std::bit_cast<std::uint32_t>(f));
}

float get_f32(std::istream& in, const std::string& path) {
  return std::bit_cast<float>(get_u32(in, path));
}

}  // namespace

void write_checkpoint(const std::string& path, const std::vector<NamedArray>& arrays,
                      std::uint32_t config_hash) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out.write(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, config_hash);
  put_u32(out, static_cast<std::uint32_t>(arrays.size()));
  for (const NamedArray& a : arrays) {
    put_u32(out, static_cast<std::uint32_t>(a.name.size()));
    out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    put_u32(out, static_cast<std::uint32_t>(a.dims.size()));
    std::size_t expect = 1;
    for (std::uint32_t d : a.dims) {
      put_u32(out, d);
      expect *= d;
    }
    if (expect != a.values.size()) {
      throw std::runtime_error("checkpoint entry '" + a.name +
                               "' has inconsistent dims");
    }
    for (float f : a.values) put_f32(out, f);
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<NamedArray> read_checkpoint(const std::string& path,
                                        CheckpointHeader* header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw ParseError(path, 0, "not a checkpoint file (bad magic)");
  }
  CheckpointHeader hdr;
  hdr.version = get_u32(in, path);
  if (hdr.version != kCheckpointVersion) {
    throw ParseError(path, 0, "unsupported checkpoint version " +
                                  std::to_string(hdr.version));
  }
  hdr.config_hash = get_u32(in, path);
  const std::uint32_t count = get_u32(in, path);
  std::vector<NamedArray> arrays;
  arrays.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    const std::uint32_t name_len = get_u32(in, path);
    a.name.resize(name_len);
    if (!in.read(a.name.data(), name_len)) {
      throw ParseError(path, 0, "truncated checkpoint");
    }
    const std::uint32_t rank = get_u32(in, path);
    std::size_t total = 1;
    a.dims.resize(rank);
    for (std::uint32_t r = 0; r < rank; ++r) {
      a.dims[r] = get_u32(in, path);
      total *= a.dims[r];
    }
    a.values.resize(total);
    for (std::size_t k = 0; k < total; ++k) a.values[k] = get_f32(in, path);
    arrays.push_back(std::move(a));
  }
  if (header != nullptr) *header = hdr;
  return arrays;
}

}  // namespace sctkg
