#pragma once

// TVTK v1 container.
//
// Single tensor (kind 0 = video tokens, 1 = text tokens):
//   "TVTK" | u32 version=1 | u8 kind | u8 rank | rank × u32 extents
//   | payload: f32 row-major | u32 CRC32(payload)
//
// Named bundle (kind 2 = parameters, 3 = embedding index):
//   "TVTK" | u32 version=1 | u8 kind | u32 n_tensors
//   | n_tensors × (u16 name_len | name | u8 rank | rank × u32 extents)
//   | u32 n_lists | n_lists × (u16 name_len | name | u32 count | count × (u32 len | bytes))
//   | payload: every tensor's f32 values in manifest order
//   | u32 CRC32(all bytes after the kind byte, up to the checksum)
//
// All integers and reals are little-endian.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "crosstvr/tensor.hpp"

namespace crosstvr::tvtk {

enum class Kind : std::uint8_t { video = 0, text = 1, params = 2, index = 3 };

inline constexpr std::uint32_t kVersion = 1;

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

struct Record {
  Kind kind = Kind::video;
  Shape shape;
  std::vector<float> data;
};

std::vector<std::uint8_t> encode(const Record& record);
Record decode(std::span<const std::uint8_t> bytes);

struct Bundle {
  Kind kind = Kind::params;
  std::vector<std::pair<std::string, TensorF>> tensors;
  std::vector<std::pair<std::string, std::vector<std::string>>> lists;

  const TensorF& tensor(const std::string& name) const;
  const std::vector<std::string>& list(const std::string& name) const;
};

std::vector<std::uint8_t> encode(const Bundle& bundle);
Bundle decode_bundle(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

inline void save(const Record& record, const std::filesystem::path& path) { write_file(path, encode(record)); }
inline Record load(const std::filesystem::path& path) { return decode(read_file(path)); }
inline void save(const Bundle& bundle, const std::filesystem::path& path) { write_file(path, encode(bundle)); }
inline Bundle load_bundle(const std::filesystem::path& path) { return decode_bundle(read_file(path)); }

}  // namespace crosstvr::tvtk
