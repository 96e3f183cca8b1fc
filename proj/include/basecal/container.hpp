#pragma once

// Single-file tensor container shared by record sets (BCRD), projection
// models (BCPJ) and base output layers (BCOL).
//
// Layout, all integers little-endian:
//   4 bytes   magic
//   u32       version
//   u64       header length H
//   H bytes   UTF-8 JSON header
//   payload   raw tensor blocks, each starting at an 8-byte aligned offset
//             relative to the first payload byte
//
// The header carries a "tensors" object mapping each tensor name to
// {"dtype", "shape", "offset", "nbytes"}; every other header key is
// free-form metadata owned by the file kind.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace basecal::container {

using Magic = std::array<char, 4>;

inline constexpr Magic kRecordMagic{'B', 'C', 'R', 'D'};
inline constexpr Magic kProjectionMagic{'B', 'C', 'P', 'J'};
inline constexpr Magic kOutputLayerMagic{'B', 'C', 'O', 'L'};

enum class DType { F32, I32, U8 };

std::string dtype_name(DType t);
std::size_t dtype_size(DType t);

struct Tensor {
  DType dtype = DType::F32;
  std::vector<std::uint64_t> shape;
  std::vector<std::uint8_t> bytes;  // little-endian payload

  std::uint64_t element_count() const;

  static Tensor from_f32(std::span<const float> values, std::vector<std::uint64_t> shape);
  static Tensor from_i32(std::span<const std::int32_t> values, std::vector<std::uint64_t> shape);
  static Tensor from_u8(std::span<const std::uint8_t> values, std::vector<std::uint64_t> shape);

  std::vector<float> to_f32() const;
  std::vector<std::int32_t> to_i32() const;
  std::vector<std::uint8_t> to_u8() const;
};

struct Document {
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, Tensor> tensors;

  bool has(const std::string& name) const { return tensors.count(name) != 0; }
  // Throws CorruptionError when absent.
  const Tensor& at(const std::string& name) const;
};

std::vector<std::uint8_t> encode(const Magic& magic, std::uint32_t version, const Document& doc);

// Version must be one of `supported`; otherwise FormatError listing them.
Document decode(std::span<const std::uint8_t> bytes, const Magic& magic,
                std::span<const std::uint32_t> supported, std::uint32_t* version_out = nullptr);

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace basecal::container
