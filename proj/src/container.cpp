#include "basecal/container.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "basecal/errors.hpp"

namespace basecal::container {

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<std::uint8_t, sizeof(T)> raw{};
  std::memcpy(raw.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
  out.insert(out.end(), raw.begin(), raw.end());
}

template <typename T>
T get_le(const std::uint8_t* p) {
  std::array<std::uint8_t, sizeof(T)> raw{};
  std::memcpy(raw.data(), p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
  T value;
  std::memcpy(&value, raw.data(), sizeof(T));
  return value;
}

template <typename T>
std::vector<std::uint8_t> pack(std::span<const T> values) {
  std::vector<std::uint8_t> out;
  out.reserve(values.size() * sizeof(T));
  for (const T& v : values) put_le(out, v);
  return out;
}

template <typename T>
std::vector<T> unpack(const Tensor& t, DType expected) {
  if (t.dtype != expected) {
    throw CorruptionError("tensor dtype is " + dtype_name(t.dtype) + ", expected " + dtype_name(expected));
  }
  std::vector<T> out(t.bytes.size() / sizeof(T));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = get_le<T>(t.bytes.data() + i * sizeof(T));
  return out;
}

DType parse_dtype(const std::string& s) {
  if (s == "f32") return DType::F32;
  if (s == "i32") return DType::I32;
  if (s == "u8") return DType::U8;
  throw FormatError("unknown tensor dtype '" + s + "'");
}

std::string magic_str(const Magic& m) { return std::string(m.begin(), m.end()); }

}  // namespace

std::string dtype_name(DType t) {
  switch (t) {
    case DType::F32: return "f32";
    case DType::I32: return "i32";
    case DType::U8: return "u8";
  }
  return "?";
}

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::F32: return 4;
    case DType::I32: return 4;
    case DType::U8: return 1;
  }
  return 0;
}

std::uint64_t Tensor::element_count() const {
  std::uint64_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

Tensor Tensor::from_f32(std::span<const float> values, std::vector<std::uint64_t> shape) {
  return Tensor{DType::F32, std::move(shape), pack(values)};
}
Tensor Tensor::from_i32(std::span<const std::int32_t> values, std::vector<std::uint64_t> shape) {
  return Tensor{DType::I32, std::move(shape), pack(values)};
}
Tensor Tensor::from_u8(std::span<const std::uint8_t> values, std::vector<std::uint64_t> shape) {
  return Tensor{DType::U8, std::move(shape), std::vector<std::uint8_t>(values.begin(), values.end())};
}

std::vector<float> Tensor::to_f32() const { return unpack<float>(*this, DType::F32); }
std::vector<std::int32_t> Tensor::to_i32() const { return unpack<std::int32_t>(*this, DType::I32); }
std::vector<std::uint8_t> Tensor::to_u8() const { return unpack<std::uint8_t>(*this, DType::U8); }

const Tensor& Document::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw CorruptionError("missing tensor block '" + name + "'");
  return it->second;
}

std::vector<std::uint8_t> encode(const Magic& magic, std::uint32_t version, const Document& doc) {
  nlohmann::json header = doc.meta;
  nlohmann::json table = nlohmann::json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : doc.tensors) {
    if (t.element_count() * dtype_size(t.dtype) != t.bytes.size()) {
      throw ShapeError("tensor '" + name + "' byte size does not match its shape");
    }
    offset = (offset + 7) & ~std::uint64_t{7};
    table[name] = {{"dtype", dtype_name(t.dtype)},
                   {"shape", t.shape},
                   {"offset", offset},
                   {"nbytes", t.bytes.size()}};
    offset += t.bytes.size();
  }
  header["tensors"] = std::move(table);
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(magic.begin(), magic.end());
  put_le<std::uint32_t>(out, version);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  const std::size_t payload_start = out.size();
  for (const auto& [name, t] : doc.tensors) {
    const std::uint64_t at = header["tensors"][name]["offset"].get<std::uint64_t>();
    out.resize(payload_start + at, 0);
    out.insert(out.end(), t.bytes.begin(), t.bytes.end());
  }
  return out;
}

Document decode(std::span<const std::uint8_t> bytes, const Magic& magic,
                std::span<const std::uint32_t> supported, std::uint32_t* version_out) {
  constexpr std::size_t kPreamble = 4 + 4 + 8;
  if (bytes.size() < kPreamble) {
    throw FormatError("file too short for a " + magic_str(magic) + " container (" +
                      std::to_string(bytes.size()) + " bytes)");
  }
  if (std::memcmp(bytes.data(), magic.data(), 4) != 0) {
    throw FormatError("bad magic: expected '" + magic_str(magic) + "'");
  }
  const auto version = get_le<std::uint32_t>(bytes.data() + 4);
  bool ok = false;
  std::ostringstream versions;
  for (std::size_t i = 0; i < supported.size(); ++i) {
    ok = ok || supported[i] == version;
    versions << (i ? ", " : "") << supported[i];
  }
  if (!ok) {
    throw FormatError("unsupported " + magic_str(magic) + " version " + std::to_string(version) +
                      " (supported: " + versions.str() + ")");
  }
  if (version_out) *version_out = version;

  const auto header_len = get_le<std::uint64_t>(bytes.data() + 8);
  if (header_len > bytes.size() - kPreamble) throw CorruptionError("header extends past end of file");
  Document doc;
  try {
    doc.meta = nlohmann::json::parse(bytes.begin() + kPreamble, bytes.begin() + kPreamble + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed JSON header: ") + e.what());
  }
  if (!doc.meta.is_object() || !doc.meta.contains("tensors") || !doc.meta["tensors"].is_object()) {
    throw FormatError("header lacks a tensor table");
  }

  const std::size_t payload_start = kPreamble + header_len;
  const std::uint64_t payload_size = bytes.size() - payload_start;
  try {
    for (const auto& [name, entry] : doc.meta["tensors"].items()) {
      Tensor t;
      t.dtype = parse_dtype(entry.at("dtype").get<std::string>());
      t.shape = entry.at("shape").get<std::vector<std::uint64_t>>();
      const auto off = entry.at("offset").get<std::uint64_t>();
      const auto nbytes = entry.at("nbytes").get<std::uint64_t>();
      if (t.element_count() * dtype_size(t.dtype) != nbytes) {
        throw CorruptionError("tensor block '" + name + "' size disagrees with its shape");
      }
      if (off > payload_size || nbytes > payload_size - off) {
        throw CorruptionError("tensor block '" + name + "' is truncated");
      }
      const auto* begin = bytes.data() + payload_start + off;
      t.bytes.assign(begin, begin + nbytes);
      doc.tensors.emplace(name, std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed tensor table: ") + e.what());
  }
  doc.meta.erase("tensors");
  return doc;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return bytes;
}

}  // namespace basecal::container
