#pragma once

// Byte-buffer helpers shared across the library: hex conversion and the
// little-endian primitive encoders used by every canonical serialization.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fairrelay {

using Bytes = std::vector<uint8_t>;

[[nodiscard]] std::string to_hex(std::span<const uint8_t> data);
[[nodiscard]] std::optional<Bytes> from_hex(std::string_view hex);

// Little-endian primitive encoders. Append in place so callers can build a
// canonical buffer incrementally.
void put_u16(Bytes& out, uint16_t v);
void put_u32(Bytes& out, uint32_t v);
void put_u64(Bytes& out, uint64_t v);
void put_raw(Bytes& out, std::span<const uint8_t> data);
// Length-prefixed (u32) byte string; use for variable-length fields so that
// concatenated encodings stay injective.
void put_blob(Bytes& out, std::span<const uint8_t> data);

[[nodiscard]] Bytes as_bytes(std::string_view s);

// Sequential reader over a byte span, inverse of the put_* encoders. Every
// getter returns nullopt once the remaining buffer is too short; a decoder
// should end with done() to reject trailing garbage.
class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> data) : data_(data) {}

  [[nodiscard]] std::optional<uint16_t> get_u16();
  [[nodiscard]] std::optional<uint32_t> get_u32();
  [[nodiscard]] std::optional<uint64_t> get_u64();
  [[nodiscard]] std::optional<std::span<const uint8_t>> get_raw(size_t n);
  [[nodiscard]] std::optional<Bytes> get_blob();
  [[nodiscard]] bool done() const { return off_ == data_.size(); }
  [[nodiscard]] size_t remaining() const { return data_.size() - off_; }

 private:
  std::span<const uint8_t> data_;
  size_t off_ = 0;
};

template <size_t N>
[[nodiscard]] std::array<uint8_t, N> take_array(std::span<const uint8_t> data) {
  std::array<uint8_t, N> out{};
  for (size_t i = 0; i < N && i < data.size(); ++i) out[i] = data[i];
  return out;
}

}  // namespace fairrelay
