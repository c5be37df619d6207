#include "fairrelay/bytes.hh"

namespace fairrelay {

namespace {
constexpr char kHexDigits[] = "0123456789abcdef";

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}
}  // namespace

std::string to_hex(std::span<const uint8_t> data) {
  std::string out;
  out.reserve(data.size() * 2);
  for (uint8_t b : data) {
    out.push_back(kHexDigits[b >> 4]);
    out.push_back(kHexDigits[b & 0x0f]);
  }
  return out;
}

std::optional<Bytes> from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) return std::nullopt;
  Bytes out;
  out.reserve(hex.size() / 2);
  for (size_t i = 0; i < hex.size(); i += 2) {
    int hi = hex_value(hex[i]);
    int lo = hex_value(hex[i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out.push_back(static_cast<uint8_t>((hi << 4) | lo));
  }
  return out;
}

void put_u16(Bytes& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(Bytes& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_u64(Bytes& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_raw(Bytes& out, std::span<const uint8_t> data) {
  out.insert(out.end(), data.begin(), data.end());
}

void put_blob(Bytes& out, std::span<const uint8_t> data) {
  put_u32(out, static_cast<uint32_t>(data.size()));
  put_raw(out, data);
}

Bytes as_bytes(std::string_view s) {
  return Bytes(s.begin(), s.end());
}

std::optional<uint16_t> ByteReader::get_u16() {
  auto raw = get_raw(2);
  if (!raw) return std::nullopt;
  return static_cast<uint16_t>((*raw)[0] | ((*raw)[1] << 8));
}

std::optional<uint32_t> ByteReader::get_u32() {
  auto raw = get_raw(4);
  if (!raw) return std::nullopt;
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | (*raw)[static_cast<size_t>(i)];
  return v;
}

std::optional<uint64_t> ByteReader::get_u64() {
  auto raw = get_raw(8);
  if (!raw) return std::nullopt;
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | (*raw)[static_cast<size_t>(i)];
  return v;
}

std::optional<std::span<const uint8_t>> ByteReader::get_raw(size_t n) {
  if (remaining() < n) return std::nullopt;
  auto out = data_.subspan(off_, n);
  off_ += n;
  return out;
}

std::optional<Bytes> ByteReader::get_blob() {
  auto len = get_u32();
  if (!len) return std::nullopt;
  auto raw = get_raw(*len);
  if (!raw) return std::nullopt;
  return Bytes(raw->begin(), raw->end());
}

}  // namespace fairrelay
