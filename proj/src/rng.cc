#include "fairrelay/rng.hh"

#include "fairrelay/crypto.hh"

namespace fairrelay {

DetRng DetRng::fork(uint64_t seed, std::string_view label) {
  Bytes buf;
  put_u64(buf, seed);
  put_raw(buf, as_bytes(label));
  Digest d = sha256_tagged("fr/v1/rng-fork", buf);
  uint64_t derived = 0;
  for (int i = 0; i < 8; ++i) derived |= static_cast<uint64_t>(d[i]) << (8 * i);
  return DetRng(derived);
}

void DetRng::fill(std::span<uint8_t> out) {
  size_t i = 0;
  while (i < out.size()) {
    uint64_t word = gen_();
    for (int b = 0; b < 8 && i < out.size(); ++b, ++i) {
      out[i] = static_cast<uint8_t>(word >> (8 * b));
    }
  }
}

Bytes DetRng::bytes(size_t n) {
  Bytes out(n);
  fill(out);
  return out;
}

}  // namespace fairrelay
