#pragma once

// Deterministic randomness. Every random draw in the library flows through a
// DetRng instance so that a run is a pure function of its seeds. mt19937_64 is
// fully specified by the standard, which keeps traces byte-identical across
// platforms; the bounded draw avoids std::uniform_int_distribution, whose
// output is implementation-defined.

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

#include "fairrelay/bytes.hh"

namespace fairrelay {

class DetRng {
 public:
  explicit DetRng(uint64_t seed) : gen_(seed) {}

  // Derives an independent stream for a named purpose, so that adding a new
  // consumer never perturbs the draws seen by existing ones.
  [[nodiscard]] static DetRng fork(uint64_t seed, std::string_view label);

  [[nodiscard]] uint64_t next_u64() { return gen_(); }

  // Uniform-ish draw in [0, n). Modulo bias is irrelevant here; determinism is
  // what matters.
  [[nodiscard]] uint64_t below(uint64_t n) { return n == 0 ? 0 : gen_() % n; }

  void fill(std::span<uint8_t> out);
  [[nodiscard]] Bytes bytes(size_t n);

  template <size_t N>
  [[nodiscard]] std::array<uint8_t, N> array() {
    std::array<uint8_t, N> out{};
    fill(out);
    return out;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace fairrelay
