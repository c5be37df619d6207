#pragma once

// Core cryptographic primitives: 256-bit hashing, padded hash commitments, a
// length-preserving keystream cipher with tweakable nonces, XOR masking, and
// sign/encrypt keypairs. Hashing and the asymmetric schemes are backed by
// OpenSSL (SHA-256, Ed25519, X25519); everything layered on top — commitment
// framing, keystream derivation, nonce tweaking, canonical encodings — is
// defined here so that byte-level outputs are stable across runs and
// platforms.

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>

#include "fairrelay/bytes.hh"
#include "fairrelay/rng.hh"

namespace fairrelay {

// ============================================================================
// Sizes
// ============================================================================

inline constexpr size_t kDigestSize = 32;
inline constexpr size_t kPaddingSize = 16;   // commitment blinding pad
inline constexpr size_t kSymKeySize = 32;    // symmetric master key
inline constexpr size_t kNonceSize = 16;     // 128-bit nonces
inline constexpr size_t kSignatureSize = 65; // 64-byte Ed25519 + version byte
inline constexpr size_t kPublicKeySize = 32; // per component (sign / encrypt)

using Digest = std::array<uint8_t, kDigestSize>;
using Padding = std::array<uint8_t, kPaddingSize>;
using Nonce = std::array<uint8_t, kNonceSize>;
using Signature = std::array<uint8_t, kSignatureSize>;

// ============================================================================
// Hashing
// ============================================================================

[[nodiscard]] Digest sha256(std::span<const uint8_t> data);

// Domain-separated hash: H(tag ∥ data). Every distinct use of the hash in the
// library goes through a distinct tag so that encodings cannot collide across
// contexts.
[[nodiscard]] Digest sha256_tagged(std::string_view tag,
                                   std::span<const uint8_t> data);

// ============================================================================
// Commitments: commit(x) = (H(x ∥ d), d) with a fresh 16-byte pad d.
// ============================================================================

struct CommitmentValue {
  Digest c{};
  Padding d{};

  [[nodiscard]] Bytes encode() const;  // c ∥ d, 48 bytes
  [[nodiscard]] static std::optional<CommitmentValue> decode(
      std::span<const uint8_t> data);

  friend bool operator==(const CommitmentValue&,
                         const CommitmentValue&) = default;
};

[[nodiscard]] CommitmentValue commit(std::span<const uint8_t> x, DetRng& rng);
// Recommit with a caller-chosen pad; used when a commitment must be
// reproduced bit-for-bit (e.g. long-lived content commitments).
[[nodiscard]] CommitmentValue commit_with_pad(std::span<const uint8_t> x,
                                              const Padding& d);
[[nodiscard]] bool open(std::span<const uint8_t> x, const CommitmentValue& h);

// ============================================================================
// Symmetric encryption: XOR with a hash-derived keystream. Length-preserving,
// so layered re-encryption never grows a ciphertext.
// ============================================================================

struct SymKey {
  std::array<uint8_t, kSymKeySize> key{};
  Nonce nonce{};

  [[nodiscard]] Bytes encode() const;  // key ∥ nonce, 48 bytes
  [[nodiscard]] static std::optional<SymKey> decode(
      std::span<const uint8_t> data);

  friend bool operator==(const SymKey&, const SymKey&) = default;
};

inline constexpr size_t kSymKeyEncodedSize = kSymKeySize + kNonceSize;

[[nodiscard]] SymKey se_keygen(DetRng& rng);
[[nodiscard]] Bytes se_enc(std::span<const uint8_t> m,
                           const std::array<uint8_t, kSymKeySize>& key,
                           const Nonce& nonce);
[[nodiscard]] Bytes se_dec(std::span<const uint8_t> c,
                           const std::array<uint8_t, kSymKeySize>& key,
                           const Nonce& nonce);

// Derives the per-chunk nonce: first 128 bits of H(nonce ∥ id).
[[nodiscard]] Nonce tweak_nonce(const Nonce& nonce, uint32_t id);

// ============================================================================
// XOR masking
// ============================================================================

// Bitwise XOR of equal-length strings; nullopt on length mismatch.
[[nodiscard]] std::optional<Bytes> xor_mask(std::span<const uint8_t> a,
                                            std::span<const uint8_t> b);

// ============================================================================
// Asymmetric keys: one identity per party, carrying an Ed25519 signing key
// and an X25519 encryption key, both derived from a single 32-byte seed.
// ============================================================================

struct PublicKey {
  std::array<uint8_t, kPublicKeySize> sig{};
  std::array<uint8_t, kPublicKeySize> enc{};

  [[nodiscard]] Bytes encode() const;  // sig ∥ enc, 64 bytes
  friend bool operator==(const PublicKey&, const PublicKey&) = default;
  friend auto operator<=>(const PublicKey&, const PublicKey&) = default;
};

struct KeyPair {
  std::array<uint8_t, 32> sig_seed{};  // Ed25519 private seed
  std::array<uint8_t, 32> enc_seed{};  // X25519 private scalar
  PublicKey pub;
};

[[nodiscard]] KeyPair ae_keygen(DetRng& rng);
[[nodiscard]] KeyPair keypair_from_seed(const std::array<uint8_t, 32>& seed);

[[nodiscard]] Signature ae_sign(std::span<const uint8_t> m, const KeyPair& k);
[[nodiscard]] bool ae_verify(std::span<const uint8_t> m, const Signature& sig,
                             const PublicKey& pk);

// Deterministic hybrid encryption to an identity's encryption key. The
// ephemeral key is derived from (recipient, message), so encryption needs no
// randomness source; ciphertext = ephemeral public key ∥ masked payload.
[[nodiscard]] Bytes ae_enc(std::span<const uint8_t> m, const PublicKey& pk);
[[nodiscard]] std::optional<Bytes> ae_dec(std::span<const uint8_t> c,
                                          const KeyPair& k);

inline constexpr size_t kAeEncOverhead = 32;  // prepended ephemeral key

}  // namespace fairrelay
