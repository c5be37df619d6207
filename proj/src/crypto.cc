#include "fairrelay/crypto.hh"

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <cstring>
#include <memory>
#include <stdexcept>

namespace fairrelay {

namespace {

struct PkeyDeleter {
  void operator()(EVP_PKEY* p) const { EVP_PKEY_free(p); }
};
struct CtxDeleter {
  void operator()(EVP_MD_CTX* c) const { EVP_MD_CTX_free(c); }
};
struct PctxDeleter {
  void operator()(EVP_PKEY_CTX* c) const { EVP_PKEY_CTX_free(c); }
};

using PkeyPtr = std::unique_ptr<EVP_PKEY, PkeyDeleter>;
using MdCtxPtr = std::unique_ptr<EVP_MD_CTX, CtxDeleter>;
using PkeyCtxPtr = std::unique_ptr<EVP_PKEY_CTX, PctxDeleter>;

PkeyPtr raw_private(int type, std::span<const uint8_t> seed) {
  EVP_PKEY* p =
      EVP_PKEY_new_raw_private_key(type, nullptr, seed.data(), seed.size());
  if (p == nullptr) throw std::runtime_error("keypair construction failed");
  return PkeyPtr(p);
}

PkeyPtr raw_public(int type, std::span<const uint8_t> pub) {
  EVP_PKEY* p =
      EVP_PKEY_new_raw_public_key(type, nullptr, pub.data(), pub.size());
  return PkeyPtr(p);  // may be null for malformed encodings
}

std::array<uint8_t, 32> raw_public_bytes(EVP_PKEY* key) {
  std::array<uint8_t, 32> out{};
  size_t len = out.size();
  if (EVP_PKEY_get_raw_public_key(key, out.data(), &len) != 1 || len != 32) {
    throw std::runtime_error("public key extraction failed");
  }
  return out;
}

// Expands (key, nonce) into a keystream of `len` bytes, 32 bytes per hash
// block: block_i = H(tag ∥ key ∥ nonce ∥ i).
Bytes keystream(std::string_view tag,
                const std::array<uint8_t, kSymKeySize>& key,
                const Nonce& nonce, size_t len) {
  Bytes stream;
  stream.reserve(len + kDigestSize);
  Bytes block_input;
  block_input.reserve(tag.size() + key.size() + nonce.size() + 8);
  put_raw(block_input, as_bytes(tag));
  put_raw(block_input, key);
  put_raw(block_input, nonce);
  const size_t counter_offset = block_input.size();
  put_u64(block_input, 0);
  for (uint64_t i = 0; stream.size() < len; ++i) {
    for (int b = 0; b < 8; ++b) {
      block_input[counter_offset + b] = static_cast<uint8_t>(i >> (8 * b));
    }
    Digest d = sha256(block_input);
    stream.insert(stream.end(), d.begin(), d.end());
  }
  stream.resize(len);
  return stream;
}

Bytes xor_with(std::span<const uint8_t> data, const Bytes& stream) {
  Bytes out(data.begin(), data.end());
  for (size_t i = 0; i < out.size(); ++i) out[i] ^= stream[i];
  return out;
}

std::array<uint8_t, 32> x25519_shared(const std::array<uint8_t, 32>& priv,
                                      const std::array<uint8_t, 32>& peer_pub) {
  PkeyPtr sk = raw_private(EVP_PKEY_X25519, priv);
  PkeyPtr pk = raw_public(EVP_PKEY_X25519, peer_pub);
  if (!pk) throw std::runtime_error("malformed X25519 public key");
  PkeyCtxPtr ctx(EVP_PKEY_CTX_new(sk.get(), nullptr));
  std::array<uint8_t, 32> shared{};
  size_t len = shared.size();
  if (!ctx || EVP_PKEY_derive_init(ctx.get()) != 1 ||
      EVP_PKEY_derive_set_peer(ctx.get(), pk.get()) != 1 ||
      EVP_PKEY_derive(ctx.get(), shared.data(), &len) != 1 || len != 32) {
    throw std::runtime_error("X25519 derivation failed");
  }
  return shared;
}

}  // namespace

// ============================================================================
// Hashing
// ============================================================================

Digest sha256(std::span<const uint8_t> data) {
  Digest out{};
  SHA256(data.data(), data.size(), out.data());
  return out;
}

Digest sha256_tagged(std::string_view tag, std::span<const uint8_t> data) {
  Bytes buf;
  buf.reserve(tag.size() + 1 + data.size());
  put_raw(buf, as_bytes(tag));
  buf.push_back(0x00);  // tag terminator keeps (tag, data) parsing unambiguous
  put_raw(buf, data);
  return sha256(buf);
}

// ============================================================================
// Commitments
// ============================================================================

Bytes CommitmentValue::encode() const {
  Bytes out;
  out.reserve(kDigestSize + kPaddingSize);
  put_raw(out, c);
  put_raw(out, d);
  return out;
}

std::optional<CommitmentValue> CommitmentValue::decode(
    std::span<const uint8_t> data) {
  if (data.size() != kDigestSize + kPaddingSize) return std::nullopt;
  CommitmentValue out;
  std::memcpy(out.c.data(), data.data(), kDigestSize);
  std::memcpy(out.d.data(), data.data() + kDigestSize, kPaddingSize);
  return out;
}

CommitmentValue commit_with_pad(std::span<const uint8_t> x, const Padding& d) {
  Bytes buf;
  buf.reserve(x.size() + d.size());
  put_raw(buf, x);
  put_raw(buf, d);
  return CommitmentValue{sha256_tagged("fr/v1/commit", buf), d};
}

CommitmentValue commit(std::span<const uint8_t> x, DetRng& rng) {
  return commit_with_pad(x, rng.array<kPaddingSize>());
}

bool open(std::span<const uint8_t> x, const CommitmentValue& h) {
  return commit_with_pad(x, h.d).c == h.c;
}

// ============================================================================
// Symmetric encryption
// ============================================================================

Bytes SymKey::encode() const {
  Bytes out;
  out.reserve(kSymKeyEncodedSize);
  put_raw(out, key);
  put_raw(out, nonce);
  return out;
}

std::optional<SymKey> SymKey::decode(std::span<const uint8_t> data) {
  if (data.size() != kSymKeyEncodedSize) return std::nullopt;
  SymKey out;
  std::memcpy(out.key.data(), data.data(), kSymKeySize);
  std::memcpy(out.nonce.data(), data.data() + kSymKeySize, kNonceSize);
  return out;
}

SymKey se_keygen(DetRng& rng) {
  return SymKey{rng.array<kSymKeySize>(), rng.array<kNonceSize>()};
}

Bytes se_enc(std::span<const uint8_t> m,
             const std::array<uint8_t, kSymKeySize>& key, const Nonce& nonce) {
  return xor_with(m, keystream("fr/v1/se", key, nonce, m.size()));
}

Bytes se_dec(std::span<const uint8_t> c,
             const std::array<uint8_t, kSymKeySize>& key, const Nonce& nonce) {
  return se_enc(c, key, nonce);  // XOR keystream is an involution
}

Nonce tweak_nonce(const Nonce& nonce, uint32_t id) {
  Bytes buf;
  buf.reserve(kNonceSize + 4);
  put_raw(buf, nonce);
  put_u32(buf, id);
  Digest d = sha256_tagged("fr/v1/tweak", buf);
  Nonce out{};
  std::memcpy(out.data(), d.data(), kNonceSize);
  return out;
}

// ============================================================================
// XOR masking
// ============================================================================

std::optional<Bytes> xor_mask(std::span<const uint8_t> a,
                              std::span<const uint8_t> b) {
  if (a.size() != b.size()) return std::nullopt;
  Bytes out(a.begin(), a.end());
  for (size_t i = 0; i < out.size(); ++i) out[i] ^= b[i];
  return out;
}

// ============================================================================
// Asymmetric keys
// ============================================================================

Bytes PublicKey::encode() const {
  Bytes out;
  out.reserve(2 * kPublicKeySize);
  put_raw(out, sig);
  put_raw(out, enc);
  return out;
}

KeyPair keypair_from_seed(const std::array<uint8_t, 32>& seed) {
  KeyPair k;
  k.sig_seed = sha256_tagged("fr/v1/seed-sig", seed);
  k.enc_seed = sha256_tagged("fr/v1/seed-enc", seed);
  PkeyPtr sig = raw_private(EVP_PKEY_ED25519, k.sig_seed);
  PkeyPtr enc = raw_private(EVP_PKEY_X25519, k.enc_seed);
  k.pub.sig = raw_public_bytes(sig.get());
  k.pub.enc = raw_public_bytes(enc.get());
  return k;
}

KeyPair ae_keygen(DetRng& rng) { return keypair_from_seed(rng.array<32>()); }

Signature ae_sign(std::span<const uint8_t> m, const KeyPair& k) {
  PkeyPtr sk = raw_private(EVP_PKEY_ED25519, k.sig_seed);
  MdCtxPtr ctx(EVP_MD_CTX_new());
  Signature sig{};
  size_t len = 64;
  if (!ctx ||
      EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr, sk.get()) !=
          1 ||
      EVP_DigestSign(ctx.get(), sig.data(), &len, m.data(), m.size()) != 1 ||
      len != 64) {
    throw std::runtime_error("signing failed");
  }
  sig[64] = 0x01;  // encoding version
  return sig;
}

bool ae_verify(std::span<const uint8_t> m, const Signature& sig,
               const PublicKey& pk) {
  if (sig[64] != 0x01) return false;
  PkeyPtr key = raw_public(EVP_PKEY_ED25519, pk.sig);
  if (!key) return false;
  MdCtxPtr ctx(EVP_MD_CTX_new());
  if (!ctx || EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr,
                                   key.get()) != 1) {
    return false;
  }
  return EVP_DigestVerify(ctx.get(), sig.data(), 64, m.data(), m.size()) == 1;
}

Bytes ae_enc(std::span<const uint8_t> m, const PublicKey& pk) {
  // Ephemeral scalar bound to (recipient, message): deterministic, so repeated
  // encryptions are bit-identical — required for reproducible traces.
  Bytes eph_input;
  put_raw(eph_input, pk.enc);
  Digest mh = sha256(m);
  put_raw(eph_input, mh);
  std::array<uint8_t, 32> eph_seed = sha256_tagged("fr/v1/pke-eph", eph_input);
  PkeyPtr eph = raw_private(EVP_PKEY_X25519, eph_seed);
  std::array<uint8_t, 32> eph_pub = raw_public_bytes(eph.get());
  std::array<uint8_t, 32> shared = x25519_shared(eph_seed, pk.enc);

  Bytes kdf_input;
  put_raw(kdf_input, shared);
  put_raw(kdf_input, eph_pub);
  std::array<uint8_t, kSymKeySize> stream_key =
      sha256_tagged("fr/v1/pke-key", kdf_input);

  Bytes out;
  out.reserve(kAeEncOverhead + m.size());
  put_raw(out, eph_pub);
  Bytes body = xor_with(m, keystream("fr/v1/pke", stream_key, Nonce{}, m.size()));
  put_raw(out, body);
  return out;
}

std::optional<Bytes> ae_dec(std::span<const uint8_t> c, const KeyPair& k) {
  if (c.size() < kAeEncOverhead) return std::nullopt;
  std::array<uint8_t, 32> eph_pub{};
  std::memcpy(eph_pub.data(), c.data(), 32);
  std::array<uint8_t, 32> shared;
  try {
    shared = x25519_shared(k.enc_seed, eph_pub);
  } catch (const std::runtime_error&) {
    return std::nullopt;
  }
  Bytes kdf_input;
  put_raw(kdf_input, shared);
  put_raw(kdf_input, eph_pub);
  std::array<uint8_t, kSymKeySize> stream_key =
      sha256_tagged("fr/v1/pke-key", kdf_input);
  std::span<const uint8_t> body = c.subspan(kAeEncOverhead);
  return xor_with(body,
                  keystream("fr/v1/pke", stream_key, Nonce{}, body.size()));
}

}  // namespace fairrelay
