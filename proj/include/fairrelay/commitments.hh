#pragma once

// Signed commitments binding secrets to keys (mask commitments) and
// plaintexts to ciphertexts (encryption commitments), the two proof-of-
// misbehavior forms a customer can extract from them, per-chunk commitment
// chains, and the customer-side key/content extraction routines.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "fairrelay/bytes.hh"
#include "fairrelay/crypto.hh"
#include "fairrelay/rng.hh"

namespace fairrelay {

// ============================================================================
// Mask commitments: bind an encryption key sk and a mask secret s via
// ck = s ⊕ sk, so revealing s later delivers sk without placing it on-chain.
// ============================================================================

struct MaskCommitment {
  CommitmentValue h_sk;  // commitment to the serialized symmetric key
  CommitmentValue h_s;   // commitment to the mask secret
  Bytes ck;              // s ⊕ serialized key
  Signature sig{};

  [[nodiscard]] Bytes signing_payload() const;
  [[nodiscard]] Bytes encode() const;
  [[nodiscard]] static std::optional<MaskCommitment> decode(
      std::span<const uint8_t> data);
  friend bool operator==(const MaskCommitment&,
                         const MaskCommitment&) = default;
};

// Requires |s| = |serialized sk| (48 bytes); nullopt otherwise. The key
// commitment h_sk is passed in so a party can reuse one standing key
// commitment across its mask and encryption commitments.
[[nodiscard]] std::optional<MaskCommitment> mcom_gen(
    const SymKey& sk, std::span<const uint8_t> s, const CommitmentValue& h_sk,
    const KeyPair& k, DetRng& rng);

[[nodiscard]] bool mcom_ver(const MaskCommitment& com, const PublicKey& pk,
                            const CommitmentValue& h_sk_expected,
                            const CommitmentValue& h_s_expected);

// ============================================================================
// Encryption commitments: one per encryption layer, binding input digest,
// output digest, key commitment and chunk index under the layer owner's
// signature.
// ============================================================================

struct EncCommitment {
  CommitmentValue h_m;   // commitment to the layer's input
  CommitmentValue h_c;   // commitment to the layer's output ciphertext
  CommitmentValue h_sk;  // the owner's standing key commitment
  uint32_t id = 0;       // chunk index (1-based)
  Signature sig{};

  [[nodiscard]] Bytes signing_payload() const;
  [[nodiscard]] Bytes encode() const;
  friend bool operator==(const EncCommitment&, const EncCommitment&) = default;
};

// Encrypts `m` under (sk, tweak(nonce, id)) and commits to the layer. When
// `h_m_reuse` is given it is used verbatim as the input commitment (the
// provider reuses its long-lived per-chunk content commitments so the layer
// links to the registered Merkle leaf); otherwise a fresh commitment to `m`
// is drawn.
[[nodiscard]] std::pair<Bytes, EncCommitment> ecom_gen(
    std::span<const uint8_t> m, const SymKey& sk, const CommitmentValue& h_sk,
    uint32_t id, const KeyPair& k, DetRng& rng,
    const CommitmentValue* h_m_reuse = nullptr);

[[nodiscard]] bool ecom_ver(const EncCommitment& com, const PublicKey& pk,
                            const CommitmentValue& h_sk_expected,
                            uint32_t id_expected);

// ============================================================================
// Proofs of misbehavior.
//
// A mask-misbehavior proof shows that the secret committed by h_s, once
// revealed, fails to unmask the key committed by h_sk — i.e. the signed ck
// was not s ⊕ sk. An encryption-misbehavior proof shows that the committed
// ciphertext does not decrypt (under the committed key and chunk index) to
// anything matching the committed input.
// ============================================================================

struct PommProof {
  CommitmentValue h_sk;
  CommitmentValue h_s;
  Bytes ck;
  Signature sig{};
  Bytes s_revealed;

  [[nodiscard]] Bytes statement_digest_input(const PublicKey& tid) const;
  [[nodiscard]] Bytes encode() const;
  friend bool operator==(const PommProof&, const PommProof&) = default;
};

// Builds the proof from an accused commitment and the revealed secret.
// Refuses (nullopt) when the commitment checks out honest, when s' does not
// open h_s, or when the signature is not the accused party's — i.e. exactly
// when no misbehavior is provable.
[[nodiscard]] std::optional<PommProof> pomm_gen(const MaskCommitment& com,
                                                const PublicKey& tid,
                                                std::span<const uint8_t> s_prime);

[[nodiscard]] bool pomm_ver(const PommProof& proof, const PublicKey& tid);

struct PomeStatement {
  CommitmentValue h_m;
  CommitmentValue h_c;
  CommitmentValue h_sk;
  uint32_t id = 0;

  [[nodiscard]] Bytes encode() const;
  friend bool operator==(const PomeStatement&, const PomeStatement&) = default;
};

struct PomeProof {
  PomeStatement x;
  Signature sig{};  // the accused signature over x
  Bytes c_witness;  // ciphertext opening x.h_c
  SymKey sk_witness;

  [[nodiscard]] Bytes statement_digest_input(const PublicKey& tid) const;
  [[nodiscard]] Bytes encode() const;
  friend bool operator==(const PomeProof&, const PomeProof&) = default;
};

[[nodiscard]] std::optional<PomeProof> pome_gen(const EncCommitment& com,
                                                std::span<const uint8_t> c_prime,
                                                const PublicKey& tid,
                                                const SymKey& sk_prime);

// Verification backend. The default recomputes the decryption transparently;
// the interface leaves room for a succinct-proof backend, at the cost (here)
// of the witness being visible to whoever verifies.
class PomeVerifier {
 public:
  virtual ~PomeVerifier() = default;
  [[nodiscard]] virtual bool verify(const PomeProof& proof,
                                    const PublicKey& tid) const = 0;
};

class RecomputingPomeVerifier final : public PomeVerifier {
 public:
  [[nodiscard]] bool verify(const PomeProof& proof,
                            const PublicKey& tid) const override;
};

[[nodiscard]] bool pome_ver(const PomeProof& proof, const PublicKey& tid);

// ============================================================================
// Commitment chains and the delivered-tuple check.
// ============================================================================

// chain[0] is the provider layer, chain[i] the i-th relayer layer. A chain is
// well-linked when each layer's output commitment is the next layer's input
// commitment and all layers carry the same chunk index.
using CommitmentChain = std::vector<EncCommitment>;

// Full validity check for a delivered tuple: the final ciphertext opens the
// last output commitment, the chain links, every layer is signed by its
// owner, and every layer's key commitment matches the owner's mask
// commitment.
[[nodiscard]] bool validate_tuple(std::span<const uint8_t> c_final,
                                  const CommitmentChain& chain,
                                  std::span<const MaskCommitment> masks,
                                  uint32_t id,
                                  std::span<const PublicKey> roster);

// ============================================================================
// Extraction.
// ============================================================================

struct KeyExtraction {
  std::vector<SymKey> keys;         // in input order, on success
  std::optional<uint32_t> offender; // index into masks/roster
  std::optional<PublicKey> tid;
  std::optional<PommProof> proof;
  bool input_ok = true;  // false iff some secret failed its own h_s
};

// Unmasks every key, scanning position 0 (the provider) first and then the
// remaining entries in order. Stops at the first mask whose unmasked bytes
// fail the key commitment and returns the misbehavior proof against it.
[[nodiscard]] KeyExtraction ext_key(std::span<const Bytes> secrets,
                                    std::span<const MaskCommitment> masks,
                                    std::span<const PublicKey> roster);

struct DeliveredChunk {
  uint32_t id = 0;  // 1-based chunk index
  Bytes ciphertext;
  CommitmentChain chain;
};

struct PathBundle {
  std::vector<SymKey> keys;       // [provider key, hop 1 key, ..]
  std::vector<PublicKey> roster;  // [provider, hop 1, ..]
  std::vector<DeliveredChunk> chunks;
};

struct ContentExtraction {
  std::optional<std::map<uint32_t, Bytes>> chunks;  // id → plaintext
  std::optional<PublicKey> tid;
  std::optional<PomeProof> proof;
};

// Peels each delivered chunk layer by layer, outermost (last hop) first,
// checking every intermediate against that layer's input commitment. The
// first failing layer — the cheater closest to the customer — is accused.
[[nodiscard]] ContentExtraction extract(std::span<const PathBundle> paths);

}  // namespace fairrelay
