#include "fairrelay/commitments.hh"

namespace fairrelay {

namespace {
constexpr std::string_view kMcomTag = "fr/v1/mcom";
constexpr std::string_view kEcomTag = "fr/v1/ecom";

Bytes tagged_payload(std::string_view tag, const Bytes& body) {
  Bytes out;
  out.reserve(tag.size() + 1 + body.size());
  put_raw(out, as_bytes(tag));
  out.push_back(0x00);
  put_raw(out, body);
  return out;
}
}  // namespace

// ============================================================================
// Mask commitments
// ============================================================================

Bytes MaskCommitment::signing_payload() const {
  Bytes body;
  put_raw(body, h_sk.encode());
  put_raw(body, h_s.encode());
  put_blob(body, ck);
  return tagged_payload(kMcomTag, body);
}

Bytes MaskCommitment::encode() const {
  Bytes out;
  put_raw(out, h_sk.encode());
  put_raw(out, h_s.encode());
  put_blob(out, ck);
  put_raw(out, sig);
  return out;
}

std::optional<MaskCommitment> MaskCommitment::decode(
    std::span<const uint8_t> data) {
  constexpr size_t kFixed = 2 * (kDigestSize + kPaddingSize) + 4;
  if (data.size() < kFixed + kSignatureSize) return std::nullopt;
  MaskCommitment out;
  size_t off = 0;
  auto cv = CommitmentValue::decode(data.subspan(off, 48));
  if (!cv) return std::nullopt;
  out.h_sk = *cv;
  off += 48;
  cv = CommitmentValue::decode(data.subspan(off, 48));
  if (!cv) return std::nullopt;
  out.h_s = *cv;
  off += 48;
  uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<uint32_t>(data[off + i]) << (8 * i);
  off += 4;
  if (data.size() != off + len + kSignatureSize) return std::nullopt;
  out.ck.assign(data.begin() + off, data.begin() + off + len);
  off += len;
  for (size_t i = 0; i < kSignatureSize; ++i) out.sig[i] = data[off + i];
  return out;
}

std::optional<MaskCommitment> mcom_gen(const SymKey& sk,
                                       std::span<const uint8_t> s,
                                       const CommitmentValue& h_sk,
                                       const KeyPair& k, DetRng& rng) {
  Bytes sk_bytes = sk.encode();
  if (s.size() != sk_bytes.size()) return std::nullopt;
  MaskCommitment com;
  com.h_sk = h_sk;
  com.h_s = commit(s, rng);
  com.ck = *xor_mask(s, sk_bytes);
  com.sig = ae_sign(com.signing_payload(), k);
  return com;
}

bool mcom_ver(const MaskCommitment& com, const PublicKey& pk,
              const CommitmentValue& h_sk_expected,
              const CommitmentValue& h_s_expected) {
  if (!ae_verify(com.signing_payload(), com.sig, pk)) return false;
  return com.h_sk == h_sk_expected && com.h_s == h_s_expected;
}

// ============================================================================
// Encryption commitments
// ============================================================================

Bytes EncCommitment::signing_payload() const {
  Bytes body;
  put_raw(body, h_m.encode());
  put_raw(body, h_c.encode());
  put_raw(body, h_sk.encode());
  put_u32(body, id);
  return tagged_payload(kEcomTag, body);
}

Bytes EncCommitment::encode() const {
  Bytes out;
  put_raw(out, h_m.encode());
  put_raw(out, h_c.encode());
  put_raw(out, h_sk.encode());
  put_u32(out, id);
  put_raw(out, sig);
  return out;
}

std::pair<Bytes, EncCommitment> ecom_gen(std::span<const uint8_t> m,
                                         const SymKey& sk,
                                         const CommitmentValue& h_sk,
                                         uint32_t id, const KeyPair& k,
                                         DetRng& rng,
                                         const CommitmentValue* h_m_reuse) {
  Bytes c = se_enc(m, sk.key, tweak_nonce(sk.nonce, id));
  EncCommitment com;
  com.h_m = (h_m_reuse != nullptr) ? *h_m_reuse : commit(m, rng);
  // The output commitment always rides the wire next to the ciphertext it
  // commits, so a blinding pad buys nothing; a fixed zero pad lets chain
  // serializations carry one digest per layer instead of digest + pad.
  com.h_c = commit_with_pad(c, Padding{});
  com.h_sk = h_sk;
  com.id = id;
  com.sig = ae_sign(com.signing_payload(), k);
  return {std::move(c), std::move(com)};
}

bool ecom_ver(const EncCommitment& com, const PublicKey& pk,
              const CommitmentValue& h_sk_expected, uint32_t id_expected) {
  if (!ae_verify(com.signing_payload(), com.sig, pk)) return false;
  return com.id == id_expected && com.h_sk == h_sk_expected;
}

// ============================================================================
// Mask-misbehavior proofs
// ============================================================================

Bytes PommProof::statement_digest_input(const PublicKey& tid) const {
  // The accused commitment plus the accused identity; the revealed secret is
  // witness material and deliberately excluded, so re-submissions with a
  // different witness still collide.
  Bytes out;
  put_raw(out, h_sk.encode());
  put_raw(out, h_s.encode());
  put_blob(out, ck);
  put_raw(out, sig);
  put_raw(out, tid.encode());
  return out;
}

Bytes PommProof::encode() const {
  Bytes out;
  put_raw(out, h_sk.encode());
  put_raw(out, h_s.encode());
  put_blob(out, ck);
  put_raw(out, sig);
  put_blob(out, s_revealed);
  return out;
}

std::optional<PommProof> pomm_gen(const MaskCommitment& com,
                                  const PublicKey& tid,
                                  std::span<const uint8_t> s_prime) {
  if (!ae_verify(com.signing_payload(), com.sig, tid)) return std::nullopt;
  if (!open(s_prime, com.h_s)) return std::nullopt;
  std::optional<Bytes> unmasked = xor_mask(com.ck, s_prime);
  if (unmasked && open(*unmasked, com.h_sk)) {
    return std::nullopt;  // unmasking succeeds: the committer was honest here
  }
  PommProof proof;
  proof.h_sk = com.h_sk;
  proof.h_s = com.h_s;
  proof.ck = com.ck;
  proof.sig = com.sig;
  proof.s_revealed.assign(s_prime.begin(), s_prime.end());
  return proof;
}

bool pomm_ver(const PommProof& proof, const PublicKey& tid) {
  MaskCommitment com{proof.h_sk, proof.h_s, proof.ck, proof.sig};
  if (!ae_verify(com.signing_payload(), com.sig, tid)) return false;
  if (!open(proof.s_revealed, proof.h_s)) return false;
  std::optional<Bytes> unmasked = xor_mask(proof.ck, proof.s_revealed);
  // Accept exactly when the signed ck fails to deliver the committed key. A
  // length-mismatched ck can never unmask correctly, so it also convicts.
  return !(unmasked && open(*unmasked, proof.h_sk));
}

// ============================================================================
// Encryption-misbehavior proofs
// ============================================================================

Bytes PomeStatement::encode() const {
  Bytes out;
  put_raw(out, h_m.encode());
  put_raw(out, h_c.encode());
  put_raw(out, h_sk.encode());
  put_u32(out, id);
  return out;
}

Bytes PomeProof::statement_digest_input(const PublicKey& tid) const {
  Bytes out;
  put_raw(out, x.encode());
  put_raw(out, sig);
  put_raw(out, tid.encode());
  return out;
}

Bytes PomeProof::encode() const {
  Bytes out;
  put_raw(out, x.encode());
  put_raw(out, sig);
  put_blob(out, c_witness);
  put_raw(out, sk_witness.encode());
  return out;
}

namespace {
bool pome_claim_holds(const PomeStatement& x, std::span<const uint8_t> c_prime,
                      const SymKey& sk_prime) {
  if (!open(c_prime, x.h_c)) return false;
  if (!open(sk_prime.encode(), x.h_sk)) return false;
  Bytes m = se_dec(c_prime, sk_prime.key, tweak_nonce(sk_prime.nonce, x.id));
  return !open(m, x.h_m);  // decryption contradicts the input commitment
}
}  // namespace

std::optional<PomeProof> pome_gen(const EncCommitment& com,
                                  std::span<const uint8_t> c_prime,
                                  const PublicKey& tid,
                                  const SymKey& sk_prime) {
  if (!ae_verify(com.signing_payload(), com.sig, tid)) return std::nullopt;
  PomeStatement x{com.h_m, com.h_c, com.h_sk, com.id};
  if (!pome_claim_holds(x, c_prime, sk_prime)) return std::nullopt;
  PomeProof proof;
  proof.x = x;
  proof.sig = com.sig;
  proof.c_witness.assign(c_prime.begin(), c_prime.end());
  proof.sk_witness = sk_prime;
  return proof;
}

bool RecomputingPomeVerifier::verify(const PomeProof& proof,
                                     const PublicKey& tid) const {
  EncCommitment com{proof.x.h_m, proof.x.h_c, proof.x.h_sk, proof.x.id,
                    proof.sig};
  if (!ae_verify(com.signing_payload(), proof.sig, tid)) return false;
  return pome_claim_holds(proof.x, proof.c_witness, proof.sk_witness);
}

bool pome_ver(const PomeProof& proof, const PublicKey& tid) {
  return RecomputingPomeVerifier{}.verify(proof, tid);
}

// ============================================================================
// Tuple validation
// ============================================================================

bool validate_tuple(std::span<const uint8_t> c_final,
                    const CommitmentChain& chain,
                    std::span<const MaskCommitment> masks, uint32_t id,
                    std::span<const PublicKey> roster) {
  if (chain.empty() || chain.size() != masks.size() ||
      chain.size() != roster.size()) {
    return false;
  }
  if (!open(c_final, chain.back().h_c)) return false;
  for (size_t i = 0; i < chain.size(); ++i) {
    if (!ecom_ver(chain[i], roster[i], masks[i].h_sk, id)) return false;
    if (!mcom_ver(masks[i], roster[i], masks[i].h_sk, masks[i].h_s)) {
      return false;
    }
    if (i + 1 < chain.size() && !(chain[i].h_c == chain[i + 1].h_m)) {
      return false;
    }
  }
  return true;
}

// ============================================================================
// Extraction
// ============================================================================

KeyExtraction ext_key(std::span<const Bytes> secrets,
                      std::span<const MaskCommitment> masks,
                      std::span<const PublicKey> roster) {
  KeyExtraction out;
  if (secrets.size() != masks.size() || masks.size() != roster.size()) {
    out.input_ok = false;
    return out;
  }
  for (size_t i = 0; i < masks.size(); ++i) {
    if (!open(secrets[i], masks[i].h_s)) {
      // The substrate only reveals preimages of the locked hashes, so a
      // secret failing its own commitment is a caller error, not evidence.
      out.input_ok = false;
      out.keys.clear();
      return out;
    }
    std::optional<Bytes> key_bytes = xor_mask(masks[i].ck, secrets[i]);
    std::optional<SymKey> key;
    if (key_bytes && open(*key_bytes, masks[i].h_sk)) {
      key = SymKey::decode(*key_bytes);
    }
    if (!key) {
      out.keys.clear();
      out.offender = static_cast<uint32_t>(i);
      out.tid = roster[i];
      out.proof = pomm_gen(masks[i], roster[i], secrets[i]);
      return out;
    }
    out.keys.push_back(*key);
  }
  return out;
}

ContentExtraction extract(std::span<const PathBundle> paths) {
  ContentExtraction out;
  std::map<uint32_t, Bytes> plain;
  for (const PathBundle& path : paths) {
    for (const DeliveredChunk& chunk : path.chunks) {
      Bytes c = chunk.ciphertext;
      for (size_t layer = chunk.chain.size(); layer-- > 0;) {
        const EncCommitment& com = chunk.chain[layer];
        const SymKey& key = path.keys[layer];
        Bytes inner = se_dec(c, key.key, tweak_nonce(key.nonce, com.id));
        if (!open(inner, com.h_m)) {
          out.tid = path.roster[layer];
          out.proof = pome_gen(com, c, path.roster[layer], key);
          return out;
        }
        c = std::move(inner);
      }
      plain[chunk.id] = std::move(c);
    }
  }
  out.chunks = std::move(plain);
  return out;
}

}  // namespace fairrelay
