#pragma once

// Multi-hop conditioned payments over the channel substrate: round-based
// timelock schedules, per-hop lock construction and verification with one
// commitment stripped per hop, signed lock receipts, and the secrets needed
// to redeem a hop's incoming lock.
//
// Deadlines decrease by one per hop toward the payee, so a downstream redeem
// always leaves the upstream party at least one round to react. The
// multi-path schedule additionally leaves room for the judge's enforcement
// game (one response window per hop plus a punishment round) between the
// enforcement deadline and the earliest lock expiry.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fairrelay/bytes.hh"
#include "fairrelay/crypto.hh"
#include "fairrelay/judge.hh"
#include "fairrelay/pcn.hh"
#include "fairrelay/roster.hh"

namespace fairrelay {

// ============================================================================
// Timelock schedules
// ============================================================================

// Deadlines for a single chained lock of `path_len` hops initiated at round
// `ct`: index 0 is the payer's own lock deadline, index i the deadline of the
// lock into hop i. Consecutive entries differ by exactly one round.
[[nodiscard]] std::vector<Round> timelocks_single(Round ct, uint32_t path_len);

// Shared schedule for a session over several paths at once.
struct TimelockPlan {
  Round t1 = 0;  // delivery complete / payment locks start after this round
  Round t2 = 0;  // latest round an enforcement challenge is accepted
  Round t0 = 0;  // deadline of the customer's payment lock
  uint32_t max_len = 0;
  std::vector<std::vector<Round>> per_path;  // [k][i-1] = lock deadline, hop i

  // Round by which all lock receipts must have arrived back at the payer.
  [[nodiscard]] Round receipts_deadline() const { return t1 + max_len + 2; }
};

// Derives {t1, t2, t0, t_{k,i}} from the path lengths. All per-path ladders
// expire after t2 (leaving the enforcement game runnable) and before t0
// (leaving the payer room to redeem its own incoming lock last).
[[nodiscard]] TimelockPlan timelocks_multi(std::span<const uint32_t> lengths);

// ============================================================================
// Path description
// ============================================================================

// Static facts one relay path: parties, channels, fees, and each hop's secret
// commitment. cids[0] connects the provider to hop 1; cids[i] connects hop i
// to hop i+1. fees[i-1] and hop_hashes[i-1] belong to hop i.
struct PathSpec {
  uint32_t index = 0;  // 1-based path number
  PartyId provider = 0;
  std::vector<PartyId> relayers;
  std::vector<ChannelId> cids;
  std::vector<Tokens> fees;
  std::vector<CommitmentValue> hop_hashes;

  [[nodiscard]] uint32_t hops() const {
    return static_cast<uint32_t>(relayers.size());
  }
};

// Sum of fees from hop i (1-based) to the end of the path: the amount the
// lock into hop i must carry.
[[nodiscard]] Tokens fee_tail(const PathSpec& path, uint32_t i);

// Condition hash list for the lock into hop i: the synchronizer commitment
// followed by the secret commitments of hops i..n.
[[nodiscard]] std::vector<CommitmentValue> hop_hashlist(
    const PathSpec& path, const CommitmentValue& h_sync, uint32_t i);

// Condition hash list for the customer's payment: every path's relayer
// commitments in path order, then the provider's own secret commitment. The
// synchronizer commitment is deliberately absent — the customer's lock must
// stay redeemable even when the synchronizer secret never leaves the
// provider.
[[nodiscard]] std::vector<CommitmentValue> customer_hashlist(
    std::span<const PathSpec> paths, const CommitmentValue& h_s0);

// ============================================================================
// Lock construction and verification
// ============================================================================

// Forwarded lock for hop i+1, derived from the verified lock into hop i:
// drops `own_hash` from the condition, decrements the deadline, and proposes
// moving `forward_amount` from `self`'s side of the outgoing channel.
// Returns nullopt when own_hash is absent from the incoming condition, the
// deadline is already zero, or the channel cannot cover the amount.
[[nodiscard]] std::optional<ConditionedPayment> build_outgoing_lock(
    const ConditionedPayment& incoming, const CommitmentValue& own_hash,
    Tokens forward_amount, const Channel& out_snapshot, PartyId self,
    const KeyPair& key);

// Full admission check for a received lock proposal: correct channel and
// endpoints, a valid initiator signature, the exact expected condition
// (hash list and deadline), and balances that move exactly
// `expected_amount` from the initiator's side to `self`'s side.
[[nodiscard]] bool verify_incoming_lock(const ConditionedPayment& tx,
                                        const Channel& snapshot, PartyId self,
                                        PartyId initiator,
                                        const PublicKey& initiator_key,
                                        std::span<const CommitmentValue>
                                            expected_hashes,
                                        Round expected_deadline,
                                        Tokens expected_amount);

// ============================================================================
// Lock receipts
// ============================================================================

// A relayer's signed acknowledgment that its lock for `ch` is in place. The
// payer collects one per hop; together they admit the enforcement challenge.
struct LockReceipt {
  PartyId relayer = 0;
  uint32_t hop = 0;  // 1-based hop index on the path
  Signature sig{};
};

// The challenge a path's receipts commit to: hop commitments, synchronizer
// commitment, path roster, and the enforcement deadline t2.
[[nodiscard]] EnforcementChallenge make_challenge(
    const PathSpec& path, const CommitmentValue& h_sync, Round t2);

[[nodiscard]] LockReceipt ack_receipt(const EnforcementChallenge& ch,
                                      PartyId relayer, uint32_t hop,
                                      const KeyPair& key);

[[nodiscard]] bool verify_receipt(const LockReceipt& receipt,
                                  const EnforcementChallenge& ch,
                                  const PublicKey& relayer_key);

// ============================================================================
// Redemption
// ============================================================================

// Secrets redeeming the lock into hop i, in condition order: the
// synchronizer secret, then the secrets of hops i..n. `secret_of(j)` must
// return hop j's secret (1-based); redemption is only possible once every
// hop at or above i has revealed.
template <typename SecretOf>
[[nodiscard]] std::vector<Bytes> hop_redeem_secrets(uint32_t i, uint32_t n,
                                                    const Bytes& s_sync,
                                                    SecretOf&& secret_of) {
  std::vector<Bytes> out;
  out.reserve(n - i + 2);
  out.push_back(s_sync);
  for (uint32_t j = i; j <= n; ++j) out.push_back(secret_of(j));
  return out;
}

}  // namespace fairrelay
