#include "fairrelay/payment.hh"

#include <algorithm>

namespace fairrelay {

// ============================================================================
// Timelock schedules
// ============================================================================

std::vector<Round> timelocks_single(Round ct, uint32_t path_len) {
  // The payer's own deadline leaves one spare round beyond the whole ladder;
  // each hop's deadline is one less than its upstream neighbour's.
  std::vector<Round> out(path_len + 1);
  out[0] = ct + path_len + 1;
  for (uint32_t i = 1; i <= path_len; ++i) out[i] = out[0] - i;
  return out;
}

TimelockPlan timelocks_multi(std::span<const uint32_t> lengths) {
  TimelockPlan plan;
  for (uint32_t len : lengths) plan.max_len = std::max(plan.max_len, len);
  // t1: delivery of every path's layered chunks is complete (setup rounds
  // plus one forwarding round per hop on the longest path).
  plan.t1 = 5 + plan.max_len;
  // t2: latest admissible enforcement challenge. The payer's patience runs
  // out at receipts_deadline + max_len + 1, so t2 sits strictly beyond it.
  plan.t2 = plan.t1 + 2 * plan.max_len + 5;
  // t0: the customer's lock outlives every enforcement outcome, including a
  // full response game started at t2 - 1.
  plan.t0 = plan.t2 + plan.max_len + 2;
  plan.per_path.reserve(lengths.size());
  for (uint32_t len : lengths) {
    std::vector<Round> ladder(len);
    for (uint32_t i = 1; i <= len; ++i) {
      // Hop i's lock stays redeemable through its enforcement response
      // window even when the challenge lands exactly at t2 - 1.
      ladder[i - 1] = plan.t2 + len - i + 2;
    }
    plan.per_path.push_back(std::move(ladder));
  }
  return plan;
}

// ============================================================================
// Path helpers
// ============================================================================

Tokens fee_tail(const PathSpec& path, uint32_t i) {
  Tokens sum = 0;
  for (size_t j = i; j <= path.fees.size(); ++j) sum += path.fees[j - 1];
  return sum;
}

std::vector<CommitmentValue> hop_hashlist(const PathSpec& path,
                                          const CommitmentValue& h_sync,
                                          uint32_t i) {
  std::vector<CommitmentValue> out;
  out.reserve(path.hop_hashes.size() - i + 2);
  out.push_back(h_sync);
  for (size_t j = i; j <= path.hop_hashes.size(); ++j)
    out.push_back(path.hop_hashes[j - 1]);
  return out;
}

std::vector<CommitmentValue> customer_hashlist(std::span<const PathSpec> paths,
                                               const CommitmentValue& h_s0) {
  std::vector<CommitmentValue> out;
  for (const PathSpec& path : paths)
    out.insert(out.end(), path.hop_hashes.begin(), path.hop_hashes.end());
  out.push_back(h_s0);
  return out;
}

// ============================================================================
// Lock construction and verification
// ============================================================================

std::optional<ConditionedPayment> build_outgoing_lock(
    const ConditionedPayment& incoming, const CommitmentValue& own_hash,
    Tokens forward_amount, const Channel& out_snapshot, PartyId self,
    const KeyPair& key) {
  if (incoming.phi.deadline == 0) return std::nullopt;
  std::vector<CommitmentValue> hashes = incoming.phi.hashes;
  auto it = std::find(hashes.begin(), hashes.end(), own_hash);
  if (it == hashes.end()) return std::nullopt;
  hashes.erase(it);
  auto phi = construct_condition(std::move(hashes), incoming.phi.deadline - 1);
  if (!phi) return std::nullopt;
  return lock(out_snapshot, self, forward_amount, std::move(*phi), key);
}

bool verify_incoming_lock(const ConditionedPayment& tx,
                          const Channel& snapshot, PartyId self,
                          PartyId initiator, const PublicKey& initiator_key,
                          std::span<const CommitmentValue> expected_hashes,
                          Round expected_deadline, Tokens expected_amount) {
  if (tx.cid != snapshot.cid) return false;
  if (tx.initiator != initiator) return false;
  const bool self_left = snapshot.lu == self && snapshot.ru == initiator;
  const bool self_right = snapshot.ru == self && snapshot.lu == initiator;
  if (!self_left && !self_right) return false;
  if (!ae_verify(tx.signing_payload(), tx.sig, initiator_key)) return false;
  if (tx.phi.deadline != expected_deadline) return false;
  if (tx.phi.hashes.size() != expected_hashes.size()) return false;
  if (!std::equal(tx.phi.hashes.begin(), tx.phi.hashes.end(),
                  expected_hashes.begin()))
    return false;
  // The proposal must move exactly the expected amount toward `self`.
  const Tokens self_new = self_left ? tx.lb2 : tx.rb2;
  const Tokens self_old = self_left ? snapshot.lb : snapshot.rb;
  const Tokens peer_new = self_left ? tx.rb2 : tx.lb2;
  const Tokens peer_old = self_left ? snapshot.rb : snapshot.lb;
  if (self_new != self_old + expected_amount) return false;
  if (peer_new != peer_old - expected_amount) return false;
  if (peer_new < 0) return false;
  return true;
}

// ============================================================================
// Lock receipts
// ============================================================================

EnforcementChallenge make_challenge(const PathSpec& path,
                                    const CommitmentValue& h_sync, Round t2) {
  EnforcementChallenge ch;
  ch.deadline = t2;
  ch.hashes = path.hop_hashes;
  ch.h0 = h_sync;
  ch.addr.reserve(path.relayers.size() + 1);
  ch.addr.push_back(path.provider);
  ch.addr.insert(ch.addr.end(), path.relayers.begin(), path.relayers.end());
  return ch;
}

LockReceipt ack_receipt(const EnforcementChallenge& ch, PartyId relayer,
                        uint32_t hop, const KeyPair& key) {
  return LockReceipt{relayer, hop, ae_sign(ch.signing_payload(), key)};
}

bool verify_receipt(const LockReceipt& receipt, const EnforcementChallenge& ch,
                    const PublicKey& relayer_key) {
  if (receipt.hop == 0 || receipt.hop > ch.hops()) return false;
  if (ch.addr[receipt.hop] != receipt.relayer) return false;
  return ae_verify(ch.signing_payload(), receipt.sig, relayer_key);
}

}  // namespace fairrelay
