#pragma once

// Simulated payment substrate: a token ledger and two-party payment channels
// with hash/time-conditioned balance updates.
//
// Conditions are plain data — an ordered list of commitment values plus a
// deadline round — evaluated positionally against a list of candidate
// preimages. Channel updates apply only when both endpoints have signed the
// proposed balances and the condition evaluates true at the current round.
// Every mutation attempt emits an event record that the scheduler forwards to
// both endpoints and to the trace.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "fairrelay/bytes.hh"
#include "fairrelay/crypto.hh"
#include "fairrelay/roster.hh"

namespace fairrelay {

using ChannelId = uint32_t;

// ============================================================================
// Payment conditions
// ============================================================================

// Hash/time lock: all listed commitments must be opened, in order, no later
// than `deadline`.
struct PaymentCondition {
  std::vector<CommitmentValue> hashes;
  Round deadline = 0;

  [[nodiscard]] Bytes encode() const;
};

// Rejects an empty hash list: the protocol never needs unconditional updates.
[[nodiscard]] std::optional<PaymentCondition> construct_condition(
    std::vector<CommitmentValue> hashes, Round deadline);

// True iff |secrets| == |phi.hashes|, every secret opens its positional
// commitment, and now <= phi.deadline.
[[nodiscard]] bool eval_condition(const PaymentCondition& phi,
                                  std::span<const Bytes> secrets, Round now);

// ============================================================================
// Ledger
// ============================================================================

enum class TransferOutcome : uint8_t {
  transferred,
  insufficient,
  rejected,
  burned,
};

struct LedgerEvent {
  Round round = 0;
  TransferOutcome outcome = TransferOutcome::rejected;
  PartyId from = 0;
  PartyId to = 0;
  Tokens amount = 0;
};

class Ledger {
 public:
  void set_balance(PartyId uid, Tokens amount) { balances_[uid] = amount; }

  [[nodiscard]] std::optional<Tokens> query(PartyId uid) const {
    auto it = balances_.find(uid);
    if (it == balances_.end()) return std::nullopt;
    return it->second;
  }

  // Atomic: either both balances move or neither does.
  TransferOutcome transfer(PartyId from, PartyId to, Tokens amount, Round now);

  // Removes tokens from circulation (judge slashing). total() + burned()
  // stays constant.
  TransferOutcome burn(PartyId uid, Tokens amount, Round now);

  [[nodiscard]] Tokens burned() const { return burned_; }
  [[nodiscard]] Tokens total() const;
  [[nodiscard]] const std::map<PartyId, Tokens>& balances() const {
    return balances_;
  }

  std::vector<LedgerEvent> drain_events() { return std::move(events_); }

 private:
  std::map<PartyId, Tokens> balances_;
  Tokens burned_ = 0;
  std::vector<LedgerEvent> events_;
};

// ============================================================================
// Channels
// ============================================================================

struct Channel {
  ChannelId cid = 0;
  PartyId lu = 0;
  PartyId ru = 0;
  Tokens lb = 0;
  Tokens rb = 0;
};

// A half-signed channel update: the initiator proposes new balances gated by
// a condition; the counterparty later countersigns and supplies the secrets.
struct ConditionedPayment {
  ChannelId cid = 0;
  Tokens lb2 = 0;
  Tokens rb2 = 0;
  PaymentCondition phi;
  PartyId initiator = 0;
  Signature sig{};

  // Both endpoints sign this exact byte string.
  [[nodiscard]] Bytes signing_payload() const;
  [[nodiscard]] Bytes encode() const;
  [[nodiscard]] static std::optional<ConditionedPayment> decode(
      std::span<const uint8_t> data);
};

// Fully-signed update ready for submission.
struct UpdateRequest {
  ConditionedPayment tx;
  PartyId redeemer = 0;
  Signature countersig{};
  std::vector<Bytes> secrets;

  [[nodiscard]] Bytes encode() const;
};

enum class UpdateOutcome : uint8_t { updated, update_fail };

struct ChannelEvent {
  Round round = 0;
  UpdateOutcome outcome = UpdateOutcome::update_fail;
  ChannelId cid = 0;
  PartyId lu = 0;
  PartyId ru = 0;
  Tokens lb = 0;  // balances after the attempt
  Tokens rb = 0;
  std::vector<Bytes> secrets;  // redeem parameters, revealed on success
};

class ChannelHub {
 public:
  ChannelId open(PartyId lu, PartyId ru, Tokens lb, Tokens rb);

  [[nodiscard]] std::optional<Channel> query(ChannelId cid) const;

  // Applies the proposed balances iff: the channel exists, the initiator and
  // redeemer are its two endpoints, both signatures over the update payload
  // verify, the balance sum is preserved with both sides non-negative, and
  // the condition evaluates true at `now`. On success the revealed secrets
  // ride on the emitted event to both endpoints.
  UpdateOutcome update(const UpdateRequest& req, const Roster& roster,
                       Round now);

  [[nodiscard]] Tokens total() const;
  [[nodiscard]] size_t size() const { return channels_.size(); }

  std::vector<ChannelEvent> drain_events() { return std::move(events_); }

 private:
  std::vector<Channel> channels_;
  std::vector<ChannelEvent> events_;
};

// ============================================================================
// Lock / unlock helpers
// ============================================================================

// Proposes moving `amount` from v's side of the channel to the counterparty,
// conditioned on `phi`, signed by v. Returns nullopt if v is not an endpoint
// or v's side holds less than `amount`. Channel state is not touched.
[[nodiscard]] std::optional<ConditionedPayment> lock(const Channel& snapshot,
                                                     PartyId v, Tokens amount,
                                                     PaymentCondition phi,
                                                     const KeyPair& v_key);

// Counterparty w countersigns tx and attaches the redeem secrets, producing
// a request ready for ChannelHub::update.
[[nodiscard]] UpdateRequest unlock(const ConditionedPayment& tx, PartyId w,
                                   const KeyPair& w_key,
                                   std::vector<Bytes> secrets);

}  // namespace fairrelay
