#pragma once

// Simulated judge contract: content registration against a deposit,
// compensation for verified misbehavior proofs, and the round-gated
// enforcement game that forces relayers to reveal their secrets on-chain in
// reverse hop order or pay a punishment.
//
// All state transitions append an operation record {round, op, caller,
// outcome} — the unit in which "on-chain cost" is counted — and public
// outcomes (enforced / logged / punished) are queued as broadcasts for the
// scheduler to deliver to every party.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "fairrelay/bytes.hh"
#include "fairrelay/commitments.hh"
#include "fairrelay/crypto.hh"
#include "fairrelay/pcn.hh"
#include "fairrelay/roster.hh"

namespace fairrelay {

// ============================================================================
// Challenge data
// ============================================================================

// A provider's enforcement challenge against one relay path: the path roster
// (provider first, then relayers in hop order), each relayer's secret
// commitment, the synchronizer commitment, and the submission deadline.
struct EnforcementChallenge {
  Round deadline = 0;                   // latest round an enforce is accepted
  std::vector<CommitmentValue> hashes;  // hop 1..n relayer secret commitments
  CommitmentValue h0;                   // synchronizer secret commitment
  std::vector<PartyId> addr;            // [provider, hop 1, .., hop n]

  [[nodiscard]] size_t hops() const { return hashes.size(); }
  // Byte string signed by relayers when acknowledging their locks.
  [[nodiscard]] Bytes signing_payload() const;
  friend bool operator==(const EnforcementChallenge&,
                         const EnforcementChallenge&) = default;
};

[[nodiscard]] Digest challenge_digest(const EnforcementChallenge& ch);

// ============================================================================
// Operation records and broadcasts
// ============================================================================

enum class JudgeOp : uint8_t { register_content, pomm, pome, enforce, log, punish };

enum class JudgeOutcome : uint8_t {
  ok,
  rejected,
  compensated,
  enforced,
  logged,
  punished,
  noop,
};

[[nodiscard]] const char* judge_op_name(JudgeOp op);
[[nodiscard]] const char* judge_outcome_name(JudgeOutcome o);

struct JudgeEvent {
  Round round = 0;
  JudgeOp op = JudgeOp::register_content;
  PartyId caller = 0;
  JudgeOutcome outcome = JudgeOutcome::rejected;
  PartyId target = 0;  // compensation source / punished relayer
};

struct JudgeBroadcast {
  enum class Kind : uint8_t { enforced, logged, punished };
  Round round = 0;
  Kind kind = Kind::enforced;
  Digest challenge{};  // challenge_digest of the affected challenge
  uint32_t index = 0;  // hop index (logged, punished)
  Bytes secret;        // synchronizer secret (enforced) or hop secret (logged)
  PartyId target = 0;  // punished relayer
};

// ============================================================================
// Contract
// ============================================================================

struct JudgeOptions {
  Tokens b_max = 0;        // compensation / punishment amount; deposit floor
  bool slashing = false;   // burn an extra share of the offender's deposit
  uint32_t slash_percent = 50;
};

struct Registration {
  PartyId uid = 0;
  Tokens price = 0;
};

struct ChallengeState {
  EnforcementChallenge ch;
  Round t_r = 0;       // round the enforce was accepted
  PartyId provider = 0;
  std::vector<std::optional<Bytes>> log;  // entry i-1 holds hop i's secret
  bool punish_done = false;

  // Round in which hop i (1-based) must log its secret.
  [[nodiscard]] Round window(uint32_t i) const {
    return t_r + static_cast<Round>(ch.hops()) - i + 1;
  }
  [[nodiscard]] Round punish_round() const {
    return t_r + static_cast<Round>(ch.hops()) + 1;
  }
};

struct PunishResult {
  JudgeOutcome outcome = JudgeOutcome::rejected;  // punished | noop | rejected
  PartyId target = 0;
};

class JudgeContract {
 public:
  // The verifier may be null, in which case the built-in recomputing
  // verifier checks encryption-misbehavior proofs.
  JudgeContract(JudgeOptions opts, Ledger* ledger, const Roster* roster,
                const PomeVerifier* pome_verifier = nullptr);

  [[nodiscard]] Tokens deposit_min() const { return opts_.b_max; }
  [[nodiscard]] const JudgeOptions& options() const { return opts_; }

  // Accepted iff the registrant's ledger balance covers the deposit floor
  // and the price is strictly below the compensation amount.
  bool register_content(PartyId uid, const Digest& com_m, Tokens price,
                        Round now);
  [[nodiscard]] std::optional<Registration> registration(
      const Digest& com_m) const;

  // Compensation handlers: on a verifying proof, transfer b_max from the
  // accused `tid` to the claimant `uid` (plus an optional slashing burn).
  // Each distinct proof statement pays out at most once.
  bool handle_pomm(PartyId uid, const PommProof& proof, PartyId tid,
                   Round now);
  bool handle_pome(PartyId uid, const PomeProof& proof, PartyId tid,
                   Round now);

  // Opens the response game for a challenge: accepted iff submitted before
  // the challenge deadline, not submitted before, the synchronizer secret
  // opens h0, and `receipts` holds every path relayer's signature over the
  // challenge (in hop order).
  bool enforce(PartyId caller, const EnforcementChallenge& ch,
               std::span<const Signature> receipts,
               std::span<const uint8_t> s_sync, Round now);

  // Hop i's response: accepted only in its exact window round, with the
  // correct preimage, called by hop i itself, and only after hop i+1 has
  // logged (the last hop starts the sequence).
  bool log_response(PartyId caller, const Digest& challenge, uint32_t i,
                    std::span<const uint8_t> s_i, Round now);

  // At the round after the last response window: if the log is complete,
  // no-op; otherwise the highest-index non-logger pays b_max to the
  // challenge's provider. One call per challenge.
  PunishResult punish(PartyId caller, const Digest& challenge, Round now);

  [[nodiscard]] const std::vector<JudgeEvent>& events() const {
    return events_;
  }
  std::vector<JudgeBroadcast> drain_broadcasts() {
    return std::move(broadcasts_);
  }
  [[nodiscard]] const ChallengeState* find_challenge(
      const Digest& digest) const;

 private:
  JudgeEvent& record(JudgeOp op, PartyId caller, JudgeOutcome outcome,
                     Round now, PartyId target = 0);

  JudgeOptions opts_;
  Ledger* ledger_;
  const Roster* roster_;
  const PomeVerifier* pome_verifier_;
  RecomputingPomeVerifier default_verifier_;

  std::map<Digest, Registration> registry_;
  std::set<Digest> paid_statements_;
  std::map<Digest, ChallengeState> challenges_;
  std::vector<JudgeEvent> events_;
  std::vector<JudgeBroadcast> broadcasts_;
};

}  // namespace fairrelay
