#pragma once

// Differential harness for the multi-hop secret-for-payment exchange: an
// analytic oracle that produces the ideal exchange outcome for a behavior
// assignment, and a concrete runner that executes real lock/receipt/release/
// enforcement machines over the channel substrate and judge contract. Both
// emit the same normalized event alphabet so traces can be compared
// byte-for-byte.
//
// Normalized events record successful state transitions only; failed
// attempts (e.g. redeeming with a wrong secret) are implementation noise the
// ideal functionality never observes.

#include <cstdint>
#include <map>
#include <vector>

#include "fairrelay/judge.hh"
#include "fairrelay/pcn.hh"
#include "fairrelay/roster.hh"

namespace fairrelay {

// ============================================================================
// Behavior library
// ============================================================================

enum class PayerBehavior : uint8_t {
  honest,
  withhold_release,  // collects receipts but never releases the synchronizer
};

enum class HopBehavior : uint8_t {
  honest,
  silent_lock,      // drops the incoming lock: no ack, no forward
  stall_receipt,    // forwards the lock but never acknowledges it
  withhold_unlock,  // skips the voluntary unlock, responds to enforcement
  wrong_secret,     // substitutes garbage in unlock and log attempts
  silent_unlock,    // acknowledges, then neither unlocks nor logs
};

// ============================================================================
// Normalized trace
// ============================================================================

struct ExchangeEvent {
  enum class Kind : uint8_t {
    locked,    // lock into hop `index` signed and sent
    ack,       // hop `index` returned its signed receipt
    released,  // payer released the synchronizer secret
    updated,   // hop `index`'s incoming channel settled
    enforced,  // payer opened the on-chain response game
    logged,    // hop `index` logged its secret on-chain
    punished,  // hop `index` paid the punishment
  };

  Round round = 0;
  Kind kind = Kind::locked;
  uint32_t index = 0;  // hop number, 0 when not applicable

  friend auto operator<=>(const ExchangeEvent&, const ExchangeEvent&) =
      default;
};

using ExchangeTrace = std::vector<ExchangeEvent>;

// ============================================================================
// Setup and outcome
// ============================================================================

struct ExchangeSetup {
  std::vector<HopBehavior> hops;  // behavior of hop 1..n
  PayerBehavior payer = PayerBehavior::honest;
  std::vector<Tokens> fees;       // per-hop fee, same length as `hops`
  Tokens b_max = 100;             // judge compensation / punishment amount
};

// Party ids in the outcome: 0 is the payer, j is hop j.
struct ExchangeOutcome {
  ExchangeTrace trace;                // sorted by (round, kind, index)
  std::map<PartyId, Tokens> deltas;   // net token movement per party
};

// Ideal functionality: computes the exchange outcome for a behavior
// assignment directly from the protocol's round schedule, without executing
// any machinery.
[[nodiscard]] ExchangeOutcome ideal_exchange(const ExchangeSetup& setup);

// Concrete protocol: provider and relayer payment machines exchanging
// messages round by round over a real Ledger, ChannelHub and JudgeContract.
// Deltas aggregate ledger and channel-balance movement per party.
[[nodiscard]] ExchangeOutcome run_exchange(const ExchangeSetup& setup,
                                           uint64_t seed);

}  // namespace fairrelay
