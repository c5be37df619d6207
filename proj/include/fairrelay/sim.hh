#pragma once

// Deterministic round-based scheduler for one delivery session: builds the
// substrate (ledger, channel hub, judge) and the party state machines from a
// scenario description, steps every party once per round in id order, and
// ferries messages and substrate events with strict next-round delivery.
//
// Everything is derived from (scenario, seed): party keys, content bytes,
// commitment randomness, and adversary randomness all come from labelled
// forks of one deterministic generator, so two runs with equal inputs
// produce byte-identical traces.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fairrelay/parties.hh"

namespace fairrelay {

// ============================================================================
// Scheduler building blocks
// ============================================================================

struct RoundClock {
  Round now = 0;
  void advance() { ++now; }
};

// Reliable authenticated message bus. A message posted during round r is
// delivered exactly once in round r+1; each recipient's inbox is ordered by
// (message class, sender id, posting sequence), which keeps per-link FIFO
// and processes delivery traffic before payment traffic.
class MessageBus {
 public:
  void post(WireMessage msg);
  // Moves out all pending inboxes, each sorted for delivery.
  [[nodiscard]] std::map<PartyId, std::vector<WireMessage>> collect();
  [[nodiscard]] bool idle() const { return pending_.empty(); }

 private:
  struct Pending {
    int cls = 0;
    PartyId from = 0;
    uint64_t seq = 0;
    WireMessage msg;
  };
  std::map<PartyId, std::vector<Pending>> pending_;
  uint64_t seq_ = 0;
};

// Static corruption: the behavior of every party is fixed before round 1.
// Parties without an entry are honest.
struct AdversarySchedule {
  std::map<PartyId, Behavior> behaviors;

  [[nodiscard]] Behavior of(PartyId id) const;
  [[nodiscard]] bool is_honest(PartyId id) const {
    return of(id).kind == Misbehavior::honest;
  }
};

// ============================================================================
// Metrics and trace
// ============================================================================

enum class Outcome : uint8_t {
  delivered,  // the customer reconstructed and verified the content
  disputed,   // a misbehavior proof paid out instead
  aborted,    // the session ended without content or compensation
};

[[nodiscard]] const char* outcome_name(Outcome o);

struct LinkStats {
  uint64_t messages = 0;
  uint64_t bytes = 0;
};

struct Metrics {
  Round rounds = 0;  // last round the scheduler executed
  Outcome outcome = Outcome::aborted;

  // Judge operations from round 1 on (round-0 content registration is part
  // of scenario setup and excluded from per-run counts).
  std::vector<JudgeEvent> judge_events;
  std::map<PartyId, uint32_t> judge_ops;  // per calling party

  std::map<std::pair<PartyId, PartyId>, LinkStats> links;
  uint64_t messages = 0;
  uint64_t message_bytes = 0;  // all wire bytes, headers included
  // Ciphertext bytes summed over every delivery leg a chunk crossed.
  uint64_t payload_bytes = 0;
  // Commitment-chain bytes riding on each chunk's customer-bound message.
  std::map<uint32_t, uint64_t> customer_chunk_overhead;

  // Final holdings (ledger plus channel sides) minus initial, per party.
  std::map<PartyId, Tokens> deltas;
  Tokens burned = 0;  // tokens slashed out of circulation
};

// One observable event: a sent message, a channel update attempt, a ledger
// transfer, or a judge operation.
struct TraceRecord {
  Round round = 0;
  PartyId actor = 0;
  std::string kind;
  Digest digest{};  // over the event's canonical encoding
  uint64_t bytes = 0;
};

[[nodiscard]] std::string render_trace(std::span<const TraceRecord> trace);

// ============================================================================
// Scenario description
// ============================================================================

inline constexpr PartyId kCustomerId = 0;
inline constexpr PartyId kProviderId = 1;

// Relayer ids follow the customer and provider in (path, hop) order.
// `path` is 0-based, `hop` 1-based.
[[nodiscard]] PartyId relayer_party_id(std::span<const uint32_t> path_hops,
                                       uint32_t path, uint32_t hop);

struct ScenarioSpec {
  std::vector<uint32_t> path_hops;          // relayers per path
  std::vector<std::vector<uint32_t>> jobs;  // 1-based chunk ids per path
  std::vector<std::vector<Tokens>> fees;    // per path, per hop
  Tokens price = 0;
  uint32_t chunk_count = 0;
  size_t chunk_size = 0;

  Tokens b_max = 0;  // judge compensation amount and deposit floor
  bool slashing = false;
  uint32_t slash_percent = 50;

  Tokens deposit = 0;           // initial ledger balance per party
  Tokens channel_capacity = 0;  // initial balance per channel side

  AdversarySchedule adversary;

  // Content bytes; empty means "derive chunk_count * chunk_size bytes from
  // the run seed". When set, the size must match exactly.
  Bytes content;
};

// First violated constraint, or nullopt if the scenario is runnable.
[[nodiscard]] std::optional<std::string> validate_spec(
    const ScenarioSpec& spec);

// ============================================================================
// Running a scenario
// ============================================================================

struct RunResult {
  DeliveryGraph graph;
  TimelockPlan plan;
  Metrics metrics;
  FairnessInputs fairness;
  Verdicts verdicts;
  std::vector<TraceRecord> trace;
  std::string trace_text;  // rendered trace, for byte-level comparison
  Bytes source_content;
  std::optional<Bytes> delivered_content;
  std::map<PartyId, Phase> final_phases;
  bool timed_out = false;  // a party was still live at the hard stop
};

// Deterministic under (spec, seed). Throws std::invalid_argument when
// validate_spec rejects the scenario.
[[nodiscard]] RunResult run(const ScenarioSpec& spec, uint64_t seed);

// ============================================================================
// Relay overhead report
// ============================================================================

// `hops` counts encryption layers on the customer-bound leg: the provider's
// plus one per relayer. Analytic fields come straight from the wire format
// (one digest + one signature per layer per chunk); measured fields come
// from an actual single-path honest run with hops-1 relayers and must match
// the analytic model exactly. hops == 0 yields the analytic-only setup row.
struct OverheadRow {
  uint32_t hops = 0;
  size_t chunk_size = 0;
  uint32_t chunk_count = 0;

  uint64_t analytic_per_chunk = 0;  // hops * kWireLayerSize
  double last_leg_efficiency = 1.0;
  double last_leg_overhead_ratio = 0.0;

  bool measured = false;
  uint64_t measured_per_chunk_min = 0;
  uint64_t measured_per_chunk_max = 0;
  uint64_t payload_bytes = 0;
  uint64_t total_bytes = 0;
  double total_overhead_ratio = 0.0;
  bool delivered = false;
};

[[nodiscard]] OverheadRow overhead_report(uint32_t hops, size_t chunk_size,
                                          uint32_t chunk_count, uint64_t seed);

[[nodiscard]] std::string render_overhead_table(
    std::span<const OverheadRow> rows);
[[nodiscard]] std::string render_overhead_csv(
    std::span<const OverheadRow> rows);

}  // namespace fairrelay
