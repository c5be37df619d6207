#pragma once

// JSON scenario files for the simulator: parsing, validation, and canonical
// serialization, plus a key/value rendering of finished-run metrics.
//
// Party references use the roster short names: "C" for the customer, "P" for
// the provider, and "R<path>.<hop>" (both 1-based) for relayers. Parsing is
// case-insensitive; serialization always emits the canonical form.

#include <optional>
#include <span>
#include <string>

#include "fairrelay/sim.hh"

namespace fairrelay {

struct ScenarioConfig {
  std::string name;
  ScenarioSpec spec;
  // Optional self-check block carried by scenario files.
  std::optional<Outcome> expected_outcome;
  std::optional<bool> expected_verdicts;
};

[[nodiscard]] std::string party_ref_name(PartyId id,
                                         std::span<const uint32_t> path_hops);
[[nodiscard]] std::optional<PartyId> parse_party_ref(
    const std::string& ref, std::span<const uint32_t> path_hops);

[[nodiscard]] const char* misbehavior_name(Misbehavior kind);
[[nodiscard]] std::optional<Misbehavior> parse_misbehavior(
    const std::string& name);
[[nodiscard]] std::optional<Phase> parse_phase(const std::string& name);
[[nodiscard]] std::optional<Outcome> parse_outcome(const std::string& name);

// Parses and validates a JSON scenario; on failure stores a message in
// *error (when non-null) and returns nullopt. Every validate_spec constraint
// is enforced, so a returned config is directly runnable.
[[nodiscard]] std::optional<ScenarioConfig> parse_scenario(
    const std::string& json_text, std::string* error);

// Canonical JSON text: fixed key order, adversary entries sorted by party
// id. parse_scenario(serialize_scenario(c)) reproduces c exactly.
[[nodiscard]] std::string serialize_scenario(const ScenarioConfig& config);

// One "key value..." line per fact: outcome, rounds, traffic totals, judge
// operations, per-party balance deltas and final phases, verdicts, links.
[[nodiscard]] std::string render_metrics(const RunResult& res);

}  // namespace fairrelay
