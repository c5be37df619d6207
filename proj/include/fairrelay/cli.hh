#pragma once

// Command-line front end and canned behavior suites.
//
// Suites pair a scenario with the invariant its run must satisfy, so the
// same checks drive both the `matrix` subcommand and the test binaries:
//   optimistic  honest runs across graph shapes: delivered, zero judge
//               operations, all verdicts hold
//   disputes    one misbehaving party per run: the expected single dispute
//               (or enforcement cascade) and nothing else
//   wormhole    colluding relayer pairs around an honest middle hop: the
//               honest relayer still earns exactly its fee
//   fairness    every single corruption and every pairwise corruption of
//               two parties: the four fairness verdicts always hold

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fairrelay/config.hh"

namespace fairrelay {

struct MatrixRow {
  std::string name;
  Outcome outcome = Outcome::aborted;
  size_t judge_ops = 0;
  bool verdicts = false;
  bool ok = false;    // the row's expectation held
  std::string note;   // short explanation when it did not
};

// suite: "optimistic", "disputes", "wormhole", "fairness", or "all".
// Throws std::invalid_argument for other names.
[[nodiscard]] std::vector<MatrixRow> run_matrix(const std::string& suite,
                                                uint64_t seed);
[[nodiscard]] std::string render_matrix(std::span<const MatrixRow> rows);

// Entry point behind the fairrelay binary; returns the process exit code.
int cli_main(int argc, const char* const* argv);

}  // namespace fairrelay
