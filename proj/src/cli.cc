#include "fairrelay/cli.hh"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>

#include "CLI11.hpp"

namespace fairrelay {

namespace {

// ============================================================================
// Suite scenarios
// ============================================================================

// Small four-chunk session over the given paths: flat 2-token hop fees,
// contiguous job split, budgets sized to clear every validation floor.
ScenarioSpec matrix_spec(std::vector<uint32_t> hops) {
  ScenarioSpec s;
  s.path_hops = std::move(hops);
  s.chunk_count = 4;
  s.chunk_size = 512;
  s.price = 60;

  const auto paths = static_cast<uint32_t>(s.path_hops.size());
  uint32_t next = 1;
  for (uint32_t k = 0; k < paths; ++k) {
    uint32_t take = s.chunk_count / paths + (k < s.chunk_count % paths);
    std::vector<uint32_t> job;
    for (uint32_t j = 0; j < take; ++j) job.push_back(next++);
    s.jobs.push_back(std::move(job));
  }

  Tokens fee_sum = 0;
  for (uint32_t h : s.path_hops) {
    s.fees.emplace_back(h, 2);
    fee_sum += 2 * h;
  }
  s.b_max = std::max(s.price, fee_sum) + 11;
  s.deposit = s.b_max + 60;
  s.channel_capacity = std::max(s.price, fee_sum) + 40;
  return s;
}

PartyId pid(const ScenarioSpec& s, const char* ref) {
  auto id = parse_party_ref(ref, s.path_hops);
  if (!id) throw std::invalid_argument(std::string("bad party ref ") + ref);
  return *id;
}

size_t count_ops(const RunResult& res, JudgeOp op) {
  size_t n = 0;
  for (const auto& ev : res.metrics.judge_events) n += ev.op == op;
  return n;
}

size_t count_ops(const RunResult& res, JudgeOp op, JudgeOutcome outcome) {
  size_t n = 0;
  for (const auto& ev : res.metrics.judge_events)
    n += ev.op == op && ev.outcome == outcome;
  return n;
}

using Check = std::function<bool(const RunResult&, std::string*)>;

MatrixRow run_row(std::string name, const ScenarioSpec& spec, uint64_t seed,
                  const Check& check) {
  MatrixRow row;
  row.name = std::move(name);
  RunResult res = run(spec, seed);
  row.outcome = res.metrics.outcome;
  row.judge_ops = res.metrics.judge_events.size();
  row.verdicts = res.verdicts.all();
  std::string note;
  row.ok = check(res, &note);
  if (res.timed_out) {
    row.ok = false;
    note = note.empty() ? "timed out" : note + "; timed out";
  }
  row.note = std::move(note);
  return row;
}

bool expect(bool cond, std::string* note, const char* what) {
  if (!cond && note->empty()) *note = what;
  return cond;
}

Check optimistic_check() {
  return [](const RunResult& res, std::string* note) {
    bool ok = true;
    ok &= expect(res.metrics.outcome == Outcome::delivered, note,
                 "not delivered");
    ok &= expect(res.metrics.judge_events.empty(), note, "judge was invoked");
    ok &= expect(res.verdicts.all(), note, "verdict failed");
    return ok;
  };
}

std::vector<MatrixRow> optimistic_suite(uint64_t seed) {
  struct Shape {
    const char* label;
    std::vector<uint32_t> hops;
  };
  const Shape shapes[] = {
      {"honest: direct (no relayers)", {0}},
      {"honest: single 1-hop path", {1}},
      {"honest: single 3-hop path", {3}},
      {"honest: two paths 2+3", {2, 3}},
      {"honest: three paths 1+2+3", {1, 2, 3}},
  };
  std::vector<MatrixRow> rows;
  for (const Shape& sh : shapes)
    rows.push_back(run_row(sh.label, matrix_spec(sh.hops), seed,
                           optimistic_check()));
  return rows;
}

std::vector<MatrixRow> disputes_suite(uint64_t seed) {
  std::vector<MatrixRow> rows;
  auto with = [](const char* ref, Behavior b) {
    ScenarioSpec s = matrix_spec({2, 3});
    s.adversary.behaviors[pid(s, ref)] = b;
    return s;
  };
  auto single_proof = [](JudgeOp op, PartyId target) -> Check {
    return [op, target](const RunResult& res, std::string* note) {
      bool ok = true;
      ok &= expect(res.metrics.judge_events.size() == 1, note,
                   "expected exactly one judge operation");
      ok &= expect(count_ops(res, op, JudgeOutcome::compensated) == 1, note,
                   "expected one compensated proof");
      ok &= expect(!res.metrics.judge_events.empty() &&
                       res.metrics.judge_events[0].target == target,
                   note, "wrong party accused");
      ok &= expect(res.metrics.outcome == Outcome::disputed, note,
                   "not classified as disputed");
      ok &= expect(res.verdicts.all(), note, "verdict failed");
      return ok;
    };
  };

  {
    ScenarioSpec s = with("P", {Misbehavior::wrong_mask, Phase::setup, 0, 0});
    rows.push_back(run_row("dispute: mask fraud by P", s, seed,
                           single_proof(JudgeOp::pomm, pid(s, "P"))));
  }
  {
    ScenarioSpec s =
        with("R2.2", {Misbehavior::wrong_mask, Phase::setup, 0, 0});
    rows.push_back(run_row("dispute: mask fraud by R2.2", s, seed,
                           single_proof(JudgeOp::pomm, pid(s, "R2.2"))));
  }
  {
    ScenarioSpec s =
        with("P", {Misbehavior::garbage_encrypt, Phase::setup, 2, 0});
    rows.push_back(run_row("dispute: garbage encryption by P", s, seed,
                           single_proof(JudgeOp::pome, pid(s, "P"))));
  }
  {
    ScenarioSpec s =
        with("R1.1", {Misbehavior::garbage_encrypt, Phase::setup, 0, 0});
    rows.push_back(run_row("dispute: garbage encryption by R1.1", s, seed,
                           single_proof(JudgeOp::pome, pid(s, "R1.1"))));
  }
  {
    ScenarioSpec s =
        with("R2.1", {Misbehavior::withhold_unlock, Phase::setup, 0, 0});
    rows.push_back(run_row(
        "dispute: withheld unlock by R2.1", s, seed,
        [](const RunResult& res, std::string* note) {
          bool ok = true;
          ok &= expect(count_ops(res, JudgeOp::enforce,
                                 JudgeOutcome::enforced) == 1,
                       note, "expected one enforcement");
          ok &= expect(count_ops(res, JudgeOp::log, JudgeOutcome::logged) == 3,
                       note, "expected all three hops to log");
          ok &= expect(count_ops(res, JudgeOp::punish) == 0, note,
                       "unexpected punishment");
          ok &= expect(res.metrics.judge_events.size() == 4, note,
                       "unexpected extra judge operations");
          ok &= expect(res.metrics.outcome == Outcome::delivered, note,
                       "not delivered");
          ok &= expect(res.verdicts.all(), note, "verdict failed");
          return ok;
        }));
  }
  {
    ScenarioSpec s =
        with("R2.2", {Misbehavior::wrong_secret, Phase::setup, 0, 0});
    PartyId cheat = pid(s, "R2.2");
    rows.push_back(run_row(
        "dispute: wrong secret by R2.2", s, seed,
        [cheat](const RunResult& res, std::string* note) {
          bool ok = true;
          ok &= expect(count_ops(res, JudgeOp::enforce,
                                 JudgeOutcome::enforced) == 1,
                       note, "expected one enforcement");
          ok &= expect(count_ops(res, JudgeOp::punish,
                                 JudgeOutcome::punished) == 1,
                       note, "expected one punishment");
          bool target_ok = false;
          std::map<PartyId, size_t> accepted_logs;
          for (const auto& ev : res.metrics.judge_events) {
            if (ev.op == JudgeOp::punish &&
                ev.outcome == JudgeOutcome::punished)
              target_ok = ev.target == cheat;
            if (ev.op == JudgeOp::log && ev.outcome == JudgeOutcome::logged)
              ++accepted_logs[ev.caller];
            ok &= expect(ev.op == JudgeOp::enforce || ev.op == JudgeOp::log ||
                             ev.op == JudgeOp::punish,
                         note, "unexpected judge operation kind");
          }
          ok &= expect(target_ok, note, "punished the wrong party");
          for (const auto& [caller, n] : accepted_logs)
            ok &= expect(n == 1, note, "a party logged more than once");
          ok &= expect(res.metrics.outcome == Outcome::aborted, note,
                       "expected an aborted session");
          ok &= expect(res.verdicts.all(), note, "verdict failed");
          return ok;
        }));
  }
  {
    ScenarioSpec s =
        with("R1.2", {Misbehavior::stall_receipt, Phase::setup, 0, 0});
    rows.push_back(run_row(
        "dispute: stalled receipt by R1.2", s, seed,
        [](const RunResult& res, std::string* note) {
          bool ok = true;
          ok &= expect(res.metrics.judge_events.empty(), note,
                       "judge was invoked");
          ok &= expect(res.metrics.outcome == Outcome::aborted, note,
                       "expected an aborted session");
          for (const auto& [id, delta] : res.metrics.deltas)
            ok &= expect(delta == 0, note, "a balance moved");
          ok &= expect(res.verdicts.all(), note, "verdict failed");
          return ok;
        }));
  }
  return rows;
}

std::vector<MatrixRow> wormhole_suite(uint64_t seed) {
  std::vector<MatrixRow> rows;
  const std::pair<uint32_t, uint32_t> pairs[] = {{1, 2}, {1, 3}, {2, 3}};
  for (auto [a, b] : pairs) {
    ScenarioSpec s = matrix_spec({3});
    PartyId ida = relayer_party_id(s.path_hops, 0, a);
    PartyId idb = relayer_party_id(s.path_hops, 0, b);
    s.adversary.behaviors[ida] =
        Behavior{Misbehavior::wormhole_collude, Phase::setup, 0, idb};
    s.adversary.behaviors[idb] =
        Behavior{Misbehavior::wormhole_collude, Phase::setup, 0, ida};
    char name[64];
    std::snprintf(name, sizeof(name), "wormhole: colluding hops %u+%u", a, b);
    rows.push_back(run_row(
        name, s, seed, [&s](const RunResult& res, std::string* note) {
          bool ok = true;
          ok &= expect(res.metrics.outcome == Outcome::delivered, note,
                       "not delivered");
          ok &= expect(res.metrics.judge_events.empty(), note,
                       "judge was invoked");
          for (uint32_t hop = 1; hop <= 3; ++hop) {
            PartyId id = relayer_party_id(s.path_hops, 0, hop);
            if (!s.adversary.is_honest(id)) continue;
            ok &= expect(res.metrics.deltas.at(id) == 2, note,
                         "an honest relayer missed its fee");
          }
          ok &= expect(res.verdicts.all(), note, "verdict failed");
          return ok;
        }));
  }
  return rows;
}

struct CorruptionKind {
  const char* label;
  Behavior behavior;
};

std::vector<CorruptionKind> corruption_kinds() {
  return {
      {"silent@setup", {Misbehavior::silent_at, Phase::setup, 0, 0}},
      {"silent@delivery", {Misbehavior::silent_at, Phase::delivery, 0, 0}},
      {"silent@lock", {Misbehavior::silent_at, Phase::payment_lock, 0, 0}},
      {"silent@unlock", {Misbehavior::silent_at, Phase::payment_unlock, 0, 0}},
      {"wrong_secret", {Misbehavior::wrong_secret, Phase::setup, 0, 0}},
      {"garbage_encrypt", {Misbehavior::garbage_encrypt, Phase::setup, 0, 0}},
      {"withhold_unlock", {Misbehavior::withhold_unlock, Phase::setup, 0, 0}},
      {"wrong_mask", {Misbehavior::wrong_mask, Phase::setup, 0, 0}},
      {"stall_receipt", {Misbehavior::stall_receipt, Phase::setup, 0, 0}},
  };
}

Check fairness_check() {
  return [](const RunResult& res, std::string* note) {
    bool ok = true;
    ok &= expect(res.verdicts.fair_customer, note, "customer verdict failed");
    ok &= expect(res.verdicts.fair_provider, note, "provider verdict failed");
    ok &= expect(res.verdicts.fair_relayer, note, "relayer verdict failed");
    ok &= expect(res.verdicts.confidentiality, note,
                 "confidentiality verdict failed");
    return ok;
  };
}

// Every single corruption, then every pairwise corruption (each pair of
// parties crossed with each pair of misbehaviors, one aggregate row per
// party pair). The four verdicts must hold in every run.
std::vector<MatrixRow> fairness_suite(uint64_t seed) {
  const ScenarioSpec base = matrix_spec({2, 3});
  const auto kinds = corruption_kinds();
  const PartyId n_parties = 7;
  std::vector<MatrixRow> rows;

  for (PartyId id = 0; id < n_parties; ++id) {
    for (const auto& kind : kinds) {
      ScenarioSpec s = base;
      s.adversary.behaviors[id] = kind.behavior;
      std::string name = "fairness: " + party_ref_name(id, s.path_hops) +
                         " " + kind.label;
      rows.push_back(run_row(name, s, seed, fairness_check()));
    }
  }

  for (PartyId a = 0; a < n_parties; ++a) {
    for (PartyId b = a + 1; b < n_parties; ++b) {
      MatrixRow row;
      row.name = "fairness: pair " + party_ref_name(a, base.path_hops) + "+" +
                 party_ref_name(b, base.path_hops);
      row.ok = true;
      row.verdicts = true;
      size_t combos = 0;
      for (const auto& ka : kinds) {
        for (const auto& kb : kinds) {
          ScenarioSpec s = base;
          s.adversary.behaviors[a] = ka.behavior;
          s.adversary.behaviors[b] = kb.behavior;
          RunResult res = run(s, seed);
          ++combos;
          row.outcome = res.metrics.outcome;
          row.judge_ops += res.metrics.judge_events.size();
          if (!res.verdicts.all() || res.timed_out) {
            row.ok = false;
            row.verdicts = false;
            if (row.note.empty())
              row.note = std::string(ka.label) + " + " + kb.label +
                         (res.timed_out ? " timed out" : " broke a verdict");
          }
        }
      }
      if (row.ok) row.note = std::to_string(combos) + " combos";
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

// ============================================================================
// Subcommand bodies
// ============================================================================

bool write_file(const std::filesystem::path& path, const std::string& body,
                std::string* error) {
  std::ofstream out(path, std::ios::binary);
  out << body;
  if (!out.good()) {
    *error = "cannot write " + path.string();
    return false;
  }
  return true;
}

int cmd_run(const std::string& config_path, uint64_t seed,
            const std::string& out_dir) {
  std::ifstream in(config_path, std::ios::binary);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (!in.good() && !in.eof()) {
    std::fprintf(stderr, "error: cannot read %s\n", config_path.c_str());
    return 2;
  }
  std::string error;
  auto cfg = parse_scenario(text, &error);
  if (!cfg) {
    std::fprintf(stderr, "error: %s: %s\n", config_path.c_str(),
                 error.c_str());
    return 2;
  }

  RunResult res = run(cfg->spec, seed);
  std::printf("scenario '%s' seed %" PRIu64 "\n",
              cfg->name.empty() ? config_path.c_str() : cfg->name.c_str(),
              seed);
  std::fputs(render_metrics(res).c_str(), stdout);

  bool ok = res.verdicts.all();
  if (cfg->expected_outcome) {
    bool match = *cfg->expected_outcome == res.metrics.outcome;
    std::printf("expected outcome %s: %s\n",
                outcome_name(*cfg->expected_outcome),
                match ? "match" : "MISMATCH");
    ok &= match;
  }
  if (cfg->expected_verdicts) {
    bool match = *cfg->expected_verdicts == res.verdicts.all();
    std::printf("expected verdicts %s: %s\n",
                *cfg->expected_verdicts ? "pass" : "fail",
                match ? "match" : "MISMATCH");
    ok &= match;
  }

  if (!out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
      std::fprintf(stderr, "error: cannot create %s\n", out_dir.c_str());
      return 2;
    }
    const std::filesystem::path dir(out_dir);
    for (const auto& [file, body] :
         {std::pair<const char*, std::string>{"trace.txt", res.trace_text},
          {"metrics.txt", render_metrics(res)},
          {"scenario.json", serialize_scenario(*cfg)}}) {
      if (!write_file(dir / file, body, &error)) {
        std::fprintf(stderr, "error: %s\n", error.c_str());
        return 2;
      }
      std::printf("wrote %s\n", (dir / file).string().c_str());
    }
  }
  return ok ? 0 : 1;
}

int cmd_overhead(const std::vector<uint32_t>& hops,
                 const std::vector<size_t>& chunk_sizes, uint32_t chunks,
                 uint64_t seed, const std::string& csv_path) {
  std::vector<OverheadRow> rows;
  bool ok = true;
  for (size_t size : chunk_sizes) {
    for (uint32_t h : hops) {
      OverheadRow row = overhead_report(h, size, chunks, seed);
      if (row.measured) {
        // The measured chain bytes must match the wire-format model exactly.
        ok &= row.delivered &&
              row.measured_per_chunk_min == row.analytic_per_chunk &&
              row.measured_per_chunk_max == row.analytic_per_chunk;
      }
      rows.push_back(row);
    }
  }
  std::fputs(render_overhead_table(rows).c_str(), stdout);
  if (!csv_path.empty()) {
    std::string error;
    if (!write_file(csv_path, render_overhead_csv(rows), &error)) {
      std::fprintf(stderr, "error: %s\n", error.c_str());
      return 2;
    }
    std::printf("wrote %s\n", csv_path.c_str());
  }
  if (!ok)
    std::fprintf(stderr,
                 "error: a measured run disagreed with the analytic model\n");
  return ok ? 0 : 1;
}

int cmd_matrix(const std::string& suite, uint64_t seed) {
  std::vector<MatrixRow> rows = run_matrix(suite, seed);
  std::fputs(render_matrix(rows).c_str(), stdout);
  size_t failed = 0;
  for (const auto& row : rows) failed += !row.ok;
  std::printf("%zu/%zu rows ok\n", rows.size() - failed, rows.size());
  return failed == 0 ? 0 : 1;
}

}  // namespace

// ============================================================================
// Public surface
// ============================================================================

std::vector<MatrixRow> run_matrix(const std::string& suite, uint64_t seed) {
  if (suite == "optimistic") return optimistic_suite(seed);
  if (suite == "disputes") return disputes_suite(seed);
  if (suite == "wormhole") return wormhole_suite(seed);
  if (suite == "fairness") return fairness_suite(seed);
  if (suite == "all") {
    std::vector<MatrixRow> rows = optimistic_suite(seed);
    for (auto* fn : {disputes_suite, wormhole_suite, fairness_suite}) {
      auto more = fn(seed);
      rows.insert(rows.end(), std::make_move_iterator(more.begin()),
                  std::make_move_iterator(more.end()));
    }
    return rows;
  }
  throw std::invalid_argument("unknown suite: " + suite);
}

std::string render_matrix(std::span<const MatrixRow> rows) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-44s %-10s %5s %-8s %-6s %s\n", "case",
                "outcome", "ops", "verdicts", "status", "note");
  out += line;
  for (const MatrixRow& row : rows) {
    std::snprintf(line, sizeof(line), "%-44s %-10s %5zu %-8s %-6s %s\n",
                  row.name.c_str(), outcome_name(row.outcome), row.judge_ops,
                  row.verdicts ? "pass" : "fail", row.ok ? "ok" : "FAIL",
                  row.note.c_str());
    out += line;
  }
  return out;
}

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"fair peer-to-peer content delivery over payment channels"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  uint64_t seed = 1;
  CLI::App* run_cmd =
      app.add_subcommand("run", "Run one scenario from a JSON config");
  run_cmd->add_option("--config", config_path, "Scenario JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  run_cmd->add_option("--seed", seed, "Deterministic run seed");
  run_cmd->add_option("--out", out_dir,
                      "Directory for trace.txt, metrics.txt, scenario.json");

  std::vector<uint32_t> hops{0, 1, 2, 5, 10};
  std::vector<size_t> chunk_sizes{2048, 65536};
  uint32_t chunks = 4;
  std::string csv_path;
  CLI::App* oh_cmd = app.add_subcommand(
      "overhead", "Measure the per-chunk commitment-chain overhead");
  oh_cmd->add_option("--hops", hops, "Encryption layer counts (0 = no run)")
      ->delimiter(',');
  oh_cmd->add_option("--chunk-sizes", chunk_sizes, "Chunk sizes in bytes")
      ->delimiter(',');
  oh_cmd->add_option("--chunks", chunks, "Chunks per measured run");
  oh_cmd->add_option("--seed", seed, "Deterministic run seed");
  oh_cmd->add_option("--csv", csv_path, "Also write the rows as CSV here");

  std::string suite = "all";
  CLI::App* mx_cmd = app.add_subcommand(
      "matrix", "Run a behavior suite and check each row's expectation");
  mx_cmd->add_option("--suite", suite, "Suite to run")
      ->check(CLI::IsMember(
          {"optimistic", "disputes", "wormhole", "fairness", "all"}));
  mx_cmd->add_option("--seed", seed, "Deterministic run seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (run_cmd->parsed()) return cmd_run(config_path, seed, out_dir);
  if (oh_cmd->parsed())
    return cmd_overhead(hops, chunk_sizes, chunks, seed, csv_path);
  return cmd_matrix(suite, seed);
}

}  // namespace fairrelay
