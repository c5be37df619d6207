#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fairrelay/cli.hh"

using namespace fairrelay;

namespace {

const std::vector<uint32_t> kTwoPath{2, 3};

ScenarioConfig sample_config() {
  ScenarioConfig cfg;
  cfg.name = "sample";
  ScenarioSpec& s = cfg.spec;
  s.path_hops = kTwoPath;
  s.jobs = {{1, 2, 3, 4}, {5, 6, 7, 8}};
  s.fees = {{3, 2}, {3, 2, 1}};
  s.price = 50;
  s.chunk_count = 8;
  s.chunk_size = 256;
  s.b_max = 100;
  s.slashing = true;
  s.slash_percent = 25;
  s.deposit = 200;
  s.channel_capacity = 200;
  s.adversary.behaviors[1] =
      Behavior{Misbehavior::silent_at, Phase::delivery, 0, 0};
  s.adversary.behaviors[3] =
      Behavior{Misbehavior::garbage_encrypt, Phase::setup, 2, 0};
  s.adversary.behaviors[4] =
      Behavior{Misbehavior::wormhole_collude, Phase::setup, 0, 6};
  cfg.expected_outcome = Outcome::aborted;
  cfg.expected_verdicts = true;
  return cfg;
}

std::string minimal_json(const std::string& extra) {
  return R"({
    "price": 50, "chunk_count": 4, "chunk_size": 128,
    "b_max": 100, "deposit": 200, "channel_capacity": 200,
    "paths": [
      {"hops": 2, "fees": [3, 2], "job": [1, 2]},
      {"hops": 1, "fees": [2], "job": [3, 4]}
    ])" +
         extra + "\n}";
}

std::string parse_error(const std::string& text) {
  std::string error;
  auto cfg = parse_scenario(text, &error);
  CHECK_FALSE(cfg.has_value());
  CHECK_FALSE(error.empty());
  return error;
}

int run_cli(std::vector<const char*> args) {
  args.insert(args.begin(), "fairrelay");
  return cli_main(static_cast<int>(args.size()), args.data());
}

std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "fairrelay_cli_test";
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("party references round-trip and reject malformed names") {
  CHECK(party_ref_name(0, kTwoPath) == "C");
  CHECK(party_ref_name(1, kTwoPath) == "P");
  CHECK(party_ref_name(2, kTwoPath) == "R1.1");
  CHECK(party_ref_name(3, kTwoPath) == "R1.2");
  CHECK(party_ref_name(4, kTwoPath) == "R2.1");
  CHECK(party_ref_name(6, kTwoPath) == "R2.3");

  for (PartyId id = 0; id < 7; ++id) {
    auto back = parse_party_ref(party_ref_name(id, kTwoPath), kTwoPath);
    REQUIRE(back.has_value());
    CHECK(*back == id);
  }
  CHECK(parse_party_ref("c", kTwoPath) == PartyId{0});
  CHECK(parse_party_ref("r2.3", kTwoPath) == PartyId{6});

  for (const char* bad :
       {"", "x", "r", "r1", "r1.", "r.1", "r0.1", "r3.1", "r1.3", "r2.4",
        "r1.0", "rr1.1", "r1.1x", "cp"})
    CHECK_FALSE(parse_party_ref(bad, kTwoPath).has_value());
}

TEST_CASE("enum names round-trip") {
  for (Misbehavior m :
       {Misbehavior::honest, Misbehavior::silent_at, Misbehavior::wrong_secret,
        Misbehavior::garbage_encrypt, Misbehavior::withhold_unlock,
        Misbehavior::wormhole_collude, Misbehavior::wrong_mask,
        Misbehavior::stall_receipt})
    CHECK(parse_misbehavior(misbehavior_name(m)) == m);
  CHECK_FALSE(parse_misbehavior("sneaky").has_value());

  for (Phase p : {Phase::setup, Phase::delivery, Phase::payment_lock,
                  Phase::payment_unlock, Phase::decryption})
    CHECK(parse_phase(phase_name(p)) == p);
  CHECK_FALSE(parse_phase("limbo").has_value());

  for (Outcome o : {Outcome::delivered, Outcome::disputed, Outcome::aborted})
    CHECK(parse_outcome(outcome_name(o)) == o);
  CHECK_FALSE(parse_outcome("pending").has_value());
}

TEST_CASE("a full scenario survives serialize/parse round-trips") {
  ScenarioConfig cfg = sample_config();
  cfg.spec.content.assign(cfg.spec.chunk_count * cfg.spec.chunk_size, 0xa7);

  std::string once = serialize_scenario(cfg);
  std::string error;
  auto parsed = parse_scenario(once, &error);
  REQUIRE_MESSAGE(parsed.has_value(), error);

  CHECK(parsed->name == cfg.name);
  CHECK(parsed->spec.path_hops == cfg.spec.path_hops);
  CHECK(parsed->spec.jobs == cfg.spec.jobs);
  CHECK(parsed->spec.fees == cfg.spec.fees);
  CHECK(parsed->spec.price == cfg.spec.price);
  CHECK(parsed->spec.chunk_count == cfg.spec.chunk_count);
  CHECK(parsed->spec.chunk_size == cfg.spec.chunk_size);
  CHECK(parsed->spec.b_max == cfg.spec.b_max);
  CHECK(parsed->spec.slashing == cfg.spec.slashing);
  CHECK(parsed->spec.slash_percent == cfg.spec.slash_percent);
  CHECK(parsed->spec.deposit == cfg.spec.deposit);
  CHECK(parsed->spec.channel_capacity == cfg.spec.channel_capacity);
  CHECK(parsed->spec.content == cfg.spec.content);
  CHECK(parsed->expected_outcome == cfg.expected_outcome);
  CHECK(parsed->expected_verdicts == cfg.expected_verdicts);

  REQUIRE(parsed->spec.adversary.behaviors.size() == 3);
  const Behavior& silent = parsed->spec.adversary.behaviors.at(1);
  CHECK(silent.kind == Misbehavior::silent_at);
  CHECK(silent.silent_phase == Phase::delivery);
  const Behavior& garbage = parsed->spec.adversary.behaviors.at(3);
  CHECK(garbage.kind == Misbehavior::garbage_encrypt);
  CHECK(garbage.only_chunk == 2);
  const Behavior& collude = parsed->spec.adversary.behaviors.at(4);
  CHECK(collude.kind == Misbehavior::wormhole_collude);
  CHECK(collude.partner == 6);

  // Canonical text is a fixed point of parse-then-serialize.
  CHECK(serialize_scenario(*parsed) == once);
}

TEST_CASE("parse failures carry a reason and never return a config") {
  CHECK_FALSE(parse_error("{ not json").empty());
  CHECK_FALSE(parse_error("[1, 2]").empty());
  CHECK(parse_error(minimal_json(R"(, "price": null)")) != "");

  // Required keys.
  std::string no_price = minimal_json("");
  no_price.replace(no_price.find("\"price\": 50,"), 13, "");
  CHECK_FALSE(parse_error(no_price).empty());

  CHECK(parse_error(minimal_json(
            R"(, "adversary": [{"party": "r9.9", "kind": "wrong_mask"}])"))
            .find("unknown party") != std::string::npos);
  CHECK(parse_error(minimal_json(
            R"(, "adversary": [{"party": "p", "kind": "mystery"}])"))
            .find("unknown misbehavior") != std::string::npos);
  CHECK(parse_error(minimal_json(
            R"(, "adversary": [{"party": "p", "kind": "silent_at",
                                "phase": "limbo"}])"))
            .find("unknown phase") != std::string::npos);
  CHECK(parse_error(minimal_json(
            R"(, "adversary": [{"party": "p", "kind": "wrong_mask"},
                               {"party": "P", "kind": "stall_receipt"}])"))
            .find("duplicate") != std::string::npos);
  // A colluder needs an explicit partner.
  CHECK_FALSE(
      parse_error(minimal_json(
                      R"(, "adversary": [{"party": "r1.1",
                                          "kind": "wormhole_collude"}])"))
          .empty());
  CHECK(parse_error(minimal_json(R"(, "content_hex": "zz")"))
            .find("content_hex") != std::string::npos);
  CHECK(parse_error(minimal_json(R"(, "expected": {"outcome": "maybe"})"))
            .find("unknown outcome") != std::string::npos);

  // Scenario validation runs before the config is returned.
  std::string bad_budget = minimal_json("");
  bad_budget.replace(bad_budget.find("\"b_max\": 100"), 12, "\"b_max\": 50");
  CHECK(parse_error(bad_budget).find("b_max") != std::string::npos);
}

TEST_CASE("shipped scenario files parse, run, and match their expectations") {
  namespace fs = std::filesystem;
  const fs::path dir = FR_SCENARIO_DIR;
  size_t found = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    ++found;
    CAPTURE(entry.path().string());
    std::string error;
    auto cfg = parse_scenario(slurp(entry.path()), &error);
    REQUIRE_MESSAGE(cfg.has_value(), error);
    REQUIRE(cfg->expected_outcome.has_value());
    REQUIRE(cfg->expected_verdicts.has_value());

    RunResult res = run(cfg->spec, 1);
    CHECK(res.metrics.outcome == *cfg->expected_outcome);
    CHECK(res.verdicts.all() == *cfg->expected_verdicts);
    CHECK_FALSE(res.timed_out);
  }
  CHECK(found == 7);
}

TEST_CASE("metrics rendering carries the run facts") {
  ScenarioSpec s = sample_config().spec;
  s.adversary.behaviors.clear();
  s.slashing = false;
  RunResult res = run(s, 3);
  std::string text = render_metrics(res);
  CHECK(text.find("outcome delivered\n") != std::string::npos);
  CHECK(text.find("judge_ops_total 0\n") != std::string::npos);
  CHECK(text.find("delta C -50\n") != std::string::npos);
  CHECK(text.find("delta P 39\n") != std::string::npos);
  CHECK(text.find("delta R2.3 1\n") != std::string::npos);
  CHECK(text.find("verdicts_all 1\n") != std::string::npos);
  CHECK(text.find("phase R1.1 done\n") != std::string::npos);
  CHECK(text.find("link C P ") != std::string::npos);
}

TEST_CASE("matrix suites hold on the fast paths") {
  for (const char* suite : {"optimistic", "disputes", "wormhole"}) {
    CAPTURE(suite);
    auto rows = run_matrix(suite, 1);
    CHECK_FALSE(rows.empty());
    for (const auto& row : rows) {
      CAPTURE(row.name);
      CAPTURE(row.note);
      CHECK(row.ok);
    }
  }
  CHECK_THROWS_AS((void)run_matrix("unheard_of", 1), std::invalid_argument);

  auto rows = run_matrix("disputes", 1);
  std::string table = render_matrix(rows);
  CHECK(table.find("dispute: mask fraud by P") != std::string::npos);
  CHECK(table.find("disputed") != std::string::npos);
}

TEST_CASE("command line drives run, overhead, and matrix end to end") {
  namespace fs = std::filesystem;
  const fs::path dir = temp_dir();
  const fs::path cfg_path = dir / "scenario.json";
  const fs::path out_dir = dir / "out";
  const fs::path csv_path = dir / "rows.csv";

  ScenarioConfig cfg = sample_config();
  cfg.spec.adversary.behaviors.clear();
  cfg.spec.slashing = false;
  cfg.expected_outcome = Outcome::delivered;
  cfg.expected_verdicts = true;
  {
    std::ofstream out(cfg_path, std::ios::binary);
    out << serialize_scenario(cfg);
  }

  std::string cfg_arg = cfg_path.string();
  std::string out_arg = out_dir.string();
  std::string csv_arg = csv_path.string();

  CHECK(run_cli({"run", "--config", cfg_arg.c_str(), "--seed", "5", "--out",
                 out_arg.c_str()}) == 0);
  CHECK(fs::exists(out_dir / "trace.txt"));
  CHECK(fs::exists(out_dir / "metrics.txt"));
  CHECK(fs::exists(out_dir / "scenario.json"));
  CHECK(slurp(out_dir / "metrics.txt").find("outcome delivered") !=
        std::string::npos);
  // The echoed scenario is the canonical serialization of the input.
  CHECK(slurp(out_dir / "scenario.json") == serialize_scenario(cfg));
  // The written trace matches an in-process run under the same seed.
  CHECK(slurp(out_dir / "trace.txt") == run(cfg.spec, 5).trace_text);

  // A wrong expectation flips the exit code.
  cfg.expected_outcome = Outcome::disputed;
  {
    std::ofstream out(cfg_path, std::ios::binary);
    out << serialize_scenario(cfg);
  }
  CHECK(run_cli({"run", "--config", cfg_arg.c_str()}) == 1);

  // Broken configs are rejected before any run starts.
  {
    std::ofstream out(cfg_path, std::ios::binary);
    out << "{ \"price\": 50 }";
  }
  CHECK(run_cli({"run", "--config", cfg_arg.c_str()}) == 2);
  CHECK(run_cli({"run", "--config", (dir / "missing.json").string().c_str()}) !=
        0);

  CHECK(run_cli({"overhead", "--hops", "0,1,2", "--chunk-sizes", "1024",
                 "--chunks", "2", "--csv", csv_arg.c_str()}) == 0);
  std::string csv = slurp(csv_path);
  CHECK(csv.find("2,1024,2,194,194,") != std::string::npos);

  CHECK(run_cli({"matrix", "--suite", "optimistic"}) == 0);
  CHECK(run_cli({"matrix", "--suite", "imaginary"}) != 0);
  CHECK(run_cli({"overhead", "--hops", "oops"}) != 0);
  CHECK(run_cli({}) != 0);

  fs::remove_all(dir);
}
