#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "fairrelay/sim.hh"

using namespace fairrelay;

namespace {

// Two paths (2 and 3 relayers), eight chunks split between them.
// Party ids: C=0, P=1, R1.1=2, R1.2=3, R2.1=4, R2.2=5, R2.3=6.
ScenarioSpec two_path_spec(size_t chunk_size = 1024) {
  ScenarioSpec spec;
  spec.path_hops = {2, 3};
  spec.jobs = {{1, 2, 3, 4}, {5, 6, 7, 8}};
  spec.fees = {{3, 2}, {3, 2, 1}};
  spec.price = 50;
  spec.chunk_count = 8;
  spec.chunk_size = chunk_size;
  spec.b_max = 100;
  spec.deposit = 200;
  spec.channel_capacity = 200;
  return spec;
}

// Single path with `hops` relayers carrying every chunk.
ScenarioSpec single_path_spec(uint32_t hops, uint32_t chunk_count = 4,
                              size_t chunk_size = 512) {
  ScenarioSpec spec;
  spec.path_hops = {hops};
  spec.jobs.emplace_back();
  for (uint32_t i = 1; i <= chunk_count; ++i) spec.jobs[0].push_back(i);
  spec.fees = {std::vector<Tokens>(hops, 2)};
  spec.price = 50;
  spec.chunk_count = chunk_count;
  spec.chunk_size = chunk_size;
  spec.b_max = 100;
  spec.deposit = 200;
  spec.channel_capacity = 200;
  return spec;
}

Tokens delta_sum(const Metrics& m) {
  Tokens sum = 0;
  for (const auto& [id, d] : m.deltas) sum += d;
  return sum;
}

uint32_t count_ops(const Metrics& m, JudgeOp op) {
  uint32_t n = 0;
  for (const JudgeEvent& ev : m.judge_events)
    if (ev.op == op) ++n;
  return n;
}

}  // namespace

// ============================================================================
// Scheduler building blocks
// ============================================================================

TEST_CASE("message bus delivers sorted by class, sender, sequence") {
  MessageBus bus;
  auto msg = [](MsgKind kind, PartyId from, PartyId to) {
    WireMessage m;
    m.kind = kind;
    m.from = from;
    m.to = to;
    return m;
  };
  bus.post(msg(MsgKind::channel_lock, 1, 9));   // payment class, sender 1
  bus.post(msg(MsgKind::delivery_chunk, 4, 9)); // delivery class, sender 4
  bus.post(msg(MsgKind::delivery_hash, 2, 9));  // delivery class, sender 2
  bus.post(msg(MsgKind::delivery_chunk, 2, 9)); // delivery class, sender 2, later
  bus.post(msg(MsgKind::lock_ack, 0, 9));       // payment class, sender 0
  bus.post(msg(MsgKind::init, 5, 7));           // other recipient

  auto inboxes = bus.collect();
  CHECK(bus.idle());
  REQUIRE(inboxes.count(9) == 1);
  const auto& inbox = inboxes[9];
  REQUIRE(inbox.size() == 5);
  CHECK(inbox[0].kind == MsgKind::delivery_hash);   // class 0, sender 2
  CHECK(inbox[1].kind == MsgKind::delivery_chunk);  // class 0, sender 2
  CHECK(inbox[2].kind == MsgKind::delivery_chunk);  // class 0, sender 4
  CHECK(inbox[3].kind == MsgKind::lock_ack);        // class 1, sender 0
  CHECK(inbox[4].kind == MsgKind::channel_lock);    // class 1, sender 1
  REQUIRE(inboxes.count(7) == 1);
  CHECK(inboxes[7].size() == 1);

  CHECK(bus.collect().empty());
}

TEST_CASE("adversary schedule defaults to honest") {
  AdversarySchedule adv;
  adv.behaviors[3] = Behavior{Misbehavior::wrong_secret, Phase::setup, 0, 0};
  CHECK(adv.of(0).kind == Misbehavior::honest);
  CHECK(adv.of(3).kind == Misbehavior::wrong_secret);
  CHECK(adv.is_honest(0));
  CHECK_FALSE(adv.is_honest(3));
}

TEST_CASE("relayer ids follow customer and provider in path order") {
  std::vector<uint32_t> hops = {2, 3};
  CHECK(relayer_party_id(hops, 0, 1) == 2);
  CHECK(relayer_party_id(hops, 0, 2) == 3);
  CHECK(relayer_party_id(hops, 1, 1) == 4);
  CHECK(relayer_party_id(hops, 1, 3) == 6);

  RunResult res = run(two_path_spec(64), 7);
  CHECK(res.graph.paths[0].relayers == std::vector<PartyId>{2, 3});
  CHECK(res.graph.paths[1].relayers == std::vector<PartyId>{4, 5, 6});
}

// ============================================================================
// Scenario validation
// ============================================================================

TEST_CASE("scenario validation rejects malformed configurations") {
  CHECK(validate_spec(two_path_spec()) == std::nullopt);

  auto broken = two_path_spec();
  broken.jobs[0] = {1, 2, 3};  // chunk 4 unassigned
  CHECK(validate_spec(broken).has_value());

  broken = two_path_spec();
  broken.jobs[1] = {4, 5, 6, 7, 8};  // chunk 4 assigned twice
  CHECK(validate_spec(broken).has_value());

  broken = two_path_spec();
  broken.jobs = {{1, 2, 3, 4, 5, 6, 7, 8}, {}};  // empty job
  CHECK(validate_spec(broken).has_value());

  broken = two_path_spec();
  broken.b_max = broken.price;  // compensation must exceed the price
  CHECK(validate_spec(broken).has_value());

  broken = two_path_spec();
  broken.b_max = 10;  // below the total relay fees
  CHECK(validate_spec(broken).has_value());

  broken = two_path_spec();
  broken.deposit = broken.b_max - 1;
  CHECK(validate_spec(broken).has_value());

  broken = two_path_spec();
  broken.channel_capacity = broken.price - 1;
  CHECK(validate_spec(broken).has_value());

  broken = two_path_spec();
  broken.content = Bytes(17, 0xab);  // size mismatch
  CHECK(validate_spec(broken).has_value());

  broken = two_path_spec();
  broken.adversary.behaviors[42] = Behavior{};
  CHECK(validate_spec(broken).has_value());

  CHECK_THROWS_AS((void)run(broken, 1), std::invalid_argument);
}

// ============================================================================
// Honest runs
// ============================================================================

TEST_CASE("honest two-path session delivers content with exact balances") {
  ScenarioSpec spec = two_path_spec();
  RunResult res = run(spec, 42);

  CHECK(res.plan.t1 == 8);
  CHECK(res.plan.t2 == 19);
  CHECK(res.plan.t0 == 24);
  CHECK(res.plan.receipts_deadline() == 13);

  CHECK(res.metrics.outcome == Outcome::delivered);
  REQUIRE(res.delivered_content.has_value());
  CHECK(*res.delivered_content == res.source_content);
  CHECK_FALSE(res.timed_out);

  // No judge involvement after setup.
  CHECK(res.metrics.judge_events.empty());
  CHECK(res.metrics.judge_ops.empty());

  // Every party ends exactly with its protocol earnings.
  CHECK(res.metrics.deltas.at(0) == -50);  // customer pays the price
  CHECK(res.metrics.deltas.at(1) == 50 - 11);  // provider nets price - fees
  CHECK(res.metrics.deltas.at(2) == 3);
  CHECK(res.metrics.deltas.at(3) == 2);
  CHECK(res.metrics.deltas.at(4) == 3);
  CHECK(res.metrics.deltas.at(5) == 2);
  CHECK(res.metrics.deltas.at(6) == 1);
  CHECK(delta_sum(res.metrics) == 0);
  CHECK(res.metrics.burned == 0);

  CHECK(res.verdicts.fair_customer);
  CHECK(res.verdicts.fair_provider);
  CHECK(res.verdicts.fair_relayer);
  CHECK(res.verdicts.confidentiality);

  CHECK_FALSE(res.fairness.relayer_saw_plaintext);
  CHECK_FALSE(res.fairness.peel_without_provider_key_leaks);
  CHECK(res.fairness.customer_payment_settled);

  // Every channel on every path settled.
  for (const PathConfig& path : res.graph.paths)
    for (ChannelId cid : path.cids)
      CHECK(res.fairness.settled_channels.contains(cid));
  CHECK(res.fairness.settled_channels.contains(res.graph.customer_channel));

  CHECK(res.metrics.rounds <= res.plan.t0 + 2);
}

TEST_CASE("direct provider-to-customer path needs no relayers") {
  ScenarioSpec spec;
  spec.path_hops = {0};
  spec.jobs = {{1, 2}};
  spec.fees = {{}};
  spec.price = 10;
  spec.chunk_count = 2;
  spec.chunk_size = 256;
  spec.b_max = 20;
  spec.deposit = 50;
  spec.channel_capacity = 50;

  RunResult res = run(spec, 3);
  CHECK(res.metrics.outcome == Outcome::delivered);
  CHECK(res.metrics.judge_events.empty());
  CHECK(res.metrics.deltas.at(0) == -10);
  CHECK(res.metrics.deltas.at(1) == 10);
  CHECK(res.verdicts.fair_customer);
  CHECK(res.verdicts.fair_provider);
  CHECK(res.verdicts.fair_relayer);
  CHECK(res.verdicts.confidentiality);
}

TEST_CASE("explicit content bytes round-trip through delivery") {
  ScenarioSpec spec = two_path_spec(128);
  spec.content.resize(8 * 128);
  for (size_t i = 0; i < spec.content.size(); ++i)
    spec.content[i] = static_cast<uint8_t>(i * 31 + 7);
  RunResult res = run(spec, 9);
  REQUIRE(res.delivered_content.has_value());
  CHECK(*res.delivered_content == spec.content);
}

TEST_CASE("same seed gives byte-identical traces, different seed differs") {
  ScenarioSpec spec = two_path_spec();
  RunResult a = run(spec, 1234);
  RunResult b = run(spec, 1234);
  CHECK(a.trace_text == b.trace_text);
  CHECK(a.metrics.deltas == b.metrics.deltas);
  CHECK(a.metrics.message_bytes == b.metrics.message_bytes);
  CHECK_FALSE(a.trace_text.empty());

  RunResult c = run(spec, 1235);
  CHECK(a.trace_text != c.trace_text);
}

// ============================================================================
// Misbehavior: commitment disputes (single judge operation)
// ============================================================================

TEST_CASE("provider mask fraud yields one compensated key dispute") {
  ScenarioSpec spec = two_path_spec();
  spec.adversary.behaviors[1] = Behavior{Misbehavior::wrong_mask};
  RunResult res = run(spec, 5);

  CHECK(res.metrics.outcome == Outcome::disputed);
  CHECK_FALSE(res.delivered_content.has_value());
  REQUIRE(res.metrics.judge_events.size() == 1);
  const JudgeEvent& ev = res.metrics.judge_events[0];
  CHECK(ev.op == JudgeOp::pomm);
  CHECK(ev.outcome == JudgeOutcome::compensated);
  CHECK(ev.caller == 0);
  CHECK(ev.target == 1);

  // The customer paid the price but recovered the larger compensation.
  CHECK(res.metrics.deltas.at(0) == -50 + 100);
  CHECK(res.verdicts.fair_customer);
  CHECK(res.verdicts.fair_relayer);
  CHECK(delta_sum(res.metrics) == 0);
}

TEST_CASE("relayer mask fraud accuses the relayer, not the provider") {
  ScenarioSpec spec = two_path_spec();
  spec.adversary.behaviors[5] = Behavior{Misbehavior::wrong_mask};
  RunResult res = run(spec, 6);

  CHECK(res.metrics.outcome == Outcome::disputed);
  REQUIRE(res.metrics.judge_events.size() == 1);
  CHECK(res.metrics.judge_events[0].op == JudgeOp::pomm);
  CHECK(res.metrics.judge_events[0].outcome == JudgeOutcome::compensated);
  CHECK(res.metrics.judge_events[0].target == 5);
  CHECK(res.metrics.deltas.at(0) == -50 + 100);
  CHECK(res.verdicts.fair_customer);
  CHECK(res.verdicts.fair_provider);
  CHECK(delta_sum(res.metrics) == 0);
}

TEST_CASE("garbage encryption is caught at extraction, closest cheater first") {
  SUBCASE("provider forges a single chunk") {
    ScenarioSpec spec = two_path_spec();
    spec.adversary.behaviors[1] =
        Behavior{Misbehavior::garbage_encrypt, Phase::setup, 3, 0};
    RunResult res = run(spec, 11);
    CHECK(res.metrics.outcome == Outcome::disputed);
    REQUIRE(res.metrics.judge_events.size() == 1);
    CHECK(res.metrics.judge_events[0].op == JudgeOp::pome);
    CHECK(res.metrics.judge_events[0].outcome == JudgeOutcome::compensated);
    CHECK(res.metrics.judge_events[0].target == 1);
    CHECK(res.metrics.deltas.at(0) == -50 + 100);
    CHECK(res.verdicts.fair_customer);
  }
  SUBCASE("relayer forges every chunk it touches") {
    ScenarioSpec spec = two_path_spec();
    spec.adversary.behaviors[4] = Behavior{Misbehavior::garbage_encrypt};
    RunResult res = run(spec, 12);
    CHECK(res.metrics.outcome == Outcome::disputed);
    REQUIRE(res.metrics.judge_events.size() == 1);
    CHECK(res.metrics.judge_events[0].op == JudgeOp::pome);
    CHECK(res.metrics.judge_events[0].target == 4);
    CHECK(res.verdicts.fair_customer);
    CHECK(delta_sum(res.metrics) == 0);
  }
  SUBCASE("outermost forger is accused when two layers are garbage") {
    ScenarioSpec spec = two_path_spec();
    spec.adversary.behaviors[4] = Behavior{Misbehavior::garbage_encrypt};
    spec.adversary.behaviors[6] = Behavior{Misbehavior::garbage_encrypt};
    RunResult res = run(spec, 13);
    CHECK(res.metrics.outcome == Outcome::disputed);
    REQUIRE(res.metrics.judge_events.size() == 1);
    CHECK(res.metrics.judge_events[0].target == 6);  // closest to the customer
    CHECK(res.verdicts.fair_customer);
  }
}

// ============================================================================
// Misbehavior: payment-phase deviations
// ============================================================================

TEST_CASE("withheld receipt aborts the payment before any lock settles") {
  ScenarioSpec spec = two_path_spec();
  spec.adversary.behaviors[5] = Behavior{Misbehavior::stall_receipt};
  RunResult res = run(spec, 21);

  CHECK(res.metrics.outcome == Outcome::aborted);
  CHECK(res.metrics.judge_events.empty());
  for (const auto& [id, delta] : res.metrics.deltas) CHECK(delta == 0);
  CHECK(res.fairness.settled_channels.empty());
  CHECK(res.verdicts.fair_customer);
  CHECK(res.verdicts.fair_provider);
  CHECK(res.verdicts.fair_relayer);
  CHECK(res.verdicts.confidentiality);
  CHECK_FALSE(res.timed_out);
}

TEST_CASE("withheld unlock is recovered through judge enforcement") {
  ScenarioSpec spec = two_path_spec();
  spec.adversary.behaviors[4] = Behavior{Misbehavior::withhold_unlock};
  RunResult res = run(spec, 22);

  // Enforcement reveals the missing secrets; delivery still completes.
  CHECK(res.metrics.outcome == Outcome::delivered);
  REQUIRE(res.delivered_content.has_value());
  CHECK(*res.delivered_content == res.source_content);

  CHECK(count_ops(res.metrics, JudgeOp::enforce) == 1);
  CHECK(count_ops(res.metrics, JudgeOp::log) == 3);  // every hop on the path
  CHECK(count_ops(res.metrics, JudgeOp::punish) == 0);
  for (const JudgeEvent& ev : res.metrics.judge_events)
    CHECK(ev.outcome != JudgeOutcome::rejected);

  // Balances match the honest outcome: the withholder still earns its fee.
  CHECK(res.metrics.deltas.at(0) == -50);
  CHECK(res.metrics.deltas.at(1) == 39);
  CHECK(res.metrics.deltas.at(4) == 3);
  CHECK(delta_sum(res.metrics) == 0);
  CHECK(res.verdicts.fair_customer);
  CHECK(res.verdicts.fair_provider);
  CHECK(res.verdicts.fair_relayer);
}

TEST_CASE("a relayer redeeming with garbage is punished after enforcement") {
  ScenarioSpec spec = two_path_spec();
  spec.adversary.behaviors[5] = Behavior{Misbehavior::wrong_secret};
  RunResult res = run(spec, 23);

  CHECK(res.metrics.outcome == Outcome::aborted);
  CHECK_FALSE(res.delivered_content.has_value());

  CHECK(count_ops(res.metrics, JudgeOp::enforce) == 1);
  CHECK(count_ops(res.metrics, JudgeOp::punish) == 1);
  bool punished = false;
  for (const JudgeEvent& ev : res.metrics.judge_events)
    if (ev.op == JudgeOp::punish) {
      CHECK(ev.outcome == JudgeOutcome::punished);
      CHECK(ev.target == 5);  // highest-index hop that failed to log
      punished = true;
    }
  CHECK(punished);

  // The customer's lock expired unredeemed; the provider was compensated.
  CHECK(res.metrics.deltas.at(0) == 0);
  CHECK(res.metrics.deltas.at(1) == 100 - 5);  // b_max minus path-1 fees
  CHECK(res.metrics.deltas.at(2) == 3);
  CHECK(res.metrics.deltas.at(3) == 2);
  CHECK(res.metrics.deltas.at(4) == 0);   // upstream of the cheater: no settle
  CHECK(res.metrics.deltas.at(5) == -101);  // punished, and funded hop 3's fee
  CHECK(res.metrics.deltas.at(6) == 1);
  CHECK(delta_sum(res.metrics) == 0);

  CHECK(res.verdicts.fair_customer);
  CHECK(res.verdicts.fair_provider);
  CHECK(res.verdicts.fair_relayer);
  CHECK(res.verdicts.confidentiality);
}

TEST_CASE("slashing burns part of the punished deposit") {
  ScenarioSpec spec = two_path_spec();
  spec.slashing = true;
  spec.adversary.behaviors[5] = Behavior{Misbehavior::wrong_secret};
  RunResult res = run(spec, 24);

  CHECK(res.metrics.burned > 0);
  CHECK(delta_sum(res.metrics) == -res.metrics.burned);
  CHECK(res.verdicts.fair_customer);
  CHECK(res.verdicts.fair_provider);
}

TEST_CASE("colluding endpoint relayers cannot skip the honest middle hop") {
  ScenarioSpec spec = single_path_spec(3);
  const PartyId first = 2, middle = 3, last = 4;
  spec.adversary.behaviors[first] =
      Behavior{Misbehavior::wormhole_collude, Phase::setup, 0, last};
  spec.adversary.behaviors[last] =
      Behavior{Misbehavior::wormhole_collude, Phase::setup, 0, first};
  RunResult res = run(spec, 31);

  // The middle relayer's secret gates the upstream lock, so the colluders
  // gain nothing: delivery completes and the middle hop is paid exactly.
  CHECK(res.metrics.outcome == Outcome::delivered);
  CHECK(res.metrics.judge_events.empty());
  CHECK(res.metrics.deltas.at(middle) == 2);
  CHECK(delta_sum(res.metrics) == 0);
  CHECK(res.verdicts.fair_customer);
  CHECK(res.verdicts.fair_provider);
  CHECK(res.verdicts.fair_relayer);
  CHECK(res.verdicts.confidentiality);
}

// ============================================================================
// Misbehavior: crashes at each phase
// ============================================================================

TEST_CASE("silent parties abort the run with no balance movement") {
  const Phase phases[] = {Phase::setup, Phase::delivery, Phase::payment_lock,
                          Phase::payment_unlock};
  for (PartyId who : {PartyId{0}, PartyId{1}, PartyId{4}}) {
    for (Phase at : phases) {
      CAPTURE(who);
      CAPTURE(phase_name(at));
      ScenarioSpec spec = two_path_spec(128);
      spec.adversary.behaviors[who] =
          Behavior{Misbehavior::silent_at, at, 0, 0};
      RunResult res = run(spec, 101 + static_cast<uint64_t>(who));
      CHECK_FALSE(res.timed_out);
      CHECK(res.verdicts.fair_customer);
      CHECK(res.verdicts.fair_provider);
      CHECK(res.verdicts.fair_relayer);
      CHECK(res.verdicts.confidentiality);
      CHECK(delta_sum(res.metrics) == -res.metrics.burned);
    }
  }
}

TEST_CASE("every party reaches a terminal phase by the timeout bound") {
  const Misbehavior kinds[] = {
      Misbehavior::honest,        Misbehavior::wrong_secret,
      Misbehavior::garbage_encrypt, Misbehavior::withhold_unlock,
      Misbehavior::wrong_mask,    Misbehavior::stall_receipt,
  };
  for (PartyId who : {PartyId{0}, PartyId{1}, PartyId{2}, PartyId{6}}) {
    for (Misbehavior kind : kinds) {
      CAPTURE(who);
      CAPTURE(static_cast<int>(kind));
      ScenarioSpec spec = two_path_spec(128);
      spec.adversary.behaviors[who] = Behavior{kind};
      RunResult res = run(spec, 300 + static_cast<uint64_t>(who));
      CHECK_FALSE(res.timed_out);
      CHECK(res.metrics.rounds <=
            res.plan.t0 + static_cast<Round>(res.plan.max_len) + 2);
      for (const auto& [id, phase] : res.final_phases)
        CHECK((phase == Phase::done || phase == Phase::aborted));
    }
  }
}

// ============================================================================
// Overhead report
// ============================================================================

TEST_CASE("relay overhead per chunk is one digest and one signature per hop") {
  OverheadRow one = overhead_report(1, 2048, 2, 42);
  CHECK(one.analytic_per_chunk == 97);
  CHECK(one.measured);
  CHECK(one.delivered);
  CHECK(one.measured_per_chunk_min == 97);
  CHECK(one.measured_per_chunk_max == 97);

  OverheadRow ten = overhead_report(10, 2048, 2, 42);
  CHECK(ten.analytic_per_chunk == 970);
  CHECK(ten.measured_per_chunk_min == 970);
  CHECK(ten.measured_per_chunk_max == 970);
  CHECK(ten.last_leg_overhead_ratio == doctest::Approx(970.0 / 2048.0));

  OverheadRow none = overhead_report(0, 2048, 2, 42);
  CHECK_FALSE(none.measured);
  CHECK(none.analytic_per_chunk == 0);

  std::vector<OverheadRow> rows = {none, one, ten};
  std::string table = render_overhead_table(rows);
  CHECK(table.find("970") != std::string::npos);
  std::string csv = render_overhead_csv(rows);
  CHECK(csv.find("10,2048,2,970,970,") != std::string::npos);
}

// ============================================================================
// Trace format
// ============================================================================

TEST_CASE("trace records carry round, actor, kind, digest, and size") {
  RunResult res = run(two_path_spec(64), 51);
  REQUIRE_FALSE(res.trace.empty());

  // Registration happens at round 0; everything else from round 1 on.
  CHECK(res.trace[0].round == 0);
  CHECK(res.trace[0].kind == "judge.register_content.ok");

  Round prev = 0;
  bool saw_init = false;
  for (const TraceRecord& rec : res.trace) {
    CHECK(rec.round >= prev);
    prev = rec.round;
    if (rec.kind == "msg.init") {
      saw_init = true;
      CHECK(rec.round == 1);
      CHECK(rec.actor == 0);
      CHECK(rec.bytes == kMsgHeaderSize);
    }
  }
  CHECK(saw_init);

  std::string text = render_trace(res.trace);
  CHECK(text == res.trace_text);
  CHECK(std::count(text.begin(), text.end(), '\n') ==
        static_cast<long>(res.trace.size()));
}
