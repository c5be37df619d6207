#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "fairrelay/judge.hh"
#include "fairrelay/rng.hh"

using namespace fairrelay;

namespace {

constexpr Tokens kBmax = 100;

// A provider, n relayers and a customer, each funded, plus a ready-made
// challenge over fresh per-hop secrets.
struct Fixture {
  Roster roster;
  std::vector<KeyPair> keys;
  Ledger ledger;

  PartyId provider = 0;
  PartyId customer = 0;
  std::vector<PartyId> relayers;

  Bytes s_sync;
  std::vector<Bytes> hop_secrets;  // hop 1..n
  EnforcementChallenge ch;
  std::vector<Signature> receipts;

  Fixture(size_t n, DetRng& rng, Round deadline = 50) {
    auto add = [&](const std::string& name) {
      keys.push_back(ae_keygen(rng));
      PartyId id = roster.add(name, keys.back().pub);
      ledger.set_balance(id, 1000);
      return id;
    };
    provider = add("provider");
    customer = add("customer");
    s_sync = rng.bytes(32);
    ch.deadline = deadline;
    ch.h0 = commit(s_sync, rng);
    ch.addr.push_back(provider);
    for (size_t i = 1; i <= n; ++i) {
      PartyId r = add("relayer-" + std::to_string(i));
      relayers.push_back(r);
      hop_secrets.push_back(rng.bytes(32));
      ch.hashes.push_back(commit(hop_secrets.back(), rng));
      ch.addr.push_back(r);
    }
    for (size_t i = 0; i < n; ++i) {
      receipts.push_back(ae_sign(ch.signing_payload(), keys[relayers[i]]));
    }
  }

  JudgeContract make_judge(bool slashing = false) {
    return JudgeContract(JudgeOptions{kBmax, slashing, 50}, &ledger, &roster);
  }
};

}  // namespace

TEST_CASE("registration rules") {
  DetRng rng(301);
  Fixture f(1, rng);
  JudgeContract judge = f.make_judge();
  Digest com_m = sha256(as_bytes("content"));

  CHECK(judge.register_content(f.provider, com_m, 10, 0));
  auto reg = judge.registration(com_m);
  REQUIRE(reg.has_value());
  CHECK(reg->uid == f.provider);
  CHECK(reg->price == 10);

  // Price must sit strictly below the compensation amount.
  CHECK_FALSE(judge.register_content(f.provider, com_m, kBmax, 0));
  CHECK_FALSE(judge.register_content(f.provider, com_m, -1, 0));

  // Balance below the deposit floor.
  f.ledger.set_balance(f.provider, kBmax - 1);
  CHECK_FALSE(
      judge.register_content(f.provider, sha256(as_bytes("other")), 10, 0));
  CHECK_FALSE(judge.registration(sha256(as_bytes("other"))).has_value());
}

TEST_CASE("mask-misbehavior compensation with dedup and slashing") {
  DetRng rng(302);
  Fixture f(1, rng);
  PartyId evil = f.relayers[0];

  // Forge a cheating mask commitment by `evil`.
  SymKey sk = se_keygen(rng);
  Bytes s = rng.bytes(48);
  MaskCommitment com;
  com.h_sk = commit(sk.encode(), rng);
  com.h_s = commit(s, rng);
  com.ck = rng.bytes(48);
  com.sig = ae_sign(com.signing_payload(), f.keys[evil]);
  auto proof = pomm_gen(com, f.roster.key(evil), s);
  REQUIRE(proof.has_value());

  SUBCASE("compensation moves b_max and pays only once") {
    JudgeContract judge = f.make_judge();
    CHECK(judge.handle_pomm(f.customer, *proof, evil, 5));
    CHECK(*f.ledger.query(f.customer) == 1000 + kBmax);
    CHECK(*f.ledger.query(evil) == 1000 - kBmax);

    CHECK_FALSE(judge.handle_pomm(f.customer, *proof, evil, 6));
    // Same statement with a claimant swap still refuses.
    CHECK_FALSE(judge.handle_pomm(f.provider, *proof, evil, 6));
    CHECK(*f.ledger.query(f.customer) == 1000 + kBmax);

    CHECK(judge.events().size() == 3);
    CHECK(judge.events()[0].outcome == JudgeOutcome::compensated);
    CHECK(judge.events()[1].outcome == JudgeOutcome::rejected);
  }
  SUBCASE("invalid or mis-attributed proofs pay nothing") {
    JudgeContract judge = f.make_judge();
    PommProof bad = *proof;
    bad.s_revealed[0] ^= 0xff;
    CHECK_FALSE(judge.handle_pomm(f.customer, bad, evil, 5));
    CHECK_FALSE(judge.handle_pomm(f.customer, *proof, f.provider, 5));
    CHECK_FALSE(judge.handle_pomm(f.customer, *proof, 99, 5));
    CHECK(*f.ledger.query(f.customer) == 1000);
  }
  SUBCASE("slashing burns an extra share of the offender's deposit") {
    JudgeContract judge = f.make_judge(/*slashing=*/true);
    Tokens before = f.ledger.total();
    CHECK(judge.handle_pomm(f.customer, *proof, evil, 5));
    CHECK(*f.ledger.query(evil) == 1000 - kBmax - kBmax / 2);
    CHECK(f.ledger.burned() == kBmax / 2);
    CHECK(f.ledger.total() + f.ledger.burned() == before);
  }
}

TEST_CASE("encryption-misbehavior compensation") {
  DetRng rng(303);
  Fixture f(1, rng);
  PartyId evil = f.relayers[0];

  SymKey sk = se_keygen(rng);
  Bytes m = rng.bytes(64);
  Bytes garbage = rng.bytes(64);
  EncCommitment com;
  com.h_m = commit(m, rng);
  com.h_c = commit(garbage, rng);
  com.h_sk = commit(sk.encode(), rng);
  com.id = 2;
  com.sig = ae_sign(com.signing_payload(), f.keys[evil]);
  auto proof = pome_gen(com, garbage, f.roster.key(evil), sk);
  REQUIRE(proof.has_value());

  JudgeContract judge = f.make_judge();
  CHECK(judge.handle_pome(f.customer, *proof, evil, 5));
  CHECK(*f.ledger.query(f.customer) == 1000 + kBmax);
  CHECK_FALSE(judge.handle_pome(f.customer, *proof, evil, 6));

  PomeProof bad = *proof;
  bad.sk_witness = se_keygen(rng);
  CHECK_FALSE(judge.handle_pome(f.customer, bad, evil, 7));
}

TEST_CASE("enforce admission checks") {
  DetRng rng(304);
  Fixture f(3, rng, /*deadline=*/30);

  SUBCASE("complete receipts before the deadline enforce") {
    JudgeContract judge = f.make_judge();
    CHECK(judge.enforce(f.provider, f.ch, f.receipts, f.s_sync, 20));
    const auto* state = judge.find_challenge(challenge_digest(f.ch));
    REQUIRE(state != nullptr);
    CHECK(state->t_r == 20);
    CHECK(state->window(3) == 21);
    CHECK(state->window(1) == 23);
    CHECK(state->punish_round() == 24);

    auto bc = judge.drain_broadcasts();
    REQUIRE(bc.size() == 1);
    CHECK(bc[0].kind == JudgeBroadcast::Kind::enforced);
    CHECK(bc[0].secret == f.s_sync);

    // Re-submission of the same challenge is refused.
    CHECK_FALSE(judge.enforce(f.provider, f.ch, f.receipts, f.s_sync, 21));
  }
  SUBCASE("missing or invalid receipt rejects") {
    JudgeContract judge = f.make_judge();
    auto short_receipts = f.receipts;
    short_receipts.pop_back();
    CHECK_FALSE(judge.enforce(f.provider, f.ch, short_receipts, f.s_sync, 20));

    auto forged = f.receipts;
    forged[1] = ae_sign(f.ch.signing_payload(), f.keys[f.provider]);
    CHECK_FALSE(judge.enforce(f.provider, f.ch, forged, f.s_sync, 20));
  }
  SUBCASE("deadline and synchronizer preimage are checked") {
    JudgeContract judge = f.make_judge();
    CHECK_FALSE(judge.enforce(f.provider, f.ch, f.receipts, f.s_sync, 30));
    CHECK_FALSE(judge.enforce(f.provider, f.ch, f.receipts, f.s_sync, 31));
    CHECK_FALSE(
        judge.enforce(f.provider, f.ch, f.receipts, rng.bytes(32), 20));
  }
}

TEST_CASE("response log: windows, order, preimages") {
  DetRng rng(305);
  Fixture f(3, rng);
  JudgeContract judge = f.make_judge();
  REQUIRE(judge.enforce(f.provider, f.ch, f.receipts, f.s_sync, 10));
  const Digest digest = challenge_digest(f.ch);

  // Hop 2 cannot log before hop 3, even in hop 3's round.
  CHECK_FALSE(judge.log_response(f.relayers[1], digest, 2, f.hop_secrets[1], 11));
  // Hop 3 logs at t_r+1.
  CHECK_FALSE(judge.log_response(f.relayers[2], digest, 3, rng.bytes(32), 11));
  CHECK(judge.log_response(f.relayers[2], digest, 3, f.hop_secrets[2], 11));
  // Not twice.
  CHECK_FALSE(judge.log_response(f.relayers[2], digest, 3, f.hop_secrets[2], 11));
  // Hop 2 must hit round t_r+2 exactly.
  CHECK_FALSE(judge.log_response(f.relayers[1], digest, 2, f.hop_secrets[1], 11));
  CHECK(judge.log_response(f.relayers[1], digest, 2, f.hop_secrets[1], 12));
  // Only the hop's own relayer may log it.
  CHECK_FALSE(judge.log_response(f.relayers[1], digest, 1, f.hop_secrets[0], 13));
  CHECK(judge.log_response(f.relayers[0], digest, 1, f.hop_secrets[0], 13));

  auto bc = judge.drain_broadcasts();
  REQUIRE(bc.size() == 4);  // enforced + 3 logs
  CHECK(bc[1].kind == JudgeBroadcast::Kind::logged);
  CHECK(bc[1].index == 3);
  CHECK(bc[1].secret == f.hop_secrets[2]);

  // Complete log: punishment is a no-op.
  auto res = judge.punish(f.provider, digest, 14);
  CHECK(res.outcome == JudgeOutcome::noop);
}

TEST_CASE("punish hits the highest-index non-logger, once, in window") {
  DetRng rng(306);

  SUBCASE("middle hop silent") {
    Fixture f(3, rng);
    JudgeContract judge = f.make_judge();
    REQUIRE(judge.enforce(f.provider, f.ch, f.receipts, f.s_sync, 10));
    const Digest digest = challenge_digest(f.ch);
    CHECK(judge.log_response(f.relayers[2], digest, 3, f.hop_secrets[2], 11));
    // Hop 2 silent; hop 1 is gated out.
    CHECK_FALSE(judge.log_response(f.relayers[0], digest, 1, f.hop_secrets[0], 13));

    CHECK(judge.punish(f.provider, digest, 13).outcome ==
          JudgeOutcome::rejected);  // too early
    CHECK(judge.punish(f.customer, digest, 14).outcome ==
          JudgeOutcome::rejected);  // not the challenge's provider
    auto res = judge.punish(f.provider, digest, 14);
    CHECK(res.outcome == JudgeOutcome::punished);
    CHECK(res.target == f.relayers[1]);
    CHECK(*f.ledger.query(f.relayers[1]) == 1000 - kBmax);
    CHECK(*f.ledger.query(f.provider) == 1000 + kBmax);

    CHECK(judge.punish(f.provider, digest, 14).outcome ==
          JudgeOutcome::rejected);  // one-shot
  }
  SUBCASE("hops 1 and 3 silent: hop 3 pays") {
    Fixture f(3, rng);
    JudgeContract judge = f.make_judge();
    REQUIRE(judge.enforce(f.provider, f.ch, f.receipts, f.s_sync, 10));
    const Digest digest = challenge_digest(f.ch);
    // Hop 2 tries in its window but hop 3 never logged.
    CHECK_FALSE(judge.log_response(f.relayers[1], digest, 2, f.hop_secrets[1], 12));
    auto res = judge.punish(f.provider, digest, 14);
    CHECK(res.outcome == JudgeOutcome::punished);
    CHECK(res.target == f.relayers[2]);
  }
}

TEST_CASE("enforcement dichotomy, exhaustive over responsive subsets, n <= 4") {
  DetRng rng(307);
  for (size_t n = 1; n <= 4; ++n) {
    for (uint32_t subset = 0; subset < (1u << n); ++subset) {
      Fixture f(n, rng);
      JudgeContract judge = f.make_judge();
      REQUIRE(judge.enforce(f.provider, f.ch, f.receipts, f.s_sync, 10));
      const Digest digest = challenge_digest(f.ch);

      // Every responsive hop attempts its window round t_r + n - i + 1.
      for (Round r = 11; r <= 10 + n; ++r) {
        uint32_t i = static_cast<uint32_t>(10 + n + 1 - r);
        if (subset & (1u << (i - 1))) {
          (void)judge.log_response(f.relayers[i - 1], digest, i,
                                   f.hop_secrets[i - 1], r);
        }
      }
      auto res = judge.punish(f.provider, digest,
                              static_cast<Round>(10 + n + 1));

      const auto* state = judge.find_challenge(digest);
      REQUIRE(state != nullptr);
      const bool all_responsive = subset == (1u << n) - 1;
      if (all_responsive) {
        // Every secret on-chain, nobody pays.
        CHECK(res.outcome == JudgeOutcome::noop);
        for (size_t i = 0; i < n; ++i) {
          CHECK(state->log[i].has_value());
          CHECK(*f.ledger.query(f.relayers[i]) == 1000);
        }
      } else {
        // Exactly one punishment, hitting the highest-index hop that did not
        // (or could not) log.
        REQUIRE(res.outcome == JudgeOutcome::punished);
        uint32_t expected = 0;
        for (uint32_t i = static_cast<uint32_t>(n); i >= 1; --i) {
          if (!(subset & (1u << (i - 1)))) {
            expected = i;
            break;
          }
        }
        CHECK(res.target == f.relayers[expected - 1]);
        CHECK(*f.ledger.query(res.target) == 1000 - kBmax);
        CHECK(*f.ledger.query(f.provider) == 1000 + kBmax);
        // Hops above the punished one all logged.
        for (uint32_t i = expected + 1; i <= n; ++i) {
          CHECK(state->log[i - 1].has_value());
        }
        // Exactly one transfer happened.
        Tokens sum = 0;
        for (const auto& [id, bal] : f.ledger.balances()) sum += bal;
        CHECK(sum == f.ledger.total());
      }
    }
  }
}
