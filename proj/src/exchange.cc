#include "fairrelay/exchange.hh"

#include <algorithm>
#include <optional>
#include <set>

#include "fairrelay/payment.hh"

namespace fairrelay {

namespace {

bool acks(HopBehavior b) {
  return b != HopBehavior::silent_lock && b != HopBehavior::stall_receipt;
}
bool unlocks_voluntarily(HopBehavior b) { return b == HopBehavior::honest; }
bool responsive(HopBehavior b) {
  return b == HopBehavior::honest || b == HopBehavior::withhold_unlock;
}

Tokens tail(const std::vector<Tokens>& fees, uint32_t i) {
  Tokens sum = 0;
  for (size_t j = i; j <= fees.size(); ++j) sum += fees[j - 1];
  return sum;
}

}  // namespace

// ============================================================================
// Ideal functionality
// ============================================================================

ExchangeOutcome ideal_exchange(const ExchangeSetup& setup) {
  const uint32_t n = static_cast<uint32_t>(setup.hops.size());
  const uint32_t lens[] = {n};
  const TimelockPlan plan = timelocks_multi(lens);
  const Round t1 = plan.t1;
  const Round tr = plan.receipts_deadline();

  ExchangeOutcome out;
  for (PartyId p = 0; p <= n; ++p) out.deltas[p] = 0;
  auto& trace = out.trace;
  using K = ExchangeEvent::Kind;

  auto behavior = [&](uint32_t j) { return setup.hops[j - 1]; };

  // Lock wave, halted by the first hop that drops the lock.
  uint32_t lock_top = n;
  for (uint32_t j = 1; j <= n; ++j)
    if (behavior(j) == HopBehavior::silent_lock) {
      lock_top = j;
      break;
    }
  bool all_acked = lock_top == n;
  for (uint32_t j = 1; j <= lock_top; ++j) {
    trace.push_back({t1 + j, K::locked, j});
    if (acks(behavior(j)))
      trace.push_back({t1 + j + 1, K::ack, j});
    else
      all_acked = false;
  }

  std::set<uint32_t> settled;
  auto finish = [&] {
    for (uint32_t j : settled) {
      out.deltas[j] += tail(setup.fees, j);
      out.deltas[j - 1] -= tail(setup.fees, j);
    }
    std::sort(trace.begin(), trace.end());
    return out;
  };

  if (!all_acked || setup.payer == PayerBehavior::withhold_release)
    return finish();

  trace.push_back({tr, K::released, 0});

  // Voluntary unlock cascade from the last hop down to the highest hop that
  // deviates; everything upstream of a deviation is starved of secrets.
  uint32_t stall = 0;
  for (uint32_t j = 1; j <= n; ++j)
    if (!unlocks_voluntarily(behavior(j))) stall = j;
  for (uint32_t j = n; j > stall; --j) {
    trace.push_back({tr + 1 + (n - j), K::updated, j});
    settled.insert(j);
  }
  if (stall == 0) return finish();

  // The payer's own lock did not settle by its patience deadline: the
  // response game runs, forcing secrets on-chain from the last hop down to
  // the highest unresponsive hop. A responsive hop redeems its still-open
  // incoming lock in the same round it logs.
  const Round te = tr + n + 1;
  trace.push_back({te, K::enforced, 0});
  uint32_t hm = 0;
  for (uint32_t j = 1; j <= n; ++j)
    if (!responsive(behavior(j))) hm = j;
  for (uint32_t j = n; j > hm; --j) {
    const Round w = te + n - j + 1;
    trace.push_back({w, K::logged, j});
    if (!settled.contains(j)) {
      trace.push_back({w, K::updated, j});
      settled.insert(j);
    }
  }
  if (hm >= 1) {
    trace.push_back({te + n + 1, K::punished, hm});
    out.deltas[hm] -= setup.b_max;
    out.deltas[0] += setup.b_max;
  }
  return finish();
}

// ============================================================================
// Concrete protocol runner
// ============================================================================

namespace {

struct WireMsg {
  enum class Kind : uint8_t { lock, receipt, release };
  Kind kind = Kind::lock;
  PartyId to = 0;
  Round deliver = 0;
  bool consumed = false;
  ConditionedPayment tx;
  LockReceipt receipt;
  Bytes secret;
};

struct HopState {
  std::optional<ConditionedPayment> incoming;
  bool settled_in = false;
  bool tried_voluntary = false;
  bool have_sync = false;
  Bytes s_sync;
  std::map<uint32_t, Bytes> known;  // observed hop secrets
  bool challenge_seen = false;
  Round t_r = 0;
  std::set<uint32_t> logged_seen;
};

// Knowledge that becomes visible to a party at the start of round `at`:
// channel-event secrets and judge broadcasts travel one round like messages.
struct Grant {
  Round at = 0;
  PartyId to = 0;  // recipient hop (grants to the payer use logged_any)
  bool sync = false;
  Bytes s_sync;
  bool challenge = false;
  Round t_r = 0;
  std::map<uint32_t, Bytes> secrets;
  std::optional<uint32_t> logged;
};

}  // namespace

ExchangeOutcome run_exchange(const ExchangeSetup& setup, uint64_t seed) {
  const uint32_t n = static_cast<uint32_t>(setup.hops.size());
  using K = ExchangeEvent::Kind;
  DetRng rng(seed);

  Roster roster;
  std::vector<KeyPair> keys;
  for (uint32_t p = 0; p <= n; ++p) {
    keys.push_back(ae_keygen(rng));
    roster.add(p == 0 ? "payer" : "hop" + std::to_string(p),
               keys.back().pub);
  }

  Ledger ledger;
  for (uint32_t p = 0; p <= n; ++p)
    ledger.set_balance(p, 10 * setup.b_max + 1000);
  JudgeContract judge({setup.b_max, false, 50}, &ledger, &roster);

  ChannelHub hub;
  std::vector<ChannelId> cids;
  const Tokens funding = tail(setup.fees, 1);
  for (uint32_t j = 1; j <= n; ++j)
    cids.push_back(hub.open(j - 1, j, funding, 0));

  // Secrets and commitments for this session.
  const Bytes s_sync = rng.bytes(32);
  const CommitmentValue h_sync = commit(s_sync, rng);
  std::vector<Bytes> s(n);
  std::vector<CommitmentValue> h(n);
  for (uint32_t j = 0; j < n; ++j) {
    s[j] = rng.bytes(32);
    h[j] = commit(s[j], rng);
  }
  const Bytes garbage(32, 0xEE);

  PathSpec path;
  path.index = 1;
  path.provider = 0;
  for (uint32_t j = 1; j <= n; ++j) path.relayers.push_back(j);
  path.cids = cids;
  path.fees = setup.fees;
  path.hop_hashes = h;

  const uint32_t lens[] = {n};
  const TimelockPlan plan = timelocks_multi(lens);
  const std::vector<Round>& ladder = plan.per_path[0];
  const Round tr = plan.receipts_deadline();
  const EnforcementChallenge ch = make_challenge(path, h_sync, plan.t2);
  const Digest chd = challenge_digest(ch);

  ExchangeOutcome out;
  auto& trace = out.trace;

  auto holdings = [&](PartyId p) {
    Tokens t = *ledger.query(p);
    for (ChannelId cid : cids) {
      const Channel c = *hub.query(cid);
      if (c.lu == p) t += c.lb;
      if (c.ru == p) t += c.rb;
    }
    return t;
  };
  std::map<PartyId, Tokens> base;
  for (uint32_t p = 0; p <= n; ++p) base[p] = holdings(p);

  std::vector<WireMsg> wire;
  std::vector<Grant> grants;
  std::vector<HopState> hop(n + 1);

  struct {
    std::vector<std::optional<LockReceipt>> receipts;
    bool released = false;
    bool enforced = false;
    Round enforce_round = 0;
    std::set<uint32_t> logged_seen;
  } payer;
  payer.receipts.resize(n + 1);

  auto behavior = [&](uint32_t j) { return setup.hops[j - 1]; };

  auto try_redeem = [&](uint32_t j, Round now, bool use_garbage) {
    HopState& st = hop[j];
    if (!st.incoming || st.settled_in) return;
    if (!st.have_sync || now > ladder[j - 1]) return;
    for (uint32_t k = j + 1; k <= n; ++k)
      if (!st.known.contains(k)) return;
    auto secrets = hop_redeem_secrets(j, n, st.s_sync, [&](uint32_t k) {
      if (k == j) return use_garbage ? garbage : s[j - 1];
      return st.known.at(k);
    });
    const UpdateRequest req =
        unlock(*st.incoming, j, keys[j], std::move(secrets));
    if (hub.update(req, roster, now) == UpdateOutcome::updated) {
      st.settled_in = true;
      trace.push_back({now, K::updated, j});
    }
  };

  const Round horizon = plan.t0 + 2;
  for (Round r = 1; r <= horizon; ++r) {
    // Knowledge scheduled for this round becomes visible before anyone acts.
    for (Grant& g : grants) {
      if (g.at != r) continue;
      if (g.logged) payer.logged_seen.insert(*g.logged);
      if (g.to == 0) continue;
      HopState& st = hop[g.to];
      if (g.sync) {
        st.have_sync = true;
        st.s_sync = g.s_sync;
      }
      if (g.challenge) {
        st.challenge_seen = true;
        st.t_r = g.t_r;
      }
      for (auto& [k, sec] : g.secrets) st.known[k] = sec;
      if (g.logged) st.logged_seen.insert(*g.logged);
    }
    std::erase_if(grants, [&](const Grant& g) { return g.at <= r; });

    // --- Payer step -------------------------------------------------------
    for (WireMsg& m : wire) {
      if (m.consumed || m.to != 0 || m.deliver > r) continue;
      m.consumed = true;
      if (m.kind != WireMsg::Kind::receipt) continue;
      const LockReceipt& rc = m.receipt;
      if (verify_receipt(rc, ch, roster.key(rc.relayer)))
        payer.receipts[rc.hop] = rc;
    }
    if (r == plan.t1 + 1) {
      auto phi = construct_condition(hop_hashlist(path, h_sync, 1), ladder[0]);
      auto tx = lock(*hub.query(cids[0]), 0, tail(setup.fees, 1), *phi,
                     keys[0]);
      wire.push_back(
          {WireMsg::Kind::lock, 1, r + 1, false, *tx, {}, {}});
      trace.push_back({r, K::locked, 1});
    }
    if (r == tr && setup.payer == PayerBehavior::honest) {
      bool all = true;
      for (uint32_t j = 1; j <= n; ++j)
        if (!payer.receipts[j]) all = false;
      if (all) {
        wire.push_back(
            {WireMsg::Kind::release, n, r + 1, false, {}, {}, s_sync});
        payer.released = true;
        trace.push_back({r, K::released, 0});
      }
    }
    if (payer.released && !payer.enforced && r == tr + n + 1) {
      const Channel c0 = *hub.query(cids[0]);
      if (c0.lb == funding) {  // own lock never settled
        std::vector<Signature> sigs;
        for (uint32_t j = 1; j <= n; ++j) sigs.push_back(payer.receipts[j]->sig);
        if (judge.enforce(0, ch, sigs, s_sync, r)) {
          payer.enforced = true;
          payer.enforce_round = r;
          trace.push_back({r, K::enforced, 0});
        }
      }
    }
    if (payer.enforced && r == payer.enforce_round + n + 1 &&
        payer.logged_seen.size() < n) {
      const PunishResult res = judge.punish(0, chd, r);
      if (res.outcome == JudgeOutcome::punished)
        trace.push_back({r, K::punished, res.target});
    }

    // --- Relayer steps, ascending hop index --------------------------------
    for (uint32_t j = 1; j <= n; ++j) {
      HopState& st = hop[j];
      const HopBehavior b = behavior(j);
      std::vector<WireMsg> outbox;
      for (WireMsg& m : wire) {
        if (m.consumed || m.to != j || m.deliver > r) continue;
        m.consumed = true;
        if (m.kind == WireMsg::Kind::lock) {
          if (b == HopBehavior::silent_lock) continue;
          const Channel snap = *hub.query(cids[j - 1]);
          if (!verify_incoming_lock(m.tx, snap, j, j - 1, roster.key(j - 1),
                                    hop_hashlist(path, h_sync, j),
                                    ladder[j - 1], tail(setup.fees, j)))
            continue;
          st.incoming = m.tx;
          if (b != HopBehavior::stall_receipt) {
            outbox.push_back({WireMsg::Kind::receipt, 0, r + 1, false, {},
                              ack_receipt(ch, j, j, keys[j]), {}});
            trace.push_back({r, K::ack, j});
          }
          if (j < n) {
            auto fwd = build_outgoing_lock(m.tx, h[j - 1],
                                           tail(setup.fees, j + 1),
                                           *hub.query(cids[j]), j, keys[j]);
            outbox.push_back(
                {WireMsg::Kind::lock, j + 1, r + 1, false, *fwd, {}, {}});
            trace.push_back({r, K::locked, j + 1});
          }
        } else if (m.kind == WireMsg::Kind::release) {
          st.have_sync = true;
          st.s_sync = m.secret;
        }
      }
      for (WireMsg& m : outbox) wire.push_back(std::move(m));

      // Voluntary unlock once every needed secret is in hand.
      if ((unlocks_voluntarily(b) || b == HopBehavior::wrong_secret) &&
          !st.tried_voluntary && st.incoming && !st.settled_in &&
          st.have_sync) {
        bool have_all = true;
        for (uint32_t k = j + 1; k <= n; ++k)
          if (!st.known.contains(k)) have_all = false;
        if (have_all) {
          st.tried_voluntary = true;
          try_redeem(j, r, b == HopBehavior::wrong_secret);
        }
      }

      // Enforcement response, exactly in this hop's window, only once the
      // next hop's secret is publicly logged (the last hop opens).
      if (st.challenge_seen) {
        const Round w = st.t_r + n - j + 1;
        const bool gate_open = j == n || st.logged_seen.contains(j + 1);
        if (r == w && gate_open &&
            (responsive(b) || b == HopBehavior::wrong_secret)) {
          const Bytes& sj = b == HopBehavior::wrong_secret ? garbage : s[j - 1];
          if (judge.log_response(j, chd, j, sj, r)) {
            trace.push_back({r, K::logged, j});
            try_redeem(j, r, false);
          }
        }
      }
    }

    // --- End of round: queue substrate knowledge for delivery --------------
    for (const ChannelEvent& ev : hub.drain_events()) {
      if (ev.outcome != UpdateOutcome::updated) continue;
      const uint32_t j = static_cast<uint32_t>(
          std::find(cids.begin(), cids.end(), ev.cid) - cids.begin() + 1);
      if (j < 2) continue;  // the payer tracks its channel directly
      Grant g;
      g.at = r + 1;
      g.to = j - 1;
      g.sync = true;
      g.s_sync = ev.secrets[0];
      for (uint32_t k = j; k <= n; ++k) g.secrets[k] = ev.secrets[k - j + 1];
      grants.push_back(std::move(g));
    }
    for (const JudgeBroadcast& jb : judge.drain_broadcasts()) {
      for (uint32_t p = 0; p <= n; ++p) {
        Grant g;
        g.at = r + 1;
        g.to = p;
        if (jb.kind == JudgeBroadcast::Kind::enforced) {
          if (p == 0) continue;
          g.sync = true;
          g.s_sync = jb.secret;
          g.challenge = true;
          g.t_r = jb.round;
        } else if (jb.kind == JudgeBroadcast::Kind::logged) {
          g.logged = jb.index;
          if (p != 0) g.secrets[jb.index] = jb.secret;
        } else {
          continue;
        }
        grants.push_back(std::move(g));
      }
    }
  }

  for (uint32_t p = 0; p <= n; ++p) out.deltas[p] = holdings(p) - base[p];
  std::sort(trace.begin(), trace.end());
  return out;
}

}  // namespace fairrelay
