#include "fairrelay/judge.hh"

namespace fairrelay {

namespace {

constexpr std::string_view kChallengeTag = "fr/v1/chal";

}  // namespace

const char* judge_op_name(JudgeOp op) {
  switch (op) {
    case JudgeOp::register_content:
      return "register_content";
    case JudgeOp::pomm:
      return "pomm";
    case JudgeOp::pome:
      return "pome";
    case JudgeOp::enforce:
      return "enforce";
    case JudgeOp::log:
      return "log";
    case JudgeOp::punish:
      return "punish";
  }
  return "unknown";
}

const char* judge_outcome_name(JudgeOutcome o) {
  switch (o) {
    case JudgeOutcome::ok:
      return "ok";
    case JudgeOutcome::rejected:
      return "rejected";
    case JudgeOutcome::compensated:
      return "compensated";
    case JudgeOutcome::enforced:
      return "enforced";
    case JudgeOutcome::logged:
      return "logged";
    case JudgeOutcome::punished:
      return "punished";
    case JudgeOutcome::noop:
      return "noop";
  }
  return "unknown";
}

// ============================================================================
// Challenge data
// ============================================================================

Bytes EnforcementChallenge::signing_payload() const {
  Bytes body;
  put_u32(body, deadline);
  put_u32(body, static_cast<uint32_t>(hashes.size()));
  for (const auto& h : hashes) put_raw(body, h.encode());
  put_raw(body, h0.encode());
  put_u32(body, static_cast<uint32_t>(addr.size()));
  for (PartyId id : addr) put_u32(body, id);
  Bytes out = as_bytes(kChallengeTag);
  out.push_back(0x00);
  put_raw(out, body);
  return out;
}

Digest challenge_digest(const EnforcementChallenge& ch) {
  return sha256(ch.signing_payload());
}

// ============================================================================
// Contract
// ============================================================================

JudgeContract::JudgeContract(JudgeOptions opts, Ledger* ledger,
                             const Roster* roster,
                             const PomeVerifier* pome_verifier)
    : opts_(opts),
      ledger_(ledger),
      roster_(roster),
      pome_verifier_(pome_verifier != nullptr ? pome_verifier
                                              : &default_verifier_) {}

JudgeEvent& JudgeContract::record(JudgeOp op, PartyId caller,
                                  JudgeOutcome outcome, Round now,
                                  PartyId target) {
  events_.push_back(JudgeEvent{now, op, caller, outcome, target});
  return events_.back();
}

bool JudgeContract::register_content(PartyId uid, const Digest& com_m,
                                     Tokens price, Round now) {
  auto balance = ledger_->query(uid);
  bool ok = balance.has_value() && *balance >= deposit_min() &&
            price >= 0 && price < opts_.b_max;
  if (ok) registry_[com_m] = Registration{uid, price};
  record(JudgeOp::register_content, uid,
         ok ? JudgeOutcome::ok : JudgeOutcome::rejected, now);
  return ok;
}

std::optional<Registration> JudgeContract::registration(
    const Digest& com_m) const {
  auto it = registry_.find(com_m);
  if (it == registry_.end()) return std::nullopt;
  return it->second;
}

bool JudgeContract::handle_pomm(PartyId uid, const PommProof& proof,
                                PartyId tid, Round now) {
  bool ok = roster_->contains(tid) && pomm_ver(proof, roster_->key(tid));
  Digest statement{};
  if (ok) {
    statement = sha256(proof.statement_digest_input(roster_->key(tid)));
    ok = !paid_statements_.contains(statement);
  }
  if (ok) {
    ok = ledger_->transfer(tid, uid, opts_.b_max, now) ==
         TransferOutcome::transferred;
  }
  if (ok) {
    paid_statements_.insert(statement);
    if (opts_.slashing) {
      ledger_->burn(tid, opts_.b_max * opts_.slash_percent / 100, now);
    }
  }
  record(JudgeOp::pomm, uid,
         ok ? JudgeOutcome::compensated : JudgeOutcome::rejected, now, tid);
  return ok;
}

bool JudgeContract::handle_pome(PartyId uid, const PomeProof& proof,
                                PartyId tid, Round now) {
  bool ok = roster_->contains(tid) &&
            pome_verifier_->verify(proof, roster_->key(tid));
  Digest statement{};
  if (ok) {
    statement = sha256(proof.statement_digest_input(roster_->key(tid)));
    ok = !paid_statements_.contains(statement);
  }
  if (ok) {
    ok = ledger_->transfer(tid, uid, opts_.b_max, now) ==
         TransferOutcome::transferred;
  }
  if (ok) {
    paid_statements_.insert(statement);
    if (opts_.slashing) {
      ledger_->burn(tid, opts_.b_max * opts_.slash_percent / 100, now);
    }
  }
  record(JudgeOp::pome, uid,
         ok ? JudgeOutcome::compensated : JudgeOutcome::rejected, now, tid);
  return ok;
}

bool JudgeContract::enforce(PartyId caller, const EnforcementChallenge& ch,
                            std::span<const Signature> receipts,
                            std::span<const uint8_t> s_sync, Round now) {
  const size_t n = ch.hops();
  bool ok = !ch.hashes.empty() && ch.addr.size() == n + 1 && now < ch.deadline;

  const Digest digest = challenge_digest(ch);
  ok = ok && !challenges_.contains(digest);
  ok = ok && open(s_sync, ch.h0);
  ok = ok && receipts.size() == n;
  if (ok) {
    const Bytes payload = ch.signing_payload();
    for (size_t i = 0; ok && i < n; ++i) {
      PartyId relayer = ch.addr[i + 1];
      ok = roster_->contains(relayer) &&
           ae_verify(payload, receipts[i], roster_->key(relayer));
    }
  }

  if (ok) {
    ChallengeState state;
    state.ch = ch;
    state.t_r = now;
    state.provider = caller;
    state.log.assign(n, std::nullopt);
    challenges_.emplace(digest, std::move(state));
    broadcasts_.push_back(JudgeBroadcast{now, JudgeBroadcast::Kind::enforced,
                                         digest, 0,
                                         Bytes(s_sync.begin(), s_sync.end()),
                                         0});
  }
  record(JudgeOp::enforce, caller,
         ok ? JudgeOutcome::enforced : JudgeOutcome::rejected, now);
  return ok;
}

bool JudgeContract::log_response(PartyId caller, const Digest& challenge,
                                 uint32_t i, std::span<const uint8_t> s_i,
                                 Round now) {
  auto it = challenges_.find(challenge);
  bool ok = it != challenges_.end();
  ChallengeState* state = ok ? &it->second : nullptr;
  const auto n = ok ? static_cast<uint32_t>(state->ch.hops()) : 0;

  ok = ok && i >= 1 && i <= n;
  ok = ok && caller == state->ch.addr[i];
  ok = ok && now == state->window(i);
  ok = ok && !state->log[i - 1].has_value();
  ok = ok && (i == n || state->log[i].has_value());
  ok = ok && open(s_i, state->ch.hashes[i - 1]);

  if (ok) {
    state->log[i - 1] = Bytes(s_i.begin(), s_i.end());
    broadcasts_.push_back(JudgeBroadcast{now, JudgeBroadcast::Kind::logged,
                                         challenge, i,
                                         Bytes(s_i.begin(), s_i.end()), 0});
  }
  record(JudgeOp::log, caller,
         ok ? JudgeOutcome::logged : JudgeOutcome::rejected, now);
  return ok;
}

PunishResult JudgeContract::punish(PartyId caller, const Digest& challenge,
                                   Round now) {
  auto it = challenges_.find(challenge);
  bool valid = it != challenges_.end() && caller == it->second.provider &&
               now == it->second.punish_round() && !it->second.punish_done;
  if (!valid) {
    record(JudgeOp::punish, caller, JudgeOutcome::rejected, now);
    return PunishResult{JudgeOutcome::rejected, 0};
  }

  ChallengeState& state = it->second;
  state.punish_done = true;

  // Highest-index hop that failed to log.
  std::optional<uint32_t> silent;
  for (uint32_t i = static_cast<uint32_t>(state.log.size()); i >= 1; --i) {
    if (!state.log[i - 1].has_value()) {
      silent = i;
      break;
    }
  }
  if (!silent.has_value()) {
    record(JudgeOp::punish, caller, JudgeOutcome::noop, now);
    return PunishResult{JudgeOutcome::noop, 0};
  }

  PartyId target = state.ch.addr[*silent];
  ledger_->transfer(target, state.provider, opts_.b_max, now);
  if (opts_.slashing) {
    ledger_->burn(target, opts_.b_max * opts_.slash_percent / 100, now);
  }
  broadcasts_.push_back(JudgeBroadcast{now, JudgeBroadcast::Kind::punished,
                                       challenge, *silent, {}, target});
  record(JudgeOp::punish, caller, JudgeOutcome::punished, now, target);
  return PunishResult{JudgeOutcome::punished, target};
}

const ChallengeState* JudgeContract::find_challenge(
    const Digest& digest) const {
  auto it = challenges_.find(digest);
  if (it == challenges_.end()) return nullptr;
  return &it->second;
}

}  // namespace fairrelay
