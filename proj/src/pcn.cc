#include "fairrelay/pcn.hh"

#include <algorithm>
#include <numeric>

namespace fairrelay {

namespace {

constexpr std::string_view kUpdateTag = "fr/v1/chup";

}  // namespace

// ============================================================================
// Payment conditions
// ============================================================================

Bytes PaymentCondition::encode() const {
  Bytes out;
  put_u32(out, deadline);
  put_u32(out, static_cast<uint32_t>(hashes.size()));
  for (const auto& h : hashes) put_raw(out, h.encode());
  return out;
}

std::optional<PaymentCondition> construct_condition(
    std::vector<CommitmentValue> hashes, Round deadline) {
  if (hashes.empty()) return std::nullopt;
  return PaymentCondition{std::move(hashes), deadline};
}

bool eval_condition(const PaymentCondition& phi,
                    std::span<const Bytes> secrets, Round now) {
  if (now > phi.deadline) return false;
  if (secrets.size() != phi.hashes.size()) return false;
  for (size_t i = 0; i < secrets.size(); ++i) {
    if (!open(secrets[i], phi.hashes[i])) return false;
  }
  return true;
}

// ============================================================================
// Ledger
// ============================================================================

TransferOutcome Ledger::transfer(PartyId from, PartyId to, Tokens amount,
                                 Round now) {
  auto done = [&](TransferOutcome outcome) {
    events_.push_back(LedgerEvent{now, outcome, from, to, amount});
    return outcome;
  };
  auto fi = balances_.find(from);
  auto ti = balances_.find(to);
  if (fi == balances_.end() || ti == balances_.end() || amount < 0) {
    return done(TransferOutcome::rejected);
  }
  if (fi->second < amount) return done(TransferOutcome::insufficient);
  fi->second -= amount;
  ti->second += amount;
  return done(TransferOutcome::transferred);
}

TransferOutcome Ledger::burn(PartyId uid, Tokens amount, Round now) {
  auto done = [&](TransferOutcome outcome) {
    events_.push_back(LedgerEvent{now, outcome, uid, uid, amount});
    return outcome;
  };
  auto it = balances_.find(uid);
  if (it == balances_.end() || amount < 0) {
    return done(TransferOutcome::rejected);
  }
  if (it->second < amount) return done(TransferOutcome::insufficient);
  it->second -= amount;
  burned_ += amount;
  return done(TransferOutcome::burned);
}

Tokens Ledger::total() const {
  Tokens sum = 0;
  for (const auto& [uid, amount] : balances_) sum += amount;
  return sum;
}

// ============================================================================
// Channels
// ============================================================================

Bytes ConditionedPayment::signing_payload() const {
  Bytes body;
  put_u32(body, cid);
  put_u64(body, static_cast<uint64_t>(lb2));
  put_u64(body, static_cast<uint64_t>(rb2));
  put_raw(body, phi.encode());
  Bytes out = as_bytes(kUpdateTag);
  out.push_back(0x00);
  put_raw(out, body);
  return out;
}

Bytes ConditionedPayment::encode() const {
  Bytes out = signing_payload();
  put_u32(out, initiator);
  put_raw(out, std::span<const uint8_t>(sig));
  return out;
}

std::optional<ConditionedPayment> ConditionedPayment::decode(
    std::span<const uint8_t> data) {
  ByteReader r(data);
  auto tag = r.get_raw(kUpdateTag.size() + 1);
  if (!tag) return std::nullopt;
  Bytes expected = as_bytes(kUpdateTag);
  expected.push_back(0x00);
  if (!std::equal(expected.begin(), expected.end(), tag->begin())) {
    return std::nullopt;
  }
  ConditionedPayment tx;
  auto cid = r.get_u32();
  auto lb2 = r.get_u64();
  auto rb2 = r.get_u64();
  auto deadline = r.get_u32();
  auto count = r.get_u32();
  if (!cid || !lb2 || !rb2 || !deadline || !count) return std::nullopt;
  tx.cid = *cid;
  tx.lb2 = static_cast<Tokens>(*lb2);
  tx.rb2 = static_cast<Tokens>(*rb2);
  tx.phi.deadline = *deadline;
  constexpr size_t kComSize = kDigestSize + kPaddingSize;
  if (*count > r.remaining() / kComSize) return std::nullopt;
  tx.phi.hashes.reserve(*count);
  for (uint32_t i = 0; i < *count; ++i) {
    auto raw = r.get_raw(kComSize);
    if (!raw) return std::nullopt;
    auto com = CommitmentValue::decode(*raw);
    if (!com) return std::nullopt;
    tx.phi.hashes.push_back(*com);
  }
  auto initiator = r.get_u32();
  auto sig = r.get_raw(kSignatureSize);
  if (!initiator || !sig) return std::nullopt;
  tx.initiator = *initiator;
  tx.sig = take_array<kSignatureSize>(*sig);
  if (!r.done()) return std::nullopt;
  return tx;
}

Bytes UpdateRequest::encode() const {
  Bytes out = tx.encode();
  put_u32(out, redeemer);
  put_raw(out, std::span<const uint8_t>(countersig));
  put_u32(out, static_cast<uint32_t>(secrets.size()));
  for (const auto& s : secrets) put_blob(out, s);
  return out;
}

ChannelId ChannelHub::open(PartyId lu, PartyId ru, Tokens lb, Tokens rb) {
  auto cid = static_cast<ChannelId>(channels_.size());
  channels_.push_back(Channel{cid, lu, ru, lb, rb});
  return cid;
}

std::optional<Channel> ChannelHub::query(ChannelId cid) const {
  if (cid >= channels_.size()) return std::nullopt;
  return channels_[cid];
}

UpdateOutcome ChannelHub::update(const UpdateRequest& req,
                                 const Roster& roster, Round now) {
  const auto& tx = req.tx;
  auto fail = [&](ChannelId cid, PartyId lu, PartyId ru, Tokens lb,
                  Tokens rb) {
    events_.push_back(ChannelEvent{now, UpdateOutcome::update_fail, cid, lu,
                                   ru, lb, rb, {}});
    return UpdateOutcome::update_fail;
  };
  if (tx.cid >= channels_.size()) return fail(tx.cid, 0, 0, 0, 0);
  Channel& ch = channels_[tx.cid];

  bool parties_ok =
      ((tx.initiator == ch.lu && req.redeemer == ch.ru) ||
       (tx.initiator == ch.ru && req.redeemer == ch.lu)) &&
      roster.contains(tx.initiator) && roster.contains(req.redeemer);
  if (!parties_ok) return fail(ch.cid, ch.lu, ch.ru, ch.lb, ch.rb);

  const Bytes payload = tx.signing_payload();
  if (!ae_verify(payload, tx.sig, roster.key(tx.initiator)) ||
      !ae_verify(payload, req.countersig, roster.key(req.redeemer))) {
    return fail(ch.cid, ch.lu, ch.ru, ch.lb, ch.rb);
  }
  if (tx.lb2 < 0 || tx.rb2 < 0 || tx.lb2 + tx.rb2 != ch.lb + ch.rb) {
    return fail(ch.cid, ch.lu, ch.ru, ch.lb, ch.rb);
  }
  if (!eval_condition(tx.phi, req.secrets, now)) {
    return fail(ch.cid, ch.lu, ch.ru, ch.lb, ch.rb);
  }

  ch.lb = tx.lb2;
  ch.rb = tx.rb2;
  events_.push_back(ChannelEvent{now, UpdateOutcome::updated, ch.cid, ch.lu,
                                 ch.ru, ch.lb, ch.rb, req.secrets});
  return UpdateOutcome::updated;
}

Tokens ChannelHub::total() const {
  Tokens sum = 0;
  for (const auto& ch : channels_) sum += ch.lb + ch.rb;
  return sum;
}

// ============================================================================
// Lock / unlock helpers
// ============================================================================

std::optional<ConditionedPayment> lock(const Channel& snapshot, PartyId v,
                                       Tokens amount, PaymentCondition phi,
                                       const KeyPair& v_key) {
  if (amount < 0) return std::nullopt;
  ConditionedPayment tx;
  tx.cid = snapshot.cid;
  tx.phi = std::move(phi);
  tx.initiator = v;
  if (v == snapshot.lu) {
    if (snapshot.lb < amount) return std::nullopt;
    tx.lb2 = snapshot.lb - amount;
    tx.rb2 = snapshot.rb + amount;
  } else if (v == snapshot.ru) {
    if (snapshot.rb < amount) return std::nullopt;
    tx.lb2 = snapshot.lb + amount;
    tx.rb2 = snapshot.rb - amount;
  } else {
    return std::nullopt;
  }
  tx.sig = ae_sign(tx.signing_payload(), v_key);
  return tx;
}

UpdateRequest unlock(const ConditionedPayment& tx, PartyId w,
                     const KeyPair& w_key, std::vector<Bytes> secrets) {
  UpdateRequest req;
  req.tx = tx;
  req.redeemer = w;
  req.countersig = ae_sign(tx.signing_payload(), w_key);
  req.secrets = std::move(secrets);
  return req;
}

}  // namespace fairrelay
