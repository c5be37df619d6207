#include "fairrelay/sim.hh"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <memory>
#include <stdexcept>
#include <tuple>

namespace fairrelay {

namespace {

const char* transfer_outcome_name(TransferOutcome o) {
  switch (o) {
    case TransferOutcome::transferred:
      return "transferred";
    case TransferOutcome::insufficient:
      return "insufficient";
    case TransferOutcome::rejected:
      return "rejected";
    case TransferOutcome::burned:
      return "burned";
  }
  return "unknown";
}

const char* update_outcome_name(UpdateOutcome o) {
  return o == UpdateOutcome::updated ? "updated" : "update_fail";
}

struct TracePayload {
  Digest digest{};
  uint64_t bytes = 0;
};

TracePayload trace_chan(const ChannelEvent& ev) {
  Bytes buf;
  put_u32(buf, ev.round);
  buf.push_back(static_cast<uint8_t>(ev.outcome));
  put_u32(buf, ev.cid);
  put_u32(buf, ev.lu);
  put_u32(buf, ev.ru);
  put_u64(buf, static_cast<uint64_t>(ev.lb));
  put_u64(buf, static_cast<uint64_t>(ev.rb));
  put_u32(buf, static_cast<uint32_t>(ev.secrets.size()));
  for (const Bytes& s : ev.secrets) put_blob(buf, s);
  return {sha256_tagged("fr/v1/trace/chan", buf), buf.size()};
}

TracePayload trace_ledger(const LedgerEvent& ev) {
  Bytes buf;
  put_u32(buf, ev.round);
  buf.push_back(static_cast<uint8_t>(ev.outcome));
  put_u32(buf, ev.from);
  put_u32(buf, ev.to);
  put_u64(buf, static_cast<uint64_t>(ev.amount));
  return {sha256_tagged("fr/v1/trace/ledger", buf), buf.size()};
}

TracePayload trace_judge(const JudgeEvent& ev) {
  Bytes buf;
  put_u32(buf, ev.round);
  buf.push_back(static_cast<uint8_t>(ev.op));
  put_u32(buf, ev.caller);
  buf.push_back(static_cast<uint8_t>(ev.outcome));
  put_u32(buf, ev.target);
  return {sha256_tagged("fr/v1/trace/judge", buf), buf.size()};
}

std::string judge_kind_string(const JudgeEvent& ev) {
  std::string kind = "judge.";
  kind += judge_op_name(ev.op);
  kind += '.';
  kind += judge_outcome_name(ev.outcome);
  return kind;
}

// Peeling every relayer layer while skipping the provider's must never
// produce a plaintext that opens a content commitment; if it does, the
// provider key was not actually necessary.
bool peel_without_provider_key(const CustomerParty& customer,
                               const DeliveryGraph& graph) {
  const std::vector<SymKey>& keys = customer.extracted_keys();
  if (keys.empty()) return false;
  bool leak = false;
  size_t offset = 1;  // keys[0] is the provider key
  for (uint32_t k = 0; k < graph.paths.size(); ++k) {
    const uint32_t hops = graph.paths[k].hops();
    const auto& leaves = customer.job_leaves(k);
    for (const DeliveredChunk& dc : customer.stored_chunks(k)) {
      Bytes c = dc.ciphertext;
      for (uint32_t i = hops; i >= 1; --i) {
        const SymKey& key = keys[offset + i - 1];
        c = se_dec(c, key.key, tweak_nonce(key.nonce, dc.id));
      }
      auto it = leaves.find(dc.id);
      if (it != leaves.end() && open(c, it->second)) leak = true;
    }
    offset += hops;
  }
  return leak;
}

}  // namespace

// ============================================================================
// Scheduler building blocks
// ============================================================================

void MessageBus::post(WireMessage msg) {
  PartyId to = msg.to;
  Pending p{message_class(msg.kind), msg.from, seq_++, std::move(msg)};
  pending_[to].push_back(std::move(p));
}

std::map<PartyId, std::vector<WireMessage>> MessageBus::collect() {
  std::map<PartyId, std::vector<WireMessage>> out;
  for (auto& [to, vec] : pending_) {
    std::sort(vec.begin(), vec.end(), [](const Pending& a, const Pending& b) {
      return std::tie(a.cls, a.from, a.seq) < std::tie(b.cls, b.from, b.seq);
    });
    std::vector<WireMessage>& inbox = out[to];
    inbox.reserve(vec.size());
    for (Pending& p : vec) inbox.push_back(std::move(p.msg));
  }
  pending_.clear();
  return out;
}

Behavior AdversarySchedule::of(PartyId id) const {
  auto it = behaviors.find(id);
  return it == behaviors.end() ? Behavior{} : it->second;
}

const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::delivered:
      return "delivered";
    case Outcome::disputed:
      return "disputed";
    case Outcome::aborted:
      return "aborted";
  }
  return "unknown";
}

std::string render_trace(std::span<const TraceRecord> trace) {
  std::string out;
  for (const TraceRecord& rec : trace) {
    out += "r=";
    out += std::to_string(rec.round);
    out += " a=";
    out += std::to_string(rec.actor);
    out += " k=";
    out += rec.kind;
    out += " b=";
    out += std::to_string(rec.bytes);
    out += " d=";
    out += to_hex(std::span<const uint8_t>(rec.digest.data(), 16));
    out += '\n';
  }
  return out;
}

// ============================================================================
// Scenario description
// ============================================================================

PartyId relayer_party_id(std::span<const uint32_t> path_hops, uint32_t path,
                         uint32_t hop) {
  PartyId id = 2;
  for (uint32_t k = 0; k < path && k < path_hops.size(); ++k)
    id += path_hops[k];
  return id + hop - 1;
}

std::optional<std::string> validate_spec(const ScenarioSpec& spec) {
  if (spec.path_hops.empty()) return "at least one path is required";
  if (spec.chunk_count == 0) return "chunk_count must be positive";
  if (spec.chunk_size == 0) return "chunk_size must be positive";
  if (spec.jobs.size() != spec.path_hops.size())
    return "jobs must list one entry per path";
  if (spec.fees.size() != spec.path_hops.size())
    return "fees must list one entry per path";
  for (size_t k = 0; k < spec.path_hops.size(); ++k) {
    if (spec.fees[k].size() != spec.path_hops[k])
      return "fees must list one fee per relayer on each path";
    for (Tokens fee : spec.fees[k])
      if (fee < 0) return "fees must be non-negative";
  }

  std::set<uint32_t> assigned;
  for (const auto& job : spec.jobs) {
    if (job.empty()) return "every path needs a non-empty job";
    for (uint32_t id : job) {
      if (id < 1 || id > spec.chunk_count) return "job chunk id out of range";
      if (!assigned.insert(id).second) return "job chunk id assigned twice";
    }
  }
  if (assigned.size() != spec.chunk_count)
    return "jobs must cover every chunk exactly once";

  if (spec.price <= 0) return "price must be positive";
  Tokens fee_sum = 0;
  for (const auto& path_fees : spec.fees)
    for (Tokens fee : path_fees) fee_sum += fee;
  if (spec.b_max <= spec.price)
    return "b_max must exceed the content price";
  if (spec.b_max <= fee_sum) return "b_max must exceed the total relay fees";
  if (spec.slash_percent > 100) return "slash_percent must be at most 100";
  if (spec.deposit < spec.b_max)
    return "deposit must cover the judge deposit floor b_max";
  if (spec.channel_capacity < spec.price)
    return "channel capacity must cover the price";
  for (const auto& path_fees : spec.fees) {
    Tokens tail = 0;
    for (Tokens fee : path_fees) tail += fee;
    if (spec.channel_capacity < tail)
      return "channel capacity must cover each path's total fees";
  }

  size_t total = spec.chunk_count * spec.chunk_size;
  if (!spec.content.empty() && spec.content.size() != total)
    return "content size must equal chunk_count * chunk_size";

  uint32_t relayers = 0;
  for (uint32_t h : spec.path_hops) relayers += h;
  const PartyId n_parties = 2 + relayers;
  for (const auto& [id, behavior] : spec.adversary.behaviors) {
    if (id >= n_parties) return "adversary entry names an unknown party";
    if (behavior.kind == Misbehavior::wormhole_collude &&
        behavior.partner >= n_parties)
      return "collusion partner names an unknown party";
  }
  return std::nullopt;
}

// ============================================================================
// Running a scenario
// ============================================================================

RunResult run(const ScenarioSpec& spec, uint64_t seed) {
  if (auto err = validate_spec(spec)) throw std::invalid_argument(*err);

  const uint32_t n_paths = static_cast<uint32_t>(spec.path_hops.size());
  uint32_t total_relayers = 0;
  for (uint32_t h : spec.path_hops) total_relayers += h;
  const PartyId n_parties = 2 + total_relayers;

  // --- identities ---
  DetRng key_rng = DetRng::fork(seed, "sim/keys");
  std::vector<KeyPair> keys;
  keys.reserve(n_parties);
  for (PartyId id = 0; id < n_parties; ++id)
    keys.push_back(keypair_from_seed(key_rng.array<32>()));

  Roster roster;
  roster.add("C", keys[kCustomerId].pub);
  roster.add("P", keys[kProviderId].pub);
  {
    PartyId next = 2;
    for (uint32_t k = 0; k < n_paths; ++k)
      for (uint32_t i = 1; i <= spec.path_hops[k]; ++i)
        roster.add("R" + std::to_string(k + 1) + "." + std::to_string(i),
                   keys[next++].pub);
  }

  // --- content and commitments ---
  const size_t total_bytes = spec.chunk_count * spec.chunk_size;
  Bytes content = spec.content;
  if (content.empty())
    content = DetRng::fork(seed, "sim/content").bytes(total_bytes);

  std::vector<Bytes> chunks;
  chunks.reserve(spec.chunk_count);
  for (uint32_t i = 0; i < spec.chunk_count; ++i)
    chunks.emplace_back(content.begin() + i * spec.chunk_size,
                        content.begin() + (i + 1) * spec.chunk_size);

  DetRng leaf_rng = DetRng::fork(seed, "sim/leaves");
  std::vector<CommitmentValue> chunk_coms;
  std::vector<Bytes> leaf_encodings;
  chunk_coms.reserve(spec.chunk_count);
  leaf_encodings.reserve(spec.chunk_count);
  for (const Bytes& chunk : chunks) {
    chunk_coms.push_back(commit(chunk, leaf_rng));
    leaf_encodings.push_back(chunk_coms.back().encode());
  }
  const Digest content_root = *merkle_root(leaf_encodings);

  // --- substrate ---
  Ledger ledger;
  for (PartyId id = 0; id < n_parties; ++id)
    ledger.set_balance(id, spec.deposit);
  ChannelHub hub;

  DeliveryGraph graph;
  graph.customer = kCustomerId;
  graph.provider = kProviderId;
  graph.price = spec.price;
  graph.chunk_count = spec.chunk_count;
  graph.chunk_size = spec.chunk_size;
  graph.content_root = content_root;
  graph.customer_channel = hub.open(kCustomerId, kProviderId,
                                    spec.channel_capacity,
                                    spec.channel_capacity);
  {
    PartyId next = 2;
    for (uint32_t k = 0; k < n_paths; ++k) {
      PathConfig pc;
      pc.fees = spec.fees[k];
      pc.job = spec.jobs[k];
      std::sort(pc.job.begin(), pc.job.end());
      for (uint32_t i = 0; i < spec.path_hops[k]; ++i)
        pc.relayers.push_back(next++);
      for (uint32_t i = 0; i < spec.path_hops[k]; ++i) {
        PartyId up = i == 0 ? kProviderId : pc.relayers[i - 1];
        pc.cids.push_back(hub.open(up, pc.relayers[i], spec.channel_capacity,
                                   spec.channel_capacity));
      }
      graph.paths.push_back(std::move(pc));
    }
  }

  const TimelockPlan plan = timelocks_multi(spec.path_hops);

  JudgeContract judge(
      JudgeOptions{spec.b_max, spec.slashing, spec.slash_percent}, &ledger,
      &roster);
  judge.register_content(kProviderId, content_root, spec.price, 0);

  // --- parties ---
  auto ctx_for = [&](PartyId id) {
    PartyContext ctx;
    ctx.self = id;
    ctx.key = keys[id];
    ctx.roster = &roster;
    ctx.graph = &graph;
    ctx.plan = plan;
    ctx.behavior = spec.adversary.of(id);
    ctx.rng = DetRng::fork(seed, "sim/party/" + std::to_string(id));
    return ctx;
  };
  std::vector<std::unique_ptr<Party>> parties;
  parties.push_back(std::make_unique<CustomerParty>(ctx_for(kCustomerId)));
  parties.push_back(std::make_unique<ProviderParty>(ctx_for(kProviderId),
                                                    chunks, chunk_coms));
  for (PartyId id = 2; id < n_parties; ++id)
    parties.push_back(std::make_unique<RelayerParty>(ctx_for(id)));
  auto* customer = static_cast<CustomerParty*>(parties[kCustomerId].get());

  // --- initial holdings ---
  auto holdings = [&](PartyId id) {
    Tokens h = ledger.query(id).value_or(0);
    for (ChannelId cid = 0; cid < hub.size(); ++cid) {
      const Channel ch = *hub.query(cid);
      if (ch.lu == id) h += ch.lb;
      if (ch.ru == id) h += ch.rb;
    }
    return h;
  };
  std::map<PartyId, Tokens> initial;
  for (PartyId id = 0; id < n_parties; ++id) initial[id] = holdings(id);

  RunResult out;
  Metrics& m = out.metrics;

  // Round-0 scenario setup: content registration.
  for (const JudgeEvent& ev : judge.events()) {
    TracePayload tp = trace_judge(ev);
    out.trace.push_back(
        TraceRecord{0, ev.caller, judge_kind_string(ev), tp.digest, tp.bytes});
  }
  size_t judge_cursor = judge.events().size();

  // --- plaintext detection over relayer-bound messages ---
  using Searcher = std::boyer_moore_horspool_searcher<Bytes::const_iterator>;
  std::vector<Searcher> searchers;
  searchers.reserve(chunks.size());
  for (const Bytes& chunk : chunks)
    searchers.emplace_back(chunk.begin(), chunk.end());
  bool saw_plaintext = false;

  // --- round loop ---
  MessageBus bus;
  std::vector<ChannelEvent> pending_chan;
  std::vector<JudgeBroadcast> pending_judge;
  std::set<ChannelId> settled;
  Tokens provider_comp = 0;

  const Round hard_stop = plan.t0 + static_cast<Round>(plan.max_len) + 2;
  Round last_round = 0;
  std::vector<WireMessage> outbox;

  for (Round r = 1; r <= hard_stop; ++r) {
    last_round = r;
    auto inboxes = bus.collect();
    const std::vector<ChannelEvent> chan = std::move(pending_chan);
    pending_chan = {};
    const std::vector<JudgeBroadcast> broadcasts = std::move(pending_judge);
    pending_judge = {};

    for (auto& party : parties) {
      const PartyId id = party->id();
      std::vector<ChannelEvent> my_chan;
      for (const ChannelEvent& ev : chan)
        if (ev.lu == id || ev.ru == id) my_chan.push_back(ev);

      std::span<const WireMessage> inbox;
      if (auto it = inboxes.find(id); it != inboxes.end()) inbox = it->second;

      outbox.clear();
      StepIo io{r, inbox, my_chan, broadcasts, &outbox, &hub, &judge};
      party->step(io);

      for (WireMessage& msg : outbox) {
        const uint64_t size = msg.wire_size();
        LinkStats& link = m.links[{msg.from, msg.to}];
        link.messages += 1;
        link.bytes += size;
        m.messages += 1;
        m.message_bytes += size;
        if (msg.kind == MsgKind::delivery_chunk) {
          m.payload_bytes += spec.chunk_size;
          if (msg.to == kCustomerId && msg.body.size() >= spec.chunk_size + 6)
            m.customer_chunk_overhead[msg.index] =
                msg.body.size() - spec.chunk_size - 6;
        }
        if (!saw_plaintext && msg.to >= 2 &&
            msg.body.size() >= spec.chunk_size) {
          for (const Searcher& s : searchers) {
            if (std::search(msg.body.begin(), msg.body.end(), s) !=
                msg.body.end()) {
              saw_plaintext = true;
              break;
            }
          }
        }
        out.trace.push_back(TraceRecord{
            r, msg.from, std::string("msg.") + msg_kind_name(msg.kind),
            msg.digest(), size});
        bus.post(std::move(msg));
      }
    }

    for (ChannelEvent& ev : hub.drain_events()) {
      TracePayload tp = trace_chan(ev);
      out.trace.push_back(TraceRecord{
          r, ev.lu, std::string("chan.") + update_outcome_name(ev.outcome),
          tp.digest, tp.bytes});
      if (ev.outcome == UpdateOutcome::updated) settled.insert(ev.cid);
      pending_chan.push_back(std::move(ev));
    }
    for (const LedgerEvent& ev : ledger.drain_events()) {
      TracePayload tp = trace_ledger(ev);
      out.trace.push_back(TraceRecord{
          r, ev.from, std::string("ledger.") + transfer_outcome_name(ev.outcome),
          tp.digest, tp.bytes});
      if (ev.outcome == TransferOutcome::transferred &&
          ev.to == kProviderId && ev.from != kProviderId)
        provider_comp += ev.amount;
    }
    for (JudgeBroadcast& bc : judge.drain_broadcasts())
      pending_judge.push_back(std::move(bc));
    for (; judge_cursor < judge.events().size(); ++judge_cursor) {
      const JudgeEvent& ev = judge.events()[judge_cursor];
      TracePayload tp = trace_judge(ev);
      out.trace.push_back(
          TraceRecord{r, ev.caller, judge_kind_string(ev), tp.digest,
                      tp.bytes});
      if (ev.round >= 1) {
        m.judge_events.push_back(ev);
        m.judge_ops[ev.caller] += 1;
      }
    }

    const bool all_terminal =
        std::all_of(parties.begin(), parties.end(),
                    [](const auto& p) { return p->terminal(); });
    if (all_terminal && bus.idle() && pending_chan.empty() &&
        pending_judge.empty())
      break;
  }

  // --- final accounting ---
  m.rounds = last_round;
  out.timed_out = !std::all_of(parties.begin(), parties.end(),
                               [](const auto& p) { return p->terminal(); });
  for (PartyId id = 0; id < n_parties; ++id)
    m.deltas[id] = holdings(id) - initial[id];
  m.burned = ledger.burned();

  FairnessInputs& fi = out.fairness;
  fi.deltas = m.deltas;
  for (PartyId id = 0; id < n_parties; ++id)
    if (spec.adversary.is_honest(id)) fi.honest.insert(id);
  fi.customer_has_content = customer->content().has_value();
  fi.customer_payment_settled = settled.contains(graph.customer_channel);
  fi.settled_channels = settled;
  fi.provider_compensation = provider_comp;
  fi.relayer_saw_plaintext = saw_plaintext;
  fi.peel_without_provider_key_leaks =
      peel_without_provider_key(*customer, graph);
  out.verdicts = evaluate_verdicts(fi, graph);

  bool compensated = false;
  for (const JudgeEvent& ev : m.judge_events)
    if ((ev.op == JudgeOp::pomm || ev.op == JudgeOp::pome) &&
        ev.outcome == JudgeOutcome::compensated)
      compensated = true;
  m.outcome = fi.customer_has_content ? Outcome::delivered
              : compensated          ? Outcome::disputed
                                     : Outcome::aborted;

  out.graph = graph;
  out.plan = plan;
  out.source_content = std::move(content);
  out.delivered_content = customer->content();
  for (const auto& party : parties)
    out.final_phases[party->id()] = party->phase();
  out.trace_text = render_trace(out.trace);
  return out;
}

// ============================================================================
// Relay overhead report
// ============================================================================

OverheadRow overhead_report(uint32_t hops, size_t chunk_size,
                            uint32_t chunk_count, uint64_t seed) {
  OverheadRow row;
  row.hops = hops;
  row.chunk_size = chunk_size;
  row.chunk_count = chunk_count;
  row.analytic_per_chunk = static_cast<uint64_t>(hops) * kWireLayerSize;
  row.last_leg_efficiency =
      static_cast<double>(chunk_size) /
      static_cast<double>(chunk_size + row.analytic_per_chunk);
  row.last_leg_overhead_ratio =
      chunk_size == 0 ? 0.0
                      : static_cast<double>(row.analytic_per_chunk) /
                            static_cast<double>(chunk_size);
  if (hops == 0) return row;

  ScenarioSpec spec;
  spec.path_hops = {hops - 1};
  spec.jobs.emplace_back();
  for (uint32_t i = 1; i <= chunk_count; ++i) spec.jobs[0].push_back(i);
  spec.fees = {std::vector<Tokens>(hops - 1, 1)};
  spec.price = 100;
  spec.chunk_count = chunk_count;
  spec.chunk_size = chunk_size;
  const Tokens fee_sum = static_cast<Tokens>(hops) - 1;
  spec.b_max = std::max<Tokens>(spec.price, fee_sum) + 1;
  spec.deposit = spec.b_max;
  spec.channel_capacity = std::max<Tokens>(spec.price, fee_sum) + 1;

  const RunResult res = run(spec, seed);
  row.measured = true;
  row.payload_bytes = res.metrics.payload_bytes;
  row.total_bytes = res.metrics.message_bytes;
  if (row.payload_bytes > 0)
    row.total_overhead_ratio =
        static_cast<double>(row.total_bytes - row.payload_bytes) /
        static_cast<double>(row.payload_bytes);
  row.delivered = res.metrics.outcome == Outcome::delivered;
  const auto& per_chunk = res.metrics.customer_chunk_overhead;
  if (!per_chunk.empty()) {
    row.measured_per_chunk_min = per_chunk.begin()->second;
    row.measured_per_chunk_max = per_chunk.begin()->second;
    for (const auto& [id, bytes] : per_chunk) {
      row.measured_per_chunk_min = std::min(row.measured_per_chunk_min, bytes);
      row.measured_per_chunk_max = std::max(row.measured_per_chunk_max, bytes);
    }
  }
  return row;
}

std::string render_overhead_table(std::span<const OverheadRow> rows) {
  std::string out =
      "hops  chunk_bytes  chunks  per_chunk_overhead  measured  "
      "last_leg_eff  total_overhead\n";
  char line[192];
  for (const OverheadRow& r : rows) {
    if (r.measured) {
      std::snprintf(line, sizeof line,
                    "%4u  %11zu  %6u  %18llu  %8llu  %11.2f%%  %13.3f%%\n",
                    r.hops, r.chunk_size, r.chunk_count,
                    static_cast<unsigned long long>(r.analytic_per_chunk),
                    static_cast<unsigned long long>(r.measured_per_chunk_max),
                    100.0 * r.last_leg_efficiency,
                    100.0 * r.total_overhead_ratio);
    } else {
      std::snprintf(line, sizeof line,
                    "%4u  %11zu  %6u  %18llu  %8s  %11.2f%%  %13s\n", r.hops,
                    r.chunk_size, r.chunk_count,
                    static_cast<unsigned long long>(r.analytic_per_chunk), "-",
                    100.0 * r.last_leg_efficiency, "setup-only");
    }
    out += line;
  }
  return out;
}

std::string render_overhead_csv(std::span<const OverheadRow> rows) {
  std::string out =
      "hops,chunk_bytes,chunk_count,analytic_per_chunk,measured_per_chunk,"
      "last_leg_efficiency,total_overhead_ratio,delivered\n";
  char line[192];
  for (const OverheadRow& r : rows) {
    if (r.measured) {
      std::snprintf(line, sizeof line, "%u,%zu,%u,%llu,%llu,%.6f,%.6f,%d\n",
                    r.hops, r.chunk_size, r.chunk_count,
                    static_cast<unsigned long long>(r.analytic_per_chunk),
                    static_cast<unsigned long long>(r.measured_per_chunk_max),
                    r.last_leg_efficiency, r.total_overhead_ratio,
                    r.delivered ? 1 : 0);
    } else {
      std::snprintf(line, sizeof line, "%u,%zu,%u,%llu,,%.6f,,\n", r.hops,
                    r.chunk_size, r.chunk_count,
                    static_cast<unsigned long long>(r.analytic_per_chunk),
                    r.last_leg_efficiency);
    }
    out += line;
  }
  return out;
}

}  // namespace fairrelay
