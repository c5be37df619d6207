#include "fairrelay/parties.hh"

#include <algorithm>
#include <utility>

namespace fairrelay {

namespace {

constexpr size_t kSecretBytes = kSymKeyEncodedSize;
constexpr size_t kComBytes = kDigestSize + kPaddingSize;
constexpr std::string_view kMsgTag = "fr/v1/msg";

std::optional<CommitmentValue> read_commitment(ByteReader& r) {
  auto raw = r.get_raw(kComBytes);
  if (!raw) return std::nullopt;
  return CommitmentValue::decode(*raw);
}

// Chain output commitments travel as bare digests; both sides fix the pad to
// zero so a layer costs exactly digest + signature on the wire.
CommitmentValue chain_value(const Digest& c) { return CommitmentValue{c, Padding{}}; }

// A dishonest layer: commit and sign garbage output exactly like an honest
// re-encryption would, so the fraud survives every relay and customer check
// and only surfaces when the layer is peeled.
EncCommitment forged_layer(const CommitmentValue& h_m,
                           std::span<const uint8_t> c_out,
                           const CommitmentValue& h_sk, uint32_t id,
                           const KeyPair& key) {
  EncCommitment com;
  com.h_m = h_m;
  com.h_c = commit_with_pad(c_out, Padding{});
  com.h_sk = h_sk;
  com.id = id;
  com.sig = ae_sign(com.signing_payload(), key);
  return com;
}

// A mask commitment whose masked key is garbage: the signature and both
// commitments check out, so it passes setup validation and only fails at key
// extraction.
MaskCommitment forged_mask(std::span<const uint8_t> s,
                           const CommitmentValue& h_sk,
                           const CommitmentValue& h_s, const KeyPair& key,
                           DetRng& rng) {
  MaskCommitment com;
  com.h_sk = h_sk;
  com.h_s = h_s;
  com.ck = *xor_mask(s, rng.bytes(s.size()));
  com.sig = ae_sign(com.signing_payload(), key);
  return com;
}

Bytes setup_customer_body(const CommitmentValue& h_sk,
                          const CommitmentValue& h_s,
                          const CommitmentValue* h_sync, const Bytes& c_mask) {
  Bytes out;
  put_raw(out, h_sk.encode());
  put_raw(out, h_s.encode());
  if (h_sync != nullptr) put_raw(out, h_sync->encode());
  put_blob(out, c_mask);
  return out;
}

Bytes provider_peer_body(const CommitmentValue& h_s0,
                         const CommitmentValue& h_sync) {
  Bytes out;
  put_raw(out, h_s0.encode());
  put_raw(out, h_sync.encode());
  return out;
}

Bytes relayer_peer_body(const CommitmentValue& h_s, Tokens fee) {
  Bytes out;
  put_raw(out, h_s.encode());
  put_u64(out, static_cast<uint64_t>(fee));
  return out;
}

Bytes hash_body(const std::vector<Bytes>& leaves,
                const MerkleMultiProof& proof) {
  Bytes out;
  put_u32(out, static_cast<uint32_t>(leaves.size()));
  for (const Bytes& leaf : leaves) put_raw(out, leaf);
  put_blob(out, proof.encode());
  return out;
}

struct HashPayload {
  std::vector<Bytes> leaves;
  MerkleMultiProof proof;
};

std::optional<HashPayload> parse_hash_body(std::span<const uint8_t> body) {
  ByteReader r(body);
  auto count = r.get_u32();
  if (!count || *count > r.remaining() / kComBytes) return std::nullopt;
  HashPayload out;
  out.leaves.reserve(*count);
  for (uint32_t i = 0; i < *count; ++i) {
    auto raw = r.get_raw(kComBytes);
    if (!raw) return std::nullopt;
    out.leaves.emplace_back(raw->begin(), raw->end());
  }
  auto blob = r.get_blob();
  if (!blob || !r.done()) return std::nullopt;
  auto proof = MerkleMultiProof::decode(*blob);
  if (!proof) return std::nullopt;
  out.proof = std::move(*proof);
  return out;
}

// The full commitment-chain and mask context of one path, in layer order
// (provider first). Shared by the customer's checks and its extraction.
struct PathContext {
  std::vector<CommitmentValue> key_coms;
  std::vector<MaskCommitment> masks;
  std::vector<PublicKey> keys;
};

}  // namespace

// ============================================================================
// Graph
// ============================================================================

std::vector<uint32_t> DeliveryGraph::path_lengths() const {
  std::vector<uint32_t> out;
  out.reserve(paths.size());
  for (const PathConfig& p : paths) out.push_back(p.hops());
  return out;
}

std::optional<std::pair<uint32_t, uint32_t>> DeliveryGraph::locate(
    PartyId id) const {
  for (uint32_t k = 0; k < paths.size(); ++k) {
    const auto& rs = paths[k].relayers;
    for (uint32_t i = 0; i < rs.size(); ++i) {
      if (rs[i] == id) return std::make_pair(k, i);
    }
  }
  return std::nullopt;
}

// ============================================================================
// Phases, message framing
// ============================================================================

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::setup: return "setup";
    case Phase::delivery: return "delivery";
    case Phase::payment_lock: return "payment_lock";
    case Phase::payment_unlock: return "payment_unlock";
    case Phase::decryption: return "decryption";
    case Phase::done: return "done";
    case Phase::aborted: return "aborted";
  }
  return "?";
}

int message_class(MsgKind kind) {
  switch (kind) {
    case MsgKind::channel_lock:
    case MsgKind::lock_ack:
    case MsgKind::channel_release:
      return 1;
    default:
      return 0;
  }
}

const char* msg_kind_name(MsgKind kind) {
  switch (kind) {
    case MsgKind::init:
      return "init";
    case MsgKind::setup_customer:
      return "setup_customer";
    case MsgKind::setup_peer:
      return "setup_peer";
    case MsgKind::delivery_go:
      return "delivery_go";
    case MsgKind::delivery_hash:
      return "delivery_hash";
    case MsgKind::delivery_chunk:
      return "delivery_chunk";
    case MsgKind::channel_lock:
      return "channel_lock";
    case MsgKind::lock_ack:
      return "lock_ack";
    case MsgKind::channel_release:
      return "channel_release";
    case MsgKind::collude_share:
      return "collude_share";
  }
  return "unknown";
}

Digest WireMessage::digest() const {
  Bytes buf;
  buf.push_back(static_cast<uint8_t>(kind));
  put_u32(buf, from);
  put_u32(buf, to);
  put_u32(buf, path);
  put_u32(buf, index);
  put_blob(buf, body);
  return sha256_tagged(kMsgTag, buf);
}

Bytes encode_chunk_body(const ChunkMessage& msg) {
  Bytes out;
  put_u32(out, static_cast<uint32_t>(msg.ciphertext.size()));
  put_raw(out, msg.ciphertext);
  put_u16(out, static_cast<uint16_t>(msg.layers.size()));
  for (const WireLayer& layer : msg.layers) {
    put_raw(out, layer.h_c);
    put_raw(out, layer.sig);
  }
  return out;
}

std::optional<ChunkMessage> parse_chunk_body(std::span<const uint8_t> body) {
  ByteReader r(body);
  auto clen = r.get_u32();
  if (!clen) return std::nullopt;
  auto cipher = r.get_raw(*clen);
  if (!cipher) return std::nullopt;
  auto count = r.get_u16();
  if (!count || *count > r.remaining() / kWireLayerSize) return std::nullopt;
  ChunkMessage out;
  out.ciphertext.assign(cipher->begin(), cipher->end());
  out.layers.reserve(*count);
  for (uint16_t i = 0; i < *count; ++i) {
    auto h_c = r.get_raw(kDigestSize);
    auto sig = r.get_raw(kSignatureSize);
    if (!h_c || !sig) return std::nullopt;
    WireLayer layer;
    layer.h_c = take_array<kDigestSize>(*h_c);
    layer.sig = take_array<kSignatureSize>(*sig);
    out.layers.push_back(layer);
  }
  if (!r.done()) return std::nullopt;
  return out;
}

std::optional<CommitmentChain> reconstruct_chain(
    const ChunkMessage& msg, const CommitmentValue& leaf_commitment,
    std::span<const CommitmentValue> layer_key_commitments) {
  if (msg.layers.empty() ||
      msg.layers.size() != layer_key_commitments.size()) {
    return std::nullopt;
  }
  CommitmentChain chain;
  chain.reserve(msg.layers.size());
  CommitmentValue h_m = leaf_commitment;
  for (size_t i = 0; i < msg.layers.size(); ++i) {
    EncCommitment com;
    com.h_m = h_m;
    com.h_c = chain_value(msg.layers[i].h_c);
    com.h_sk = layer_key_commitments[i];
    com.id = msg.id;
    com.sig = msg.layers[i].sig;
    chain.push_back(com);
    h_m = com.h_c;
  }
  return chain;
}

// ============================================================================
// Party base
// ============================================================================

bool Party::silenced_at(Phase at) const {
  return ctx_.behavior.kind == Misbehavior::silent_at &&
         static_cast<uint8_t>(ctx_.behavior.silent_phase) <=
             static_cast<uint8_t>(at);
}

void Party::send(StepIo& io, WireMessage msg) {
  msg.from = ctx_.self;
  io.outbox->push_back(std::move(msg));
}

// ============================================================================
// Customer
// ============================================================================

CustomerParty::CustomerParty(PartyContext ctx) : Party(std::move(ctx)) {
  progress_.resize(ctx_.graph->paths.size());
}

std::span<const DeliveredChunk> CustomerParty::stored_chunks(
    uint32_t path) const {
  if (path >= progress_.size()) return {};
  return progress_[path].chunks;
}

const std::map<uint32_t, CommitmentValue>& CustomerParty::job_leaves(
    uint32_t path) const {
  static const std::map<uint32_t, CommitmentValue> kEmpty;
  if (path >= progress_.size()) return kEmpty;
  return progress_[path].leaves;
}

bool CustomerParty::setup_complete() const {
  const DeliveryGraph& g = *ctx_.graph;
  if (!setups_.contains(g.provider)) return false;
  for (const PathConfig& pc : g.paths) {
    for (PartyId r : pc.relayers) {
      if (!setups_.contains(r)) return false;
    }
  }
  return true;
}

bool CustomerParty::delivery_complete() const {
  const DeliveryGraph& g = *ctx_.graph;
  for (uint32_t k = 0; k < g.paths.size(); ++k) {
    const PathProgress& pp = progress_[k];
    if (!pp.hash_ok || pp.chunks.size() != g.paths[k].job.size()) return false;
  }
  return true;
}

void CustomerParty::handle_setup(const WireMessage& msg) {
  const DeliveryGraph& g = *ctx_.graph;
  bool from_provider = msg.from == g.provider;
  if (!from_provider && !g.locate(msg.from)) return;  // not a session peer
  if (setups_.contains(msg.from)) return;             // first message wins
  ByteReader r(msg.body);
  auto h_sk = read_commitment(r);
  auto h_s = read_commitment(r);
  std::optional<CommitmentValue> h_sync;
  if (from_provider) h_sync = read_commitment(r);
  auto blob = r.get_blob();
  if (!h_sk || !h_s || (from_provider && !h_sync) || !blob || !r.done()) {
    abort_run();
    return;
  }
  auto plain = ae_dec(*blob, ctx_.key);
  if (!plain) {
    abort_run();
    return;
  }
  auto mcom = MaskCommitment::decode(*plain);
  if (!mcom || !mcom_ver(*mcom, ctx_.roster->key(msg.from), *h_sk, *h_s)) {
    abort_run();
    return;
  }
  if (from_provider) h_sync_ = *h_sync;
  setups_[msg.from] = PeerSetup{*h_sk, *h_s, *mcom};
}

void CustomerParty::handle_hash(const WireMessage& msg) {
  const DeliveryGraph& g = *ctx_.graph;
  if (msg.path == 0 || msg.path > g.paths.size()) return;
  uint32_t k = msg.path - 1;
  const PathConfig& pc = g.paths[k];
  PartyId expected = pc.hops() ? pc.relayers.back() : g.provider;
  if (msg.from != expected) return;
  PathProgress& pp = progress_[k];
  if (pp.hash_ok) return;
  auto payload = parse_hash_body(msg.body);
  if (!payload || payload->leaves.size() != pc.job.size() ||
      payload->proof.leaf_count != g.chunk_count) {
    abort_run();
    return;
  }
  std::vector<uint32_t> expected_idx(pc.job.size());
  for (size_t i = 0; i < pc.job.size(); ++i) expected_idx[i] = pc.job[i] - 1;
  if (payload->proof.indices != expected_idx ||
      !merkle_verify(payload->leaves, payload->proof, g.content_root)) {
    abort_run();
    return;
  }
  for (size_t i = 0; i < pc.job.size(); ++i) {
    auto com = CommitmentValue::decode(payload->leaves[i]);
    if (!com) {
      abort_run();
      return;
    }
    pp.leaves[pc.job[i]] = *com;
  }
  pp.hash_ok = true;
}

void CustomerParty::handle_chunk(const WireMessage& msg) {
  const DeliveryGraph& g = *ctx_.graph;
  if (msg.path == 0 || msg.path > g.paths.size()) return;
  uint32_t k = msg.path - 1;
  const PathConfig& pc = g.paths[k];
  PartyId expected = pc.hops() ? pc.relayers.back() : g.provider;
  if (msg.from != expected) return;
  PathProgress& pp = progress_[k];
  if (!pp.hash_ok) {
    abort_run();  // chunks must follow the verified commitment list
    return;
  }
  uint32_t id = msg.index;
  auto leaf = pp.leaves.find(id);
  if (leaf == pp.leaves.end() || pp.stored.contains(id)) {
    abort_run();
    return;
  }
  auto cm = parse_chunk_body(msg.body);
  if (!cm) {
    abort_run();
    return;
  }
  cm->id = id;
  if (cm->ciphertext.size() != g.chunk_size ||
      cm->layers.size() != pc.hops() + size_t{1}) {
    abort_run();
    return;
  }
  PathContext pctx;
  pctx.key_coms.push_back(setups_.at(g.provider).h_sk);
  pctx.masks.push_back(setups_.at(g.provider).mcom);
  pctx.keys.push_back(ctx_.roster->key(g.provider));
  for (PartyId r : pc.relayers) {
    pctx.key_coms.push_back(setups_.at(r).h_sk);
    pctx.masks.push_back(setups_.at(r).mcom);
    pctx.keys.push_back(ctx_.roster->key(r));
  }
  auto chain = reconstruct_chain(*cm, leaf->second, pctx.key_coms);
  if (!chain ||
      !validate_tuple(cm->ciphertext, *chain, pctx.masks, id, pctx.keys)) {
    abort_run();
    return;
  }
  pp.stored.insert(id);
  pp.chunks.push_back(DeliveredChunk{id, std::move(cm->ciphertext),
                                     std::move(*chain)});
}

void CustomerParty::start_payment(StepIo& io) {
  if (silenced_at(Phase::payment_lock)) {
    abort_run();
    return;
  }
  const DeliveryGraph& g = *ctx_.graph;
  // The per-path proofs pinned each job's leaves; recompose the full leaf
  // vector and require it to rebuild the registered root, so the jobs provably
  // partition the content.
  std::vector<Bytes> leaves(g.chunk_count);
  for (uint32_t k = 0; k < g.paths.size(); ++k) {
    for (const auto& [id, com] : progress_[k].leaves) {
      if (id == 0 || id > g.chunk_count || !leaves[id - 1].empty()) {
        abort_run();
        return;
      }
      leaves[id - 1] = com.encode();
    }
  }
  for (const Bytes& leaf : leaves) {
    if (leaf.empty()) {
      abort_run();
      return;
    }
  }
  auto root = merkle_root(leaves);
  if (!root || *root != g.content_root) {
    abort_run();
    return;
  }
  std::vector<PathSpec> specs;
  specs.reserve(g.paths.size());
  for (uint32_t k = 0; k < g.paths.size(); ++k) {
    const PathConfig& pc = g.paths[k];
    PathSpec spec;
    spec.index = k + 1;
    spec.provider = g.provider;
    spec.relayers = pc.relayers;
    spec.cids = pc.cids;
    spec.fees = pc.fees;
    for (PartyId r : pc.relayers) spec.hop_hashes.push_back(setups_.at(r).h_s);
    specs.push_back(std::move(spec));
  }
  auto phi = construct_condition(
      customer_hashlist(specs, setups_.at(g.provider).h_s), ctx_.plan.t0);
  auto snapshot = io.hub->query(g.customer_channel);
  if (!phi || !snapshot) {
    abort_run();
    return;
  }
  auto tx = lock(*snapshot, ctx_.self, g.price, *phi, ctx_.key);
  if (!tx) {
    abort_run();
    return;
  }
  tx0_ = *tx;
  WireMessage m;
  m.kind = MsgKind::channel_lock;
  m.to = g.provider;
  m.body = tx->encode();
  send(io, std::move(m));
  phase_ = Phase::decryption;
}

void CustomerParty::decrypt(StepIo& io, const std::vector<Bytes>& secrets) {
  if (silenced_at(Phase::decryption)) {
    abort_run();
    return;
  }
  const DeliveryGraph& g = *ctx_.graph;
  std::vector<MaskCommitment> masks;
  std::vector<PublicKey> keys;
  masks.push_back(setups_.at(g.provider).mcom);
  keys.push_back(ctx_.roster->key(g.provider));
  for (const PathConfig& pc : g.paths) {
    for (PartyId r : pc.relayers) {
      masks.push_back(setups_.at(r).mcom);
      keys.push_back(ctx_.roster->key(r));
    }
  }
  if (secrets.size() != masks.size()) {
    abort_run();
    return;
  }
  // Condition order is [relayer secrets.., provider secret]; extraction wants
  // the provider first to pin its key before any relayer layer is judged.
  std::vector<Bytes> ordered;
  ordered.reserve(secrets.size());
  ordered.push_back(secrets.back());
  ordered.insert(ordered.end(), secrets.begin(), secrets.end() - 1);
  auto ext = ext_key(ordered, masks, keys);
  if (ext.tid) {
    auto accused = ctx_.roster->find(*ext.tid);
    if (accused && ext.proof && io.judge != nullptr) {
      io.judge->handle_pomm(ctx_.self, *ext.proof, *accused, io.round);
    }
    phase_ = Phase::done;
    return;
  }
  if (!ext.input_ok || ext.keys.size() != masks.size()) {
    abort_run();
    return;
  }
  extracted_keys_ = ext.keys;
  std::vector<PathBundle> bundles;
  bundles.reserve(g.paths.size());
  size_t offset = 1;
  for (uint32_t k = 0; k < g.paths.size(); ++k) {
    const PathConfig& pc = g.paths[k];
    PathBundle b;
    b.keys.push_back(ext.keys[0]);
    b.roster.push_back(keys[0]);
    for (uint32_t i = 0; i < pc.hops(); ++i) {
      b.keys.push_back(ext.keys[offset + i]);
      b.roster.push_back(keys[offset + i]);
    }
    b.chunks = progress_[k].chunks;
    offset += pc.hops();
    bundles.push_back(std::move(b));
  }
  auto cx = extract(bundles);
  if (cx.tid) {
    auto accused = ctx_.roster->find(*cx.tid);
    if (accused && cx.proof && io.judge != nullptr) {
      io.judge->handle_pome(ctx_.self, *cx.proof, *accused, io.round);
    }
    phase_ = Phase::done;
    return;
  }
  if (!cx.chunks || cx.chunks->size() != g.chunk_count) {
    abort_run();
    return;
  }
  Bytes content;
  content.reserve(static_cast<size_t>(g.chunk_count) * g.chunk_size);
  for (uint32_t id = 1; id <= g.chunk_count; ++id) {
    const Bytes& piece = cx.chunks->at(id);
    content.insert(content.end(), piece.begin(), piece.end());
  }
  content_ = std::move(content);
  phase_ = Phase::done;
}

void CustomerParty::step(StepIo& io) {
  if (terminal()) return;
  if (crashed()) {
    abort_run();
    return;
  }
  const DeliveryGraph& g = *ctx_.graph;

  if (io.round == 1 && phase_ == Phase::setup) {
    WireMessage m;
    m.kind = MsgKind::init;
    m.to = g.provider;
    send(io, m);
    for (const PathConfig& pc : g.paths) {
      for (PartyId r : pc.relayers) {
        WireMessage peer;
        peer.kind = MsgKind::init;
        peer.to = r;
        send(io, peer);
      }
    }
  }

  for (const WireMessage& msg : io.inbox) {
    if (terminal()) return;
    switch (msg.kind) {
      case MsgKind::setup_customer:
        if (phase_ == Phase::setup) handle_setup(msg);
        break;
      case MsgKind::delivery_hash:
        if (phase_ == Phase::delivery) handle_hash(msg);
        break;
      case MsgKind::delivery_chunk:
        if (phase_ == Phase::delivery) handle_chunk(msg);
        break;
      default:
        break;
    }
  }
  if (terminal()) return;

  if (phase_ == Phase::setup && io.round >= 3) {
    if (!setup_complete()) {
      abort_run();
      return;
    }
    if (silenced_at(Phase::delivery)) {
      abort_run();
      return;
    }
    WireMessage go;
    go.kind = MsgKind::delivery_go;
    go.to = g.provider;
    send(io, std::move(go));
    phase_ = Phase::delivery;
  }

  if (phase_ == Phase::delivery) {
    if (delivery_complete()) {
      start_payment(io);
    } else if (io.round >= ctx_.plan.t1) {
      abort_run();
      return;
    }
  }

  if (phase_ == Phase::decryption) {
    for (const ChannelEvent& ev : io.channel_events) {
      if (ev.outcome != UpdateOutcome::updated ||
          ev.cid != g.customer_channel) {
        continue;
      }
      payment_settled_ = true;
      decrypt(io, ev.secrets);
      return;
    }
    if (io.round >= ctx_.plan.t0 + 2) abort_run();  // lock expired unredeemed
  }
}

// ============================================================================
// Provider
// ============================================================================

ProviderParty::ProviderParty(PartyContext ctx, std::vector<Bytes> chunks,
                             std::vector<CommitmentValue> chunk_commitments)
    : Party(std::move(ctx)),
      chunks_(std::move(chunks)),
      chunk_coms_(std::move(chunk_commitments)) {}

bool ProviderParty::receipts_complete() const {
  for (const PathRun& run : runs_) {
    for (const auto& receipt : run.receipts) {
      if (!receipt) return false;
    }
  }
  return true;
}

void ProviderParty::on_init(StepIo& io) {
  const DeliveryGraph& g = *ctx_.graph;
  init_seen_ = true;
  sk0_ = se_keygen(ctx_.rng);
  s0_ = ctx_.rng.bytes(kSecretBytes);
  s_sync_ = ctx_.rng.bytes(kSecretBytes);
  h_sk0_ = commit(sk0_.encode(), ctx_.rng);
  h_sync_ = commit(s_sync_, ctx_.rng);
  auto honest = mcom_gen(sk0_, s0_, h_sk0_, ctx_.key, ctx_.rng);
  if (!honest) {
    abort_run();
    return;
  }
  // The mask commitment's secret commitment doubles as the payment hashlock.
  h_s0_ = honest->h_s;
  MaskCommitment mcom = misbehaves(Misbehavior::wrong_mask)
                            ? forged_mask(s0_, h_sk0_, h_s0_, ctx_.key,
                                          ctx_.rng)
                            : *honest;
  Bytes c_mask = ae_enc(mcom.encode(), ctx_.roster->key(g.customer));
  WireMessage to_c;
  to_c.kind = MsgKind::setup_customer;
  to_c.to = g.customer;
  to_c.body = setup_customer_body(h_sk0_, h_s0_, &h_sync_, c_mask);
  send(io, std::move(to_c));
  for (const PathConfig& pc : g.paths) {
    for (PartyId r : pc.relayers) {
      WireMessage peer;
      peer.kind = MsgKind::setup_peer;
      peer.to = r;
      peer.body = provider_peer_body(h_s0_, h_sync_);
      send(io, std::move(peer));
    }
  }
}

void ProviderParty::deliver(StepIo& io) {
  const DeliveryGraph& g = *ctx_.graph;
  std::vector<Bytes> all_leaves;
  all_leaves.reserve(chunk_coms_.size());
  for (const CommitmentValue& com : chunk_coms_) {
    all_leaves.push_back(com.encode());
  }
  for (uint32_t k = 0; k < g.paths.size(); ++k) {
    const PathConfig& pc = g.paths[k];
    PartyId first = pc.hops() ? pc.relayers.front() : g.customer;
    std::vector<uint32_t> idx(pc.job.size());
    for (size_t i = 0; i < pc.job.size(); ++i) idx[i] = pc.job[i] - 1;
    auto member = merkle_member(idx, all_leaves);
    if (!member) {
      abort_run();
      return;
    }
    WireMessage hash_msg;
    hash_msg.kind = MsgKind::delivery_hash;
    hash_msg.to = first;
    hash_msg.path = k + 1;
    hash_msg.body = hash_body(member->first, member->second);
    send(io, std::move(hash_msg));
    for (uint32_t id : pc.job) {
      const Bytes& m = chunks_[id - 1];
      const CommitmentValue& leaf = chunk_coms_[id - 1];
      ChunkMessage cm;
      cm.id = id;
      bool forge = misbehaves(Misbehavior::garbage_encrypt) &&
                   (ctx_.behavior.only_chunk == 0 ||
                    ctx_.behavior.only_chunk == id);
      if (forge) {
        cm.ciphertext = ctx_.rng.bytes(m.size());
        EncCommitment com =
            forged_layer(leaf, cm.ciphertext, h_sk0_, id, ctx_.key);
        cm.layers.push_back(WireLayer{com.h_c.c, com.sig});
      } else {
        auto [c0, com] =
            ecom_gen(m, sk0_, h_sk0_, id, ctx_.key, ctx_.rng, &leaf);
        cm.ciphertext = std::move(c0);
        cm.layers.push_back(WireLayer{com.h_c.c, com.sig});
      }
      WireMessage chunk_msg;
      chunk_msg.kind = MsgKind::delivery_chunk;
      chunk_msg.to = first;
      chunk_msg.path = k + 1;
      chunk_msg.index = id;
      chunk_msg.body = encode_chunk_body(cm);
      send(io, std::move(chunk_msg));
    }
  }
  phase_ = Phase::payment_lock;
}

void ProviderParty::on_customer_lock(StepIo& io, const WireMessage& msg) {
  const DeliveryGraph& g = *ctx_.graph;
  if (tx0_) return;
  auto tx = ConditionedPayment::decode(msg.body);
  auto snapshot = io.hub->query(g.customer_channel);
  if (!tx || !snapshot) return;
  std::vector<PathSpec> specs;
  specs.reserve(runs_.size());
  for (const PathRun& run : runs_) specs.push_back(run.spec);
  auto expected = customer_hashlist(specs, h_s0_);
  if (!verify_incoming_lock(*tx, *snapshot, ctx_.self, g.customer,
                            ctx_.roster->key(g.customer), expected,
                            ctx_.plan.t0, g.price)) {
    return;  // not the agreed payment; the lock deadline will abort us
  }
  tx0_ = *tx;
  for (uint32_t k = 0; k < runs_.size(); ++k) {
    PathRun& run = runs_[k];
    if (run.spec.hops() == 0) continue;
    auto out_snap = io.hub->query(run.spec.cids[0]);
    auto phi = construct_condition(hop_hashlist(run.spec, h_sync_, 1),
                                   ctx_.plan.per_path[k][0]);
    if (!out_snap || !phi) {
      abort_run();
      return;
    }
    auto hop_tx =
        lock(*out_snap, ctx_.self, fee_tail(run.spec, 1), *phi, ctx_.key);
    if (!hop_tx) {
      abort_run();
      return;
    }
    WireMessage m;
    m.kind = MsgKind::channel_lock;
    m.to = run.spec.relayers[0];
    m.path = k + 1;
    m.index = 1;
    m.body = hop_tx->encode();
    send(io, std::move(m));
  }
  phase_ = Phase::payment_unlock;
}

void ProviderParty::on_ack(const WireMessage& msg) {
  if (msg.path == 0 || msg.path > runs_.size()) return;
  PathRun& run = runs_[msg.path - 1];
  uint32_t hop = msg.index;
  if (hop == 0 || hop > run.spec.hops()) return;
  if (msg.from != run.spec.relayers[hop - 1]) return;
  if (msg.body.size() != kSignatureSize) return;
  LockReceipt receipt;
  receipt.relayer = msg.from;
  receipt.hop = hop;
  receipt.sig = take_array<kSignatureSize>(msg.body);
  if (!verify_receipt(receipt, run.challenge, ctx_.roster->key(msg.from))) {
    return;
  }
  run.receipts[hop - 1] = receipt.sig;
}

void ProviderParty::watch_substrate(StepIo& io) {
  for (const ChannelEvent& ev : io.channel_events) {
    if (ev.outcome != UpdateOutcome::updated) continue;
    for (PathRun& run : runs_) {
      if (run.spec.hops() == 0 || ev.cid != run.spec.cids[0]) continue;
      run.first_hop_settled = true;
      if (ev.secrets.size() == run.spec.hops() + size_t{1}) {
        for (uint32_t j = 1; j <= run.spec.hops(); ++j) {
          run.secrets[j] = ev.secrets[j];
        }
      }
    }
  }
  for (const JudgeBroadcast& b : io.judge_broadcasts) {
    for (PathRun& run : runs_) {
      if (b.challenge != challenge_digest(run.challenge)) continue;
      if (b.kind == JudgeBroadcast::Kind::logged) {
        run.logged.insert(b.index);
        run.secrets[b.index] = b.secret;
      }
    }
  }
}

void ProviderParty::enforcement_duties(StepIo& io) {
  if (io.judge == nullptr) return;
  for (PathRun& run : runs_) {
    uint32_t n = run.spec.hops();
    if (n == 0) continue;
    Round patience = ctx_.plan.receipts_deadline() + n + 1;
    if (!run.first_hop_settled && !run.enforced && io.round == patience) {
      std::vector<Signature> sigs;
      sigs.reserve(n);
      for (const auto& receipt : run.receipts) sigs.push_back(*receipt);
      Bytes reveal = misbehaves(Misbehavior::wrong_secret)
                         ? ctx_.rng.bytes(kSecretBytes)
                         : s_sync_;
      io.judge->enforce(ctx_.self, run.challenge, sigs, reveal, io.round);
      run.enforced = true;
      run.enforce_round = io.round;
    }
    if (run.enforced && !run.punish_called &&
        io.round == run.enforce_round + n + 1 && run.logged.size() < n) {
      io.judge->punish(ctx_.self, challenge_digest(run.challenge), io.round);
      run.punish_called = true;
    }
  }
}

void ProviderParty::try_redeem_customer_payment(StepIo& io) {
  if (!tx0_ || redeemed_customer_ || redeem_attempted_) return;
  for (const PathRun& run : runs_) {
    if (run.secrets.size() != run.spec.hops()) return;  // still missing hops
  }
  std::vector<Bytes> secrets;
  for (const PathRun& run : runs_) {
    for (uint32_t j = 1; j <= run.spec.hops(); ++j) {
      secrets.push_back(run.secrets.at(j));
    }
  }
  secrets.push_back(misbehaves(Misbehavior::wrong_secret)
                        ? ctx_.rng.bytes(kSecretBytes)
                        : s0_);
  auto req = unlock(*tx0_, ctx_.self, ctx_.key, std::move(secrets));
  redeem_attempted_ = true;
  if (io.hub->update(req, *ctx_.roster, io.round) == UpdateOutcome::updated) {
    redeemed_customer_ = true;
  }
}

void ProviderParty::step(StepIo& io) {
  if (terminal()) return;
  if (crashed()) {
    abort_run();
    return;
  }
  const DeliveryGraph& g = *ctx_.graph;

  for (const WireMessage& msg : io.inbox) {
    if (terminal()) return;
    switch (msg.kind) {
      case MsgKind::init:
        if (phase_ == Phase::setup && msg.from == g.customer && !init_seen_) {
          on_init(io);
        }
        break;
      case MsgKind::setup_peer: {
        if (phase_ != Phase::setup) break;
        auto pos = g.locate(msg.from);
        if (!pos || peer_hashes_.contains(msg.from)) break;
        ByteReader r(msg.body);
        auto h_s = read_commitment(r);
        auto fee = r.get_u64();
        if (!h_s || !fee || !r.done()) break;
        Tokens agreed = g.paths[pos->first].fees[pos->second];
        if (static_cast<Tokens>(*fee) != agreed) break;  // not the agreed fee
        peer_hashes_[msg.from] = *h_s;
        break;
      }
      case MsgKind::delivery_go:
        if (msg.from == g.customer) go_seen_ = true;
        break;
      case MsgKind::channel_lock:
        if (phase_ == Phase::payment_lock && msg.from == g.customer) {
          on_customer_lock(io, msg);
        }
        break;
      case MsgKind::lock_ack:
        if (phase_ == Phase::payment_unlock) on_ack(msg);
        break;
      default:
        break;
    }
  }
  if (terminal()) return;

  watch_substrate(io);

  if (phase_ == Phase::setup) {
    if (!init_seen_ && io.round >= 2) {
      abort_run();
      return;
    }
    if (io.round >= 3) {
      for (const PathConfig& pc : g.paths) {
        for (PartyId r : pc.relayers) {
          if (!peer_hashes_.contains(r)) {
            abort_run();
            return;
          }
        }
      }
      runs_.clear();
      runs_.reserve(g.paths.size());
      for (uint32_t k = 0; k < g.paths.size(); ++k) {
        const PathConfig& pc = g.paths[k];
        PathRun run;
        run.spec.index = k + 1;
        run.spec.provider = ctx_.self;
        run.spec.relayers = pc.relayers;
        run.spec.cids = pc.cids;
        run.spec.fees = pc.fees;
        for (PartyId r : pc.relayers) {
          run.spec.hop_hashes.push_back(peer_hashes_.at(r));
        }
        run.challenge = make_challenge(run.spec, h_sync_, ctx_.plan.t2);
        run.receipts.resize(pc.hops());
        runs_.push_back(std::move(run));
      }
      phase_ = Phase::delivery;
    }
  }

  if (phase_ == Phase::delivery) {
    if (go_seen_) {
      deliver(io);
    } else if (io.round >= 4) {
      abort_run();
      return;
    }
  }

  if (phase_ == Phase::payment_lock && io.round >= ctx_.plan.t1 + 1 && !tx0_) {
    abort_run();
    return;
  }

  if (phase_ == Phase::payment_unlock) {
    if (io.round == ctx_.plan.receipts_deadline() && !released_) {
      if (!receipts_complete() || misbehaves(Misbehavior::withhold_unlock)) {
        abort_run();  // a hop never acknowledged; nothing may be released
        return;
      }
      for (uint32_t k = 0; k < runs_.size(); ++k) {
        const PathRun& run = runs_[k];
        if (run.spec.hops() == 0) continue;
        WireMessage m;
        m.kind = MsgKind::channel_release;
        m.to = run.spec.relayers.back();
        m.path = k + 1;
        m.body = misbehaves(Misbehavior::wrong_secret)
                     ? ctx_.rng.bytes(kSecretBytes)
                     : s_sync_;
        send(io, std::move(m));
      }
      released_ = true;
    }
    if (released_) enforcement_duties(io);
    try_redeem_customer_payment(io);
    if (io.round > ctx_.plan.t0) {
      phase_ = redeemed_customer_ ? Phase::done : Phase::aborted;
    }
  }
}

// ============================================================================
// Relayer
// ============================================================================

RelayerParty::RelayerParty(PartyContext ctx) : Party(std::move(ctx)) {
  auto pos = ctx_.graph->locate(ctx_.self);
  if (!pos) {
    phase_ = Phase::aborted;
    return;
  }
  path_ = pos->first;
  hop_ = pos->second + 1;
}

PathSpec RelayerParty::path_spec() const {
  const PathConfig& pc = ctx_.graph->paths[path_];
  PathSpec spec;
  spec.index = path_ + 1;
  spec.provider = ctx_.graph->provider;
  spec.relayers = pc.relayers;
  spec.cids = pc.cids;
  spec.fees = pc.fees;
  for (PartyId r : pc.relayers) {
    spec.hop_hashes.push_back(r == ctx_.self ? h_s_ : peer_hashes_.at(r));
  }
  return spec;
}

bool RelayerParty::setup_complete() const {
  if (!h_s0_ || !h_sync_) return false;
  const PathConfig& pc = ctx_.graph->paths[path_];
  for (PartyId r : pc.relayers) {
    if (r != ctx_.self && !peer_hashes_.contains(r)) return false;
  }
  return true;
}

bool RelayerParty::delivery_complete() const {
  const PathConfig& pc = ctx_.graph->paths[path_];
  return !leaves_.empty() && relayed_.size() == pc.job.size();
}

void RelayerParty::on_init(StepIo& io) {
  const DeliveryGraph& g = *ctx_.graph;
  const PathConfig& pc = g.paths[path_];
  sk_ = se_keygen(ctx_.rng);
  s_ = ctx_.rng.bytes(kSecretBytes);
  h_sk_ = commit(sk_.encode(), ctx_.rng);
  auto honest = mcom_gen(sk_, s_, h_sk_, ctx_.key, ctx_.rng);
  if (!honest) {
    abort_run();
    return;
  }
  // The mask commitment's secret commitment doubles as the lock hashlock.
  h_s_ = honest->h_s;
  MaskCommitment mcom = misbehaves(Misbehavior::wrong_mask)
                            ? forged_mask(s_, h_sk_, h_s_, ctx_.key, ctx_.rng)
                            : *honest;
  Bytes c_mask = ae_enc(mcom.encode(), ctx_.roster->key(g.customer));
  WireMessage to_c;
  to_c.kind = MsgKind::setup_customer;
  to_c.to = g.customer;
  to_c.body = setup_customer_body(h_sk_, h_s_, nullptr, c_mask);
  send(io, std::move(to_c));
  Bytes peer_body = relayer_peer_body(h_s_, pc.fees[hop_ - 1]);
  WireMessage to_p;
  to_p.kind = MsgKind::setup_peer;
  to_p.to = g.provider;
  to_p.body = peer_body;
  send(io, std::move(to_p));
  for (PartyId r : pc.relayers) {
    if (r == ctx_.self) continue;
    WireMessage peer;
    peer.kind = MsgKind::setup_peer;
    peer.to = r;
    peer.body = peer_body;
    send(io, std::move(peer));
  }
}

void RelayerParty::handle_hash(StepIo& io, const WireMessage& msg) {
  const DeliveryGraph& g = *ctx_.graph;
  const PathConfig& pc = g.paths[path_];
  if (!leaves_.empty()) return;
  auto payload = parse_hash_body(msg.body);
  if (!payload || payload->leaves.size() != pc.job.size() ||
      payload->proof.leaf_count != g.chunk_count) {
    abort_run();
    return;
  }
  std::vector<uint32_t> expected_idx(pc.job.size());
  for (size_t i = 0; i < pc.job.size(); ++i) expected_idx[i] = pc.job[i] - 1;
  if (payload->proof.indices != expected_idx ||
      !merkle_verify(payload->leaves, payload->proof, g.content_root)) {
    abort_run();
    return;
  }
  for (size_t i = 0; i < pc.job.size(); ++i) {
    auto com = CommitmentValue::decode(payload->leaves[i]);
    if (!com) {
      abort_run();
      return;
    }
    leaves_[pc.job[i]] = *com;
  }
  uint32_t n = pc.hops();
  WireMessage fwd;
  fwd.kind = MsgKind::delivery_hash;
  fwd.to = hop_ < n ? pc.relayers[hop_] : g.customer;
  fwd.path = path_ + 1;
  fwd.body = msg.body;
  send(io, std::move(fwd));
}

void RelayerParty::handle_chunk(StepIo& io, const WireMessage& msg) {
  const DeliveryGraph& g = *ctx_.graph;
  const PathConfig& pc = g.paths[path_];
  if (leaves_.empty()) {
    abort_run();  // chunks must follow the verified commitment list
    return;
  }
  uint32_t id = msg.index;
  if (!leaves_.contains(id) || relayed_.contains(id)) {
    abort_run();
    return;
  }
  auto cm = parse_chunk_body(msg.body);
  if (!cm) {
    abort_run();
    return;
  }
  cm->id = id;
  if (cm->ciphertext.size() != g.chunk_size || cm->layers.size() != hop_) {
    abort_run();
    return;
  }
  CommitmentValue prev = chain_value(cm->layers.back().h_c);
  if (!open(cm->ciphertext, prev)) {
    abort_run();
    return;
  }
  bool forge = misbehaves(Misbehavior::garbage_encrypt) &&
               (ctx_.behavior.only_chunk == 0 ||
                ctx_.behavior.only_chunk == id);
  ChunkMessage out;
  out.id = id;
  out.layers = cm->layers;
  if (forge) {
    out.ciphertext = ctx_.rng.bytes(cm->ciphertext.size());
    EncCommitment com =
        forged_layer(prev, out.ciphertext, h_sk_, id, ctx_.key);
    out.layers.push_back(WireLayer{com.h_c.c, com.sig});
  } else {
    auto [c2, com] =
        ecom_gen(cm->ciphertext, sk_, h_sk_, id, ctx_.key, ctx_.rng, &prev);
    out.ciphertext = std::move(c2);
    out.layers.push_back(WireLayer{com.h_c.c, com.sig});
  }
  uint32_t n = pc.hops();
  WireMessage fwd;
  fwd.kind = MsgKind::delivery_chunk;
  fwd.to = hop_ < n ? pc.relayers[hop_] : g.customer;
  fwd.path = path_ + 1;
  fwd.index = id;
  fwd.body = encode_chunk_body(out);
  send(io, std::move(fwd));
  relayed_.insert(id);
}

void RelayerParty::handle_lock(StepIo& io, const WireMessage& msg) {
  const DeliveryGraph& g = *ctx_.graph;
  const PathConfig& pc = g.paths[path_];
  if (incoming_) return;
  auto tx = ConditionedPayment::decode(msg.body);
  auto snapshot = io.hub->query(pc.cids[hop_ - 1]);
  if (!tx || !snapshot) return;
  PartyId upstream = hop_ == 1 ? g.provider : pc.relayers[hop_ - 2];
  PathSpec spec = path_spec();
  if (!verify_incoming_lock(*tx, *snapshot, ctx_.self, upstream,
                            ctx_.roster->key(upstream),
                            hop_hashlist(spec, *h_sync_, hop_),
                            ctx_.plan.per_path[path_][hop_ - 1],
                            fee_tail(spec, hop_))) {
    return;  // not the agreed lock; the phase deadline will abort us
  }
  incoming_ = *tx;
  known_secrets_[hop_] = s_;
  EnforcementChallenge ch = make_challenge(spec, *h_sync_, ctx_.plan.t2);
  challenge_ = challenge_digest(ch);
  if (!misbehaves(Misbehavior::stall_receipt)) {
    LockReceipt receipt = ack_receipt(ch, ctx_.self, hop_, ctx_.key);
    WireMessage ack;
    ack.kind = MsgKind::lock_ack;
    ack.to = g.provider;
    ack.path = path_ + 1;
    ack.index = hop_;
    ack.body.assign(receipt.sig.begin(), receipt.sig.end());
    send(io, std::move(ack));
  }
  uint32_t n = pc.hops();
  if (hop_ < n) {
    auto out_snap = io.hub->query(pc.cids[hop_]);
    if (out_snap) {
      auto fwd_tx = build_outgoing_lock(*incoming_, h_s_,
                                        fee_tail(spec, hop_ + 1), *out_snap,
                                        ctx_.self, ctx_.key);
      if (fwd_tx) {
        WireMessage fwd;
        fwd.kind = MsgKind::channel_lock;
        fwd.to = pc.relayers[hop_];
        fwd.path = path_ + 1;
        fwd.index = hop_ + 1;
        fwd.body = fwd_tx->encode();
        send(io, std::move(fwd));
      }
    }
  }
  phase_ = Phase::payment_unlock;
}

void RelayerParty::watch_substrate(StepIo& io) {
  const PathConfig& pc = ctx_.graph->paths[path_];
  uint32_t n = pc.hops();
  for (const ChannelEvent& ev : io.channel_events) {
    if (ev.outcome != UpdateOutcome::updated) continue;
    for (uint32_t j = 0; j < pc.cids.size(); ++j) {
      if (ev.cid != pc.cids[j]) continue;
      if (j == hop_ - 1) incoming_settled_ = true;
      // A settle of the lock into hop j+1 publishes [s_sync, s_{j+1}..s_n].
      if (ev.secrets.size() == static_cast<size_t>(n - j) + 1) {
        if (!s_sync_ && h_sync_ && open(ev.secrets[0], *h_sync_)) {
          s_sync_ = ev.secrets[0];
        }
        for (uint32_t t = 1; t < ev.secrets.size(); ++t) {
          known_secrets_.emplace(j + t, ev.secrets[t]);
        }
      }
    }
  }
  for (const JudgeBroadcast& b : io.judge_broadcasts) {
    if (b.challenge != challenge_) continue;
    switch (b.kind) {
      case JudgeBroadcast::Kind::enforced:
        enforced_ = true;
        enforce_round_ = b.round;
        if (!s_sync_ && h_sync_ && open(b.secret, *h_sync_)) {
          s_sync_ = b.secret;
        }
        break;
      case JudgeBroadcast::Kind::logged:
        logged_seen_.insert(b.index);
        known_secrets_.emplace(b.index, b.secret);
        break;
      case JudgeBroadcast::Kind::punished:
        break;
    }
  }
}

void RelayerParty::try_redeem(StepIo& io, bool fill_gaps) {
  if (!incoming_ || incoming_settled_) return;
  if (!s_sync_ && !fill_gaps) return;
  const PathConfig& pc = ctx_.graph->paths[path_];
  uint32_t n = pc.hops();
  Bytes sync = s_sync_ ? *s_sync_ : ctx_.rng.bytes(kSecretBytes);
  auto secret_of = [&](uint32_t j) -> Bytes {
    if (j == hop_ && misbehaves(Misbehavior::wrong_secret)) {
      return ctx_.rng.bytes(kSecretBytes);
    }
    auto it = known_secrets_.find(j);
    if (it != known_secrets_.end()) return it->second;
    return ctx_.rng.bytes(kSecretBytes);  // fill_gaps: provably hopeless
  };
  auto req = unlock(*incoming_, ctx_.self, ctx_.key,
                    hop_redeem_secrets(hop_, n, sync, secret_of));
  if (io.hub->update(req, *ctx_.roster, io.round) == UpdateOutcome::updated) {
    incoming_settled_ = true;
  }
}

void RelayerParty::try_voluntary_redeem(StepIo& io) {
  if (!incoming_ || incoming_settled_ || redeem_attempted_) return;
  if (misbehaves(Misbehavior::withhold_unlock)) return;
  const PathConfig& pc = ctx_.graph->paths[path_];
  uint32_t n = pc.hops();
  if (!s_sync_) return;
  for (uint32_t j = hop_; j <= n; ++j) {
    if (!known_secrets_.contains(j)) return;
  }
  redeem_attempted_ = true;
  try_redeem(io, false);
}

void RelayerParty::enforcement_duties(StepIo& io) {
  if (!enforced_ || io.judge == nullptr) return;
  const PathConfig& pc = ctx_.graph->paths[path_];
  uint32_t n = pc.hops();
  Round window = enforce_round_ + n - hop_ + 1;
  if (io.round != window) return;
  if (hop_ < n && !logged_seen_.contains(hop_ + 1)) return;
  Bytes reveal = misbehaves(Misbehavior::wrong_secret)
                     ? ctx_.rng.bytes(kSecretBytes)
                     : s_;
  bool ok = io.judge->log_response(ctx_.self, challenge_, hop_, reveal,
                                   io.round);
  if (!ok) return;
  known_secrets_.emplace(hop_, s_);
  bool have_all = s_sync_.has_value();
  for (uint32_t j = hop_; have_all && j <= n; ++j) {
    have_all = known_secrets_.contains(j);
  }
  if (have_all) try_redeem(io, false);
}

void RelayerParty::share_with_partner(StepIo& io) {
  size_t knowledge = known_secrets_.size() + (s_sync_ ? 1 : 0);
  if (knowledge == 0 || knowledge <= shared_count_) return;
  Bytes body;
  put_u16(body, static_cast<uint16_t>(knowledge));
  if (s_sync_) {
    body.push_back(static_cast<uint8_t>(path_ + 1));
    body.push_back(0);
    put_raw(body, *s_sync_);
  }
  for (const auto& [hop, secret] : known_secrets_) {
    body.push_back(static_cast<uint8_t>(path_ + 1));
    body.push_back(static_cast<uint8_t>(hop));
    put_raw(body, secret);
  }
  WireMessage m;
  m.kind = MsgKind::collude_share;
  m.to = ctx_.behavior.partner;
  m.body = std::move(body);
  send(io, std::move(m));
  shared_count_ = knowledge;
}

void RelayerParty::step(StepIo& io) {
  if (terminal()) return;
  if (crashed()) {
    abort_run();
    return;
  }
  const DeliveryGraph& g = *ctx_.graph;
  const PathConfig& pc = g.paths[path_];
  uint32_t n = pc.hops();
  PartyId upstream_hash = hop_ == 1 ? g.provider : pc.relayers[hop_ - 2];

  for (const WireMessage& msg : io.inbox) {
    if (terminal()) return;
    switch (msg.kind) {
      case MsgKind::init:
        if (phase_ == Phase::setup && msg.from == g.customer && s_.empty()) {
          on_init(io);
        }
        break;
      case MsgKind::setup_peer: {
        if (phase_ != Phase::setup) break;
        if (msg.from == g.provider) {
          if (h_s0_) break;
          ByteReader r(msg.body);
          auto h_s0 = read_commitment(r);
          auto h_sync = read_commitment(r);
          if (!h_s0 || !h_sync || !r.done()) break;
          h_s0_ = *h_s0;
          h_sync_ = *h_sync;
          break;
        }
        auto pos = g.locate(msg.from);
        if (!pos || pos->first != path_ || peer_hashes_.contains(msg.from)) {
          break;
        }
        ByteReader r(msg.body);
        auto h_s = read_commitment(r);
        auto fee = r.get_u64();
        if (!h_s || !fee || !r.done()) break;
        if (static_cast<Tokens>(*fee) != pc.fees[pos->second]) break;
        peer_hashes_[msg.from] = *h_s;
        break;
      }
      case MsgKind::delivery_hash:
        if (phase_ == Phase::delivery && msg.from == upstream_hash) {
          handle_hash(io, msg);
        }
        break;
      case MsgKind::delivery_chunk:
        if (phase_ == Phase::delivery && msg.from == upstream_hash) {
          handle_chunk(io, msg);
        }
        break;
      case MsgKind::channel_lock:
        if (phase_ == Phase::payment_lock && msg.from == upstream_hash) {
          handle_lock(io, msg);
        }
        break;
      case MsgKind::channel_release: {
        if (hop_ != n || msg.from != g.provider || !h_sync_) break;
        if (msg.body.size() != kSecretBytes) break;
        if (open(msg.body, *h_sync_)) s_sync_ = msg.body;
        break;
      }
      case MsgKind::collude_share: {
        if (!misbehaves(Misbehavior::wormhole_collude) ||
            msg.from != ctx_.behavior.partner) {
          break;
        }
        ByteReader r(msg.body);
        auto count = r.get_u16();
        if (!count) break;
        for (uint16_t i = 0; i < *count; ++i) {
          auto path_raw = r.get_raw(1);
          auto hop_raw = r.get_raw(1);
          auto secret = r.get_raw(kSecretBytes);
          if (!path_raw || !hop_raw || !secret) break;
          if ((*path_raw)[0] != path_ + 1 && (*hop_raw)[0] != 0) continue;
          Bytes value(secret->begin(), secret->end());
          if ((*hop_raw)[0] == 0) {
            if (!s_sync_ && h_sync_ && open(value, *h_sync_)) s_sync_ = value;
          } else if ((*path_raw)[0] == path_ + 1) {
            known_secrets_.emplace((*hop_raw)[0], value);
          }
        }
        break;
      }
      default:
        break;
    }
  }
  if (terminal()) return;

  watch_substrate(io);

  if (phase_ == Phase::setup) {
    if (s_.empty() && io.round >= 2) {
      abort_run();
      return;
    }
    if (io.round >= 3) {
      if (!setup_complete()) {
        abort_run();
        return;
      }
      phase_ = Phase::delivery;
    }
  }

  if (phase_ == Phase::delivery) {
    if (delivery_complete()) {
      phase_ = Phase::payment_lock;
    } else if (io.round >= 4 + hop_) {
      abort_run();
      return;
    }
  }

  if (phase_ == Phase::payment_lock &&
      io.round >= ctx_.plan.t1 + hop_ + 1 && !incoming_) {
    abort_run();
    return;
  }

  if (phase_ == Phase::payment_unlock) {
    try_voluntary_redeem(io);
    enforcement_duties(io);
    if (misbehaves(Misbehavior::wormhole_collude)) {
      share_with_partner(io);
      size_t knowledge = known_secrets_.size() + (s_sync_ ? 1 : 0);
      if (!incoming_settled_ && knowledge > eager_mark_) {
        eager_mark_ = knowledge;
        try_redeem(io, true);
      }
    }
    Round own_deadline = ctx_.plan.per_path[path_][hop_ - 1];
    if (!incoming_settled_ && io.round > own_deadline) {
      abort_run();  // the incoming lock is worthless now
      return;
    }
    if (io.round > ctx_.plan.t0) {
      phase_ = incoming_settled_ ? Phase::done : Phase::aborted;
    }
  }
}

// ============================================================================
// Verdicts
// ============================================================================

Verdicts evaluate_verdicts(const FairnessInputs& in,
                           const DeliveryGraph& graph) {
  auto delta = [&](PartyId p) -> Tokens {
    auto it = in.deltas.find(p);
    return it == in.deltas.end() ? Tokens{0} : it->second;
  };
  bool honest_c = in.honest.contains(graph.customer);
  bool honest_p = in.honest.contains(graph.provider);
  Verdicts v;

  Tokens dc = delta(graph.customer);
  v.fair_customer =
      !honest_c || (in.customer_has_content ? dc >= -graph.price : dc >= 0);

  Tokens fees_out = 0;
  for (const PathConfig& pc : graph.paths) {
    if (pc.hops() == 0 || !in.settled_channels.contains(pc.cids[0])) continue;
    for (Tokens f : pc.fees) fees_out += f;
  }
  bool paid = in.customer_payment_settled;
  bool leak = in.customer_has_content || in.relayer_saw_plaintext;
  v.fair_provider =
      !honest_p ||
      ((!leak || paid) &&
       (fees_out == 0 || paid || in.provider_compensation >= fees_out));

  bool fair_relayer = true;
  if (in.customer_has_content) {
    for (const PathConfig& pc : graph.paths) {
      for (size_t i = 0; i < pc.relayers.size(); ++i) {
        if (in.honest.contains(pc.relayers[i]) &&
            delta(pc.relayers[i]) != pc.fees[i]) {
          fair_relayer = false;
        }
      }
    }
  }
  v.fair_relayer = fair_relayer;

  v.confidentiality =
      !(honest_p && honest_c) ||
      (!in.relayer_saw_plaintext && !in.peel_without_provider_key_leaks);
  return v;
}

}  // namespace fairrelay
