#pragma once

// Role state machines — customer, provider, relayer — for one content
// delivery session: setup (commitment exchange), delivery (layered
// re-encryption along each path), payment (conditioned locks, receipts,
// synchronizer release, unlock cascade, judge enforcement), and decryption
// (key extraction, misbehavior proofs, content reassembly).
//
// Parties interact only through wire messages, channel-hub calls, and judge
// calls handed to them by the scheduler; each party is stepped once per
// round with the messages and substrate events delivered that round. Every
// expected message has a fixed arrival round, and a missing or invalid
// message aborts the local party at that round's end.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "fairrelay/bytes.hh"
#include "fairrelay/commitments.hh"
#include "fairrelay/crypto.hh"
#include "fairrelay/judge.hh"
#include "fairrelay/merkle.hh"
#include "fairrelay/payment.hh"
#include "fairrelay/pcn.hh"
#include "fairrelay/rng.hh"
#include "fairrelay/roster.hh"

namespace fairrelay {

// ============================================================================
// Scenario graph
// ============================================================================

// One relay path: hops in order, the channels between consecutive parties
// (cids[0] connects the provider to hop 1), per-hop relay fees, and the
// chunk indices assigned to the path. A path with no relayers is the
// degenerate direct provider→customer delivery.
struct PathConfig {
  std::vector<PartyId> relayers;
  std::vector<ChannelId> cids;
  std::vector<Tokens> fees;
  std::vector<uint32_t> job;  // sorted 1-based chunk indices

  [[nodiscard]] uint32_t hops() const {
    return static_cast<uint32_t>(relayers.size());
  }
};

// Static public facts of a session: who plays which role, how content is
// chunked and routed, and what the content costs. Known to every party
// before round 1; per-party secrets and commitments are exchanged during
// setup.
struct DeliveryGraph {
  PartyId customer = 0;
  PartyId provider = 0;
  ChannelId customer_channel = 0;  // carries the content payment
  std::vector<PathConfig> paths;
  Tokens price = 0;          // content fee locked by the customer
  uint32_t chunk_count = 0;  // chunks are numbered 1..chunk_count
  size_t chunk_size = 0;     // bytes per chunk, fixed per session
  Digest content_root{};     // registered Merkle root over chunk commitments

  [[nodiscard]] std::vector<uint32_t> path_lengths() const;
  // 0-based (path, hop) position of a relayer; nullopt if not on any path.
  [[nodiscard]] std::optional<std::pair<uint32_t, uint32_t>> locate(
      PartyId id) const;
};

// ============================================================================
// Protocol phases and adversary behaviors
// ============================================================================

enum class Phase : uint8_t {
  setup,
  delivery,
  payment_lock,
  payment_unlock,
  decryption,
  done,
  aborted,
};

[[nodiscard]] const char* phase_name(Phase p);

// Per-party deviation, fixed before round 1 (static corruption).
enum class Misbehavior : uint8_t {
  honest,
  // Crashes at the start of the given phase: sends nothing and makes no
  // substrate calls from then on, including judge responses.
  silent_at,
  // Redeems and logs with garbage preimages instead of the real secret.
  wrong_secret,
  // Re-encrypts garbage bytes at its own layer while committing and signing
  // them properly, so the fraud only surfaces at decryption.
  garbage_encrypt,
  // Never redeems voluntarily but responds to judge enforcement.
  withhold_unlock,
  // Shares every learned secret with a partner out-of-band and eagerly
  // attempts early redemption with garbage filling the gaps.
  wormhole_collude,
  // Publishes a mask commitment whose masked key is not its real key; the
  // fraud only surfaces at key extraction.
  wrong_mask,
  // Accepts and forwards its lock but never returns the signed receipt.
  stall_receipt,
};

struct Behavior {
  Misbehavior kind = Misbehavior::honest;
  Phase silent_phase = Phase::setup;  // for silent_at
  uint32_t only_chunk = 0;            // garbage_encrypt: 0 = every chunk
  PartyId partner = 0;                // for wormhole_collude
};

// ============================================================================
// Wire messages
// ============================================================================

enum class MsgKind : uint8_t {
  init = 0,          // customer → everyone: start the session
  setup_customer,    // commitments + encrypted mask commitment → customer
  setup_peer,        // secret hash (+fee / +synchronizer hash) → path peers
  delivery_go,       // customer → provider: all setups verified
  delivery_hash,     // per path: job chunk commitments + membership proof
  delivery_chunk,    // one chunk: ciphertext + commitment chain
  channel_lock,      // a conditioned payment proposal
  lock_ack,          // relayer → provider: signed lock receipt
  channel_release,   // provider → last hop: the synchronizer secret
  collude_share,     // out-of-band secret sharing between colluders
};

// Payment-class messages are delivered after delivery-class messages within
// a round; judge outcomes arrive separately as broadcasts.
[[nodiscard]] int message_class(MsgKind kind);

[[nodiscard]] const char* msg_kind_name(MsgKind kind);

// Fixed framing charged to every message on top of its body.
inline constexpr size_t kMsgHeaderSize = 8;

struct WireMessage {
  MsgKind kind = MsgKind::init;
  PartyId from = 0;
  PartyId to = 0;
  uint32_t path = 0;   // 1-based path number; 0 when not path-scoped
  uint32_t index = 0;  // chunk id or hop index, kind-dependent
  Bytes body;

  [[nodiscard]] size_t wire_size() const {
    return kMsgHeaderSize + body.size();
  }
  [[nodiscard]] Digest digest() const;  // over framing + body
};

// One encryption layer as transmitted: the output-ciphertext digest and the
// layer owner's signature. Everything else a verifier needs (input
// commitment, key commitment, chunk index) is reconstructed from setup data,
// so relaying charges exactly digest + signature bytes per layer per chunk.
struct WireLayer {
  Digest h_c{};
  Signature sig{};
};

inline constexpr size_t kWireLayerSize = kDigestSize + kSignatureSize;

// A chunk in flight: its index, the current ciphertext, and one wire layer
// per party that has encrypted it (provider first).
struct ChunkMessage {
  uint32_t id = 0;
  Bytes ciphertext;
  std::vector<WireLayer> layers;
};

[[nodiscard]] Bytes encode_chunk_body(const ChunkMessage& msg);
[[nodiscard]] std::optional<ChunkMessage> parse_chunk_body(
    std::span<const uint8_t> body);

// Rebuilds the full commitment chain a chunk message stands for: layer 0's
// input commitment is the chunk's registered content commitment, each later
// input commitment is the previous output commitment, and key commitments
// come from the owners' setup messages. Fails on a layer-count mismatch.
[[nodiscard]] std::optional<CommitmentChain> reconstruct_chain(
    const ChunkMessage& msg, const CommitmentValue& leaf_commitment,
    std::span<const CommitmentValue> layer_key_commitments);

// ============================================================================
// Party interface
// ============================================================================

// Everything a party can see and touch during one round. Inbox messages and
// substrate events were emitted in the previous round; outbox messages and
// substrate calls take effect per the round model.
struct StepIo {
  Round round = 0;
  std::span<const WireMessage> inbox;
  std::span<const ChannelEvent> channel_events;
  std::span<const JudgeBroadcast> judge_broadcasts;
  std::vector<WireMessage>* outbox = nullptr;
  ChannelHub* hub = nullptr;
  JudgeContract* judge = nullptr;
};

struct PartyContext {
  PartyId self = 0;
  KeyPair key;
  const Roster* roster = nullptr;
  const DeliveryGraph* graph = nullptr;
  TimelockPlan plan;
  Behavior behavior;
  DetRng rng{0};
};

class Party {
 public:
  explicit Party(PartyContext ctx) : ctx_(std::move(ctx)) {}
  virtual ~Party() = default;
  Party(const Party&) = delete;
  Party& operator=(const Party&) = delete;

  virtual void step(StepIo& io) = 0;

  [[nodiscard]] PartyId id() const { return ctx_.self; }
  [[nodiscard]] Phase phase() const { return phase_; }
  [[nodiscard]] bool terminal() const {
    return phase_ == Phase::done || phase_ == Phase::aborted;
  }

 protected:
  // True when a silent_at crash covers phase `at`.
  [[nodiscard]] bool silenced_at(Phase at) const;
  // True once a silent_at party has reached its crash phase.
  [[nodiscard]] bool crashed() const { return silenced_at(phase_); }
  [[nodiscard]] bool misbehaves(Misbehavior kind) const {
    return ctx_.behavior.kind == kind;
  }
  void send(StepIo& io, WireMessage msg);

  PartyContext ctx_;
  Phase phase_ = Phase::setup;
};

// ============================================================================
// Customer
// ============================================================================

class CustomerParty final : public Party {
 public:
  explicit CustomerParty(PartyContext ctx);
  void step(StepIo& io) override;

  // Reassembled content; set only after a fully verified extraction.
  [[nodiscard]] const std::optional<Bytes>& content() const {
    return content_;
  }
  // True once the customer's conditioned payment was redeemed on-channel.
  [[nodiscard]] bool payment_settled() const { return payment_settled_; }
  // Extraction keys in roster order (provider first); empty until key
  // extraction succeeds.
  [[nodiscard]] const std::vector<SymKey>& extracted_keys() const {
    return extracted_keys_;
  }
  [[nodiscard]] std::span<const DeliveredChunk> stored_chunks(
      uint32_t path) const;
  // The commitment each chunk id must open, once the path's proof verified.
  [[nodiscard]] const std::map<uint32_t, CommitmentValue>& job_leaves(
      uint32_t path) const;

 private:
  struct PeerSetup {
    CommitmentValue h_sk;
    CommitmentValue h_s;
    MaskCommitment mcom;
  };
  struct PathProgress {
    std::map<uint32_t, CommitmentValue> leaves;  // chunk id → commitment
    std::vector<DeliveredChunk> chunks;
    std::set<uint32_t> stored;  // chunk ids already accepted
    bool hash_ok = false;
  };

  void handle_setup(const WireMessage& msg);
  void handle_hash(const WireMessage& msg);
  void handle_chunk(const WireMessage& msg);
  [[nodiscard]] bool setup_complete() const;
  [[nodiscard]] bool delivery_complete() const;
  void start_payment(StepIo& io);
  void decrypt(StepIo& io, const std::vector<Bytes>& secrets);
  void abort_run() { phase_ = Phase::aborted; }

  std::map<PartyId, PeerSetup> setups_;
  CommitmentValue h_sync_;
  std::vector<PathProgress> progress_;
  std::optional<ConditionedPayment> tx0_;
  bool payment_settled_ = false;
  std::optional<Bytes> content_;
  std::vector<SymKey> extracted_keys_;
};

// ============================================================================
// Provider
// ============================================================================

class ProviderParty final : public Party {
 public:
  // `chunks` are the already-padded content chunks (chunk id i+1 at index
  // i); `chunk_commitments` their long-lived commitments, whose encodings
  // are the leaves under the graph's registered content root.
  ProviderParty(PartyContext ctx, std::vector<Bytes> chunks,
                std::vector<CommitmentValue> chunk_commitments);
  void step(StepIo& io) override;

 private:
  struct PathRun {
    PathSpec spec;
    EnforcementChallenge challenge;
    std::vector<std::optional<Signature>> receipts;  // per hop
    std::map<uint32_t, Bytes> secrets;               // hop → revealed secret
    std::set<uint32_t> logged;                       // hops seen in log records
    bool first_hop_settled = false;
    bool enforced = false;
    Round enforce_round = 0;
    bool punish_called = false;
  };

  void on_init(StepIo& io);
  void deliver(StepIo& io);
  void on_customer_lock(StepIo& io, const WireMessage& msg);
  void on_ack(const WireMessage& msg);
  void watch_substrate(StepIo& io);
  void enforcement_duties(StepIo& io);
  void try_redeem_customer_payment(StepIo& io);
  [[nodiscard]] bool receipts_complete() const;
  void abort_run() { phase_ = Phase::aborted; }

  std::vector<Bytes> chunks_;
  std::vector<CommitmentValue> chunk_coms_;
  bool init_seen_ = false;
  bool go_seen_ = false;
  SymKey sk0_;
  Bytes s0_;
  CommitmentValue h_sk0_, h_s0_;
  Bytes s_sync_;
  CommitmentValue h_sync_;
  std::map<PartyId, CommitmentValue> peer_hashes_;  // relayer → h_s
  std::vector<PathRun> runs_;
  std::optional<ConditionedPayment> tx0_;
  bool released_ = false;
  bool redeemed_customer_ = false;
  bool redeem_attempted_ = false;
};

// ============================================================================
// Relayer
// ============================================================================

class RelayerParty final : public Party {
 public:
  explicit RelayerParty(PartyContext ctx);
  void step(StepIo& io) override;

 private:
  void on_init(StepIo& io);
  void handle_hash(StepIo& io, const WireMessage& msg);
  void handle_chunk(StepIo& io, const WireMessage& msg);
  void handle_lock(StepIo& io, const WireMessage& msg);
  void watch_substrate(StepIo& io);
  void try_voluntary_redeem(StepIo& io);
  void enforcement_duties(StepIo& io);
  void share_with_partner(StepIo& io);
  void try_redeem(StepIo& io, bool fill_gaps);
  [[nodiscard]] bool setup_complete() const;
  [[nodiscard]] bool delivery_complete() const;
  [[nodiscard]] PathSpec path_spec() const;
  void abort_run() { phase_ = Phase::aborted; }

  uint32_t path_ = 0;  // 0-based
  uint32_t hop_ = 0;   // 1-based
  SymKey sk_;
  Bytes s_;
  CommitmentValue h_sk_, h_s_;
  std::optional<CommitmentValue> h_s0_, h_sync_;
  std::map<PartyId, CommitmentValue> peer_hashes_;
  std::map<uint32_t, CommitmentValue> leaves_;
  std::set<uint32_t> relayed_;
  std::optional<ConditionedPayment> incoming_;
  bool incoming_settled_ = false;
  std::optional<Bytes> s_sync_;
  std::map<uint32_t, Bytes> known_secrets_;  // hop → secret (own included)
  Digest challenge_{};
  bool enforced_ = false;
  Round enforce_round_ = 0;
  std::set<uint32_t> logged_seen_;
  bool redeem_attempted_ = false;
  size_t shared_count_ = 0;  // secrets already forwarded to a collusion partner
  size_t eager_mark_ = 0;    // knowledge size at the last speculative redeem
};

// ============================================================================
// Fairness verdicts
// ============================================================================

// Facts a finished run is judged on. Deltas are final holdings (ledger plus
// channel sides) minus initial; the honest set lists parties whose behavior
// was Misbehavior::honest.
struct FairnessInputs {
  std::map<PartyId, Tokens> deltas;
  std::set<PartyId> honest;
  bool customer_has_content = false;
  bool customer_payment_settled = false;
  std::set<ChannelId> settled_channels;
  Tokens provider_compensation = 0;
  // True if any relayer-bound message body contained a source chunk.
  bool relayer_saw_plaintext = false;
  // True if peeling relayer layers without the provider key ever produced a
  // plaintext matching a content commitment.
  bool peel_without_provider_key_leaks = false;
};

struct Verdicts {
  bool fair_customer = false;
  bool fair_provider = false;
  bool fair_relayer = false;
  bool confidentiality = false;

  [[nodiscard]] bool all() const {
    return fair_customer && fair_provider && fair_relayer && confidentiality;
  }
};

// The four per-run protections, each an implication guarded by the honesty
// of the party it protects:
//  - customer: never out the content fee without the content — it either
//    reconstructs, never paid, or was compensated above the price;
//  - provider: content never learned before its payment settles, and relay
//    fees only leave it when the content fee or equal compensation arrived;
//  - relayers: if the customer reconstructed, every honest relayer earned
//    exactly its fee;
//  - confidentiality: with honest provider and customer, relayers never see
//    plaintext and the provider key is necessary for decryption.
[[nodiscard]] Verdicts evaluate_verdicts(const FairnessInputs& in,
                                         const DeliveryGraph& graph);

}  // namespace fairrelay
