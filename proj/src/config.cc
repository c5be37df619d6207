#include "fairrelay/config.hh"

#include <cctype>
#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <stdexcept>

#include "json.hpp"

namespace fairrelay {

namespace {

using Json = nlohmann::ordered_json;

struct MisbehaviorRow {
  Misbehavior kind;
  const char* name;
};

constexpr MisbehaviorRow kMisbehaviors[] = {
    {Misbehavior::honest, "honest"},
    {Misbehavior::silent_at, "silent_at"},
    {Misbehavior::wrong_secret, "wrong_secret"},
    {Misbehavior::garbage_encrypt, "garbage_encrypt"},
    {Misbehavior::withhold_unlock, "withhold_unlock"},
    {Misbehavior::wormhole_collude, "wormhole_collude"},
    {Misbehavior::wrong_mask, "wrong_mask"},
    {Misbehavior::stall_receipt, "stall_receipt"},
};

constexpr Phase kPhases[] = {
    Phase::setup,        Phase::delivery, Phase::payment_lock,
    Phase::payment_unlock, Phase::decryption, Phase::done,
    Phase::aborted,
};

constexpr Outcome kOutcomes[] = {Outcome::delivered, Outcome::disputed,
                                 Outcome::aborted};

std::string lower(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) out.push_back(static_cast<char>(std::tolower(
                       static_cast<unsigned char>(c))));
  return out;
}

std::optional<uint32_t> parse_u32(std::string_view s) {
  uint32_t v = 0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return v;
}

PartyId require_party(const Json& node, const char* key,
                      std::span<const uint32_t> path_hops) {
  std::string ref = node.at(key).get<std::string>();
  auto id = parse_party_ref(ref, path_hops);
  if (!id) throw std::runtime_error("unknown party reference '" + ref + "'");
  return *id;
}

}  // namespace

std::string party_ref_name(PartyId id, std::span<const uint32_t> path_hops) {
  if (id == kCustomerId) return "C";
  if (id == kProviderId) return "P";
  PartyId next = 2;
  for (size_t k = 0; k < path_hops.size(); ++k) {
    for (uint32_t i = 1; i <= path_hops[k]; ++i, ++next) {
      if (next == id)
        return "R" + std::to_string(k + 1) + "." + std::to_string(i);
    }
  }
  return "party" + std::to_string(id);
}

std::optional<PartyId> parse_party_ref(const std::string& ref,
                                       std::span<const uint32_t> path_hops) {
  std::string s = lower(ref);
  if (s == "c") return kCustomerId;
  if (s == "p") return kProviderId;
  if (s.size() < 4 || s[0] != 'r') return std::nullopt;
  size_t dot = s.find('.');
  if (dot == std::string::npos) return std::nullopt;
  auto path = parse_u32(std::string_view(s).substr(1, dot - 1));
  auto hop = parse_u32(std::string_view(s).substr(dot + 1));
  if (!path || !hop) return std::nullopt;
  if (*path == 0 || *path > path_hops.size()) return std::nullopt;
  if (*hop == 0 || *hop > path_hops[*path - 1]) return std::nullopt;
  return relayer_party_id(path_hops, *path - 1, *hop);
}

const char* misbehavior_name(Misbehavior kind) {
  for (const auto& row : kMisbehaviors)
    if (row.kind == kind) return row.name;
  return "unknown";
}

std::optional<Misbehavior> parse_misbehavior(const std::string& name) {
  for (const auto& row : kMisbehaviors)
    if (name == row.name) return row.kind;
  return std::nullopt;
}

std::optional<Phase> parse_phase(const std::string& name) {
  for (Phase p : kPhases)
    if (name == phase_name(p)) return p;
  return std::nullopt;
}

std::optional<Outcome> parse_outcome(const std::string& name) {
  for (Outcome o : kOutcomes)
    if (name == outcome_name(o)) return o;
  return std::nullopt;
}

std::optional<ScenarioConfig> parse_scenario(const std::string& json_text,
                                             std::string* error) {
  try {
    Json doc = Json::parse(json_text);
    if (!doc.is_object())
      throw std::runtime_error("top-level JSON value must be an object");

    ScenarioConfig cfg;
    cfg.name = doc.value("name", std::string{});
    ScenarioSpec& spec = cfg.spec;
    spec.price = doc.at("price").get<Tokens>();
    spec.chunk_count = doc.at("chunk_count").get<uint32_t>();
    spec.chunk_size = doc.at("chunk_size").get<size_t>();
    spec.b_max = doc.at("b_max").get<Tokens>();
    spec.slashing = doc.value("slashing", false);
    spec.slash_percent = doc.value("slash_percent", 50u);
    spec.deposit = doc.at("deposit").get<Tokens>();
    spec.channel_capacity = doc.at("channel_capacity").get<Tokens>();

    const Json& paths = doc.at("paths");
    if (!paths.is_array() || paths.empty())
      throw std::runtime_error("paths: expected a non-empty array");
    for (const Json& p : paths) {
      spec.path_hops.push_back(p.at("hops").get<uint32_t>());
      spec.fees.push_back(p.at("fees").get<std::vector<Tokens>>());
      spec.jobs.push_back(p.at("job").get<std::vector<uint32_t>>());
    }

    if (auto adv = doc.find("adversary"); adv != doc.end()) {
      for (const Json& entry : *adv) {
        PartyId id = require_party(entry, "party", spec.path_hops);
        std::string kind_name = entry.at("kind").get<std::string>();
        auto kind = parse_misbehavior(kind_name);
        if (!kind)
          throw std::runtime_error("unknown misbehavior '" + kind_name + "'");
        Behavior b;
        b.kind = *kind;
        if (b.kind == Misbehavior::silent_at) {
          std::string ph = entry.at("phase").get<std::string>();
          auto parsed = parse_phase(ph);
          if (!parsed) throw std::runtime_error("unknown phase '" + ph + "'");
          b.silent_phase = *parsed;
        }
        if (b.kind == Misbehavior::garbage_encrypt)
          b.only_chunk = entry.value("chunk", 0u);
        if (b.kind == Misbehavior::wormhole_collude)
          b.partner = require_party(entry, "partner", spec.path_hops);
        if (!spec.adversary.behaviors.emplace(id, b).second)
          throw std::runtime_error("duplicate adversary entry for '" +
                                   party_ref_name(id, spec.path_hops) + "'");
      }
    }

    if (auto content = doc.find("content_hex"); content != doc.end()) {
      auto bytes = from_hex(content->get<std::string>());
      if (!bytes) throw std::runtime_error("content_hex: invalid hex string");
      spec.content = std::move(*bytes);
    }

    if (auto exp = doc.find("expected"); exp != doc.end()) {
      if (auto o = exp->find("outcome"); o != exp->end()) {
        std::string name = o->get<std::string>();
        auto parsed = parse_outcome(name);
        if (!parsed)
          throw std::runtime_error("unknown outcome '" + name + "'");
        cfg.expected_outcome = *parsed;
      }
      if (auto v = exp->find("verdicts"); v != exp->end())
        cfg.expected_verdicts = v->get<bool>();
    }

    if (auto problem = validate_spec(spec)) throw std::runtime_error(*problem);
    return cfg;
  } catch (const std::exception& e) {
    if (error) *error = e.what();
    return std::nullopt;
  }
}

std::string serialize_scenario(const ScenarioConfig& config) {
  const ScenarioSpec& spec = config.spec;
  Json doc;
  doc["name"] = config.name;
  doc["price"] = spec.price;
  doc["chunk_count"] = spec.chunk_count;
  doc["chunk_size"] = spec.chunk_size;
  doc["b_max"] = spec.b_max;
  doc["slashing"] = spec.slashing;
  doc["slash_percent"] = spec.slash_percent;
  doc["deposit"] = spec.deposit;
  doc["channel_capacity"] = spec.channel_capacity;

  doc["paths"] = Json::array();
  for (size_t k = 0; k < spec.path_hops.size(); ++k) {
    Json p;
    p["hops"] = spec.path_hops[k];
    p["fees"] = spec.fees[k];
    p["job"] = spec.jobs[k];
    doc["paths"].push_back(std::move(p));
  }

  if (!spec.adversary.behaviors.empty()) {
    Json adv = Json::array();
    for (const auto& [id, b] : spec.adversary.behaviors) {
      Json entry;
      entry["party"] = party_ref_name(id, spec.path_hops);
      entry["kind"] = misbehavior_name(b.kind);
      if (b.kind == Misbehavior::silent_at)
        entry["phase"] = phase_name(b.silent_phase);
      if (b.kind == Misbehavior::garbage_encrypt && b.only_chunk != 0)
        entry["chunk"] = b.only_chunk;
      if (b.kind == Misbehavior::wormhole_collude)
        entry["partner"] = party_ref_name(b.partner, spec.path_hops);
      adv.push_back(std::move(entry));
    }
    doc["adversary"] = std::move(adv);
  }

  if (!spec.content.empty()) doc["content_hex"] = to_hex(spec.content);

  if (config.expected_outcome || config.expected_verdicts) {
    Json exp;
    if (config.expected_outcome)
      exp["outcome"] = outcome_name(*config.expected_outcome);
    if (config.expected_verdicts) exp["verdicts"] = *config.expected_verdicts;
    doc["expected"] = std::move(exp);
  }

  return doc.dump(2) + "\n";
}

std::string render_metrics(const RunResult& res) {
  const Metrics& m = res.metrics;
  std::vector<uint32_t> hops;
  for (const auto& p : res.graph.paths)
    hops.push_back(static_cast<uint32_t>(p.relayers.size()));
  auto ref = [&](PartyId id) { return party_ref_name(id, hops); };

  std::string out;
  char line[160];
  auto put = [&](const char* fmt, auto... args) {
    std::snprintf(line, sizeof(line), fmt, args...);
    out += line;
    out += '\n';
  };

  put("outcome %s", outcome_name(m.outcome));
  put("rounds %u", m.rounds);
  put("timed_out %d", res.timed_out ? 1 : 0);
  put("messages %" PRIu64, m.messages);
  put("message_bytes %" PRIu64, m.message_bytes);
  put("payload_bytes %" PRIu64, m.payload_bytes);
  put("judge_ops_total %zu", m.judge_events.size());
  for (const JudgeEvent& ev : m.judge_events)
    put("judge_op r=%u caller=%s op=%s outcome=%s target=%s", ev.round,
        ref(ev.caller).c_str(), judge_op_name(ev.op),
        judge_outcome_name(ev.outcome), ref(ev.target).c_str());
  for (const auto& [id, delta] : m.deltas)
    put("delta %s %" PRId64, ref(id).c_str(), delta);
  put("burned %" PRId64, m.burned);
  put("customer_has_content %d", res.fairness.customer_has_content ? 1 : 0);
  put("customer_payment_settled %d",
      res.fairness.customer_payment_settled ? 1 : 0);
  put("provider_compensation %" PRId64, res.fairness.provider_compensation);
  put("relayer_saw_plaintext %d", res.fairness.relayer_saw_plaintext ? 1 : 0);
  put("peel_without_provider_key_leaks %d",
      res.fairness.peel_without_provider_key_leaks ? 1 : 0);
  put("verdict fair_customer %d", res.verdicts.fair_customer ? 1 : 0);
  put("verdict fair_provider %d", res.verdicts.fair_provider ? 1 : 0);
  put("verdict fair_relayer %d", res.verdicts.fair_relayer ? 1 : 0);
  put("verdict confidentiality %d", res.verdicts.confidentiality ? 1 : 0);
  put("verdicts_all %d", res.verdicts.all() ? 1 : 0);
  for (const auto& [id, phase] : res.final_phases)
    put("phase %s %s", ref(id).c_str(), phase_name(phase));
  for (const auto& [link, stats] : m.links)
    put("link %s %s messages=%" PRIu64 " bytes=%" PRIu64,
        ref(link.first).c_str(), ref(link.second).c_str(), stats.messages,
        stats.bytes);
  return out;
}

}  // namespace fairrelay
