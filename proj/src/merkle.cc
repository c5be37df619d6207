#include "fairrelay/merkle.hh"

#include <algorithm>
#include <map>

namespace fairrelay {

namespace {

// Walks one level up: `known` maps node position → digest at the current
// level. For every known node, its sibling is either also known, or consumed
// from / emitted to the proof's sibling stream. Returns the parent level.
//
// `take` is called to obtain a missing sibling digest (verification) and
// `give` to record one (generation); exactly one of them is active per use.
template <typename Take, typename Give>
std::optional<std::map<uint32_t, Digest>> fold_level(
    const std::map<uint32_t, Digest>& known, uint32_t width, Take&& take,
    Give&& give) {
  std::map<uint32_t, Digest> parents;
  for (auto it = known.begin(); it != known.end();) {
    uint32_t pos = it->first;
    uint32_t sib = (pos % 2 == 0) ? pos + 1 : pos - 1;
    Digest left, right;
    if (pos % 2 == 0 && sib >= width) {
      // odd-width level: last node is duplicated
      left = it->second;
      right = it->second;
      ++it;
    } else if (pos % 2 == 0) {
      left = it->second;
      auto next = std::next(it);
      if (next != known.end() && next->first == sib) {
        right = next->second;
        ++it;
        ++it;
      } else {
        auto fetched = take(it->second, sib);
        if (!fetched) return std::nullopt;
        give(*fetched, sib);
        right = *fetched;
        ++it;
      }
    } else {
      auto fetched = take(it->second, sib);
      if (!fetched) return std::nullopt;
      give(*fetched, sib);
      left = *fetched;
      right = it->second;
      ++it;
    }
    parents[pos / 2] = merkle_node_hash(left, right);
  }
  return parents;
}

}  // namespace

Digest merkle_leaf_hash(std::span<const uint8_t> leaf) {
  Bytes buf;
  buf.reserve(1 + leaf.size());
  buf.push_back(0x00);
  put_raw(buf, leaf);
  return sha256_tagged("fr/v1/merkle", buf);
}

Digest merkle_node_hash(const Digest& left, const Digest& right) {
  Bytes buf;
  buf.reserve(1 + 2 * kDigestSize);
  buf.push_back(0x01);
  put_raw(buf, left);
  put_raw(buf, right);
  return sha256_tagged("fr/v1/merkle", buf);
}

std::optional<Digest> merkle_root(std::span<const Bytes> leaves) {
  if (leaves.empty()) return std::nullopt;
  std::vector<Digest> level;
  level.reserve(leaves.size());
  for (const Bytes& leaf : leaves) level.push_back(merkle_leaf_hash(leaf));
  while (level.size() > 1) {
    std::vector<Digest> next;
    next.reserve((level.size() + 1) / 2);
    for (size_t i = 0; i < level.size(); i += 2) {
      const Digest& left = level[i];
      const Digest& right = (i + 1 < level.size()) ? level[i + 1] : level[i];
      next.push_back(merkle_node_hash(left, right));
    }
    level = std::move(next);
  }
  return level.front();
}

Bytes MerkleMultiProof::encode() const {
  Bytes out;
  put_u32(out, leaf_count);
  put_u32(out, static_cast<uint32_t>(indices.size()));
  for (uint32_t idx : indices) put_u32(out, idx);
  put_u32(out, static_cast<uint32_t>(siblings.size()));
  for (const Digest& d : siblings) put_raw(out, d);
  return out;
}

std::optional<MerkleMultiProof> MerkleMultiProof::decode(
    std::span<const uint8_t> data) {
  ByteReader r(data);
  MerkleMultiProof out;
  auto leaf_count = r.get_u32();
  auto idx_count = r.get_u32();
  if (!leaf_count || !idx_count) return std::nullopt;
  out.leaf_count = *leaf_count;
  if (*idx_count > r.remaining() / 4) return std::nullopt;
  out.indices.reserve(*idx_count);
  for (uint32_t i = 0; i < *idx_count; ++i) {
    auto idx = r.get_u32();
    if (!idx) return std::nullopt;
    out.indices.push_back(*idx);
  }
  auto sib_count = r.get_u32();
  if (!sib_count || *sib_count > r.remaining() / kDigestSize) {
    return std::nullopt;
  }
  out.siblings.reserve(*sib_count);
  for (uint32_t i = 0; i < *sib_count; ++i) {
    auto raw = r.get_raw(kDigestSize);
    if (!raw) return std::nullopt;
    out.siblings.push_back(take_array<kDigestSize>(*raw));
  }
  if (!r.done()) return std::nullopt;
  return out;
}

std::optional<std::pair<std::vector<Bytes>, MerkleMultiProof>> merkle_member(
    std::span<const uint32_t> indices, std::span<const Bytes> leaves) {
  if (leaves.empty() || indices.empty()) return std::nullopt;
  if (!std::is_sorted(indices.begin(), indices.end())) return std::nullopt;
  for (size_t i = 0; i + 1 < indices.size(); ++i) {
    if (indices[i] == indices[i + 1]) return std::nullopt;
  }
  if (indices.back() >= leaves.size()) return std::nullopt;

  // Full bottom-up recomputation, recording the digests a verifier that knows
  // only the selected leaves will be missing.
  std::vector<std::vector<Digest>> levels;
  {
    std::vector<Digest> level;
    level.reserve(leaves.size());
    for (const Bytes& leaf : leaves) level.push_back(merkle_leaf_hash(leaf));
    levels.push_back(std::move(level));
    while (levels.back().size() > 1) {
      const std::vector<Digest>& cur = levels.back();
      std::vector<Digest> next;
      next.reserve((cur.size() + 1) / 2);
      for (size_t i = 0; i < cur.size(); i += 2) {
        const Digest& left = cur[i];
        const Digest& right = (i + 1 < cur.size()) ? cur[i + 1] : cur[i];
        next.push_back(merkle_node_hash(left, right));
      }
      levels.push_back(std::move(next));
    }
  }

  MerkleMultiProof proof;
  proof.indices.assign(indices.begin(), indices.end());
  proof.leaf_count = static_cast<uint32_t>(leaves.size());

  std::map<uint32_t, Digest> known;
  for (uint32_t idx : indices) known[idx] = levels[0][idx];
  for (size_t lvl = 0; lvl + 1 < levels.size(); ++lvl) {
    uint32_t width = static_cast<uint32_t>(levels[lvl].size());
    auto parents = fold_level(
        known, width,
        [&](const Digest&, uint32_t sib) -> std::optional<Digest> {
          return levels[lvl][sib];
        },
        [&](const Digest& d, uint32_t) { proof.siblings.push_back(d); });
    known = std::move(*parents);
  }

  std::vector<Bytes> selected;
  selected.reserve(indices.size());
  for (uint32_t idx : indices) selected.push_back(leaves[idx]);
  return std::make_pair(std::move(selected), std::move(proof));
}

bool merkle_verify(std::span<const Bytes> leaves, const MerkleMultiProof& proof,
                   const Digest& root) {
  if (leaves.size() != proof.indices.size() || leaves.empty()) return false;
  if (proof.leaf_count == 0) return false;
  if (!std::is_sorted(proof.indices.begin(), proof.indices.end())) return false;
  for (size_t i = 0; i + 1 < proof.indices.size(); ++i) {
    if (proof.indices[i] == proof.indices[i + 1]) return false;
  }
  if (proof.indices.back() >= proof.leaf_count) return false;

  std::map<uint32_t, Digest> known;
  for (size_t i = 0; i < leaves.size(); ++i) {
    known[proof.indices[i]] = merkle_leaf_hash(leaves[i]);
  }
  size_t cursor = 0;
  uint32_t width = proof.leaf_count;
  while (width > 1) {
    auto parents = fold_level(
        known, width,
        [&](const Digest&, uint32_t) -> std::optional<Digest> {
          if (cursor >= proof.siblings.size()) return std::nullopt;
          return proof.siblings[cursor++];
        },
        [](const Digest&, uint32_t) {});
    if (!parents) return false;
    known = std::move(*parents);
    width = (width + 1) / 2;
  }
  if (cursor != proof.siblings.size()) return false;
  return known.size() == 1 && known.begin()->second == root;
}

}  // namespace fairrelay
