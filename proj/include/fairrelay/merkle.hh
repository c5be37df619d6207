#pragma once

// Merkle trees over ordered byte-string leaves, with multi-proofs for
// arbitrary leaf subsets. Leaf and interior nodes are hashed under distinct
// domain prefixes (second-preimage hardening), and odd-width levels duplicate
// their last node.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fairrelay/bytes.hh"
#include "fairrelay/crypto.hh"

namespace fairrelay {

[[nodiscard]] Digest merkle_leaf_hash(std::span<const uint8_t> leaf);
[[nodiscard]] Digest merkle_node_hash(const Digest& left, const Digest& right);

// Root of the tree over `leaves`; nullopt for an empty forest.
[[nodiscard]] std::optional<Digest> merkle_root(std::span<const Bytes> leaves);

struct MerkleMultiProof {
  std::vector<uint32_t> indices;  // sorted, 0-based leaf positions
  uint32_t leaf_count = 0;
  std::vector<Digest> siblings;  // bottom-up, ascending position per level

  [[nodiscard]] Bytes encode() const;
  [[nodiscard]] static std::optional<MerkleMultiProof> decode(
      std::span<const uint8_t> data);
  friend bool operator==(const MerkleMultiProof&,
                         const MerkleMultiProof&) = default;
};

// Extracts the leaves at `indices` (sorted, unique, in range) together with a
// proof that they sit at those positions under merkle_root(leaves).
[[nodiscard]] std::optional<std::pair<std::vector<Bytes>, MerkleMultiProof>>
merkle_member(std::span<const uint32_t> indices, std::span<const Bytes> leaves);

// Verifies that `leaves` are exactly the claimed positions of a tree with the
// given root.
[[nodiscard]] bool merkle_verify(std::span<const Bytes> leaves,
                                 const MerkleMultiProof& proof,
                                 const Digest& root);

}  // namespace fairrelay
