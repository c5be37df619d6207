#pragma once

// Party identities. Substrate state (ledger, channels, judge) and the message
// bus address parties by dense integer ids; the roster maps ids to their
// display names and public keys.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fairrelay/crypto.hh"

namespace fairrelay {

using PartyId = uint32_t;
using Round = uint32_t;
using Tokens = int64_t;

struct RosterEntry {
  std::string name;
  PublicKey pub;
};

class Roster {
 public:
  PartyId add(std::string name, const PublicKey& pub) {
    entries_.push_back(RosterEntry{std::move(name), pub});
    return static_cast<PartyId>(entries_.size() - 1);
  }

  [[nodiscard]] size_t size() const { return entries_.size(); }
  [[nodiscard]] bool contains(PartyId id) const { return id < entries_.size(); }
  [[nodiscard]] const RosterEntry& at(PartyId id) const { return entries_[id]; }
  [[nodiscard]] const PublicKey& key(PartyId id) const {
    return entries_[id].pub;
  }
  [[nodiscard]] const std::string& name(PartyId id) const {
    return entries_[id].name;
  }
  [[nodiscard]] std::optional<PartyId> find(const PublicKey& pub) const {
    for (size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].pub == pub) return static_cast<PartyId>(i);
    }
    return std::nullopt;
  }

 private:
  std::vector<RosterEntry> entries_;
};

}  // namespace fairrelay
