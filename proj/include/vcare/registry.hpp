#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "vcare/canonical.hpp"
#include "vcare/transaction.hpp"

namespace vcare {

struct RegistryEntry {
  std::string identity_string;
  Address address;
  Role role = Role::Vehicle;
  PublicKey public_key;
  Round registration_date = 0;
  Round license_expiry = 0;
  std::string activity_contract_ref;

  friend bool operator==(const RegistryEntry&, const RegistryEntry&) = default;
};

std::string activity_contract_ref_for(const Address& owner);
RegistryEntry entry_from_registration(const RegisterPayload& p);
Json to_json(const RegistryEntry& e);

// The global identity registry. Bijective between identity strings and
// addresses; entries are never removed.
class Registry {
 public:
  const RegistryEntry* find(const Address& address) const;
  const RegistryEntry* find(std::string_view identity) const;
  bool contains(const Address& address) const { return find(address) != nullptr; }

  // Returns false (and leaves the registry untouched) when either the
  // identity or the address is already taken.
  bool insert(RegistryEntry entry);

  std::optional<Address> ta_address() const { return ta_; }
  std::size_t size() const { return by_address_.size(); }
  const std::map<Address, RegistryEntry>& entries() const { return by_address_; }

  friend bool operator==(const Registry& a, const Registry& b) {
    return a.by_address_ == b.by_address_;
  }

 private:
  std::map<Address, RegistryEntry> by_address_;
  std::map<std::string, Address, std::less<>> by_identity_;
  std::optional<Address> ta_;
};

}  // namespace vcare
