#include "vcare/registry.hpp"

namespace vcare {

std::string activity_contract_ref_for(const Address& owner) { return "ac-" + owner.hex(); }

RegistryEntry entry_from_registration(const RegisterPayload& p) {
  return RegistryEntry{p.identity,         p.address,        p.role,
                       p.public_key,       p.registration_date, p.license_expiry,
                       activity_contract_ref_for(p.address)};
}

Json to_json(const RegistryEntry& e) {
  return Json{{"activity_contract_ref", e.activity_contract_ref},
              {"address", e.address.hex()},
              {"identity_string", e.identity_string},
              {"license_expiry", e.license_expiry},
              {"public_key", e.public_key.hex()},
              {"registration_date", e.registration_date},
              {"role", to_string(e.role)}};
}

const RegistryEntry* Registry::find(const Address& address) const {
  auto it = by_address_.find(address);
  return it == by_address_.end() ? nullptr : &it->second;
}

const RegistryEntry* Registry::find(std::string_view identity) const {
  auto it = by_identity_.find(identity);
  return it == by_identity_.end() ? nullptr : find(it->second);
}

bool Registry::insert(RegistryEntry entry) {
  if (by_address_.contains(entry.address) || by_identity_.contains(entry.identity_string)) {
    return false;
  }
  if (entry.role == Role::TA && !ta_) ta_ = entry.address;
  by_identity_.emplace(entry.identity_string, entry.address);
  Address addr = entry.address;
  by_address_.emplace(addr, std::move(entry));
  return true;
}

}  // namespace vcare
