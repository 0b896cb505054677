#include "vcare/contracts.hpp"

#include <algorithm>

namespace vcare {

std::string_view to_string(ContractErrc e) {
  switch (e) {
    case ContractErrc::Unauthorized: return "Unauthorized";
    case ContractErrc::DuplicateIdentity: return "DuplicateIdentity";
    case ContractErrc::MissingConsent: return "MissingConsent";
    case ContractErrc::UnknownParty: return "UnknownParty";
    case ContractErrc::BadQuery: return "BadQuery";
    case ContractErrc::NonMonotonicRound: return "NonMonotonicRound";
    case ContractErrc::InvalidChain: return "InvalidChain";
  }
  return "Unknown";
}

std::string_view to_string(DenyReason r) {
  switch (r) {
    case DenyReason::NotParty: return "NotParty";
    case DenyReason::Expired: return "Expired";
    case DenyReason::OutOfScope: return "OutOfScope";
  }
  return "Unknown";
}

VsrcContract vsrc_from_deploy(const Transaction& deploy_tx) {
  const auto& p = deploy_tx.as<VsrcDeployPayload>();
  return VsrcContract{deploy_tx.tx_id.hex(), p.vehicle, p.provider, p.pointers, deploy_tx.timestamp};
}

// --- access policy ---------------------------------------------------------------

AccessDecision vsrc_check_access(const VsrcContract& vsrc, const Address& requester,
                                 const QuerySpec& query, Round now) {
  if (requester != vsrc.provider) return AccessDecision::deny(DenyReason::NotParty);

  bool any_allow = false;
  bool any_live = false;
  for (const auto& ptr : vsrc.pointers) {
    if (ptr.permission != Permission::Allow) continue;
    any_allow = true;
    if (ptr.expiry < now) continue;
    any_live = true;
    auto scope = try_parse_query(ptr.query_string);
    if (scope && scope->contains(query)) return AccessDecision::allow();
  }
  if (any_allow && !any_live) return AccessDecision::deny(DenyReason::Expired);
  return AccessDecision::deny(DenyReason::OutOfScope);
}

Digest records_hash(const std::vector<ObdRecord>& records) {
  return hash_bytes(canonical_dump(records_json(records)));
}

QueryResult execute_query(const QuerySpec& query, const CspStore& store, const Address& vehicle) {
  QueryResult result;
  for (const auto& hash : store.confirmed) {
    const auto* block = store.find(hash);
    if (block == nullptr || block->vehicle != vehicle) continue;
    for (const auto& r : block->records) {
      if (query.selects(r)) result.records.push_back(r);
    }
  }
  std::sort(result.records.begin(), result.records.end(), record_less);
  result.result_hash = records_hash(result.records);
  return result;
}

// --- activity contracts --------------------------------------------------------------

void ac_append(ActivityContract& ac, ActivityEntry entry) {
  if (!ac.log.empty() && entry.round < ac.log.back().round) {
    throw ContractError(ContractErrc::NonMonotonicRound,
                        "activity entry round " + std::to_string(entry.round) +
                            " precedes round " + std::to_string(ac.log.back().round));
  }
  ac.log.push_back(entry);
}

Json to_json(const ActivityEntry& e) {
  return Json{{"action", to_string(e.action)},
              {"counterparty", e.counterparty.hex()},
              {"data_hash", e.data_hash.hex()},
              {"reference", e.reference.hex()},
              {"round", e.round}};
}

Json to_json(const ActivityContract& ac) {
  Json log = Json::array();
  for (const auto& e : ac.log) log.push_back(to_json(e));
  return Json{{"log", std::move(log)}, {"owner", ac.owner.hex()}, {"vsrc_refs", ac.vsrc_refs}};
}

Json to_json(const VsrcContract& v) {
  Json ptrs = Json::array();
  for (const auto& p : v.pointers) ptrs.push_back(to_json(p));
  return Json{{"created_at", v.created_at},
              {"pointers", std::move(ptrs)},
              {"provider", v.provider.hex()},
              {"vehicle", v.vehicle.hex()},
              {"vsrc_id", v.vsrc_id}};
}

// --- contract state -------------------------------------------------------------------

ContractState ContractState::from_chain(const Chain& chain) {
  ContractState state;
  for (const auto& b : chain) state.apply_block(b);
  return state;
}

ActivityContract& ContractState::ac_for(const Address& owner) {
  auto [it, inserted] = acs_.try_emplace(owner);
  if (inserted) it->second.owner = owner;
  return it->second;
}

void ContractState::apply(const Transaction& tx, Round round) {
  switch (tx.kind()) {
    case TxKind::Register: {
      const auto& p = tx.as<RegisterPayload>();
      if (registry_.insert(entry_from_registration(p))) ac_for(p.address);
      break;
    }
    case TxKind::VsrcDeploy: {
      auto vsrc = vsrc_from_deploy(tx);
      ac_for(vsrc.vehicle).vsrc_refs.push_back(vsrc.vsrc_id);
      if (vsrc.provider != vsrc.vehicle) ac_for(vsrc.provider).vsrc_refs.push_back(vsrc.vsrc_id);
      latest_vsrc_[{vsrc.vehicle, vsrc.provider}] = vsrc.vsrc_id;
      auto id = vsrc.vsrc_id;
      vsrcs_.insert_or_assign(id, std::move(vsrc));
      break;
    }
    case TxKind::DataUpload: {
      const auto& p = tx.as<DataUploadPayload>();
      ac_append(ac_for(p.vehicle), {round, p.csp, ActivityAction::Upload, p.block_hash, tx.tx_id});
      ac_append(ac_for(p.csp), {round, p.vehicle, ActivityAction::Upload, p.block_hash, tx.tx_id});
      break;
    }
    case TxKind::AccessRequest:
      break;
    case TxKind::AccessLog: {
      const auto& p = tx.as<AccessLogPayload>();
      ac_append(ac_for(p.subject), {round, p.counterparty, p.action, p.data_hash, p.reference});
      if (p.counterparty != p.subject) {
        ac_append(ac_for(p.counterparty), {round, p.subject, p.action, p.data_hash, p.reference});
      }
      break;
    }
  }
}

void ContractState::apply_block(const Block& block) {
  for (const auto& tx : block.transactions) apply(tx, block.header.timestamp);
}

ActivityContract ContractState::activity(const Address& owner) const {
  auto it = acs_.find(owner);
  if (it != acs_.end()) return it->second;
  ActivityContract empty;
  empty.owner = owner;
  return empty;
}

const VsrcContract* ContractState::find_vsrc(const Address& vehicle,
                                             const Address& provider) const {
  auto it = latest_vsrc_.find({vehicle, provider});
  if (it == latest_vsrc_.end()) return nullptr;
  return &vsrcs_.at(it->second);
}

Json ContractState::to_json() const {
  Json registry = Json::array();
  for (const auto& [addr, e] : registry_.entries()) registry.push_back(vcare::to_json(e));
  Json vsrcs = Json::array();
  for (const auto& [id, v] : vsrcs_) vsrcs.push_back(vcare::to_json(v));
  Json acs = Json::array();
  for (const auto& [addr, ac] : acs_) acs.push_back(vcare::to_json(ac));
  return Json{{"activity_contracts", std::move(acs)},
              {"registry", std::move(registry)},
              {"vsrcs", std::move(vsrcs)}};
}

// --- registry contract ------------------------------------------------------------------

KeyPair derive_entity_keypair(const KeyPair& ta_key, std::string_view identity) {
  Digest seed = Sha256().update(ta_key.private_key.view()).update(identity).finish();
  return generate_keypair(seed.view());
}

namespace {

Registration register_with(ContractState& state, const KeyPair& signer, const KeyPair& subject,
                           std::string identity, Role role, Round license_expiry, Round now) {
  const Address signer_addr = derive_address(signer.public_key);
  RegisterPayload payload{std::move(identity), role, derive_address(subject.public_key),
                          subject.public_key, now, license_expiry};
  Transaction tx = make_transaction(payload, signer_addr, {signer_addr}, now);
  add_signature(tx, signer);
  if (auto err = verify_transaction(tx, state.registry())) {
    auto code = *err == TxError::DuplicateIdentity ? ContractErrc::DuplicateIdentity
                                                   : ContractErrc::Unauthorized;
    throw ContractError(code, "registration rejected: " + std::string(to_string(*err)));
  }
  state.apply(tx, now);
  return Registration{entry_from_registration(payload), subject, std::move(tx)};
}

}  // namespace

Registration rc_bootstrap(ContractState& state, const KeyPair& ta_key, std::string identity,
                          Round license_expiry, Round now) {
  if (state.registry().ta_address()) {
    throw ContractError(ContractErrc::Unauthorized, "a trusted authority is already registered");
  }
  return register_with(state, ta_key, ta_key, std::move(identity), Role::TA, license_expiry, now);
}

Registration rc_register(ContractState& state, std::string identity, Role role,
                         Round license_expiry, const KeyPair& signer, Round now) {
  if (state.registry().ta_address() != derive_address(signer.public_key)) {
    throw ContractError(ContractErrc::Unauthorized, "only the trusted authority may register");
  }
  if (state.registry().find(identity) != nullptr) {
    throw ContractError(ContractErrc::DuplicateIdentity, "identity already registered: " + identity);
  }
  KeyPair subject = derive_entity_keypair(signer, identity);
  return register_with(state, signer, subject, std::move(identity), role, license_expiry, now);
}

std::optional<RegistryEntry> rc_lookup(const ContractState& state, std::string_view identity) {
  const auto* e = state.registry().find(identity);
  if (e == nullptr) return std::nullopt;
  return *e;
}

std::optional<RegistryEntry> rc_lookup(const ContractState& state, const Address& address) {
  const auto* e = state.registry().find(address);
  if (e == nullptr) return std::nullopt;
  return *e;
}

// --- VSRC -------------------------------------------------------------------------------

Transaction make_vsrc_deploy(const KeyPair& vehicle, const KeyPair* provider,
                             std::vector<DataPointer> pointers, Round now) {
  const Address v = derive_address(vehicle.public_key);
  const Address p = provider ? derive_address(provider->public_key) : Address{};
  Transaction tx = make_transaction(VsrcDeployPayload{v, p, std::move(pointers)}, v, {v, p}, now);
  add_signature(tx, vehicle);
  if (provider) add_signature(tx, *provider);
  return tx;
}

std::string vsrc_create(ContractState& state, const Transaction& deploy_tx, Round now) {
  if (deploy_tx.kind() != TxKind::VsrcDeploy) {
    throw ContractError(ContractErrc::UnknownParty, "not a VSRC deployment");
  }
  const auto& p = deploy_tx.as<VsrcDeployPayload>();
  const auto* vehicle = state.registry().find(p.vehicle);
  const auto* provider = state.registry().find(p.provider);
  if (vehicle == nullptr || provider == nullptr || vehicle->role != Role::Vehicle ||
      p.vehicle == p.provider) {
    throw ContractError(ContractErrc::UnknownParty, "VSRC party is not registered");
  }
  for (const auto& ptr : p.pointers) {
    if (!try_parse_query(ptr.query_string)) {
      throw ContractError(ContractErrc::BadQuery, "pointer " + ptr.pointer_id + ": bad query");
    }
  }
  const Bytes message = signing_bytes(deploy_tx);
  auto consented = [&](const RegistryEntry& party) {
    return std::any_of(deploy_tx.signatures.begin(), deploy_tx.signatures.end(),
                       [&](const Signature& s) {
                         return s.signer == party.address && verify(party.public_key, message, s);
                       });
  };
  if (!consented(*vehicle) || !consented(*provider)) {
    throw ContractError(ContractErrc::MissingConsent, "VSRC requires both parties' signatures");
  }
  if (auto err = verify_transaction(deploy_tx, state.registry())) {
    auto code = *err == TxError::BadPayload ? ContractErrc::BadQuery : ContractErrc::UnknownParty;
    throw ContractError(code, "VSRC deployment rejected: " + std::string(to_string(*err)));
  }
  state.apply(deploy_tx, now);
  return deploy_tx.tx_id.hex();
}

// --- restore from chain ---------------------------------------------------------------------

ActivityContract ac_reconstruct(const Chain& chain, const Address& owner) {
  if (!validate_chain(chain).empty()) {
    throw ContractError(ContractErrc::InvalidChain, "chain does not validate");
  }
  ActivityContract ac;
  ac.owner = owner;
  for (const auto& block : chain) {
    const Round round = block.header.timestamp;
    for (const auto& tx : block.transactions) {
      switch (tx.kind()) {
        case TxKind::VsrcDeploy: {
          const auto& p = tx.as<VsrcDeployPayload>();
          if (p.vehicle == owner || p.provider == owner) ac.vsrc_refs.push_back(tx.tx_id.hex());
          break;
        }
        case TxKind::DataUpload: {
          const auto& p = tx.as<DataUploadPayload>();
          if (p.vehicle == owner) {
            ac_append(ac, {round, p.csp, ActivityAction::Upload, p.block_hash, tx.tx_id});
          } else if (p.csp == owner) {
            ac_append(ac, {round, p.vehicle, ActivityAction::Upload, p.block_hash, tx.tx_id});
          }
          break;
        }
        case TxKind::AccessLog: {
          const auto& p = tx.as<AccessLogPayload>();
          if (p.subject == owner) {
            ac_append(ac, {round, p.counterparty, p.action, p.data_hash, p.reference});
          } else if (p.counterparty == owner) {
            ac_append(ac, {round, p.subject, p.action, p.data_hash, p.reference});
          }
          break;
        }
        case TxKind::Register:
        case TxKind::AccessRequest:
          break;
      }
    }
  }
  return ac;
}

}  // namespace vcare
