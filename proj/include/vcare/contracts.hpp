#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "vcare/datastore.hpp"
#include "vcare/ledger.hpp"
#include "vcare/query.hpp"
#include "vcare/registry.hpp"

namespace vcare {

enum class ContractErrc {
  Unauthorized,
  DuplicateIdentity,
  MissingConsent,
  UnknownParty,
  BadQuery,
  NonMonotonicRound,
  InvalidChain,
};

std::string_view to_string(ContractErrc e);

class ContractError : public std::runtime_error {
 public:
  ContractError(ContractErrc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ContractErrc code() const { return code_; }

 private:
  ContractErrc code_;
};

// Pairwise access policy between one vehicle and one provider. The id is the
// hex tx_id of the VsrcDeploy transaction that created it.
struct VsrcContract {
  std::string vsrc_id;
  Address vehicle;
  Address provider;
  std::vector<DataPointer> pointers;
  Round created_at = 0;

  friend bool operator==(const VsrcContract&, const VsrcContract&) = default;
};

VsrcContract vsrc_from_deploy(const Transaction& deploy_tx);

enum class DenyReason { NotParty, Expired, OutOfScope };

std::string_view to_string(DenyReason r);

struct AccessDecision {
  bool allowed = false;
  DenyReason reason = DenyReason::NotParty;  // meaningful only when denied

  static AccessDecision allow() { return {true, DenyReason::NotParty}; }
  static AccessDecision deny(DenyReason r) { return {false, r}; }
  friend bool operator==(const AccessDecision&, const AccessDecision&) = default;
};

// Allow iff the requester is the provider and some unexpired Allow pointer
// covers the query. Deny reasons are reported in the order NotParty,
// Expired, OutOfScope.
AccessDecision vsrc_check_access(const VsrcContract& vsrc, const Address& requester,
                                 const QuerySpec& query, Round now);

struct QueryResult {
  std::vector<ObdRecord> records;
  Digest result_hash;
};

// Confirmed records of `vehicle` selected by the query, ordered by
// (timestamp, parameter), with the hash of their canonical encoding.
QueryResult execute_query(const QuerySpec& query, const CspStore& store, const Address& vehicle);
Digest records_hash(const std::vector<ObdRecord>& records);

struct ActivityEntry {
  Round round = 0;
  Address counterparty;
  ActivityAction action = ActivityAction::Upload;
  Digest data_hash;
  Digest reference;  // transaction that caused the entry

  friend bool operator==(const ActivityEntry&, const ActivityEntry&) = default;
};

struct ActivityContract {
  Address owner;
  std::vector<std::string> vsrc_refs;
  std::vector<ActivityEntry> log;

  friend bool operator==(const ActivityContract&, const ActivityContract&) = default;
};

// Throws ContractError(NonMonotonicRound) if entry.round precedes the last entry.
void ac_append(ActivityContract& ac, ActivityEntry entry);

Json to_json(const ActivityEntry& e);
Json to_json(const ActivityContract& ac);
Json to_json(const VsrcContract& v);

// Contract state derived from chain transactions: the registry, every VSRC
// and every entity's activity contract. Maintained incrementally by applying
// validated blocks in order.
class ContractState {
 public:
  static ContractState from_chain(const Chain& chain);

  // Applies a transaction that already passed verify_transaction.
  void apply(const Transaction& tx, Round round);
  void apply_block(const Block& block);

  const Registry& registry() const { return registry_; }
  const std::map<std::string, VsrcContract>& vsrcs() const { return vsrcs_; }
  const std::map<Address, ActivityContract>& activity_contracts() const { return acs_; }

  // Empty contract for unknown owners.
  ActivityContract activity(const Address& owner) const;
  // Most recently deployed VSRC for the pair, if any.
  const VsrcContract* find_vsrc(const Address& vehicle, const Address& provider) const;

  Json to_json() const;

  friend bool operator==(const ContractState&, const ContractState&) = default;

 private:
  ActivityContract& ac_for(const Address& owner);

  Registry registry_;
  std::map<std::string, VsrcContract> vsrcs_;
  std::map<std::pair<Address, Address>, std::string> latest_vsrc_;
  std::map<Address, ActivityContract> acs_;
};

struct Registration {
  RegistryEntry entry;
  KeyPair keypair;
  Transaction tx;
};

// Keys for a registered identity are derived by the TA from its own secret
// and the identity string.
KeyPair derive_entity_keypair(const KeyPair& ta_key, std::string_view identity);

// The TA registering itself; valid only as the first registration.
Registration rc_bootstrap(ContractState& state, const KeyPair& ta_key, std::string identity,
                          Round license_expiry, Round now);

// Registers an entity on behalf of the TA and applies the transaction to
// `state`. Throws ContractError(Unauthorized | DuplicateIdentity).
Registration rc_register(ContractState& state, std::string identity, Role role,
                         Round license_expiry, const KeyPair& signer, Round now);

std::optional<RegistryEntry> rc_lookup(const ContractState& state, std::string_view identity);
std::optional<RegistryEntry> rc_lookup(const ContractState& state, const Address& address);

// Draft VsrcDeploy signed by the vehicle and, when given, the provider.
Transaction make_vsrc_deploy(const KeyPair& vehicle, const KeyPair* provider,
                             std::vector<DataPointer> pointers, Round now);

// Creates the contract from a VsrcDeploy transaction. Throws
// ContractError(MissingConsent | UnknownParty | BadQuery).
std::string vsrc_create(ContractState& state, const Transaction& deploy_tx, Round now);

// Rebuilds one entity's activity contract from the chain alone.
// Throws ContractError(InvalidChain).
ActivityContract ac_reconstruct(const Chain& chain, const Address& owner);

}  // namespace vcare
