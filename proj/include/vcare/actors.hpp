#pragma once

#include <array>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "vcare/contracts.hpp"
#include "vcare/datastore.hpp"
#include "vcare/ledger.hpp"

namespace vcare {

inline constexpr std::size_t kDefaultLogCapacity = 1024;
inline constexpr std::size_t kDefaultConfirmationDepth = 2;
inline constexpr std::size_t kDefaultMaxRecordsPerBlock = 64;

enum class ActorErrc {
  StorageFull,
  OutOfRange,
  NonMonotonicTimestamp,
  NothingToUpload,
  UnknownCsp,
  HashMismatch,
  NotAddressee,
  UnregisteredRequester,
  BadQuery,
};

std::string_view to_string(ActorErrc e);

class ActorError : public std::runtime_error {
 public:
  ActorError(ActorErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ActorErrc code() const { return code_; }

 private:
  ActorErrc code_;
};

// Position of every transaction in a chain, by tx_id.
using TxIndex = std::map<Digest, std::size_t>;
TxIndex index_transactions(const Chain& chain);

struct PendingUpload {
  DataBlock block;
  Transaction draft;
  std::uint64_t first_record_id = 0;  // records [first, first + block size) of the log
  Round packaged_at = 0;
  Round last_sent = 0;
};

struct PurgeResult {
  std::size_t records_purged = 0;
  std::vector<PendingUpload> confirmed;
};

// On-board logger and uploader. Records stay in the local log, in
// (timestamp, parameter) order, until their upload is confirmed on chain.
class VehicleState {
 public:
  VehicleState(KeyPair keypair, std::size_t capacity = kDefaultLogCapacity);

  const Address& address() const { return address_; }
  const KeyPair& keypair() const { return keypair_; }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t next_seq() const { return next_seq_; }

  // Throws ActorError(StorageFull | OutOfRange | NonMonotonicTimestamp).
  void log_record(const ObdRecord& record);

  // Moves the oldest not-yet-packaged records (at most max_records) into a
  // DataBlock and drafts the DataUpload transaction, signed by the vehicle.
  // Throws ActorError(NothingToUpload | UnknownCsp).
  std::pair<DataBlock, Transaction> package_data_block(const Address& csp, const Registry& registry,
                                                       std::size_t max_records, Round now);

  // Drops the records of every pending upload whose transaction has at least
  // confirmation_depth blocks above it.
  PurgeResult purge_local(const Chain& chain, std::size_t confirmation_depth);
  PurgeResult purge_local(const TxIndex& index, std::size_t chain_length,
                          std::size_t confirmation_depth);

  std::vector<ObdRecord> local_log() const;
  std::size_t log_size() const { return log_.size(); }
  std::size_t unpackaged_count() const;
  const std::map<Digest, PendingUpload>& pending_uploads() const { return pending_; }
  void mark_sent(const Digest& tx_id, Round now);

  Json to_json() const;

 private:
  KeyPair keypair_;
  Address address_;
  std::size_t capacity_;
  std::map<std::uint64_t, ObdRecord> log_;  // keyed by record id, insertion order
  std::uint64_t next_record_id_ = 0;
  std::uint64_t packaged_until_ = 0;  // record ids below this are in a pending upload
  std::optional<ObdRecord> last_logged_;
  std::uint64_t next_seq_ = 0;
  std::map<Digest, PendingUpload> pending_;
};

// Stores a block delivered through the fog node. Throws ActorError(HashMismatch).
void csp_receive_data(CspStore& store, const DataBlock& block);

enum class CosignRefusal { DataNotFound, NotAddressee, BadVehicleSignature };
std::string_view to_string(CosignRefusal r);

// Adds the CSP's signature if the referenced block is in the store.
std::variant<Transaction, CosignRefusal> csp_cosign(const CspStore& store, const KeyPair& csp_key,
                                                    const Transaction& draft,
                                                    const Registry& registry);

// Marks stored blocks whose DataUpload transaction is confirmation_depth deep.
// Returns the number of newly confirmed blocks.
std::size_t csp_update_confirmed(CspStore& store, const Chain& chain,
                                 std::size_t confirmation_depth);

// Single-signed access request. Throws ActorError(UnregisteredRequester | BadQuery).
Transaction request_access(const KeyPair& requester, const Registry& registry,
                           const Address& vehicle, const Address& csp, const std::string& query,
                           Round now);

struct AccessOutcome {
  AccessDecision decision;
  QueryResult result;       // empty unless granted
  Transaction log_tx;       // AccessLog signed by the CSP
};

// Evaluates the vehicle's VSRC with the requester and answers from confirmed
// data only. Throws ActorError(NotAddressee) for requests meant for another CSP.
AccessOutcome csp_handle_access(const CspStore& store, const ContractState& contracts,
                                const KeyPair& csp_key, const Transaction& request, Round now);

enum class Severity { Info, Warning, Critical };
std::string_view to_string(Severity s);

struct Alert {
  Address vehicle;
  Round round = 0;
  Severity severity = Severity::Info;
  std::string parameter;
  double value = 0.0;
  std::string rule_id;

  friend bool operator==(const Alert&, const Alert&) = default;
};

Json to_json(const Alert& a);

struct AlertRule {
  std::string_view rule_id;
  std::string_view parameter;
  bool above;  // fires on value > threshold, else on value < threshold
  double threshold;
  Severity severity;
};

inline constexpr std::array<AlertRule, 4> kAlertRules{{
    {"coolant_overheat", "coolant_temp", true, 110.0, Severity::Critical},
    {"engine_overrev", "engine_rpm", true, 6500.0, Severity::Warning},
    {"fuel_low", "fuel_level", false, 10.0, Severity::Info},
    {"dtc_present", "dtc_count", true, 0.0, Severity::Warning},
}};

// One alert per (record, rule) firing, in record order then rule order.
std::vector<Alert> analyze_and_alert(const Address& vehicle, const std::vector<ObdRecord>& records);

// AccessLog(Notify) recording that `provider` raised an alert about a vehicle.
Transaction make_notify(const KeyPair& provider, const Alert& alert, Round now);

}  // namespace vcare
