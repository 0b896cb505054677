#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "vcare/canonical.hpp"
#include "vcare/crypto.hpp"
#include "vcare/obd.hpp"

namespace vcare {

enum class Role { Vehicle, CSP, RSU, FogNode, ServiceProvider, TA };

std::string_view to_string(Role role);
std::optional<Role> role_from_string(std::string_view s);

enum class Permission { Allow, Deny };

std::string_view to_string(Permission p);

// Activity contract log actions. AccessGranted/AccessDenied/Notify/Backup/
// Restore travel on chain inside AccessLog transactions; Upload entries are
// derived from DataUpload transactions.
enum class ActivityAction { Upload, AccessGranted, AccessDenied, Backup, Restore, Notify };

std::string_view to_string(ActivityAction a);
std::optional<ActivityAction> activity_action_from_string(std::string_view s);

struct DataPointer {
  std::string pointer_id;
  std::string query_string;
  Permission permission = Permission::Allow;
  Round expiry = 0;
  std::string terms_of_use;

  friend bool operator==(const DataPointer&, const DataPointer&) = default;
};

struct RegisterPayload {
  std::string identity;
  Role role = Role::Vehicle;
  Address address;
  PublicKey public_key;
  Round registration_date = 0;
  Round license_expiry = 0;

  friend bool operator==(const RegisterPayload&, const RegisterPayload&) = default;
};

struct VsrcDeployPayload {
  Address vehicle;
  Address provider;
  std::vector<DataPointer> pointers;

  friend bool operator==(const VsrcDeployPayload&, const VsrcDeployPayload&) = default;
};

struct DataUploadPayload {
  Digest block_hash;
  Round timestamp = 0;
  Address csp;
  Address vehicle;
  std::uint64_t seq = 0;

  friend bool operator==(const DataUploadPayload&, const DataUploadPayload&) = default;
};

struct AccessRequestPayload {
  Address vehicle;
  Address csp;
  std::string query;

  friend bool operator==(const AccessRequestPayload&, const AccessRequestPayload&) = default;
};

// One activity-contract event. `subject` is the vehicle whose data or health
// the event concerns; `counterparty` the stakeholder on the other side.
struct AccessLogPayload {
  ActivityAction action = ActivityAction::AccessGranted;
  Address subject;
  Address counterparty;
  Digest reference;  // triggering transaction id, zero when none
  Digest data_hash;
  std::string reason;

  friend bool operator==(const AccessLogPayload&, const AccessLogPayload&) = default;
};

using Payload = std::variant<RegisterPayload, VsrcDeployPayload, DataUploadPayload,
                             AccessRequestPayload, AccessLogPayload>;

enum class TxKind { Register, VsrcDeploy, DataUpload, AccessRequest, AccessLog };

std::string_view to_string(TxKind kind);
std::optional<TxKind> tx_kind_from_string(std::string_view s);
TxKind kind_of(const Payload& payload);
bool is_multisig_kind(TxKind kind);

struct Transaction {
  Digest tx_id;
  Payload payload;
  Address initiator;
  std::vector<Address> required_signers;
  std::vector<Signature> signatures;
  Round timestamp = 0;

  TxKind kind() const { return kind_of(payload); }

  template <class P>
  const P& as() const {
    return std::get<P>(payload);
  }

  friend bool operator==(const Transaction&, const Transaction&) = default;
};

// Canonical bytes without `tx_id` and `signatures`; this is what tx_id
// hashes and what every signer signs.
Bytes signing_bytes(const Transaction& tx);
Digest compute_tx_id(const Transaction& tx);

// Builds an unsigned transaction with its id filled in.
Transaction make_transaction(Payload payload, const Address& initiator,
                             std::vector<Address> required_signers, Round timestamp);

// Appends the key holder's signature over signing_bytes(tx).
void add_signature(Transaction& tx, const KeyPair& key);

Json to_json(const DataPointer& p);
DataPointer data_pointer_from_json(const Json& j);
Json payload_json(const Payload& payload);
Json to_json(const Transaction& tx);
Transaction transaction_from_json(const Json& j);

}  // namespace vcare
