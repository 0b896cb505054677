#include "vcare/transaction.hpp"

#include <array>
#include <utility>

namespace vcare {

namespace {

template <class E, std::size_t N>
std::optional<E> lookup(const std::array<std::pair<E, std::string_view>, N>& table,
                        std::string_view s) {
  for (const auto& [value, name] : table) {
    if (name == s) return value;
  }
  return std::nullopt;
}

template <class E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N>& table, E value) {
  for (const auto& [v, name] : table) {
    if (v == value) return name;
  }
  return "unknown";
}

constexpr std::array<std::pair<Role, std::string_view>, 6> kRoles{{
    {Role::Vehicle, "vehicle"},
    {Role::CSP, "csp"},
    {Role::RSU, "rsu"},
    {Role::FogNode, "fog_node"},
    {Role::ServiceProvider, "service_provider"},
    {Role::TA, "ta"},
}};

constexpr std::array<std::pair<ActivityAction, std::string_view>, 6> kActions{{
    {ActivityAction::Upload, "upload"},
    {ActivityAction::AccessGranted, "access_granted"},
    {ActivityAction::AccessDenied, "access_denied"},
    {ActivityAction::Backup, "backup"},
    {ActivityAction::Restore, "restore"},
    {ActivityAction::Notify, "notify"},
}};

constexpr std::array<std::pair<TxKind, std::string_view>, 5> kKinds{{
    {TxKind::Register, "register"},
    {TxKind::VsrcDeploy, "vsrc_deploy"},
    {TxKind::DataUpload, "data_upload"},
    {TxKind::AccessRequest, "access_request"},
    {TxKind::AccessLog, "access_log"},
}};

Json addresses_json(const std::vector<Address>& addrs) {
  Json arr = Json::array();
  for (const auto& a : addrs) arr.push_back(a.hex());
  return arr;
}

Json unsigned_json(const Transaction& tx) {
  return Json{{"initiator", tx.initiator.hex()},
              {"kind", to_string(tx.kind())},
              {"payload", payload_json(tx.payload)},
              {"required_signers", addresses_json(tx.required_signers)},
              {"timestamp", tx.timestamp}};
}

Role role_field(const Json& j, std::string_view key) {
  auto role = role_from_string(json_field::string(j, key));
  if (!role) throw DecodeError("unknown role");
  return *role;
}

Payload payload_from_json(TxKind kind, const Json& j) {
  using namespace json_field;
  switch (kind) {
    case TxKind::Register:
      expect_keys(j, {"address", "identity", "license_expiry", "public_key", "registration_date",
                      "role"});
      return RegisterPayload{string(j, "identity"), role_field(j, "role"), address(j, "address"),
                             public_key(j, "public_key"), u64(j, "registration_date"),
                             u64(j, "license_expiry")};
    case TxKind::VsrcDeploy: {
      expect_keys(j, {"pointers", "provider", "vehicle"});
      VsrcDeployPayload p{address(j, "vehicle"), address(j, "provider"), {}};
      for (const auto& ptr : array(j, "pointers")) p.pointers.push_back(data_pointer_from_json(ptr));
      return p;
    }
    case TxKind::DataUpload:
      expect_keys(j, {"block_hash", "csp", "seq", "timestamp", "vehicle"});
      return DataUploadPayload{digest(j, "block_hash"), u64(j, "timestamp"), address(j, "csp"),
                               address(j, "vehicle"), u64(j, "seq")};
    case TxKind::AccessRequest:
      expect_keys(j, {"csp", "query", "vehicle"});
      return AccessRequestPayload{address(j, "vehicle"), address(j, "csp"), string(j, "query")};
    case TxKind::AccessLog: {
      expect_keys(j, {"action", "counterparty", "data_hash", "reason", "reference", "subject"});
      auto action = activity_action_from_string(string(j, "action"));
      if (!action) throw DecodeError("unknown activity action");
      return AccessLogPayload{*action,
                              address(j, "subject"),
                              address(j, "counterparty"),
                              digest(j, "reference"),
                              digest(j, "data_hash"),
                              string(j, "reason")};
    }
  }
  throw DecodeError("unknown transaction kind");
}

}  // namespace

std::string_view to_string(Role role) { return name_of(kRoles, role); }
std::optional<Role> role_from_string(std::string_view s) { return lookup(kRoles, s); }

std::string_view to_string(Permission p) { return p == Permission::Allow ? "allow" : "deny"; }

std::string_view to_string(ActivityAction a) { return name_of(kActions, a); }
std::optional<ActivityAction> activity_action_from_string(std::string_view s) {
  return lookup(kActions, s);
}

std::string_view to_string(TxKind kind) { return name_of(kKinds, kind); }
std::optional<TxKind> tx_kind_from_string(std::string_view s) { return lookup(kKinds, s); }

TxKind kind_of(const Payload& payload) { return static_cast<TxKind>(payload.index()); }

bool is_multisig_kind(TxKind kind) {
  return kind == TxKind::DataUpload || kind == TxKind::VsrcDeploy;
}

Json to_json(const DataPointer& p) {
  return Json{{"expiry", p.expiry},
              {"permission", to_string(p.permission)},
              {"pointer_id", p.pointer_id},
              {"query", p.query_string},
              {"terms_of_use", p.terms_of_use}};
}

DataPointer data_pointer_from_json(const Json& j) {
  using namespace json_field;
  expect_keys(j, {"expiry", "permission", "pointer_id", "query", "terms_of_use"});
  auto perm = string(j, "permission");
  if (perm != "allow" && perm != "deny") throw DecodeError("unknown permission");
  return DataPointer{string(j, "pointer_id"), string(j, "query"),
                     perm == "allow" ? Permission::Allow : Permission::Deny, u64(j, "expiry"),
                     string(j, "terms_of_use")};
}

Json payload_json(const Payload& payload) {
  struct Visitor {
    Json operator()(const RegisterPayload& p) const {
      return Json{{"address", p.address.hex()},
                  {"identity", p.identity},
                  {"license_expiry", p.license_expiry},
                  {"public_key", p.public_key.hex()},
                  {"registration_date", p.registration_date},
                  {"role", to_string(p.role)}};
    }
    Json operator()(const VsrcDeployPayload& p) const {
      Json ptrs = Json::array();
      for (const auto& ptr : p.pointers) ptrs.push_back(to_json(ptr));
      return Json{{"pointers", ptrs}, {"provider", p.provider.hex()}, {"vehicle", p.vehicle.hex()}};
    }
    Json operator()(const DataUploadPayload& p) const {
      return Json{{"block_hash", p.block_hash.hex()},
                  {"csp", p.csp.hex()},
                  {"seq", p.seq},
                  {"timestamp", p.timestamp},
                  {"vehicle", p.vehicle.hex()}};
    }
    Json operator()(const AccessRequestPayload& p) const {
      return Json{{"csp", p.csp.hex()}, {"query", p.query}, {"vehicle", p.vehicle.hex()}};
    }
    Json operator()(const AccessLogPayload& p) const {
      return Json{{"action", to_string(p.action)},
                  {"counterparty", p.counterparty.hex()},
                  {"data_hash", p.data_hash.hex()},
                  {"reason", p.reason},
                  {"reference", p.reference.hex()},
                  {"subject", p.subject.hex()}};
    }
  };
  return std::visit(Visitor{}, payload);
}

Bytes signing_bytes(const Transaction& tx) {
  auto s = canonical_dump(unsigned_json(tx));
  return Bytes(s.begin(), s.end());
}

Digest compute_tx_id(const Transaction& tx) { return hash_bytes(signing_bytes(tx)); }

Transaction make_transaction(Payload payload, const Address& initiator,
                             std::vector<Address> required_signers, Round timestamp) {
  Transaction tx;
  tx.payload = std::move(payload);
  tx.initiator = initiator;
  tx.required_signers = std::move(required_signers);
  tx.timestamp = timestamp;
  tx.tx_id = compute_tx_id(tx);
  return tx;
}

void add_signature(Transaction& tx, const KeyPair& key) {
  tx.signatures.push_back(sign(key.private_key, signing_bytes(tx)));
}

Json to_json(const Transaction& tx) {
  Json j = unsigned_json(tx);
  Json sigs = Json::array();
  for (const auto& s : tx.signatures) {
    sigs.push_back(Json{{"signer", s.signer.hex()}, {"value", to_hex(s.value)}});
  }
  j["signatures"] = std::move(sigs);
  j["tx_id"] = tx.tx_id.hex();
  return j;
}

Transaction transaction_from_json(const Json& j) {
  using namespace json_field;
  expect_keys(j, {"initiator", "kind", "payload", "required_signers", "signatures", "timestamp",
                  "tx_id"});
  auto kind = tx_kind_from_string(string(j, "kind"));
  if (!kind) throw DecodeError("unknown transaction kind");
  Transaction tx;
  tx.tx_id = digest(j, "tx_id");
  tx.payload = payload_from_json(*kind, get(j, "payload"));
  tx.initiator = address(j, "initiator");
  for (const auto& a : array(j, "required_signers")) {
    if (!a.is_string()) throw DecodeError("required_signers: expected hex strings");
    Json wrapper{{"a", a}};
    tx.required_signers.push_back(address(wrapper, "a"));
  }
  for (const auto& s : array(j, "signatures")) {
    expect_keys(s, {"signer", "value"});
    Signature sig;
    sig.signer = address(s, "signer");
    auto value = string(s, "value");
    if (value.size() != 2 * sig.value.size()) throw DecodeError("signature: wrong length");
    try {
      auto bytes = from_hex(value);
      std::copy(bytes.begin(), bytes.end(), sig.value.begin());
    } catch (const std::invalid_argument& e) {
      throw DecodeError(std::string("signature: ") + e.what());
    }
    tx.signatures.push_back(sig);
  }
  tx.timestamp = u64(j, "timestamp");
  return tx;
}

}  // namespace vcare
