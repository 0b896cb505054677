#include "vcare/actors.hpp"

#include <algorithm>

namespace vcare {

std::string_view to_string(ActorErrc e) {
  switch (e) {
    case ActorErrc::StorageFull: return "StorageFull";
    case ActorErrc::OutOfRange: return "OutOfRange";
    case ActorErrc::NonMonotonicTimestamp: return "NonMonotonicTimestamp";
    case ActorErrc::NothingToUpload: return "NothingToUpload";
    case ActorErrc::UnknownCsp: return "UnknownCsp";
    case ActorErrc::HashMismatch: return "HashMismatch";
    case ActorErrc::NotAddressee: return "NotAddressee";
    case ActorErrc::UnregisteredRequester: return "UnregisteredRequester";
    case ActorErrc::BadQuery: return "BadQuery";
  }
  return "Unknown";
}

std::string_view to_string(CosignRefusal r) {
  switch (r) {
    case CosignRefusal::DataNotFound: return "DataNotFound";
    case CosignRefusal::NotAddressee: return "NotAddressee";
    case CosignRefusal::BadVehicleSignature: return "BadVehicleSignature";
  }
  return "Unknown";
}

std::string_view to_string(Severity s) {
  switch (s) {
    case Severity::Info: return "info";
    case Severity::Warning: return "warning";
    case Severity::Critical: return "critical";
  }
  return "unknown";
}

Digest compute_block_hash(const Address& vehicle, std::uint64_t seq,
                          const std::vector<ObdRecord>& records) {
  Json j{{"records", records_json(records)}, {"seq", seq}, {"vehicle", vehicle.hex()}};
  return hash_bytes(canonical_dump(j));
}

Json to_json(const DataBlock& block) {
  return Json{{"block_hash", block.block_hash.hex()},
              {"records", records_json(block.records)},
              {"seq", block.seq},
              {"vehicle", block.vehicle.hex()}};
}

TxIndex index_transactions(const Chain& chain) {
  TxIndex index;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    for (const auto& tx : chain[i].transactions) index.emplace(tx.tx_id, i);
  }
  return index;
}

// --- vehicle ---------------------------------------------------------------------------

VehicleState::VehicleState(KeyPair keypair, std::size_t capacity)
    : keypair_(keypair), address_(derive_address(keypair.public_key)), capacity_(capacity) {}

void VehicleState::log_record(const ObdRecord& record) {
  if (!in_range(record.parameter, record.value)) {
    throw ActorError(ActorErrc::OutOfRange,
                     record.parameter + " value " + std::to_string(record.value) + " out of range");
  }
  if (last_logged_ && !record_less(*last_logged_, record)) {
    throw ActorError(ActorErrc::NonMonotonicTimestamp, "record does not follow the last logged one");
  }
  if (log_.size() >= capacity_) {
    throw ActorError(ActorErrc::StorageFull, "local log is at capacity");
  }
  log_.emplace(next_record_id_++, record);
  last_logged_ = record;
}

std::size_t VehicleState::unpackaged_count() const {
  return static_cast<std::size_t>(
      std::distance(log_.lower_bound(packaged_until_), log_.end()));
}

std::pair<DataBlock, Transaction> VehicleState::package_data_block(const Address& csp,
                                                                   const Registry& registry,
                                                                   std::size_t max_records,
                                                                   Round now) {
  auto first = log_.lower_bound(packaged_until_);
  if (first == log_.end() || max_records == 0) {
    throw ActorError(ActorErrc::NothingToUpload, "no unpackaged records");
  }
  const auto* entry = registry.find(csp);
  if (entry == nullptr || entry->role != Role::CSP) {
    throw ActorError(ActorErrc::UnknownCsp, "not a registered CSP: " + csp.hex());
  }

  DataBlock block;
  block.vehicle = address_;
  block.seq = next_seq_;
  const std::uint64_t first_id = first->first;
  for (auto it = first; it != log_.end() && block.records.size() < max_records; ++it) {
    block.records.push_back(it->second);
    packaged_until_ = it->first + 1;
  }
  block.block_hash = compute_block_hash(address_, block.seq, block.records);
  ++next_seq_;

  Transaction draft = make_transaction(DataUploadPayload{block.block_hash, now, csp, address_, block.seq},
                                       address_, {address_, csp}, now);
  add_signature(draft, keypair_);
  pending_.emplace(draft.tx_id, PendingUpload{block, draft, first_id, now, now});
  return {block, draft};
}

PurgeResult VehicleState::purge_local(const Chain& chain, std::size_t confirmation_depth) {
  return purge_local(index_transactions(chain), chain.size(), confirmation_depth);
}

PurgeResult VehicleState::purge_local(const TxIndex& index, std::size_t chain_length,
                                      std::size_t confirmation_depth) {
  PurgeResult result;
  for (auto it = pending_.begin(); it != pending_.end();) {
    auto pos = index.find(it->first);
    if (pos == index.end() || chain_length - 1 - pos->second < confirmation_depth) {
      ++it;
      continue;
    }
    const auto n = it->second.block.records.size();
    for (std::uint64_t id = it->second.first_record_id; id < it->second.first_record_id + n; ++id) {
      result.records_purged += log_.erase(id);
    }
    result.confirmed.push_back(std::move(it->second));
    it = pending_.erase(it);
  }
  return result;
}

std::vector<ObdRecord> VehicleState::local_log() const {
  std::vector<ObdRecord> out;
  out.reserve(log_.size());
  for (const auto& [id, r] : log_) out.push_back(r);
  return out;
}

void VehicleState::mark_sent(const Digest& tx_id, Round now) {
  auto it = pending_.find(tx_id);
  if (it != pending_.end()) it->second.last_sent = now;
}

Json VehicleState::to_json() const {
  Json pending = Json::array();
  for (const auto& [id, p] : pending_) {
    pending.push_back(Json{{"block_hash", p.block.block_hash.hex()},
                           {"last_sent", p.last_sent},
                           {"tx_id", id.hex()}});
  }
  return Json{{"address", address_.hex()},
              {"local_log", records_json(local_log())},
              {"next_seq", next_seq_},
              {"packaged_until", packaged_until_},
              {"pending_uploads", std::move(pending)}};
}

// --- CSP ---------------------------------------------------------------------------------

void csp_receive_data(CspStore& store, const DataBlock& block) {
  if (block.records.empty() ||
      compute_block_hash(block.vehicle, block.seq, block.records) != block.block_hash) {
    throw ActorError(ActorErrc::HashMismatch, "data block does not match its hash");
  }
  store.blocks.try_emplace(block.block_hash, block);
}

std::variant<Transaction, CosignRefusal> csp_cosign(const CspStore& store, const KeyPair& csp_key,
                                                    const Transaction& draft,
                                                    const Registry& registry) {
  if (draft.kind() != TxKind::DataUpload) return CosignRefusal::NotAddressee;
  const auto& p = draft.as<DataUploadPayload>();
  if (p.csp != store.owner || p.csp != derive_address(csp_key.public_key)) {
    return CosignRefusal::NotAddressee;
  }
  const auto* vehicle = registry.find(p.vehicle);
  const Bytes message = signing_bytes(draft);
  const bool vehicle_signed =
      vehicle != nullptr && compute_tx_id(draft) == draft.tx_id &&
      std::any_of(draft.signatures.begin(), draft.signatures.end(), [&](const Signature& s) {
        return s.signer == p.vehicle && verify(vehicle->public_key, message, s);
      });
  if (!vehicle_signed) return CosignRefusal::BadVehicleSignature;
  const auto* block = store.find(p.block_hash);
  if (block == nullptr || block->vehicle != p.vehicle) return CosignRefusal::DataNotFound;

  Transaction completed = draft;
  const Address me = store.owner;
  std::erase_if(completed.signatures, [&](const Signature& s) { return s.signer == me; });
  add_signature(completed, csp_key);
  return completed;
}

std::size_t csp_update_confirmed(CspStore& store, const Chain& chain,
                                 std::size_t confirmation_depth) {
  std::size_t newly = 0;
  if (chain.size() <= confirmation_depth) return 0;
  const std::size_t last_deep = chain.size() - 1 - confirmation_depth;
  for (std::size_t i = 0; i <= last_deep; ++i) {
    for (const auto& tx : chain[i].transactions) {
      if (tx.kind() != TxKind::DataUpload) continue;
      const auto& p = tx.as<DataUploadPayload>();
      if (p.csp != store.owner || !store.blocks.contains(p.block_hash)) continue;
      newly += store.confirmed.insert(p.block_hash).second ? 1 : 0;
    }
  }
  return newly;
}

// --- access ------------------------------------------------------------------------------

Transaction request_access(const KeyPair& requester, const Registry& registry,
                           const Address& vehicle, const Address& csp, const std::string& query,
                           Round now) {
  const Address me = derive_address(requester.public_key);
  if (!registry.contains(me)) {
    throw ActorError(ActorErrc::UnregisteredRequester, "requester is not registered");
  }
  try {
    parse_query(query);
  } catch (const QueryError& e) {
    throw ActorError(ActorErrc::BadQuery, e.what());
  }
  Transaction tx = make_transaction(AccessRequestPayload{vehicle, csp, query}, me, {me}, now);
  add_signature(tx, requester);
  return tx;
}

AccessOutcome csp_handle_access(const CspStore& store, const ContractState& contracts,
                                const KeyPair& csp_key, const Transaction& request, Round now) {
  const auto& req = request.as<AccessRequestPayload>();
  const Address me = derive_address(csp_key.public_key);
  if (req.csp != me || store.owner != me) {
    throw ActorError(ActorErrc::NotAddressee, "request addressed to another CSP");
  }
  const QuerySpec query = parse_query(req.query);

  AccessOutcome out;
  const auto* vsrc = contracts.find_vsrc(req.vehicle, request.initiator);
  out.decision = vsrc ? vsrc_check_access(*vsrc, request.initiator, query, now)
                      : AccessDecision::deny(DenyReason::NotParty);

  AccessLogPayload log;
  log.subject = req.vehicle;
  log.counterparty = request.initiator;
  log.reference = request.tx_id;
  if (out.decision.allowed) {
    out.result = execute_query(query, store, req.vehicle);
    log.action = ActivityAction::AccessGranted;
    log.data_hash = out.result.result_hash;
  } else {
    log.action = ActivityAction::AccessDenied;
    log.reason = std::string(to_string(out.decision.reason));
  }
  out.log_tx = make_transaction(log, me, {me}, now);
  add_signature(out.log_tx, csp_key);
  return out;
}

// --- analytics stub ----------------------------------------------------------------------

Json to_json(const Alert& a) {
  return Json{{"parameter", a.parameter},
              {"round", a.round},
              {"rule_id", a.rule_id},
              {"severity", to_string(a.severity)},
              {"value", number_json(a.value)},
              {"vehicle", a.vehicle.hex()}};
}

std::vector<Alert> analyze_and_alert(const Address& vehicle, const std::vector<ObdRecord>& records) {
  std::vector<Alert> alerts;
  for (const auto& r : records) {
    for (const auto& rule : kAlertRules) {
      if (r.parameter != rule.parameter) continue;
      const bool fires = rule.above ? r.value > rule.threshold : r.value < rule.threshold;
      if (fires) {
        alerts.push_back(Alert{vehicle, r.timestamp, rule.severity, r.parameter, r.value,
                               std::string(rule.rule_id)});
      }
    }
  }
  return alerts;
}

Transaction make_notify(const KeyPair& provider, const Alert& alert, Round now) {
  const Address me = derive_address(provider.public_key);
  AccessLogPayload log;
  log.action = ActivityAction::Notify;
  log.subject = alert.vehicle;
  log.counterparty = me;
  log.data_hash = hash_bytes(canonical_dump(to_json(alert)));
  log.reason = alert.rule_id;
  Transaction tx = make_transaction(log, me, {me}, now);
  add_signature(tx, provider);
  return tx;
}

}  // namespace vcare
