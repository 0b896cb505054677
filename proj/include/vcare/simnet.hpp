#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "vcare/actors.hpp"
#include "vcare/contracts.hpp"
#include "vcare/ledger.hpp"

namespace vcare {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct VehicleFleet {
  std::size_t count = 0;
  double speed_min = 1.0;
  double speed_max = 1.0;
};

struct RsuConfig {
  double position = 0.0;
  double range = 0.0;
  std::size_t fog_node = 0;
};

struct FogNodeConfig {
  std::size_t csp = 0;
};

struct ProviderConfig {
  std::string name;
  std::string role;  // business role, e.g. "insurer"
  double request_probability = 0.0;
};

struct PointerTemplate {
  std::string query;
  Permission permission = Permission::Allow;
  Round expiry = 0;
  std::string terms_of_use;
};

// Deployed once per vehicle for the given provider at initialisation.
struct VsrcTemplate {
  std::size_t provider = 0;
  std::vector<PointerTemplate> pointers;
};

struct PartitionConfig {
  Round start = 0;
  Round end = 0;  // exclusive
  std::vector<std::vector<std::size_t>> groups;  // miner indices
};

struct ScenarioConfig {
  std::uint64_t seed = 0;
  Round rounds = 0;
  double road_length = 1000.0;
  VehicleFleet vehicles;
  std::vector<RsuConfig> rsus;
  std::vector<FogNodeConfig> fog_nodes;
  std::size_t csps = 0;
  std::vector<ProviderConfig> providers;
  unsigned difficulty = 8;
  std::uint64_t miner_hashes_per_round = 256;
  std::size_t max_block_txs = kDefaultMaxBlockTxs;
  std::size_t confirmation_depth = kDefaultConfirmationDepth;
  std::size_t record_rate = 1;
  std::vector<VsrcTemplate> vsrc_templates;
  double message_drop_probability = 0.0;

  // Optional knobs.
  std::size_t log_capacity = kDefaultLogCapacity;
  std::size_t max_records_per_block = kDefaultMaxRecordsPerBlock;
  Round license_expiry = 1'000'000;
  Round resend_after = 10;
  Round quiet_tail = 0;  // last rounds in which no new transactions are initiated
  Round announce_interval = 5;
  Round upload_interval = 1;  // vehicles package at most every this many rounds
  std::size_t extra_miners = 0;
  double anomaly_probability = 0.01;
  std::optional<PartitionConfig> partition;

  // Throws ConfigError.
  void validate() const;
  std::size_t miner_count() const { return fog_nodes.size() + csps + extra_miners; }
};

ScenarioConfig scenario_from_json(const Json& j);  // throws ConfigError
Json to_json(const ScenarioConfig& c);
// 50 vehicles, 5 RSUs, 3 fog nodes, 3 CSPs, difficulty 12, 200 rounds, seed 42.
ScenarioConfig reference_scenario();

// Deterministic generator; streams are derived per actor from the scenario
// seed so adding an actor leaves the others untouched.
class Rng {
 public:
  Rng() = default;
  Rng(std::uint64_t seed, ByteView label);

  std::uint64_t next() { return engine_(); }
  // Uniform on [0, bound) without modulo bias; bound > 0.
  std::uint64_t below(std::uint64_t bound);
  // Uniform on [lo, hi).
  double uniform(double lo, double hi);
  bool chance(double p);
  std::string state() const;

 private:
  std::mt19937_64 engine_;
};

struct Grant {
  Digest request;
  Address vehicle;
  AccessDecision decision;
  std::vector<ObdRecord> records;
  Digest result_hash;
};

enum class MessageKind { DataBlockMsg, TxMsg, BlockMsg, AlertMsg, GrantMsg };
std::string_view to_string(MessageKind k);

struct MessageEnvelope {
  std::uint64_t id = 0;
  Address from;
  Address to;
  Round sent = 0;
  Round deliver_at = 0;
  std::variant<DataBlock, Transaction, std::shared_ptr<const Chain>, Alert, Grant> payload;

  MessageKind kind() const { return static_cast<MessageKind>(payload.index()); }
};

struct MinerNode {
  Address address;
  KeyPair key;
  std::optional<std::size_t> csp;  // index into World::csps when this miner is a CSP
  Chain chain;
  ContractState state;
  TxIndex index;
  std::map<Digest, Transaction> mempool;
  std::map<std::uint64_t, Digest> arrival;  // arrival order -> tx id
  std::uint64_t arrivals = 0;
  std::set<Digest> validated_blocks;
  std::set<Digest> invalid_blocks;
  std::vector<std::shared_ptr<const Chain>> received;
  std::optional<MiningJob> job;
  std::vector<Digest> job_txs;
  Work max_work = 0;
  Rng rng;
};

struct CspNode {
  std::size_t miner = 0;
  CspStore store;
  std::vector<MessageEnvelope> inbox;
};

struct VehicleNode {
  std::unique_ptr<VehicleState> state;
  std::size_t csp = 0;
  double position = 0.0;
  double speed = 0.0;
  std::optional<std::size_t> region;  // fog node of the last RSU contact
  std::vector<Alert> alerts;
  std::uint64_t records_logged = 0;
  std::vector<ObdRecord> accepted;  // every record the logger accepted
  Rng rng;
};

struct ProviderNode {
  Address address;
  KeyPair key;
  ProviderConfig config;
  std::vector<Grant> grants;  // delivered, not yet analysed
  std::vector<Grant> received;  // every grant ever delivered
  Rng rng;
};

struct RsuNode {
  Address address;
  RsuConfig config;
  std::vector<Alert> alerts;
};

struct FogNode {
  Address address;
  std::size_t miner = 0;
  std::size_t csp = 0;
};

struct World {
  ScenarioConfig config;
  Round round = 0;
  KeyPair ta;
  Address ta_address;
  std::vector<MinerNode> miners;
  std::vector<CspNode> csps;
  std::vector<FogNode> fogs;
  std::vector<RsuNode> rsus;
  std::vector<VehicleNode> vehicles;
  std::vector<ProviderNode> providers;
  std::vector<MessageEnvelope> in_flight;
  std::uint64_t next_message_id = 0;
  Rng network;
  std::vector<Json> events;
  std::uint64_t total_hash_attempts = 0;

  // Chain that fork choice selects over every miner's current chain.
  const Chain& best_chain() const;
  // Hash over the whole observable state, for determinism checks.
  Digest digest() const;
};

// Throws ConfigError.
World init_system(const ScenarioConfig& config);
void step(World& world);

struct SimReport {
  Chain final_chain;
  std::size_t chain_length = 0;
  std::uint64_t packaged_blocks = 0;
  std::uint64_t confirmed_uploads = 0;
  double mean_upload_latency = 0.0;
  Round max_upload_latency = 0;
  std::uint64_t grants = 0;
  std::uint64_t denials = 0;
  std::uint64_t total_hash_attempts = 0;
  std::uint64_t purged_records = 0;
  std::uint64_t alerts = 0;
  std::uint64_t records_logged = 0;
  std::vector<ObdRecord> accepted;  // every record the logger accepted
  std::uint64_t records_rejected = 0;
  std::uint64_t messages_dropped = 0;
  std::uint64_t blocks_mined = 0;
  std::uint64_t reorgs = 0;

  Json summary_json() const;
};

// Metrics are recomputed from the event log alone.
SimReport compute_report(const std::vector<Json>& events, const Chain& final_chain);

struct ScenarioRun {
  World world;
  SimReport report;
};

// init_system, `rounds` steps, final chain validation. Throws ConfigError, or
// std::logic_error if the final chain fails to validate.
ScenarioRun run_scenario_world(const ScenarioConfig& config);
SimReport run_scenario(const ScenarioConfig& config);

}  // namespace vcare
