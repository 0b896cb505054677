#include "vcare/simnet.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace vcare {

// --- rng --------------------------------------------------------------------------

namespace {

std::uint64_t load_le64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::array<std::uint8_t, 8> le64(std::uint64_t v) {
  std::array<std::uint8_t, 8> out{};
  for (auto& b : out) {
    b = static_cast<std::uint8_t>(v & 0xff);
    v >>= 8;
  }
  return out;
}

}  // namespace

Rng::Rng(std::uint64_t seed, ByteView label) {
  Digest d = Sha256().update(ByteView(le64(seed))).update(label).finish();
  engine_.seed(load_le64(d.data().data()));
}

std::uint64_t Rng::below(std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = 0;
  do {
    x = engine_();
  } while (x >= limit);
  return x % bound;
}

double Rng::uniform(double lo, double hi) {
  const double unit = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * unit;
}

bool Rng::chance(double p) {
  if (p <= 0.0) {
    engine_();  // keep the stream position independent of p
    return false;
  }
  return uniform(0.0, 1.0) < p;
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

std::string_view to_string(MessageKind k) {
  switch (k) {
    case MessageKind::DataBlockMsg: return "data_block";
    case MessageKind::TxMsg: return "tx";
    case MessageKind::BlockMsg: return "block";
    case MessageKind::AlertMsg: return "alert";
    case MessageKind::GrantMsg: return "grant";
  }
  return "unknown";
}

// --- configuration ------------------------------------------------------------------

namespace {

template <class T>
T opt(const Json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  return it->get<T>();
}

void check_known_keys(const Json& j, std::initializer_list<std::string_view> keys,
                      std::string_view where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(keys.begin(), keys.end(), it.key()) == keys.end()) {
      throw ConfigError(std::string(where) + ": unknown field '" + it.key() + "'");
    }
  }
}

template <class T>
T req(const Json& j, const char* key, std::string_view where) {
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(std::string(where) + ": missing field '" + key + "'");
  return it->get<T>();
}

}  // namespace

ScenarioConfig scenario_from_json(const Json& j) {
  try {
    check_known_keys(j,
                     {"seed", "rounds", "road_length", "vehicles", "rsus", "fog_nodes", "csps",
                      "providers", "difficulty", "miner_hashes_per_round", "max_block_txs",
                      "confirmation_depth", "record_rate", "vsrc_templates",
                      "message_drop_probability", "log_capacity", "max_records_per_block",
                      "license_expiry", "resend_after", "quiet_tail", "announce_interval",
                      "extra_miners", "anomaly_probability", "partition", "upload_interval"},
                     "config");
    ScenarioConfig c;
    c.seed = req<std::uint64_t>(j, "seed", "config");
    c.rounds = req<Round>(j, "rounds", "config");
    c.road_length = req<double>(j, "road_length", "config");

    const Json& v = j.at("vehicles");
    check_known_keys(v, {"count", "speed_min", "speed_max"}, "vehicles");
    c.vehicles = {req<std::size_t>(v, "count", "vehicles"), req<double>(v, "speed_min", "vehicles"),
                  req<double>(v, "speed_max", "vehicles")};

    for (const auto& r : j.at("rsus")) {
      check_known_keys(r, {"position", "range", "fog_node"}, "rsus");
      c.rsus.push_back({req<double>(r, "position", "rsus"), req<double>(r, "range", "rsus"),
                        req<std::size_t>(r, "fog_node", "rsus")});
    }
    for (const auto& f : j.at("fog_nodes")) {
      check_known_keys(f, {"csp"}, "fog_nodes");
      c.fog_nodes.push_back({req<std::size_t>(f, "csp", "fog_nodes")});
    }
    c.csps = req<std::size_t>(j, "csps", "config");
    for (const auto& p : j.at("providers")) {
      check_known_keys(p, {"name", "role", "request_probability"}, "providers");
      c.providers.push_back({req<std::string>(p, "name", "providers"),
                             opt<std::string>(p, "role", "service_provider"),
                             opt<double>(p, "request_probability", 0.0)});
    }
    c.difficulty = req<unsigned>(j, "difficulty", "config");
    c.miner_hashes_per_round = req<std::uint64_t>(j, "miner_hashes_per_round", "config");
    c.max_block_txs = opt<std::size_t>(j, "max_block_txs", kDefaultMaxBlockTxs);
    c.confirmation_depth = opt<std::size_t>(j, "confirmation_depth", kDefaultConfirmationDepth);
    c.record_rate = opt<std::size_t>(j, "record_rate", 1);
    if (j.contains("vsrc_templates")) {
      for (const auto& t : j.at("vsrc_templates")) {
        check_known_keys(t, {"provider", "pointers"}, "vsrc_templates");
        VsrcTemplate tpl;
        tpl.provider = req<std::size_t>(t, "provider", "vsrc_templates");
        for (const auto& p : t.at("pointers")) {
          check_known_keys(p, {"query", "permission", "expiry", "terms_of_use"}, "pointers");
          auto perm = opt<std::string>(p, "permission", "allow");
          if (perm != "allow" && perm != "deny") throw ConfigError("pointers: bad permission");
          tpl.pointers.push_back({req<std::string>(p, "query", "pointers"),
                                  perm == "allow" ? Permission::Allow : Permission::Deny,
                                  req<Round>(p, "expiry", "pointers"),
                                  opt<std::string>(p, "terms_of_use", "")});
        }
        c.vsrc_templates.push_back(std::move(tpl));
      }
    }
    c.message_drop_probability = opt<double>(j, "message_drop_probability", 0.0);
    c.log_capacity = opt<std::size_t>(j, "log_capacity", kDefaultLogCapacity);
    c.max_records_per_block = opt<std::size_t>(j, "max_records_per_block", kDefaultMaxRecordsPerBlock);
    c.license_expiry = opt<Round>(j, "license_expiry", c.license_expiry);
    c.resend_after = opt<Round>(j, "resend_after", c.resend_after);
    c.quiet_tail = opt<Round>(j, "quiet_tail", 0);
    c.announce_interval = opt<Round>(j, "announce_interval", c.announce_interval);
    c.extra_miners = opt<std::size_t>(j, "extra_miners", 0);
    c.anomaly_probability = opt<double>(j, "anomaly_probability", c.anomaly_probability);
    c.upload_interval = opt<Round>(j, "upload_interval", 1);
    if (j.contains("partition")) {
      const Json& p = j.at("partition");
      check_known_keys(p, {"start", "end", "groups"}, "partition");
      c.partition = PartitionConfig{req<Round>(p, "start", "partition"),
                                    req<Round>(p, "end", "partition"),
                                    req<std::vector<std::vector<std::size_t>>>(p, "groups", "partition")};
    }
    c.validate();
    return c;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

Json to_json(const ScenarioConfig& c) {
  Json rsus = Json::array();
  for (const auto& r : c.rsus) {
    rsus.push_back({{"fog_node", r.fog_node}, {"position", number_json(r.position)},
                    {"range", number_json(r.range)}});
  }
  Json fogs = Json::array();
  for (const auto& f : c.fog_nodes) fogs.push_back({{"csp", f.csp}});
  Json providers = Json::array();
  for (const auto& p : c.providers) {
    providers.push_back({{"name", p.name}, {"request_probability", number_json(p.request_probability)},
                         {"role", p.role}});
  }
  Json templates = Json::array();
  for (const auto& t : c.vsrc_templates) {
    Json ptrs = Json::array();
    for (const auto& p : t.pointers) {
      ptrs.push_back({{"expiry", p.expiry}, {"permission", to_string(p.permission)},
                      {"query", p.query}, {"terms_of_use", p.terms_of_use}});
    }
    templates.push_back({{"pointers", ptrs}, {"provider", t.provider}});
  }
  Json j{{"seed", c.seed},
         {"rounds", c.rounds},
         {"road_length", number_json(c.road_length)},
         {"vehicles", {{"count", c.vehicles.count}, {"speed_max", number_json(c.vehicles.speed_max)},
                       {"speed_min", number_json(c.vehicles.speed_min)}}},
         {"rsus", rsus},
         {"fog_nodes", fogs},
         {"csps", c.csps},
         {"providers", providers},
         {"difficulty", c.difficulty},
         {"miner_hashes_per_round", c.miner_hashes_per_round},
         {"max_block_txs", c.max_block_txs},
         {"confirmation_depth", c.confirmation_depth},
         {"record_rate", c.record_rate},
         {"vsrc_templates", templates},
         {"message_drop_probability", number_json(c.message_drop_probability)},
         {"log_capacity", c.log_capacity},
         {"max_records_per_block", c.max_records_per_block},
         {"license_expiry", c.license_expiry},
         {"resend_after", c.resend_after},
         {"quiet_tail", c.quiet_tail},
         {"announce_interval", c.announce_interval},
         {"extra_miners", c.extra_miners},
         {"anomaly_probability", number_json(c.anomaly_probability)},
         {"upload_interval", c.upload_interval}};
  if (c.partition) {
    j["partition"] = {{"end", c.partition->end}, {"groups", c.partition->groups},
                      {"start", c.partition->start}};
  }
  return j;
}

void ScenarioConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("invalid config: " + msg); };
  auto probability = [](double p) { return std::isfinite(p) && p >= 0.0 && p <= 1.0; };

  if (!std::isfinite(road_length) || road_length <= 0.0) fail("road_length must be positive");
  if (!std::isfinite(vehicles.speed_min) || !std::isfinite(vehicles.speed_max) ||
      vehicles.speed_min < 0.0 || vehicles.speed_max < vehicles.speed_min) {
    fail("vehicle speed range");
  }
  if (vehicles.count > 0 && csps == 0) fail("vehicles need at least one CSP to upload to");
  for (const auto& r : rsus) {
    if (!(r.position >= 0.0 && r.position < road_length)) fail("RSU position outside the road");
    if (!(r.range >= 0.0)) fail("RSU range must be non-negative");
    if (r.fog_node >= fog_nodes.size()) fail("RSU references an unknown fog node");
  }
  for (const auto& f : fog_nodes) {
    if (f.csp >= csps) fail("fog node references an unknown CSP");
  }
  if (miner_count() == 0) fail("at least one miner (fog node, CSP or extra miner) is required");
  for (std::size_t i = 0; i < providers.size(); ++i) {
    if (providers[i].name.empty()) fail("provider name must not be empty");
    if (!probability(providers[i].request_probability)) fail("request_probability outside [0,1]");
    for (std::size_t k = 0; k < i; ++k) {
      if (providers[k].name == providers[i].name) fail("duplicate provider name");
    }
  }
  if (difficulty > kMaxDifficulty) fail("difficulty above " + std::to_string(kMaxDifficulty));
  if (max_block_txs == 0) fail("max_block_txs must be at least 1");
  if (record_rate > kObdParameters.size()) fail("record_rate exceeds the parameter set");
  if (max_records_per_block == 0) fail("max_records_per_block must be at least 1");
  if (upload_interval == 0) fail("upload_interval must be at least 1");
  if (!probability(message_drop_probability)) fail("message_drop_probability outside [0,1]");
  if (!probability(anomaly_probability)) fail("anomaly_probability outside [0,1]");
  for (const auto& t : vsrc_templates) {
    if (t.provider >= providers.size()) fail("VSRC template references an unknown provider");
    for (const auto& p : t.pointers) {
      if (!try_parse_query(p.query)) fail("VSRC template query does not parse: " + p.query);
    }
  }
  if (partition) {
    if (partition->end < partition->start) fail("partition ends before it starts");
    std::set<std::size_t> seen;
    for (const auto& g : partition->groups) {
      for (auto m : g) {
        if (m >= miner_count()) fail("partition references an unknown miner");
        if (!seen.insert(m).second) fail("miner listed in two partition groups");
      }
    }
  }
}

ScenarioConfig reference_scenario() {
  ScenarioConfig c;
  c.seed = 42;
  c.rounds = 200;
  c.road_length = 2000.0;
  c.vehicles = {50, 5.0, 25.0};
  c.rsus = {{200.0, 80.0, 0}, {600.0, 80.0, 0}, {1000.0, 80.0, 1}, {1400.0, 80.0, 1},
            {1800.0, 80.0, 2}};
  c.fog_nodes = {{0}, {1}, {2}};
  c.csps = 3;
  c.providers = {{"insurer", "insurer", 0.3},
                 {"manufacturer", "manufacturer", 0.3},
                 {"its_admin", "its_administration", 0.2}};
  c.difficulty = 12;
  c.miner_hashes_per_round = 256;
  c.max_block_txs = 64;
  c.confirmation_depth = 2;
  c.record_rate = 2;
  c.vsrc_templates = {
      {0, {{"select throttle_position,vehicle_speed from 0 to 1000000", Permission::Allow, 1000000,
            "driving-behaviour pricing only"}}},
      {1, {{"select coolant_temp,dtc_count,engine_rpm from 0 to 1000000", Permission::Allow, 150,
            "diagnostics and recalls"}}},
      {2, {{"select vehicle_speed from 0 to 1000000", Permission::Allow, 1000000, "traffic statistics"},
           {"select fuel_level from 0 to 1000000", Permission::Deny, 1000000, ""}}},
  };
  c.message_drop_probability = 0.01;
  c.quiet_tail = 20;
  c.upload_interval = 5;
  return c;
}

// --- world helpers ----------------------------------------------------------------------

namespace {

double ring_distance(double a, double b, double length) {
  double d = std::fmod(std::fabs(a - b), length);
  return std::min(d, length - d);
}

bool quiet(const World& w) {
  return w.round + w.config.quiet_tail >= w.config.rounds;
}

void emit(World& w, const std::string& type, Json fields) {
  fields["round"] = w.round;
  fields["type"] = type;
  w.events.push_back(std::move(fields));
}

void send(World& w, const Address& from, const Address& to,
          decltype(MessageEnvelope::payload) payload) {
  MessageEnvelope m;
  m.id = w.next_message_id++;
  m.from = from;
  m.to = to;
  m.sent = w.round;
  m.deliver_at = w.round + 1;
  m.payload = std::move(payload);
  w.in_flight.push_back(std::move(m));
}

std::optional<std::size_t> miner_index(const World& w, const Address& a) {
  for (std::size_t i = 0; i < w.miners.size(); ++i) {
    if (w.miners[i].address == a) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> partition_group(const World& w, std::size_t miner) {
  const auto& p = w.config.partition;
  for (std::size_t g = 0; g < p->groups.size(); ++g) {
    if (std::find(p->groups[g].begin(), p->groups[g].end(), miner) != p->groups[g].end()) return g;
  }
  return std::nullopt;
}

bool blocked_by_partition(const World& w, const MessageEnvelope& m) {
  const auto& p = w.config.partition;
  if (!p || w.round < p->start || w.round >= p->end) return false;
  auto a = miner_index(w, m.from);
  auto b = miner_index(w, m.to);
  if (!a || !b) return false;
  return partition_group(w, *a) != partition_group(w, *b);
}

void broadcast_tx(World& w, const Address& from, const Transaction& tx) {
  for (const auto& miner : w.miners) {
    if (miner.address != from) send(w, from, miner.address, tx);
  }
}

void broadcast_chain(World& w, std::size_t miner) {
  auto snapshot = std::make_shared<const Chain>(w.miners[miner].chain);
  for (std::size_t i = 0; i < w.miners.size(); ++i) {
    if (i != miner) send(w, w.miners[miner].address, w.miners[i].address, snapshot);
  }
}

void offer_tx(World& w, MinerNode& miner, const Transaction& tx) {
  if (miner.mempool.contains(tx.tx_id)) return;
  if (auto err = verify_transaction(tx, miner.state.registry())) {
    emit(w, "tx_rejected", {{"miner", miner.address.hex()}, {"tx_id", tx.tx_id.hex()},
                            {"error", to_string(*err)}});
    return;
  }
  miner.mempool.emplace(tx.tx_id, tx);
  miner.arrival.emplace(miner.arrivals++, tx.tx_id);
}

void append_own_block(MinerNode& miner, Block block) {
  const Digest h = block.hash();
  miner.state.apply_block(block);
  for (const auto& tx : block.transactions) miner.index.emplace(tx.tx_id, miner.chain.size());
  miner.chain.push_back(std::move(block));
  miner.validated_blocks.insert(h);
  miner.max_work = std::max(miner.max_work, chain_work(miner.chain));
}

void adopt_chain(World& w, MinerNode& miner, const Chain& chain) {
  const Digest old_tip = miner.chain.back().hash();
  const std::size_t old_len = miner.chain.size();
  const bool extends = chain.size() >= old_len && chain[old_len - 1].hash() == old_tip;
  miner.chain = chain;
  if (extends) {
    for (std::size_t i = old_len; i < miner.chain.size(); ++i) {
      miner.state.apply_block(miner.chain[i]);
      for (const auto& tx : miner.chain[i].transactions) miner.index.emplace(tx.tx_id, i);
    }
  } else {
    miner.state = ContractState::from_chain(miner.chain);
    miner.index = index_transactions(miner.chain);
  }
  miner.job.reset();
  miner.job_txs.clear();
  miner.max_work = std::max(miner.max_work, chain_work(miner.chain));
  emit(w, "adopt", {{"miner", miner.address.hex()},
                    {"from_tip", old_tip.hex()},
                    {"to_tip", miner.chain.back().hash().hex()},
                    {"length", miner.chain.size()},
                    {"reorg", !extends}});
}

// Validates the part of `candidate` this miner has not seen before.
bool accept_candidate(World& w, MinerNode& miner, const Chain& candidate) {
  if (candidate.empty() || candidate.front().hash() != miner.chain.front().hash()) return false;
  std::size_t fork = 0;
  while (fork < candidate.size() && fork < miner.chain.size() &&
         candidate[fork].hash() == miner.chain[fork].hash()) {
    ++fork;
  }
  std::set<Digest> fresh_ids;
  std::optional<Registry> registry;
  const ValidationOptions options{w.config.max_block_txs};
  for (std::size_t i = fork; i < candidate.size(); ++i) {
    const Block& b = candidate[i];
    const Digest h = b.hash();
    if (miner.invalid_blocks.contains(h)) return false;
    bool dup = false;
    for (const auto& tx : b.transactions) {
      auto pos = miner.index.find(tx.tx_id);
      if ((pos != miner.index.end() && pos->second < fork) || !fresh_ids.insert(tx.tx_id).second) {
        dup = true;
      }
    }
    if (miner.validated_blocks.contains(h) && !dup) continue;
    if (!registry) {
      registry.emplace();
      for (std::size_t k = 0; k < i; ++k) {
        for (const auto& tx : candidate[k].transactions) apply_registration(*registry, tx);
      }
    }
    if (dup || !validate_block(b, candidate[i - 1].header, *registry, options).empty()) {
      miner.invalid_blocks.insert(h);
      emit(w, "invalid_block", {{"miner", miner.address.hex()}, {"block", h.hex()}});
      return false;
    }
    miner.validated_blocks.insert(h);
    if (registry) {
      for (const auto& tx : b.transactions) apply_registration(*registry, tx);
    }
  }
  return true;
}

Round quantize(double value, double step) { return static_cast<Round>(std::llround(value / step)); }

double sample_value(std::string_view parameter, Rng& rng, bool anomaly) {
  if (parameter == "coolant_temp") {
    return static_cast<double>(quantize(anomaly ? rng.uniform(111, 130) : rng.uniform(75, 105), 1));
  }
  if (parameter == "engine_rpm") {
    return static_cast<double>(quantize(anomaly ? rng.uniform(6600, 8000) : rng.uniform(700, 4500), 0.25)) / 4.0;
  }
  if (parameter == "fuel_level") {
    return static_cast<double>(quantize(anomaly ? rng.uniform(1, 9.8) : rng.uniform(10, 100), 0.1)) / 10.0;
  }
  if (parameter == "dtc_count") {
    return anomaly ? static_cast<double>(1 + rng.below(4)) : 0.0;
  }
  if (parameter == "throttle_position") {
    return static_cast<double>(quantize(rng.uniform(0, 100), 0.1)) / 10.0;
  }
  return static_cast<double>(quantize(rng.uniform(0, 130), 1));
}

std::string random_query(Rng& rng, Round now) {
  std::vector<std::string> params;
  for (const auto& p : kObdParameters) {
    if (rng.chance(0.35)) params.emplace_back(p.name);
  }
  if (params.empty()) params.emplace_back(kObdParameters[rng.below(kObdParameters.size())].name);
  const Round from = now > 30 ? now - 30 : 0;
  std::string q = "select ";
  for (std::size_t i = 0; i < params.size(); ++i) q += (i ? "," : "") + params[i];
  return q + " from " + std::to_string(from) + " to " + std::to_string(now);
}

// --- step phases ----------------------------------------------------------------------------

void move_and_log(World& w) {
  std::uint64_t logged = 0;
  for (auto& v : w.vehicles) {
    v.position = std::fmod(v.position + v.speed, w.config.road_length);
    std::vector<std::size_t> params;
    for (std::size_t j = 0; j < w.config.record_rate; ++j) {
      params.push_back((w.round + j) % kObdParameters.size());
    }
    std::sort(params.begin(), params.end());
    for (auto p : params) {
      const auto name = kObdParameters[p].name;
      const bool anomaly = v.rng.chance(w.config.anomaly_probability);
      ObdRecord r{w.round, std::string(name), sample_value(name, v.rng, anomaly)};
      try {
        v.state->log_record(r);
        v.accepted.push_back(r);
        ++v.records_logged;
        ++logged;
      } catch (const ActorError& e) {
        emit(w, "record_rejected", {{"vehicle", v.state->address().hex()},
                                    {"reason", to_string(e.code())}});
      }
    }
  }
  if (logged > 0) emit(w, "logged", {{"records", logged}});
}

void upload_in_range(World& w) {
  if (quiet(w)) return;
  for (auto& v : w.vehicles) {
    std::optional<std::size_t> nearest;
    double best = 0.0;
    for (std::size_t i = 0; i < w.rsus.size(); ++i) {
      const double d = ring_distance(v.position, w.rsus[i].config.position, w.config.road_length);
      if (d <= w.rsus[i].config.range && (!nearest || d < best)) {
        nearest = i;
        best = d;
      }
    }
    if (!nearest) continue;
    v.region = w.rsus[*nearest].config.fog_node;
    const Address csp = w.miners[w.csps[v.csp].miner].address;
    const Address& me = v.state->address();

    for (const auto& [tx_id, pending] : v.state->pending_uploads()) {
      if (pending.last_sent + w.config.resend_after > w.round) continue;
      send(w, me, csp, pending.block);
      send(w, me, csp, pending.draft);
      emit(w, "resend", {{"vehicle", me.hex()}, {"tx_id", tx_id.hex()}});
      v.state->mark_sent(tx_id, w.round);
    }

    if (v.state->unpackaged_count() == 0 || w.round % w.config.upload_interval != 0) continue;
    auto [block, draft] = v.state->package_data_block(csp, w.miners[w.csps[v.csp].miner].state.registry(),
                                                       w.config.max_records_per_block, w.round);
    emit(w, "package", {{"vehicle", me.hex()},
                        {"seq", block.seq},
                        {"tx_id", draft.tx_id.hex()},
                        {"block_hash", block.block_hash.hex()},
                        {"records", block.records.size()},
                        {"rsu", *nearest}});
    send(w, me, csp, block);
    send(w, me, csp, draft);
  }
}

void deliver(World& w) {
  std::vector<MessageEnvelope> due;
  std::vector<MessageEnvelope> later;
  for (auto& m : w.in_flight) {
    (m.deliver_at <= w.round ? due : later).push_back(std::move(m));
  }
  w.in_flight = std::move(later);
  std::sort(due.begin(), due.end(), [](const auto& a, const auto& b) { return a.id < b.id; });

  for (auto& m : due) {
    const bool random_drop = w.network.chance(w.config.message_drop_probability);
    const bool partitioned = blocked_by_partition(w, m);
    if (random_drop || partitioned) {
      emit(w, "message_dropped", {{"id", m.id}, {"kind", to_string(m.kind())},
                                  {"from", m.from.hex()}, {"to", m.to.hex()},
                                  {"reason", partitioned ? "partition" : "random"}});
      continue;
    }
    if (auto mi = miner_index(w, m.to)) {
      MinerNode& miner = w.miners[*mi];
      if (m.kind() == MessageKind::BlockMsg) {
        miner.received.push_back(std::get<std::shared_ptr<const Chain>>(m.payload));
        continue;
      }
      if (miner.csp) {
        const bool for_csp =
            m.kind() == MessageKind::DataBlockMsg ||
            (m.kind() == MessageKind::TxMsg &&
             [&] {
               const auto& tx = std::get<Transaction>(m.payload);
               if (tx.kind() == TxKind::AccessRequest) {
                 return tx.as<AccessRequestPayload>().csp == miner.address &&
                        w.providers.end() != std::find_if(w.providers.begin(), w.providers.end(),
                                                          [&](const auto& p) { return p.address == m.from; });
               }
               return tx.kind() == TxKind::DataUpload && tx.signatures.size() < tx.required_signers.size();
             }());
        if (for_csp) {
          w.csps[*miner.csp].inbox.push_back(std::move(m));
          continue;
        }
      }
      if (m.kind() == MessageKind::TxMsg) offer_tx(w, miner, std::get<Transaction>(m.payload));
      continue;
    }
    for (auto& v : w.vehicles) {
      if (v.state->address() == m.to && m.kind() == MessageKind::AlertMsg) {
        v.alerts.push_back(std::get<Alert>(m.payload));
      }
    }
    for (auto& r : w.rsus) {
      if (r.address == m.to && m.kind() == MessageKind::AlertMsg) r.alerts.push_back(std::get<Alert>(m.payload));
    }
    for (auto& p : w.providers) {
      if (p.address == m.to && m.kind() == MessageKind::GrantMsg) {
        p.grants.push_back(std::get<Grant>(m.payload));
        p.received.push_back(p.grants.back());
      }
    }
  }
}

void csp_process(World& w) {
  for (auto& csp : w.csps) {
    MinerNode& miner = w.miners[csp.miner];
    auto inbox = std::move(csp.inbox);
    csp.inbox.clear();
    for (auto& m : inbox) {
      if (m.kind() == MessageKind::DataBlockMsg) {
        try {
          csp_receive_data(csp.store, std::get<DataBlock>(m.payload));
        } catch (const ActorError& e) {
          emit(w, "data_rejected", {{"csp", miner.address.hex()}, {"reason", to_string(e.code())}});
        }
        continue;
      }
      const auto& tx = std::get<Transaction>(m.payload);
      if (tx.kind() == TxKind::DataUpload) {
        auto result = csp_cosign(csp.store, miner.key, tx, miner.state.registry());
        if (auto* refusal = std::get_if<CosignRefusal>(&result)) {
          emit(w, "cosign_refused", {{"csp", miner.address.hex()}, {"tx_id", tx.tx_id.hex()},
                                     {"reason", to_string(*refusal)}});
          continue;
        }
        const auto& completed = std::get<Transaction>(result);
        emit(w, "cosigned", {{"csp", miner.address.hex()}, {"tx_id", completed.tx_id.hex()}});
        offer_tx(w, miner, completed);
        broadcast_tx(w, miner.address, completed);
        continue;
      }
      if (auto err = verify_transaction(tx, miner.state.registry())) {
        emit(w, "tx_rejected", {{"miner", miner.address.hex()}, {"tx_id", tx.tx_id.hex()},
                                {"error", to_string(*err)}});
        continue;
      }
      offer_tx(w, miner, tx);
      broadcast_tx(w, miner.address, tx);
      AccessOutcome out = csp_handle_access(csp.store, miner.state, miner.key, tx, w.round);
      emit(w, "access", {{"csp", miner.address.hex()},
                         {"request", tx.tx_id.hex()},
                         {"requester", tx.initiator.hex()},
                         {"vehicle", tx.as<AccessRequestPayload>().vehicle.hex()},
                         {"granted", out.decision.allowed},
                         {"reason", out.decision.allowed ? "" : to_string(out.decision.reason)},
                         {"result_hash", out.decision.allowed ? out.result.result_hash.hex() : ""},
                         {"records", out.result.records.size()},
                         {"log_tx", out.log_tx.tx_id.hex()}});
      offer_tx(w, miner, out.log_tx);
      broadcast_tx(w, miner.address, out.log_tx);
      send(w, miner.address, tx.initiator,
           Grant{tx.tx_id, tx.as<AccessRequestPayload>().vehicle, out.decision,
                 std::move(out.result.records), out.result.result_hash});
    }
  }
}

void providers_request(World& w) {
  if (quiet(w) || w.vehicles.empty()) return;
  for (auto& p : w.providers) {
    if (!p.rng.chance(p.config.request_probability)) continue;
    const auto& v = w.vehicles[p.rng.below(w.vehicles.size())];
    const Address csp = w.miners[w.csps[v.csp].miner].address;
    const Registry& registry = w.miners[w.csps[v.csp].miner].state.registry();
    std::string query = random_query(p.rng, w.round);
    // Most requests stay inside what the provider was granted.
    if (p.rng.chance(0.7)) {
      for (const auto& tpl : w.config.vsrc_templates) {
        if (w.providers[tpl.provider].address != p.address) continue;
        for (const auto& ptr : tpl.pointers) {
          if (ptr.permission != Permission::Allow) continue;
          QuerySpec spec = parse_query(ptr.query);
          spec.time_from = w.round > 30 ? w.round - 30 : 0;
          spec.time_to = w.round;
          query = spec.to_string();
          break;
        }
      }
    }
    Transaction tx = request_access(p.key, registry, v.state->address(), csp, query, w.round);
    emit(w, "request", {{"provider", p.address.hex()}, {"vehicle", v.state->address().hex()},
                        {"tx_id", tx.tx_id.hex()}, {"query", query}});
    send(w, p.address, csp, std::move(tx));
  }
}

std::vector<Transaction> select_txs(const MinerNode& miner, std::size_t cap) {
  std::vector<Transaction> txs;
  for (const auto& [order, id] : miner.arrival) {
    if (txs.size() >= cap) break;
    if (miner.index.contains(id)) continue;
    txs.push_back(miner.mempool.at(id));
  }
  return txs;
}

void mine(World& w) {
  std::uint64_t attempts = 0;
  for (std::size_t i = 0; i < w.miners.size(); ++i) {
    MinerNode& miner = w.miners[i];
    auto txs = select_txs(miner, w.config.max_block_txs);
    if (txs.empty()) {
      miner.job.reset();
      miner.job_txs.clear();
      continue;
    }
    std::vector<Digest> ids;
    for (const auto& tx : txs) ids.push_back(tx.tx_id);
    const Digest tip = miner.chain.back().hash();
    if (!miner.job || miner.job_txs != ids || miner.job->header().prev_hash != tip) {
      BlockHeader h;
      h.index = miner.chain.back().header.index + 1;
      h.prev_hash = tip;
      h.timestamp = w.round;
      h.difficulty = w.config.difficulty;
      h.miner = miner.address;
      miner.job.emplace(h, std::move(txs), miner.rng.next() >> 1);
      miner.job_txs = std::move(ids);
    }
    const auto before = miner.job->attempts();
    auto block = miner.job->attempt(w.config.miner_hashes_per_round);
    attempts += miner.job->attempts() - before;
    if (!block) continue;
    emit(w, "block_mined", {{"miner", miner.address.hex()}, {"index", block->header.index},
                            {"hash", block->hash().hex()}, {"txs", block->transactions.size()}});
    append_own_block(miner, std::move(*block));
    miner.job.reset();
    miner.job_txs.clear();
    broadcast_chain(w, i);
  }
  w.total_hash_attempts += attempts;
  emit(w, "hashing", {{"attempts", attempts}});
}

void choose_forks(World& w) {
  for (std::size_t i = 0; i < w.miners.size(); ++i) {
    MinerNode& miner = w.miners[i];
    auto received = std::move(miner.received);
    miner.received.clear();
    std::vector<Chain> candidates;
    candidates.push_back(miner.chain);
    std::vector<std::shared_ptr<const Chain>> valid;
    for (const auto& c : received) {
      if (c->back().hash() == miner.chain.back().hash()) continue;
      if (accept_candidate(w, miner, *c)) valid.push_back(c);
    }
    if (valid.empty()) continue;
    // Cheap pre-selection on work so only the winner is copied.
    std::size_t best = 0;
    Work best_work = chain_work(miner.chain);
    Digest best_tip = miner.chain.back().hash();
    for (std::size_t k = 0; k < valid.size(); ++k) {
      Work wk = chain_work(*valid[k]);
      Digest tip = valid[k]->back().hash();
      if (wk > best_work || (wk == best_work && tip < best_tip)) {
        best = k + 1;
        best_work = wk;
        best_tip = tip;
      }
    }
    if (best != 0) adopt_chain(w, miner, *valid[best - 1]);
  }
  if (w.config.announce_interval > 0 && w.round % w.config.announce_interval == 0) {
    for (std::size_t i = 0; i < w.miners.size(); ++i) broadcast_chain(w, i);
  }
}

void purge_confirmed(World& w) {
  for (auto& csp : w.csps) {
    csp_update_confirmed(csp.store, w.miners[csp.miner].chain, w.config.confirmation_depth);
  }
  for (auto& v : w.vehicles) {
    const MinerNode& view = w.miners[w.csps[v.csp].miner];
    auto purged = v.state->purge_local(view.index, view.chain.size(), w.config.confirmation_depth);
    for (const auto& up : purged.confirmed) {
      const std::size_t depth = view.chain.size() - 1 - view.index.at(up.draft.tx_id);
      emit(w, "upload_confirmed", {{"vehicle", v.state->address().hex()},
                                   {"tx_id", up.draft.tx_id.hex()},
                                   {"block_hash", up.block.block_hash.hex()},
                                   {"packaged_at", up.packaged_at},
                                   {"records", up.block.records.size()},
                                   {"depth", depth}});
    }
  }
}

void alerts(World& w) {
  for (auto& p : w.providers) {
    auto grants = std::move(p.grants);
    p.grants.clear();
    for (const auto& g : grants) {
      if (!g.decision.allowed) continue;
      for (const auto& alert : analyze_and_alert(g.vehicle, g.records)) {
        emit(w, "alert", {{"provider", p.address.hex()},
                          {"vehicle", alert.vehicle.hex()},
                          {"rule_id", alert.rule_id},
                          {"severity", to_string(alert.severity)},
                          {"record_round", alert.round}});
        send(w, p.address, alert.vehicle, alert);
        for (const auto& v : w.vehicles) {
          if (v.state->address() != alert.vehicle || !v.region) continue;
          for (const auto& r : w.rsus) {
            if (r.config.fog_node == *v.region) send(w, p.address, r.address, alert);
          }
        }
        if (alert.severity == Severity::Critical && !quiet(w)) {
          Transaction notify = make_notify(p.key, alert, w.round);
          broadcast_tx(w, p.address, notify);
        }
      }
    }
  }
}

std::string numbered(std::string_view prefix, std::size_t i, int width) {
  std::string n = std::to_string(i + 1);
  while (static_cast<int>(n.size()) < width) n.insert(n.begin(), '0');
  return std::string(prefix) + n;
}

}  // namespace

// --- world -------------------------------------------------------------------------------

const Chain& World::best_chain() const {
  std::vector<Chain> chains;
  chains.reserve(miners.size());
  for (const auto& m : miners) chains.push_back(m.chain);
  return miners[best_chain_index(chains)].chain;
}

Digest World::digest() const {
  Json miners_json = Json::array();
  for (const auto& m : miners) {
    miners_json.push_back({{"address", m.address.hex()},
                           {"tip", m.chain.back().hash().hex()},
                           {"length", m.chain.size()},
                           {"mempool", m.mempool.size()},
                           {"job_attempts", m.job ? m.job->attempts() : 0},
                           {"rng", m.rng.state()}});
  }
  Json vehicles_json = Json::array();
  for (const auto& v : vehicles) {
    vehicles_json.push_back({{"state", v.state->to_json()},
                             {"position", number_json(v.position)},
                             {"alerts", v.alerts.size()},
                             {"rng", v.rng.state()}});
  }
  Json stores = Json::array();
  for (const auto& c : csps) {
    Json blocks = Json::array();
    for (const auto& [h, b] : c.store.blocks) blocks.push_back(h.hex());
    Json confirmed = Json::array();
    for (const auto& h : c.store.confirmed) confirmed.push_back(h.hex());
    stores.push_back({{"blocks", blocks}, {"confirmed", confirmed}});
  }
  Json flight = Json::array();
  for (const auto& m : in_flight) flight.push_back(m.id);
  Json j{{"round", round},
         {"miners", miners_json},
         {"vehicles", vehicles_json},
         {"stores", stores},
         {"in_flight", flight},
         {"network", network.state()},
         {"events", events.size()},
         {"hash_attempts", total_hash_attempts}};
  return hash_bytes(canonical_dump(j));
}

World init_system(const ScenarioConfig& config) {
  config.validate();
  World w;
  w.config = config;
  w.network = Rng(config.seed, as_bytes("network"));

  const Digest ta_seed = Sha256().update("vcare/ta").update(ByteView(le64(config.seed))).finish();
  w.ta = generate_keypair(ta_seed.view());
  w.ta_address = derive_address(w.ta.public_key);

  ContractState setup;
  std::vector<Transaction> txs;
  txs.push_back(rc_bootstrap(setup, w.ta, "TA", config.license_expiry, 0).tx);
  auto enroll = [&](const std::string& identity, Role role) {
    auto reg = rc_register(setup, identity, role, config.license_expiry, w.ta, 0);
    txs.push_back(reg.tx);
    return reg.keypair;
  };

  auto make_miner = [&](const KeyPair& key) {
    MinerNode m;
    m.key = key;
    m.address = derive_address(key.public_key);
    m.rng = Rng(config.seed, m.address.view());
    w.miners.push_back(std::move(m));
    return w.miners.size() - 1;
  };

  for (std::size_t i = 0; i < config.csps; ++i) {
    auto key = enroll(numbered("CSP-", i, 2), Role::CSP);
    const auto mi = make_miner(key);
    w.miners[mi].csp = w.csps.size();
    CspNode node;
    node.miner = mi;
    node.store.owner = w.miners[mi].address;
    w.csps.push_back(std::move(node));
  }
  for (std::size_t i = 0; i < config.fog_nodes.size(); ++i) {
    auto key = enroll(numbered("FOG-", i, 2), Role::FogNode);
    const auto mi = make_miner(key);
    w.fogs.push_back({w.miners[mi].address, mi, config.fog_nodes[i].csp});
  }
  for (std::size_t i = 0; i < config.extra_miners; ++i) {
    make_miner(enroll(numbered("MINER-", i, 2), Role::ServiceProvider));
  }
  for (std::size_t i = 0; i < config.rsus.size(); ++i) {
    auto key = enroll(numbered("RSU-", i, 2), Role::RSU);
    w.rsus.push_back({derive_address(key.public_key), config.rsus[i], {}});
  }
  for (const auto& p : config.providers) {
    auto key = enroll(p.name, Role::ServiceProvider);
    ProviderNode node;
    node.key = key;
    node.address = derive_address(key.public_key);
    node.config = p;
    node.rng = Rng(config.seed, node.address.view());
    w.providers.push_back(std::move(node));
  }
  for (std::size_t i = 0; i < config.vehicles.count; ++i) {
    auto key = enroll(numbered("VH-", i, 3), Role::Vehicle);
    VehicleNode v;
    v.state = std::make_unique<VehicleState>(key, config.log_capacity);
    v.csp = i % config.csps;
    v.rng = Rng(config.seed, v.state->address().view());
    v.position = v.rng.uniform(0.0, config.road_length);
    v.speed = v.rng.uniform(config.vehicles.speed_min, config.vehicles.speed_max);
    w.vehicles.push_back(std::move(v));
  }
  for (const auto& tpl : config.vsrc_templates) {
    const auto& provider = w.providers[tpl.provider];
    for (const auto& v : w.vehicles) {
      std::vector<DataPointer> pointers;
      for (std::size_t k = 0; k < tpl.pointers.size(); ++k) {
        const auto& p = tpl.pointers[k];
        pointers.push_back({"p" + std::to_string(k), p.query, p.permission, p.expiry, p.terms_of_use});
      }
      auto tx = make_vsrc_deploy(v.state->keypair(), &provider.key, std::move(pointers), 0);
      vsrc_create(setup, tx, 0);
      txs.push_back(std::move(tx));
    }
  }

  // The TA seals the setup transactions into the first blocks.
  Chain chain;
  for (std::size_t start = 0; start < txs.size(); start += config.max_block_txs) {
    const auto end = std::min(txs.size(), start + config.max_block_txs);
    std::vector<Transaction> batch(txs.begin() + static_cast<std::ptrdiff_t>(start),
                                   txs.begin() + static_cast<std::ptrdiff_t>(end));
    chain.push_back(chain.empty()
                        ? mine_genesis(std::move(batch), config.difficulty, w.ta_address, 0, 0)
                        : mine_block(std::move(batch), chain.back().header, config.difficulty,
                                     w.ta_address, 0, 0));
  }
  const ContractState state = ContractState::from_chain(chain);
  const TxIndex index = index_transactions(chain);
  for (auto& m : w.miners) {
    m.chain = chain;
    m.state = state;
    m.index = index;
    m.max_work = chain_work(chain);
    for (const auto& b : chain) m.validated_blocks.insert(b.hash());
  }
  emit(w, "init", {{"blocks", chain.size()},
                   {"entities", state.registry().size()},
                   {"genesis", chain.front().hash().hex()}});
  return w;
}

void step(World& w) {
  move_and_log(w);
  upload_in_range(w);
  deliver(w);
  csp_process(w);
  providers_request(w);
  mine(w);
  choose_forks(w);
  purge_confirmed(w);
  alerts(w);
  ++w.round;
}

// --- report --------------------------------------------------------------------------------

Json SimReport::summary_json() const {
  return Json{{"alerts", alerts},
              {"blocks_mined", blocks_mined},
              {"chain_length", chain_length},
              {"confirmed_uploads", confirmed_uploads},
              {"denials", denials},
              {"grants", grants},
              {"max_upload_latency", max_upload_latency},
              {"mean_upload_latency", number_json(std::round(mean_upload_latency * 1000.0) / 1000.0)},
              {"messages_dropped", messages_dropped},
              {"packaged_blocks", packaged_blocks},
              {"purged_records", purged_records},
              {"records_logged", records_logged},
              {"records_rejected", records_rejected},
              {"reorgs", reorgs},
              {"tip", final_chain.empty() ? "" : final_chain.back().hash().hex()},
              {"total_hash_attempts", total_hash_attempts}};
}

SimReport compute_report(const std::vector<Json>& events, const Chain& final_chain) {
  SimReport r;
  r.final_chain = final_chain;
  r.chain_length = final_chain.size();
  std::uint64_t latency_sum = 0;
  for (const auto& e : events) {
    const auto& type = e.at("type").get_ref<const std::string&>();
    if (type == "package") {
      ++r.packaged_blocks;
    } else if (type == "upload_confirmed") {
      ++r.confirmed_uploads;
      const Round latency = e.at("round").get<Round>() - e.at("packaged_at").get<Round>();
      latency_sum += latency;
      r.max_upload_latency = std::max(r.max_upload_latency, latency);
      r.purged_records += e.at("records").get<std::uint64_t>();
    } else if (type == "access") {
      (e.at("granted").get<bool>() ? r.grants : r.denials)++;
    } else if (type == "hashing") {
      r.total_hash_attempts += e.at("attempts").get<std::uint64_t>();
    } else if (type == "alert") {
      ++r.alerts;
    } else if (type == "logged") {
      r.records_logged += e.at("records").get<std::uint64_t>();
    } else if (type == "record_rejected") {
      ++r.records_rejected;
    } else if (type == "message_dropped") {
      ++r.messages_dropped;
    } else if (type == "block_mined") {
      ++r.blocks_mined;
    } else if (type == "adopt" && e.at("reorg").get<bool>()) {
      ++r.reorgs;
    }
  }
  if (r.confirmed_uploads > 0) {
    r.mean_upload_latency = static_cast<double>(latency_sum) / static_cast<double>(r.confirmed_uploads);
  }
  return r;
}

ScenarioRun run_scenario_world(const ScenarioConfig& config) {
  World w = init_system(config);
  while (w.round < config.rounds) step(w);
  Chain final_chain = w.best_chain();
  const ValidationOptions options{config.max_block_txs};
  if (auto errors = validate_chain(final_chain, options); !errors.empty()) {
    throw std::logic_error("final chain does not validate: " + errors.front().describe());
  }
  SimReport report = compute_report(w.events, final_chain);
  return ScenarioRun{std::move(w), std::move(report)};
}

SimReport run_scenario(const ScenarioConfig& config) { return run_scenario_world(config).report; }

}  // namespace vcare
