#include "vcare/ledger.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <iterator>
#include <mutex>
#include <ostream>
#include <set>
#include <unordered_set>

#include "vcare/query.hpp"

namespace vcare {

std::string_view to_string(TxError e) {
  switch (e) {
    case TxError::BadTxId: return "BadTxId";
    case TxError::ArityViolation: return "ArityViolation";
    case TxError::UnregisteredSigner: return "UnregisteredSigner";
    case TxError::ExpiredLicense: return "ExpiredLicense";
    case TxError::IncompleteMultiSig: return "IncompleteMultiSig";
    case TxError::BadSignature: return "BadSignature";
    case TxError::Unauthorized: return "Unauthorized";
    case TxError::UnknownParty: return "UnknownParty";
    case TxError::BadPayload: return "BadPayload";
    case TxError::DuplicateIdentity: return "DuplicateIdentity";
  }
  return "Unknown";
}

std::string_view to_string(BlockErrc e) {
  switch (e) {
    case BlockErrc::BadPrevHash: return "BadPrevHash";
    case BlockErrc::BadIndex: return "BadIndex";
    case BlockErrc::BadPow: return "BadPow";
    case BlockErrc::BadMerkle: return "BadMerkle";
    case BlockErrc::BadDifficulty: return "BadDifficulty";
    case BlockErrc::BadTimestamp: return "BadTimestamp";
    case BlockErrc::BadTxCount: return "BadTxCount";
    case BlockErrc::DuplicateTx: return "DuplicateTx";
    case BlockErrc::InvalidTx: return "InvalidTx";
    case BlockErrc::NoGenesis: return "NoGenesis";
    case BlockErrc::BadGenesis: return "BadGenesis";
  }
  return "Unknown";
}

std::string BlockError::describe() const {
  std::string out = "block " + std::to_string(block_index) + ": " + std::string(to_string(code));
  if (tx_index) out += " tx " + std::to_string(*tx_index);
  if (tx_error) out += " (" + std::string(to_string(*tx_error)) + ")";
  return out;
}

// --- transaction credibility ------------------------------------------------

bool is_bootstrap_registration(const Transaction& tx, const Registry& registry) {
  if (tx.kind() != TxKind::Register || registry.ta_address()) return false;
  const auto& p = tx.as<RegisterPayload>();
  return p.role == Role::TA && tx.initiator == p.address;
}

namespace {

bool has_role(const Registry& registry, const Address& a, std::initializer_list<Role> roles) {
  const auto* e = registry.find(a);
  if (e == nullptr) return false;
  return std::find(roles.begin(), roles.end(), e->role) != roles.end();
}

std::optional<TxError> check_arity(const Transaction& tx) {
  const auto& req = tx.required_signers;
  std::set<Address> distinct(req.begin(), req.end());
  if (distinct.size() != req.size()) return TxError::ArityViolation;
  if (req.empty() || req.front() != tx.initiator) return TxError::ArityViolation;

  switch (tx.kind()) {
    case TxKind::DataUpload: {
      const auto& p = tx.as<DataUploadPayload>();
      if (req != std::vector<Address>{p.vehicle, p.csp}) return TxError::ArityViolation;
      break;
    }
    case TxKind::VsrcDeploy: {
      const auto& p = tx.as<VsrcDeployPayload>();
      if (req != std::vector<Address>{p.vehicle, p.provider}) return TxError::ArityViolation;
      break;
    }
    default:
      if (req.size() != 1) return TxError::ArityViolation;
  }
  return std::nullopt;
}

std::optional<TxError> check_payload(const Transaction& tx, const Registry& registry,
                                     bool bootstrap) {
  switch (tx.kind()) {
    case TxKind::Register: {
      const auto& p = tx.as<RegisterPayload>();
      if (!bootstrap && (registry.ta_address() != tx.initiator || p.role == Role::TA)) {
        return TxError::Unauthorized;
      }
      if (p.identity.empty() || p.address != derive_address(p.public_key) ||
          p.license_expiry < p.registration_date) {
        return TxError::BadPayload;
      }
      if (registry.find(p.identity) != nullptr || registry.contains(p.address)) {
        return TxError::DuplicateIdentity;
      }
      return std::nullopt;
    }
    case TxKind::VsrcDeploy: {
      const auto& p = tx.as<VsrcDeployPayload>();
      if (!has_role(registry, p.vehicle, {Role::Vehicle}) ||
          !has_role(registry, p.provider, {Role::ServiceProvider, Role::CSP})) {
        return TxError::UnknownParty;
      }
      std::set<std::string> ids;
      for (const auto& ptr : p.pointers) {
        if (ptr.pointer_id.empty() || !ids.insert(ptr.pointer_id).second) return TxError::BadPayload;
        if (ptr.expiry < tx.timestamp) return TxError::BadPayload;
        if (!try_parse_query(ptr.query_string)) return TxError::BadPayload;
      }
      return std::nullopt;
    }
    case TxKind::DataUpload: {
      const auto& p = tx.as<DataUploadPayload>();
      if (!has_role(registry, p.vehicle, {Role::Vehicle}) ||
          !has_role(registry, p.csp, {Role::CSP})) {
        return TxError::UnknownParty;
      }
      if (p.timestamp != tx.timestamp) return TxError::BadPayload;
      return std::nullopt;
    }
    case TxKind::AccessRequest: {
      const auto& p = tx.as<AccessRequestPayload>();
      if (!has_role(registry, p.vehicle, {Role::Vehicle}) ||
          !has_role(registry, p.csp, {Role::CSP})) {
        return TxError::UnknownParty;
      }
      if (!try_parse_query(p.query)) return TxError::BadPayload;
      return std::nullopt;
    }
    case TxKind::AccessLog: {
      const auto& p = tx.as<AccessLogPayload>();
      if (!registry.contains(p.subject) || !registry.contains(p.counterparty)) {
        return TxError::UnknownParty;
      }
      switch (p.action) {
        case ActivityAction::Upload:
          return TxError::BadPayload;
        case ActivityAction::AccessGranted:
        case ActivityAction::AccessDenied:
          if (!has_role(registry, tx.initiator, {Role::CSP})) return TxError::Unauthorized;
          break;
        default:
          if (tx.initiator != p.counterparty) return TxError::Unauthorized;
      }
      return std::nullopt;
    }
  }
  return TxError::BadPayload;
}

// Remembers signatures that already verified. The key binds the public key,
// the signature and the tx id, and the tx id is checked against the signing
// bytes before the cache is consulted, so a hit implies the same inputs.
class VerifiedSignatures {
 public:
  bool check(const PublicKey& key, const Digest& tx_id, ByteView message, const Signature& sig) {
    const Digest k = Sha256()
                         .update(key.view())
                         .update(ByteView(sig.value))
                         .update(sig.signer.view())
                         .update(tx_id.view())
                         .finish();
    {
      std::lock_guard lock(mu_);
      if (seen_.contains(k)) return true;
    }
    if (!verify(key, message, sig)) return false;
    std::lock_guard lock(mu_);
    if (seen_.size() >= kCapacity) seen_.clear();
    seen_.insert(k);
    return true;
  }

 private:
  struct DigestHash {
    std::size_t operator()(const Digest& d) const {
      std::size_t h = 0;
      for (std::size_t i = 0; i < sizeof(h); ++i) h = (h << 8) | d.data()[i];
      return h;
    }
  };
  static constexpr std::size_t kCapacity = 1 << 17;
  std::mutex mu_;
  std::unordered_set<Digest, DigestHash> seen_;
};

VerifiedSignatures& signature_cache() {
  static VerifiedSignatures cache;
  return cache;
}

}  // namespace

std::optional<TxError> verify_transaction(const Transaction& tx, const Registry& registry) {
  if (compute_tx_id(tx) != tx.tx_id) return TxError::BadTxId;
  if (auto e = check_arity(tx)) return e;

  const bool bootstrap = is_bootstrap_registration(tx, registry);
  std::vector<PublicKey> keys;
  keys.reserve(tx.required_signers.size());
  for (const auto& signer : tx.required_signers) {
    const auto* entry = registry.find(signer);
    if (entry == nullptr) {
      if (!bootstrap) return TxError::UnregisteredSigner;
      keys.push_back(tx.as<RegisterPayload>().public_key);
      continue;
    }
    if (entry->license_expiry < tx.timestamp) return TxError::ExpiredLicense;
    keys.push_back(entry->public_key);
  }

  const Bytes message = signing_bytes(tx);
  std::vector<bool> signed_by(tx.required_signers.size(), false);
  for (const auto& sig : tx.signatures) {
    auto it = std::find(tx.required_signers.begin(), tx.required_signers.end(), sig.signer);
    if (it == tx.required_signers.end()) return TxError::BadSignature;
    auto idx = static_cast<std::size_t>(it - tx.required_signers.begin());
    if (signed_by[idx]) return TxError::BadSignature;
    if (!signature_cache().check(keys[idx], tx.tx_id, message, sig)) return TxError::BadSignature;
    signed_by[idx] = true;
  }
  if (std::find(signed_by.begin(), signed_by.end(), false) != signed_by.end()) {
    return TxError::IncompleteMultiSig;
  }
  return check_payload(tx, registry, bootstrap);
}

void apply_registration(Registry& registry, const Transaction& tx) {
  if (tx.kind() != TxKind::Register) return;
  registry.insert(entry_from_registration(tx.as<RegisterPayload>()));
}

// --- blocks ------------------------------------------------------------------

Json to_json(const BlockHeader& h) {
  return Json{{"difficulty", h.difficulty}, {"index", h.index},
              {"merkle_root", h.merkle_root.hex()}, {"miner", h.miner.hex()},
              {"nonce", h.nonce}, {"prev_hash", h.prev_hash.hex()},
              {"timestamp", h.timestamp}};
}

BlockHeader block_header_from_json(const Json& j) {
  using namespace json_field;
  expect_keys(j, {"difficulty", "index", "merkle_root", "miner", "nonce", "prev_hash", "timestamp"});
  BlockHeader h;
  auto difficulty = u64(j, "difficulty");
  if (difficulty > 256) throw DecodeError("difficulty out of range");
  h.difficulty = static_cast<unsigned>(difficulty);
  h.index = u64(j, "index");
  h.merkle_root = digest(j, "merkle_root");
  h.miner = address(j, "miner");
  h.nonce = u64(j, "nonce");
  h.prev_hash = digest(j, "prev_hash");
  h.timestamp = u64(j, "timestamp");
  return h;
}

Digest header_hash(const BlockHeader& h) { return hash_bytes(canonical_dump(to_json(h))); }

Json to_json(const Block& b) {
  Json txs = Json::array();
  for (const auto& tx : b.transactions) txs.push_back(to_json(tx));
  return Json{{"header", to_json(b.header)}, {"transactions", std::move(txs)}};
}

Block block_from_json(const Json& j) {
  json_field::expect_keys(j, {"header", "transactions"});
  Block b;
  b.header = block_header_from_json(json_field::get(j, "header"));
  for (const auto& tx : json_field::array(j, "transactions")) {
    b.transactions.push_back(transaction_from_json(tx));
  }
  return b;
}

Digest merkle_root(std::span<const Digest> leaves) {
  if (leaves.empty()) throw LedgerError(LedgerErrc::EmptyList, "merkle_root of empty list");
  std::vector<Digest> level(leaves.begin(), leaves.end());
  while (level.size() > 1) {
    if (level.size() % 2 == 1) level.push_back(level.back());
    std::vector<Digest> next;
    next.reserve(level.size() / 2);
    for (std::size_t i = 0; i < level.size(); i += 2) {
      next.push_back(Sha256().update(level[i].view()).update(level[i + 1].view()).finish());
    }
    level = std::move(next);
  }
  return level.front();
}

Digest merkle_root_of(std::span<const Transaction> txs) {
  std::vector<Digest> ids;
  ids.reserve(txs.size());
  for (const auto& tx : txs) ids.push_back(compute_tx_id(tx));
  return merkle_root(ids);
}

// --- mining --------------------------------------------------------------------

MiningJob::MiningJob(BlockHeader header, std::vector<Transaction> txs, std::uint64_t nonce_start)
    : header_(std::move(header)), txs_(std::move(txs)), nonce_start_(nonce_start) {
  if (txs_.empty()) throw LedgerError(LedgerErrc::EmptyTxSet, "cannot mine an empty block");
  if (header_.difficulty > kMaxDifficulty) {
    throw LedgerError(LedgerErrc::BadDifficulty, "difficulty above " + std::to_string(kMaxDifficulty));
  }
  header_.merkle_root = merkle_root_of(txs_);
  header_.nonce = 0;
  // Keys are sorted, so the nonce sits between "miner" and "prev_hash".
  const std::string encoded = canonical_dump(to_json(header_));
  static constexpr std::string_view kNonceKey = "\"nonce\":";
  const auto pos = encoded.find(kNonceKey);
  const auto value_begin = pos + kNonceKey.size();
  prefix_state_.update(std::string_view(encoded).substr(0, value_begin));
  suffix_ = encoded.substr(value_begin + 1);  // skip the "0" placeholder
}

std::optional<Block> MiningJob::attempt(std::uint64_t budget) {
  char digits[24];
  while (budget-- > 0 && !exhausted()) {
    const std::uint64_t nonce = nonce_start_ + attempts_;
    ++attempts_;
    auto [end, ec] = std::to_chars(std::begin(digits), std::end(digits), nonce);
    (void)ec;
    Sha256 h = prefix_state_;
    h.update(std::string_view(digits, static_cast<std::size_t>(end - digits))).update(suffix_);
    if (leading_zero_bits(h.finish()) >= header_.difficulty) {
      Block b{header_, txs_};
      b.header.nonce = nonce;
      return b;
    }
  }
  return std::nullopt;
}

namespace {

Block mine_to_completion(MiningJob job) {
  while (!job.exhausted()) {
    if (auto b = job.attempt(1u << 16)) return std::move(*b);
  }
  throw LedgerError(LedgerErrc::NonceExhausted, "nonce search space exhausted");
}

}  // namespace

Block mine_block(std::vector<Transaction> txs, const BlockHeader& prev, unsigned difficulty,
                 const Address& miner, std::uint64_t nonce_start, Round timestamp) {
  BlockHeader h;
  h.index = prev.index + 1;
  h.prev_hash = header_hash(prev);
  h.timestamp = timestamp;
  h.difficulty = difficulty;
  h.miner = miner;
  return mine_to_completion(MiningJob(h, std::move(txs), nonce_start));
}

Block mine_genesis(std::vector<Transaction> txs, unsigned difficulty, const Address& miner,
                   std::uint64_t nonce_start, Round timestamp) {
  BlockHeader h;
  h.timestamp = timestamp;
  h.difficulty = difficulty;
  h.miner = miner;
  return mine_to_completion(MiningJob(h, std::move(txs), nonce_start));
}

// --- validation ----------------------------------------------------------------

namespace {

// Checks shared by genesis and successor blocks.
void check_body(const Block& block, Registry registry, const ValidationOptions& options,
                std::vector<BlockError>& errors) {
  const auto idx = block.header.index;
  const auto& h = block.header;
  if (h.difficulty > kMaxDifficulty) errors.push_back({BlockErrc::BadDifficulty, idx, {}, {}});
  if (leading_zero_bits(header_hash(h)) < h.difficulty) {
    errors.push_back({BlockErrc::BadPow, idx, {}, {}});
  }
  if (block.transactions.empty() || block.transactions.size() > options.max_block_txs) {
    errors.push_back({BlockErrc::BadTxCount, idx, {}, {}});
  } else if (merkle_root_of(block.transactions) != h.merkle_root) {
    errors.push_back({BlockErrc::BadMerkle, idx, {}, {}});
  }
  std::set<Digest> seen;
  for (std::size_t i = 0; i < block.transactions.size(); ++i) {
    const auto& tx = block.transactions[i];
    if (!seen.insert(tx.tx_id).second) {
      errors.push_back({BlockErrc::DuplicateTx, idx, i, {}});
      continue;
    }
    if (auto e = verify_transaction(tx, registry)) {
      errors.push_back({BlockErrc::InvalidTx, idx, i, e});
      continue;
    }
    apply_registration(registry, tx);
  }
}

}  // namespace

std::vector<BlockError> validate_block(const Block& block, const BlockHeader& prev,
                                       const Registry& registry,
                                       const ValidationOptions& options) {
  std::vector<BlockError> errors;
  const auto& h = block.header;
  if (h.prev_hash != header_hash(prev)) errors.push_back({BlockErrc::BadPrevHash, h.index, {}, {}});
  if (h.index != prev.index + 1) errors.push_back({BlockErrc::BadIndex, h.index, {}, {}});
  if (h.difficulty != prev.difficulty) {
    errors.push_back({BlockErrc::BadDifficulty, h.index, {}, {}});
  }
  if (h.timestamp < prev.timestamp) errors.push_back({BlockErrc::BadTimestamp, h.index, {}, {}});
  check_body(block, registry, options, errors);
  return errors;
}

std::vector<BlockError> validate_genesis(const Block& block, const ValidationOptions& options) {
  std::vector<BlockError> errors;
  if (block.header.index != 0 || !block.header.prev_hash.is_zero()) {
    errors.push_back({BlockErrc::BadGenesis, block.header.index, {}, {}});
  }
  check_body(block, Registry{}, options, errors);
  return errors;
}

std::vector<BlockError> validate_chain(const Chain& chain, const ValidationOptions& options) {
  if (chain.empty()) return {{BlockErrc::NoGenesis, 0, {}, {}}};
  std::vector<BlockError> errors = validate_genesis(chain.front(), options);
  for (auto& e : errors) e.block_index = 0;

  Registry registry;
  std::set<Digest> confirmed;
  auto absorb = [&](const Block& b, std::size_t position) {
    for (std::size_t i = 0; i < b.transactions.size(); ++i) {
      const auto& tx = b.transactions[i];
      if (!confirmed.insert(tx.tx_id).second) {
        BlockError dup{BlockErrc::DuplicateTx, position, i, {}};
        if (std::find(errors.begin(), errors.end(), dup) == errors.end()) errors.push_back(dup);
      }
      apply_registration(registry, tx);
    }
  };
  absorb(chain.front(), 0);

  for (std::size_t i = 1; i < chain.size(); ++i) {
    auto block_errors = validate_block(chain[i], chain[i - 1].header, registry, options);
    for (auto& e : block_errors) {
      e.block_index = i;
      errors.push_back(e);
    }
    absorb(chain[i], i);
  }
  return errors;
}

Registry replay_registry(const Chain& chain) {
  Registry registry;
  for (const auto& b : chain) {
    for (const auto& tx : b.transactions) apply_registration(registry, tx);
  }
  return registry;
}

// --- fork choice ------------------------------------------------------------------

Work block_work(const BlockHeader& h) {
  return Work{1} << std::min(h.difficulty, kMaxDifficulty);
}

Work chain_work(const Chain& chain) {
  Work total = 0;
  for (const auto& b : chain) total += block_work(b.header);
  return total;
}

std::size_t best_chain_index(std::span<const Chain> candidates) {
  if (candidates.empty()) throw LedgerError(LedgerErrc::NoCandidates, "no candidate chains");
  std::size_t best = 0;
  Work best_work = chain_work(candidates[0]);
  std::optional<Digest> best_tip;
  auto tip_of = [&](std::size_t i) -> std::optional<Digest> {
    if (candidates[i].empty()) return std::nullopt;
    return candidates[i].back().hash();
  };
  best_tip = tip_of(0);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    Work w = chain_work(candidates[i]);
    auto tip = tip_of(i);
    if (w > best_work || (w == best_work && tip < best_tip)) {
      best = i;
      best_work = w;
      best_tip = tip;
    }
  }
  return best;
}

Chain fork_choice(std::span<const Chain> candidates, const ValidationOptions& options) {
  if (candidates.empty()) throw LedgerError(LedgerErrc::NoCandidates, "no candidate chains");
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!validate_chain(candidates[i], options).empty()) {
      throw LedgerError(LedgerErrc::InvalidCandidate,
                        "candidate " + std::to_string(i) + " does not validate");
    }
  }
  return candidates[best_chain_index(candidates)];
}

// --- chain file ---------------------------------------------------------------------

std::string encode_block_line(const Block& block) { return canonical_dump(to_json(block)); }

void write_chain(std::ostream& out, const Chain& chain) {
  for (const auto& b : chain) out << encode_block_line(b) << '\n';
}

Chain read_chain(std::istream& in) {
  const std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Chain chain;
  std::size_t start = 0;
  std::size_t line = 0;
  while (start < content.size()) {
    const auto end = content.find('\n', start);
    if (end == std::string::npos) throw ChainFileError(line, "missing trailing newline");
    const std::string_view text(content.data() + start, end - start);
    try {
      chain.push_back(block_from_json(parse_canonical(text)));
    } catch (const DecodeError& e) {
      throw ChainFileError(line, e.what());
    }
    start = end + 1;
    ++line;
  }
  return chain;
}

}  // namespace vcare
