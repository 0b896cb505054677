#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vcare/registry.hpp"
#include "vcare/transaction.hpp"

namespace vcare {

inline constexpr std::size_t kDefaultMaxBlockTxs = 64;
inline constexpr unsigned kMaxDifficulty = 64;
inline constexpr std::uint64_t kNonceSearchCap = std::uint64_t{1} << 32;

enum class TxError {
  BadTxId,
  ArityViolation,
  UnregisteredSigner,
  ExpiredLicense,
  IncompleteMultiSig,
  BadSignature,
  Unauthorized,
  UnknownParty,
  BadPayload,
  DuplicateIdentity,
};

std::string_view to_string(TxError e);

// Credibility check against the registry as of validation time. Returns
// nullopt when the transaction is acceptable.
std::optional<TxError> verify_transaction(const Transaction& tx, const Registry& registry);

// True for the one Register transaction allowed before any TA exists: the TA
// registering itself.
bool is_bootstrap_registration(const Transaction& tx, const Registry& registry);

// Inserts the entry carried by a Register transaction. No-op for other kinds.
void apply_registration(Registry& registry, const Transaction& tx);

struct BlockHeader {
  std::uint64_t index = 0;
  Digest prev_hash;
  Digest merkle_root;
  Round timestamp = 0;
  unsigned difficulty = 0;
  std::uint64_t nonce = 0;
  Address miner;

  friend bool operator==(const BlockHeader&, const BlockHeader&) = default;
};

Json to_json(const BlockHeader& h);
BlockHeader block_header_from_json(const Json& j);
Digest header_hash(const BlockHeader& h);

struct Block {
  BlockHeader header;
  std::vector<Transaction> transactions;

  Digest hash() const { return header_hash(header); }

  friend bool operator==(const Block&, const Block&) = default;
};

Json to_json(const Block& b);
Block block_from_json(const Json& j);

using Chain = std::vector<Block>;

enum class LedgerErrc { EmptyList, EmptyTxSet, NonceExhausted, NoCandidates, InvalidCandidate, BadDifficulty };

class LedgerError : public std::runtime_error {
 public:
  LedgerError(LedgerErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  LedgerErrc code() const { return code_; }

 private:
  LedgerErrc code_;
};

// Leaves are the digests themselves; parent = SHA-256(left || right); an odd
// level duplicates its last node. Throws LedgerError(EmptyList).
Digest merkle_root(std::span<const Digest> leaves);
// Merkle root over recomputed transaction ids.
Digest merkle_root_of(std::span<const Transaction> txs);

// Incremental nonce search over a fixed header template. Nonces are tried in
// increasing order from nonce_start so the result is reproducible.
class MiningJob {
 public:
  MiningJob(BlockHeader header, std::vector<Transaction> txs, std::uint64_t nonce_start);

  // Tries up to `budget` further nonces.
  std::optional<Block> attempt(std::uint64_t budget);

  std::uint64_t attempts() const { return attempts_; }
  bool exhausted() const { return attempts_ >= kNonceSearchCap; }
  const BlockHeader& header() const { return header_; }
  const std::vector<Transaction>& transactions() const { return txs_; }

 private:
  BlockHeader header_;
  std::vector<Transaction> txs_;
  Sha256 prefix_state_;
  std::string suffix_;
  std::uint64_t nonce_start_;
  std::uint64_t attempts_ = 0;
};

// Throws LedgerError(EmptyTxSet | NonceExhausted | BadDifficulty).
Block mine_block(std::vector<Transaction> txs, const BlockHeader& prev, unsigned difficulty,
                 const Address& miner, std::uint64_t nonce_start, Round timestamp);
Block mine_genesis(std::vector<Transaction> txs, unsigned difficulty, const Address& miner,
                   std::uint64_t nonce_start, Round timestamp);

enum class BlockErrc {
  BadPrevHash,
  BadIndex,
  BadPow,
  BadMerkle,
  BadDifficulty,
  BadTimestamp,
  BadTxCount,
  DuplicateTx,
  InvalidTx,
  NoGenesis,
  BadGenesis,
};

std::string_view to_string(BlockErrc e);

struct BlockError {
  BlockErrc code;
  std::size_t block_index = 0;
  std::optional<std::size_t> tx_index;
  std::optional<TxError> tx_error;

  std::string describe() const;
  friend bool operator==(const BlockError&, const BlockError&) = default;
};

struct ValidationOptions {
  std::size_t max_block_txs = kDefaultMaxBlockTxs;
};

// All violations found in `block` as a successor of `prev`. Registrations
// inside the block take effect for the transactions that follow them.
std::vector<BlockError> validate_block(const Block& block, const BlockHeader& prev,
                                       const Registry& registry,
                                       const ValidationOptions& options = {});

std::vector<BlockError> validate_genesis(const Block& block, const ValidationOptions& options = {});

std::vector<BlockError> validate_chain(const Chain& chain, const ValidationOptions& options = {});

// Registry obtained by replaying every Register transaction of the chain.
Registry replay_registry(const Chain& chain);

using Work = unsigned __int128;

Work block_work(const BlockHeader& h);
Work chain_work(const Chain& chain);

// Index of the chain with the most cumulative work; ties go to the smaller
// tip hash. No validation. Throws LedgerError(NoCandidates).
std::size_t best_chain_index(std::span<const Chain> candidates);

// Validates every candidate first; throws LedgerError(InvalidCandidate).
Chain fork_choice(std::span<const Chain> candidates, const ValidationOptions& options = {});

// Chain file: one canonical block per line, index order.
std::string encode_block_line(const Block& block);

class ChainFileError : public std::runtime_error {
 public:
  ChainFileError(std::size_t line, const std::string& what)
      : std::runtime_error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

void write_chain(std::ostream& out, const Chain& chain);
// Throws ChainFileError naming the zero-based line (= block index) at fault.
Chain read_chain(std::istream& in);

}  // namespace vcare
