#pragma once

#include <map>
#include <set>
#include <vector>

#include "vcare/obd.hpp"

namespace vcare {

// A vehicle's batch of records as uploaded to its CSP.
struct DataBlock {
  Address vehicle;
  std::uint64_t seq = 0;
  std::vector<ObdRecord> records;
  Digest block_hash;

  friend bool operator==(const DataBlock&, const DataBlock&) = default;
};

// SHA-256 over the canonical encoding of {records, seq, vehicle}.
Digest compute_block_hash(const Address& vehicle, std::uint64_t seq,
                          const std::vector<ObdRecord>& records);
Json to_json(const DataBlock& block);

struct CspStore {
  Address owner;
  std::map<Digest, DataBlock> blocks;
  std::set<Digest> confirmed;

  const DataBlock* find(const Digest& block_hash) const {
    auto it = blocks.find(block_hash);
    return it == blocks.end() ? nullptr : &it->second;
  }
};

}  // namespace vcare
