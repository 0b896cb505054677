#pragma once

#include <openssl/evp.h>

#include <string>
#include <vector>

#include "vcare/actors.hpp"
#include "vcare/contracts.hpp"
#include "vcare/ledger.hpp"

namespace vcare::testing {

// Independent SHA-256 (OpenSSL) used as the oracle for derived values.
inline std::string oracle_sha256(const void* data, std::size_t size) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data, size, md, &len, EVP_sha256(), nullptr);
  static const char* digits = "0123456789abcdef";
  std::string hex;
  for (unsigned i = 0; i < len; ++i) {
    hex += digits[md[i] >> 4];
    hex += digits[md[i] & 15];
  }
  return hex;
}

inline std::string oracle_sha256(const std::string& s) { return oracle_sha256(s.data(), s.size()); }

inline KeyPair key_from_label(std::string_view label) {
  return generate_keypair(hash_bytes(label).view());
}

// A registered population sealed into a genesis block: TA, one vehicle, two
// CSPs and an insurer. Blocks are mined at low difficulty.
struct Population {
  static constexpr unsigned kDifficulty = 4;

  KeyPair ta = key_from_label("test/ta");
  ContractState state;
  Registration vehicle, csp, other_csp, insurer;
  Chain chain;

  explicit Population(Round license_expiry = 1'000'000) {
    std::vector<Transaction> txs;
    txs.push_back(rc_bootstrap(state, ta, "TA", license_expiry, 0).tx);
    vehicle = rc_register(state, "VH-001", Role::Vehicle, license_expiry, ta, 0);
    csp = rc_register(state, "CSP-01", Role::CSP, license_expiry, ta, 0);
    other_csp = rc_register(state, "CSP-02", Role::CSP, license_expiry, ta, 0);
    insurer = rc_register(state, "insurer", Role::ServiceProvider, license_expiry, ta, 0);
    for (auto* r : {&vehicle, &csp, &other_csp, &insurer}) txs.push_back(r->tx);
    chain.push_back(mine_genesis(std::move(txs), kDifficulty, address(ta), 0, 0));
    state = ContractState::from_chain(chain);
  }

  static Address address(const KeyPair& k) { return derive_address(k.public_key); }
  const Registry& registry() const { return state.registry(); }

  // Mines `txs` on top of the chain and applies them.
  const Block& seal(std::vector<Transaction> txs, Round timestamp) {
    chain.push_back(mine_block(std::move(txs), chain.back().header, kDifficulty, address(ta), 0, timestamp));
    state.apply_block(chain.back());
    return chain.back();
  }

  // Empty-ish blocks to bury earlier transactions; each carries a fresh
  // registration so the block is non-empty.
  void bury(std::size_t blocks, Round timestamp) {
    for (std::size_t i = 0; i < blocks; ++i) {
      auto reg = rc_register(state, "filler-" + std::to_string(chain.size()), Role::RSU, 1'000'000, ta,
                             timestamp);
      state = ContractState::from_chain(chain);
      seal({reg.tx}, timestamp);
    }
  }
};

}  // namespace vcare::testing
