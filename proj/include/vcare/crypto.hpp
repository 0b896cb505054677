#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vcare {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

// Lowercase hex, no prefix.
std::string to_hex(ByteView bytes);
// Throws std::invalid_argument on odd length, uppercase or non-hex characters.
Bytes from_hex(std::string_view hex);

inline ByteView as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

// Fixed-width byte string. The tag keeps digests, addresses and keys from
// being mixed up even though they share a representation.
template <std::size_t N, class Tag>
class FixedBytes {
 public:
  static constexpr std::size_t size() { return N; }

  constexpr FixedBytes() = default;
  explicit FixedBytes(ByteView bytes) {
    if (bytes.size() != N) {
      throw std::invalid_argument("expected " + std::to_string(N) + " bytes, got " +
                                  std::to_string(bytes.size()));
    }
    std::copy(bytes.begin(), bytes.end(), data_.begin());
  }

  static FixedBytes from_hex(std::string_view hex) { return FixedBytes(vcare::from_hex(hex)); }

  std::string hex() const { return to_hex(data_); }
  ByteView view() const { return data_; }
  const std::array<std::uint8_t, N>& data() const { return data_; }
  std::array<std::uint8_t, N>& data() { return data_; }
  std::uint8_t operator[](std::size_t i) const { return data_[i]; }

  bool is_zero() const {
    for (auto b : data_) {
      if (b != 0) return false;
    }
    return true;
  }

  friend auto operator<=>(const FixedBytes&, const FixedBytes&) = default;

 private:
  std::array<std::uint8_t, N> data_{};
};

struct DigestTag {};
struct AddressTag {};
struct PublicKeyTag {};
struct PrivateKeyTag {};

using Digest = FixedBytes<32, DigestTag>;
using Address = FixedBytes<20, AddressTag>;
using PublicKey = FixedBytes<32, PublicKeyTag>;
using PrivateKey = FixedBytes<32, PrivateKeyTag>;

enum class CryptoErrc { BadSeedLength, MalformedKey };

class CryptoError : public std::runtime_error {
 public:
  CryptoError(CryptoErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  CryptoErrc code() const { return code_; }

 private:
  CryptoErrc code_;
};

// Ed25519 key pair. The private key is the 32-byte seed; the expanded
// secret is recomputed on signing.
struct KeyPair {
  PrivateKey private_key;
  PublicKey public_key;

  friend bool operator==(const KeyPair&, const KeyPair&) = default;
};

struct Signature {
  std::array<std::uint8_t, 64> value{};
  Address signer;

  friend bool operator==(const Signature&, const Signature&) = default;
};

// Incremental SHA-256. Copyable, so a common prefix can be hashed once and
// the state reused.
class Sha256 {
 public:
  Sha256();
  Sha256& update(ByteView data);
  Sha256& update(std::string_view data) { return update(as_bytes(data)); }
  Digest finish() const;

 private:
  alignas(16) std::array<std::uint8_t, 128> state_{};
};

// SHA-256.
Digest hash_bytes(ByteView data);
inline Digest hash_bytes(std::string_view data) { return hash_bytes(as_bytes(data)); }

KeyPair generate_keypair(ByteView seed);

// Last 20 bytes of SHA-256 over the raw public key bytes.
Address derive_address(ByteView public_key);
inline Address derive_address(const PublicKey& public_key) {
  return derive_address(public_key.view());
}

Signature sign(const PrivateKey& private_key, ByteView message);
bool verify(const PublicKey& public_key, ByteView message, const Signature& signature);

// Number of leading zero bits of a digest, 0..256.
unsigned leading_zero_bits(const Digest& digest);

}  // namespace vcare
