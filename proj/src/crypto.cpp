#include "vcare/crypto.hpp"

#include <sodium.h>

#include <bit>
#include <mutex>

namespace vcare {

namespace {

void ensure_sodium() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (sodium_init() < 0) throw std::runtime_error("libsodium initialisation failed");
  });
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

}  // namespace

std::string to_hex(ByteView bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0x0f]);
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw std::invalid_argument("odd-length hex string");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = hex_value(hex[2 * i]);
    int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw std::invalid_argument("invalid hex character");
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

static_assert(sizeof(crypto_hash_sha256_state) <= 128);

Sha256::Sha256() {
  ensure_sodium();
  crypto_hash_sha256_init(reinterpret_cast<crypto_hash_sha256_state*>(state_.data()));
}

Sha256& Sha256::update(ByteView data) {
  crypto_hash_sha256_update(reinterpret_cast<crypto_hash_sha256_state*>(state_.data()),
                            data.data(), data.size());
  return *this;
}

Digest Sha256::finish() const {
  auto copy = state_;
  Digest d;
  crypto_hash_sha256_final(reinterpret_cast<crypto_hash_sha256_state*>(copy.data()),
                           d.data().data());
  return d;
}

Digest hash_bytes(ByteView data) {
  ensure_sodium();
  Digest d;
  crypto_hash_sha256(d.data().data(), data.data(), data.size());
  return d;
}

KeyPair generate_keypair(ByteView seed) {
  if (seed.size() != crypto_sign_SEEDBYTES) {
    throw CryptoError(CryptoErrc::BadSeedLength,
                      "seed must be 32 bytes, got " + std::to_string(seed.size()));
  }
  ensure_sodium();
  KeyPair kp;
  std::array<std::uint8_t, crypto_sign_SECRETKEYBYTES> expanded{};
  crypto_sign_seed_keypair(kp.public_key.data().data(), expanded.data(), seed.data());
  std::copy(seed.begin(), seed.end(), kp.private_key.data().begin());
  sodium_memzero(expanded.data(), expanded.size());
  return kp;
}

Address derive_address(ByteView public_key) {
  if (public_key.size() != PublicKey::size()) {
    throw CryptoError(CryptoErrc::MalformedKey,
                      "public key must be 32 bytes, got " + std::to_string(public_key.size()));
  }
  Digest d = hash_bytes(public_key);
  return Address(d.view().subspan(Digest::size() - Address::size()));
}

Signature sign(const PrivateKey& private_key, ByteView message) {
  ensure_sodium();
  std::array<std::uint8_t, crypto_sign_PUBLICKEYBYTES> pk{};
  std::array<std::uint8_t, crypto_sign_SECRETKEYBYTES> sk{};
  crypto_sign_seed_keypair(pk.data(), sk.data(), private_key.data().data());
  Signature sig;
  crypto_sign_detached(sig.value.data(), nullptr, message.data(), message.size(), sk.data());
  sodium_memzero(sk.data(), sk.size());
  sig.signer = derive_address(ByteView(pk));
  return sig;
}

bool verify(const PublicKey& public_key, ByteView message, const Signature& signature) {
  ensure_sodium();
  if (signature.signer != derive_address(public_key)) return false;
  return crypto_sign_verify_detached(signature.value.data(), message.data(), message.size(),
                                     public_key.data().data()) == 0;
}

unsigned leading_zero_bits(const Digest& digest) {
  unsigned bits = 0;
  for (auto b : digest.data()) {
    if (b == 0) {
      bits += 8;
      continue;
    }
    bits += static_cast<unsigned>(std::countl_zero(b));
    break;
  }
  return bits;
}

}  // namespace vcare
