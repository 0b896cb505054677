#pragma once

// Canonical encoding shared by every hashed or persisted structure: minified
// JSON, object keys in lexicographic byte order, integers in base 10, byte
// fields as lowercase hex strings.

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "vcare/crypto.hpp"

namespace vcare {

using Json = nlohmann::json;

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string canonical_dump(const Json& value);

// Parses text and rejects anything that does not re-encode to the same bytes.
Json parse_canonical(std::string_view text);

// Integral values encode as integers, everything else as the shortest
// round-trip decimal.
Json number_json(double value);

namespace json_field {

// Throws DecodeError unless obj is an object with exactly these keys.
void expect_keys(const Json& obj, std::initializer_list<std::string_view> keys);

const Json& get(const Json& obj, std::string_view key);
std::uint64_t u64(const Json& obj, std::string_view key);
double number(const Json& obj, std::string_view key);
std::string string(const Json& obj, std::string_view key);
Digest digest(const Json& obj, std::string_view key);
Address address(const Json& obj, std::string_view key);
PublicKey public_key(const Json& obj, std::string_view key);
const Json& array(const Json& obj, std::string_view key);

}  // namespace json_field

template <class T>
Json hex_json(const T& fixed) {
  return fixed.hex();
}

}  // namespace vcare
