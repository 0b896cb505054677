#include "vcare/canonical.hpp"

#include <cmath>

namespace vcare {

std::string canonical_dump(const Json& value) {
  return value.dump(-1, ' ', false, Json::error_handler_t::strict);
}

Json parse_canonical(std::string_view text) {
  Json value;
  try {
    value = Json::parse(text.begin(), text.end());
  } catch (const Json::exception& e) {
    throw DecodeError(std::string("malformed JSON: ") + e.what());
  }
  std::string again;
  try {
    again = canonical_dump(value);
  } catch (const Json::exception& e) {
    throw DecodeError(std::string("unencodable JSON: ") + e.what());
  }
  if (again != text) throw DecodeError("input is not in canonical form");
  return value;
}

Json number_json(double value) {
  constexpr double kExactLimit = 9007199254740992.0;  // 2^53
  if (std::isfinite(value) && std::trunc(value) == value && std::fabs(value) < kExactLimit) {
    if (value == 0.0) return 0;  // also folds -0.0
    return static_cast<std::int64_t>(value);
  }
  if (!std::isfinite(value)) throw std::invalid_argument("non-finite number has no encoding");
  return value;
}

namespace json_field {

namespace {

[[noreturn]] void fail(std::string_view key, std::string_view problem) {
  throw DecodeError("field '" + std::string(key) + "': " + std::string(problem));
}

template <class T>
T fixed(const Json& obj, std::string_view key) {
  const Json& v = get(obj, key);
  if (!v.is_string()) fail(key, "expected hex string");
  const auto& s = v.get_ref<const std::string&>();
  if (s.size() != 2 * T::size()) fail(key, "wrong hex length");
  try {
    return T::from_hex(s);
  } catch (const std::invalid_argument& e) {
    fail(key, e.what());
  }
}

}  // namespace

void expect_keys(const Json& obj, std::initializer_list<std::string_view> keys) {
  if (!obj.is_object()) throw DecodeError("expected object");
  if (obj.size() != keys.size()) throw DecodeError("unexpected field set in object");
  for (auto k : keys) {
    if (!obj.contains(k)) fail(k, "missing");
  }
}

const Json& get(const Json& obj, std::string_view key) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(key, "missing");
  return *it;
}

std::uint64_t u64(const Json& obj, std::string_view key) {
  const Json& v = get(obj, key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  }
  fail(key, "expected non-negative integer");
}

double number(const Json& obj, std::string_view key) {
  const Json& v = get(obj, key);
  if (!v.is_number()) fail(key, "expected number");
  return v.get<double>();
}

std::string string(const Json& obj, std::string_view key) {
  const Json& v = get(obj, key);
  if (!v.is_string()) fail(key, "expected string");
  return v.get<std::string>();
}

Digest digest(const Json& obj, std::string_view key) { return fixed<Digest>(obj, key); }
Address address(const Json& obj, std::string_view key) { return fixed<Address>(obj, key); }
PublicKey public_key(const Json& obj, std::string_view key) { return fixed<PublicKey>(obj, key); }

const Json& array(const Json& obj, std::string_view key) {
  const Json& v = get(obj, key);
  if (!v.is_array()) fail(key, "expected array");
  return v;
}

}  // namespace json_field

}  // namespace vcare
