#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "vcare/obd.hpp"

namespace vcare {

class QueryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parsed form of `select p1,p2,... from R1 to R2`.
struct QuerySpec {
  std::vector<std::string> parameters;  // sorted, unique
  Round time_from = 0;
  Round time_to = 0;

  // True when every parameter and the whole window of `inner` lie inside this spec.
  bool contains(const QuerySpec& inner) const;
  bool selects(const ObdRecord& record) const;
  std::string to_string() const;

  friend bool operator==(const QuerySpec&, const QuerySpec&) = default;
};

// Throws QueryError on grammar violations, unknown parameters, duplicate
// parameters or an inverted window.
QuerySpec parse_query(std::string_view text);
std::optional<QuerySpec> try_parse_query(std::string_view text);

}  // namespace vcare
