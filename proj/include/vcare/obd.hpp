#pragma once

#include <array>
#include <iosfwd>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vcare/canonical.hpp"

namespace vcare {

using Round = std::uint64_t;

// Supported OBD-II parameters with their SAE J1979 value ranges.
struct ObdParameter {
  std::string_view name;
  std::string_view unit;
  double min;
  double max;
};

// Sorted by name.
inline constexpr std::array<ObdParameter, 6> kObdParameters{{
    {"coolant_temp", "degC", -40.0, 215.0},
    {"dtc_count", "count", 0.0, 127.0},
    {"engine_rpm", "rpm", 0.0, 16383.75},
    {"fuel_level", "percent", 0.0, 100.0},
    {"throttle_position", "percent", 0.0, 100.0},
    {"vehicle_speed", "km/h", 0.0, 255.0},
}};

const ObdParameter* find_obd_parameter(std::string_view name);
bool in_range(std::string_view parameter, double value);

struct ObdRecord {
  Round timestamp = 0;
  std::string parameter;
  double value = 0.0;

  friend bool operator==(const ObdRecord&, const ObdRecord&) = default;
};

// Order used by every record list: (timestamp, parameter).
bool record_less(const ObdRecord& a, const ObdRecord& b);

Json to_json(const ObdRecord& r);
ObdRecord obd_record_from_json(const Json& j);
Json records_json(const std::vector<ObdRecord>& records);

// CSV with header `timestamp,parameter,value`. Rows are returned as read;
// range and ordering checks are left to the logger. Throws DecodeError
// naming the 1-based line.
std::vector<ObdRecord> read_obd_csv(std::istream& in);

}  // namespace vcare
