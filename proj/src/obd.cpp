#include "vcare/obd.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <tuple>

namespace vcare {

const ObdParameter* find_obd_parameter(std::string_view name) {
  for (const auto& p : kObdParameters) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

bool in_range(std::string_view parameter, double value) {
  const auto* p = find_obd_parameter(parameter);
  if (p == nullptr || !std::isfinite(value)) return false;
  if (value < p->min || value > p->max) return false;
  if (parameter == "dtc_count" && std::trunc(value) != value) return false;
  return true;
}

bool record_less(const ObdRecord& a, const ObdRecord& b) {
  return std::tie(a.timestamp, a.parameter) < std::tie(b.timestamp, b.parameter);
}

Json to_json(const ObdRecord& r) {
  return Json{{"parameter", r.parameter}, {"timestamp", r.timestamp}, {"value", number_json(r.value)}};
}

ObdRecord obd_record_from_json(const Json& j) {
  json_field::expect_keys(j, {"parameter", "timestamp", "value"});
  return ObdRecord{json_field::u64(j, "timestamp"), json_field::string(j, "parameter"),
                   json_field::number(j, "value")};
}

Json records_json(const std::vector<ObdRecord>& records) {
  Json arr = Json::array();
  for (const auto& r : records) arr.push_back(to_json(r));
  return arr;
}


namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::vector<ObdRecord> read_obd_csv(std::istream& in) {
  std::vector<ObdRecord> out;
  std::string line;
  std::size_t n = 0;
  auto fail = [&](const std::string& msg) {
    throw DecodeError("csv line " + std::to_string(n) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++n;
    std::string_view row = trim(line);
    if (n == 1) {
      if (row != "timestamp,parameter,value") fail("expected header timestamp,parameter,value");
      continue;
    }
    if (row.empty()) continue;
    auto c1 = row.find(',');
    auto c2 = c1 == std::string_view::npos ? c1 : row.find(',', c1 + 1);
    if (c2 == std::string_view::npos || row.find(',', c2 + 1) != std::string_view::npos) {
      fail("expected three fields");
    }
    auto ts = trim(row.substr(0, c1));
    auto param = trim(row.substr(c1 + 1, c2 - c1 - 1));
    auto val = trim(row.substr(c2 + 1));
    ObdRecord r;
    auto [p1, e1] = std::from_chars(ts.data(), ts.data() + ts.size(), r.timestamp);
    if (e1 != std::errc() || p1 != ts.data() + ts.size()) fail("bad timestamp");
    auto [p2, e2] = std::from_chars(val.data(), val.data() + val.size(), r.value);
    if (e2 != std::errc() || p2 != val.data() + val.size() || !std::isfinite(r.value)) fail("bad value");
    if (!find_obd_parameter(param)) fail("unknown parameter '" + std::string(param) + "'");
    r.parameter = std::string(param);
    out.push_back(std::move(r));
  }
  if (n == 0) fail("empty input");
  return out;
}

}  // namespace vcare
