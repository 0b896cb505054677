#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "support.hpp"
#include "vcare/canonical.hpp"
#include "vcare/obd.hpp"
#include "vcare/query.hpp"
#include "vcare/transaction.hpp"

using namespace vcare;

TEST(Canonical, SortedKeys) {
  Json j;
  j["b"] = 2;
  j["a"] = 1;
  EXPECT_EQ(canonical_dump(j), R"({"a":1,"b":2})");
}

TEST(Canonical, RejectsNonCanonicalText) {
  EXPECT_EQ(canonical_dump(parse_canonical(R"({"a":[1,"x"],"b":null})")), R"({"a":[1,"x"],"b":null})");
  EXPECT_THROW(parse_canonical(R"({"b":1,"a":2})"), DecodeError);
  EXPECT_THROW(parse_canonical(R"({"a": 1})"), DecodeError);
  EXPECT_THROW(parse_canonical("{\"a\":1}\n"), DecodeError);
  EXPECT_THROW(parse_canonical("{"), DecodeError);
}

TEST(Canonical, Numbers) {
  EXPECT_EQ(canonical_dump(number_json(3.0)), "3");
  EXPECT_EQ(canonical_dump(number_json(-0.0)), "0");
  EXPECT_EQ(canonical_dump(number_json(-40.0)), "-40");
  EXPECT_EQ(canonical_dump(number_json(16383.75)), "16383.75");
  EXPECT_EQ(canonical_dump(number_json(0.1)), "0.1");
}

TEST(Canonical, RoundTripProperty) {
  std::mt19937_64 gen(11);
  for (int i = 0; i < 500; ++i) {
    Json j = Json::object();
    const int n = static_cast<int>(gen() % 6);
    for (int k = 0; k < n; ++k) {
      std::string key(1 + gen() % 4, 'a');
      for (auto& c : key) c = static_cast<char>('a' + gen() % 26);
      switch (gen() % 4) {
        case 0: j[key] = gen() % 1000000; break;
        case 1: j[key] = number_json(static_cast<double>(gen() % 100000) / 8.0); break;
        case 2: j[key] = std::string(gen() % 5, 'q'); break;
        default: j[key] = Json::array({gen() % 3, "z", nullptr}); break;
      }
    }
    const std::string bytes = canonical_dump(j);
    EXPECT_EQ(canonical_dump(parse_canonical(bytes)), bytes);
  }
}

TEST(Canonical, EmptyListHash) {
  EXPECT_EQ(canonical_dump(Json::array()), "[]");
  EXPECT_EQ(hash_bytes(canonical_dump(Json::array())).hex(), vcare::testing::oracle_sha256("[]"));
}

TEST(Canonical, TransactionIndependentOfConstructionOrder) {
  auto v = vcare::testing::key_from_label("v");
  auto c = vcare::testing::key_from_label("c");
  DataUploadPayload p;
  p.block_hash = hash_bytes("block");
  p.timestamp = 5;
  p.csp = derive_address(c.public_key);
  p.vehicle = derive_address(v.public_key);
  p.seq = 3;
  auto tx = make_transaction(p, p.vehicle, {p.vehicle, p.csp}, 5);
  Json j = to_json(tx);
  Json reordered = Json::object();
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  for (auto it = keys.rbegin(); it != keys.rend(); ++it) reordered[*it] = j[*it];
  EXPECT_EQ(canonical_dump(reordered), canonical_dump(j));
  EXPECT_EQ(transaction_from_json(parse_canonical(canonical_dump(j))), tx);
}

TEST(Obd, RangesAndOrder) {
  EXPECT_TRUE(in_range("vehicle_speed", 255));
  EXPECT_FALSE(in_range("vehicle_speed", 300));
  EXPECT_TRUE(in_range("coolant_temp", -40));
  EXPECT_FALSE(in_range("dtc_count", 1.5));
  EXPECT_FALSE(in_range("oil_pressure", 1));
  EXPECT_TRUE(record_less({1, "vehicle_speed", 0}, {2, "coolant_temp", 0}));
  EXPECT_TRUE(record_less({1, "coolant_temp", 0}, {1, "vehicle_speed", 0}));
  for (std::size_t i = 1; i < kObdParameters.size(); ++i) {
    EXPECT_LT(kObdParameters[i - 1].name, kObdParameters[i].name);
  }
}

TEST(Obd, CsvImport) {
  std::istringstream ok("timestamp,parameter,value\n1,vehicle_speed,42\n2,engine_rpm, 800.25\n");
  auto records = read_obd_csv(ok);
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[1], (ObdRecord{2, "engine_rpm", 800.25}));
  std::istringstream bad_header("ts,param,value\n");
  EXPECT_THROW(read_obd_csv(bad_header), DecodeError);
  std::istringstream bad_param("timestamp,parameter,value\n1,oil,3\n");
  EXPECT_THROW(read_obd_csv(bad_param), DecodeError);
}

TEST(Query, Grammar) {
  auto q = parse_query("select vehicle_speed, engine_rpm from 10 to 20");
  EXPECT_EQ(q.parameters, (std::vector<std::string>{"engine_rpm", "vehicle_speed"}));
  EXPECT_EQ(q.time_from, 10u);
  EXPECT_EQ(q.time_to, 20u);
  EXPECT_EQ(q.to_string(), "select engine_rpm,vehicle_speed from 10 to 20");
  EXPECT_EQ(parse_query(q.to_string()), q);
  EXPECT_THROW(parse_query("select vehicle_speed from 20 to 10"), QueryError);
  EXPECT_THROW(parse_query("select from 1 to 2"), QueryError);
  EXPECT_THROW(parse_query("select oil from 1 to 2"), QueryError);
  EXPECT_THROW(parse_query("select vehicle_speed,vehicle_speed from 1 to 2"), QueryError);
  EXPECT_THROW(parse_query("SELECT vehicle_speed from 1 to 2"), QueryError);
  EXPECT_FALSE(try_parse_query("select vehicle_speed from x to 2"));
}

TEST(Query, Containment) {
  auto outer = parse_query("select engine_rpm,vehicle_speed from 0 to 100");
  EXPECT_TRUE(outer.contains(parse_query("select vehicle_speed from 10 to 20")));
  EXPECT_FALSE(outer.contains(parse_query("select vehicle_speed from 10 to 101")));
  EXPECT_FALSE(outer.contains(parse_query("select fuel_level from 10 to 20")));
  EXPECT_TRUE(outer.selects({100, "engine_rpm", 1}));
  EXPECT_FALSE(outer.selects({101, "engine_rpm", 1}));
}
