#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "support.hpp"
#include "vcare/cli.hpp"
#include "vcare/simnet.hpp"

using namespace vcare;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "vcare");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("vcare_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  fs::path write_config() {
    ScenarioConfig c;
    c.seed = 5;
    c.rounds = 40;
    c.road_length = 300;
    c.vehicles = {4, 5, 15};
    c.rsus = {{0, 60, 0}, {150, 60, 0}};
    c.fog_nodes = {{0}};
    c.csps = 1;
    c.providers = {{"insurer", "insurer", 0.5}};
    c.difficulty = 6;
    c.miner_hashes_per_round = 32;
    c.vsrc_templates = {{0, {{"select engine_rpm,vehicle_speed from 0 to 1000", Permission::Allow, 1000, ""}}}};
    c.quiet_tail = 10;
    auto path = dir / "config.json";
    spit(path, canonical_dump(to_json(c)));
    return path;
  }

  fs::path dir;
};

}  // namespace

TEST_F(CliTest, UnknownVerbAndMissingFlags) {
  auto r = invoke({"frobnicate"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_EQ(invoke({"verify"}).code, 2);
  EXPECT_EQ(invoke({}).code, 2);
}

TEST_F(CliTest, RunWritesOutputsDeterministically) {
  auto config = write_config();
  auto a = invoke({"run", "--config", config.string(), "--out", (dir / "a").string()});
  ASSERT_EQ(a.code, 0) << a.err;
  for (auto f : {"chain.ndjson", "events.ndjson", "report.json"}) EXPECT_TRUE(fs::exists(dir / "a" / f)) << f;
  auto b = invoke({"run", "--config", config.string(), "--out", (dir / "b").string()});
  ASSERT_EQ(b.code, 0);
  EXPECT_EQ(slurp(dir / "a" / "chain.ndjson"), slurp(dir / "b" / "chain.ndjson"));
  EXPECT_EQ(a.out, b.out);

  // Metrics recomputed from the event log match the report.
  std::vector<Json> events;
  std::istringstream ev(slurp(dir / "a" / "events.ndjson"));
  for (std::string line; std::getline(ev, line);) events.push_back(parse_canonical(line));
  std::istringstream ch(slurp(dir / "a" / "chain.ndjson"));
  EXPECT_EQ(canonical_dump(compute_report(events, read_chain(ch)).summary_json()) + "\n",
            slurp(dir / "a" / "report.json"));
}

TEST_F(CliTest, RunErrors) {
  EXPECT_EQ(invoke({"run", "--config", (dir / "missing.json").string(), "--out", dir.string()}).code, 3);
  spit(dir / "bad.json", "{\"seed\": 1}");
  EXPECT_EQ(invoke({"run", "--config", (dir / "bad.json").string(), "--out", dir.string()}).code, 2);
  spit(dir / "junk.json", "not json");
  EXPECT_EQ(invoke({"run", "--config", (dir / "junk.json").string(), "--out", dir.string()}).code, 2);
}

TEST_F(CliTest, VerifyDetectsTampering) {
  auto config = write_config();
  ASSERT_EQ(invoke({"run", "--config", config.string(), "--out", dir.string()}).code, 0);
  const auto chain_path = dir / "chain.ndjson";
  auto ok = invoke({"verify", "--chain", chain_path.string()});
  EXPECT_EQ(ok.code, 0) << ok.out;

  std::string text = slurp(chain_path);
  const std::size_t second_line = text.find('\n') + 1;
  const std::size_t pos = text.find("\"nonce\":", second_line) + 8;
  text[pos] = text[pos] == '1' ? '2' : '1';
  spit(dir / "tampered.ndjson", text);
  auto bad = invoke({"verify", "--chain", (dir / "tampered.ndjson").string()});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE((bad.out + bad.err).find("block 1"), std::string::npos) << bad.out << bad.err;

  spit(dir / "empty.ndjson", "");
  auto empty = invoke({"verify", "--chain", (dir / "empty.ndjson").string()});
  EXPECT_EQ(empty.code, 1);
  EXPECT_NE(empty.out.find("NoGenesis"), std::string::npos);
  EXPECT_EQ(invoke({"verify", "--chain", (dir / "absent.ndjson").string()}).code, 3);
}

TEST_F(CliTest, QueryAcReplaysHistory) {
  vcare::testing::Population p;
  VehicleState v(p.vehicle.keypair);
  CspStore store;
  store.owner = derive_address(p.csp.keypair.public_key);
  p.seal({make_vsrc_deploy(p.vehicle.keypair, &p.insurer.keypair,
                           {{"p0", "select vehicle_speed from 0 to 100", Permission::Allow, 100, ""}}, 1)},
         1);
  for (Round t = 2; t < 5; ++t) {
    v.log_record({t, "vehicle_speed", 30});
    auto [block, draft] = v.package_data_block(store.owner, p.registry(), 64, t);
    csp_receive_data(store, block);
    p.seal({std::get<Transaction>(csp_cosign(store, p.csp.keypair, draft, p.registry()))}, t);
  }
  p.bury(2, 6);
  csp_update_confirmed(store, p.chain, 2);
  auto req = request_access(p.insurer.keypair, p.registry(), v.address(), store.owner,
                            "select vehicle_speed from 0 to 10", 7);
  auto outcome = csp_handle_access(store, p.state, p.csp.keypair, req, 7);
  ASSERT_TRUE(outcome.decision.allowed);
  p.seal({req, outcome.log_tx}, 7);

  std::ostringstream file;
  write_chain(file, p.chain);
  spit(dir / "chain.ndjson", file.str());
  const auto chain_arg = (dir / "chain.ndjson").string();

  auto r = invoke({"query-ac", "--chain", chain_arg, "--address", v.address().hex()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines(r.out), 4u);
  EXPECT_EQ(invoke({"query-ac", "--chain", chain_arg, "--address", v.address().hex()}).out, r.out);

  auto unknown = invoke({"query-ac", "--chain", chain_arg, "--address", std::string(40, 'e')});
  EXPECT_EQ(unknown.code, 0);
  EXPECT_TRUE(unknown.out.empty());
  EXPECT_EQ(invoke({"query-ac", "--chain", chain_arg, "--address", "xyz"}).code, 2);

  const auto insurer = derive_address(p.insurer.keypair.public_key).hex();
  auto allow = invoke({"access-check", "--chain", chain_arg, "--requester", insurer, "--vehicle", v.address().hex(),
                    "--query", "select vehicle_speed from 0 to 10"});
  EXPECT_EQ(allow.code, 0);
  EXPECT_NE(allow.out.find("\"decision\":\"allow\""), std::string::npos) << allow.out;
  auto expired = invoke({"access-check", "--chain", chain_arg, "--requester", insurer, "--vehicle", v.address().hex(),
                      "--query", "select vehicle_speed from 0 to 10", "--round", "101"});
  EXPECT_NE(expired.out.find("\"reason\":\"Expired\""), std::string::npos) << expired.out;
  auto stranger = invoke({"access-check", "--chain", chain_arg, "--requester", std::string(40, 'e'), "--vehicle",
                       v.address().hex(), "--query", "select vehicle_speed from 0 to 10"});
  EXPECT_NE(stranger.out.find("\"decision\":\"deny\""), std::string::npos);
  EXPECT_EQ(invoke({"access-check", "--chain", chain_arg, "--requester", insurer, "--vehicle", v.address().hex(),
                 "--query", "select nothing"})
                .code,
            2);

  auto blk = invoke({"inspect", "--chain", chain_arg, "--block", "1"});
  ASSERT_EQ(blk.code, 0);
  EXPECT_EQ(block_from_json(parse_canonical(blk.out.substr(0, blk.out.size() - 1))), p.chain[1]);
  auto tx = invoke({"inspect", "--chain", chain_arg, "--tx", req.tx_id.hex()});
  EXPECT_EQ(tx.code, 0);
  EXPECT_NE(tx.out.find(req.tx_id.hex()), std::string::npos);
  auto state = invoke({"inspect", "--chain", chain_arg, "--state"});
  EXPECT_EQ(state.code, 0);
  EXPECT_EQ(state.out, canonical_dump(ContractState::from_chain(p.chain).to_json()) + "\n");
  EXPECT_EQ(invoke({"inspect", "--chain", chain_arg, "--block", "99"}).code, 2);
}

TEST_F(CliTest, InspectCsv) {
  spit(dir / "ok.csv", "timestamp,parameter,value\n1,vehicle_speed,10\n2,coolant_temp,90\n");
  auto ok = invoke({"inspect", "--csv", (dir / "ok.csv").string()});
  EXPECT_EQ(ok.code, 0);
  EXPECT_EQ(lines(ok.out), 2u);
  spit(dir / "range.csv", "timestamp,parameter,value\n1,vehicle_speed,300\n");
  EXPECT_EQ(invoke({"inspect", "--csv", (dir / "range.csv").string()}).code, 1);
  spit(dir / "syntax.csv", "timestamp,parameter,value\n1;vehicle_speed;3\n");
  EXPECT_EQ(invoke({"inspect", "--csv", (dir / "syntax.csv").string()}).code, 2);
}
