#include "vcare/cli.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "vcare/actors.hpp"
#include "vcare/contracts.hpp"
#include "vcare/ledger.hpp"
#include "vcare/simnet.hpp"

namespace vcare::cli {

namespace fs = std::filesystem;

namespace {

struct IoFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoFailure("cannot read " + path.string());
  return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoFailure("cannot create " + path.string());
  out << content;
  out.flush();
  if (!out) throw IoFailure("cannot write " + path.string());
}

// Parse failures surface as ChainFileError.
Chain load_chain(const fs::path& path) {
  std::istringstream in(read_file(path));
  return read_chain(in);
}

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const IoFailure& e) {
    err << "error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const ChainFileError& e) {
    err << "invalid chain: block " << e.line() << ": " << e.what() << "\n";
    return kDomainFailure;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kBadInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kBadInput;
  }
}

Address parse_address(const std::string& hex, std::string_view what) {
  try {
    return Address::from_hex(hex);
  } catch (const std::exception&) {
    throw std::invalid_argument(std::string(what) + " is not a 40-digit lowercase hex address");
  }
}

}  // namespace

int cmd_run(const fs::path& config_path, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const std::string text = read_file(config_path);
    Json j;
    try {
      j = Json::parse(text);
    } catch (const Json::exception& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    const ScenarioConfig config = scenario_from_json(j);
    const ScenarioRun run = run_scenario_world(config);

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoFailure("cannot create " + out_dir.string() + ": " + ec.message());

    std::ostringstream chain;
    write_chain(chain, run.report.final_chain);
    write_file(out_dir / "chain.ndjson", chain.str());
    std::string events;
    for (const auto& e : run.world.events) events += canonical_dump(e) + "\n";
    write_file(out_dir / "events.ndjson", events);
    const std::string summary = canonical_dump(run.report.summary_json());
    write_file(out_dir / "report.json", summary + "\n");
    out << summary << "\n";
    return kOk;
  });
}

int cmd_verify(const fs::path& chain_path, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Chain chain = load_chain(chain_path);
    const auto errors = validate_chain(chain);
    std::map<std::size_t, std::vector<const BlockError*>> by_block;
    for (const auto& e : errors) by_block[e.block_index].push_back(&e);
    for (std::size_t i = 0; i < chain.size(); ++i) {
      auto it = by_block.find(i);
      if (it == by_block.end()) {
        out << "block " << i << " ok " << chain[i].hash().hex() << "\n";
        continue;
      }
      for (const auto* e : it->second) out << "block " << i << " invalid: " << e->describe() << "\n";
    }
    if (errors.empty()) {
      out << "valid: " << chain.size() << " blocks\n";
      return kOk;
    }
    if (chain.empty()) {
      out << "invalid: " << errors.front().describe() << "\n";
    } else {
      out << "invalid: first failing block " << errors.front().block_index << "\n";
    }
    return kDomainFailure;
  });
}

int cmd_inspect(const std::optional<fs::path>& chain_path, const InspectTarget& target,
                std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    if (target.csv) {
      std::istringstream in(read_file(*target.csv));
      const auto records = read_obd_csv(in);
      VehicleState probe(generate_keypair(Bytes(32, 0)), records.size());
      for (std::size_t i = 0; i < records.size(); ++i) {
        try {
          probe.log_record(records[i]);
        } catch (const ActorError& e) {
          err << "record " << i << " rejected: " << to_string(e.code()) << "\n";
          return kDomainFailure;
        }
        out << canonical_dump(to_json(records[i])) << "\n";
      }
      return kOk;
    }
    if (!chain_path) throw std::invalid_argument("--chain is required");
    const Chain chain = load_chain(*chain_path);
    if (target.block) {
      if (*target.block >= chain.size()) {
        err << "no block " << *target.block << " (chain has " << chain.size() << ")\n";
        return kBadInput;
      }
      out << canonical_dump(to_json(chain[*target.block])) << "\n";
      return kOk;
    }
    if (target.tx) {
      const Digest id = Digest::from_hex(*target.tx);
      for (const auto& b : chain) {
        for (const auto& tx : b.transactions) {
          if (tx.tx_id == id) {
            out << canonical_dump(Json{{"block", b.header.index}, {"tx", to_json(tx)}}) << "\n";
            return kOk;
          }
        }
      }
      err << "transaction " << *target.tx << " not found\n";
      return kDomainFailure;
    }
    if (target.state) {
      if (auto errors = validate_chain(chain); !errors.empty()) {
        err << "invalid chain: " << errors.front().describe() << "\n";
        return kDomainFailure;
      }
      out << canonical_dump(ContractState::from_chain(chain).to_json()) << "\n";
      return kOk;
    }
    throw std::invalid_argument("one of --block, --tx, --state or --csv is required");
  });
}

int cmd_query_ac(const fs::path& chain_path, const std::string& address, std::ostream& out,
                 std::ostream& err) {
  return guarded(err, [&]() -> int {
    const Address owner = parse_address(address, "--address");
    const Chain chain = load_chain(chain_path);
    try {
      const ActivityContract ac = ac_reconstruct(chain, owner);
      for (const auto& e : ac.log) out << canonical_dump(to_json(e)) << "\n";
    } catch (const ContractError& e) {
      err << "invalid chain: " << e.what() << "\n";
      return kDomainFailure;
    }
    return kOk;
  });
}

int cmd_access_check(const fs::path& chain_path, const std::string& requester,
                     const std::string& vehicle, const std::string& query_text,
                     std::optional<std::uint64_t> round, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    const Address req = parse_address(requester, "--requester");
    const Address veh = parse_address(vehicle, "--vehicle");
    const auto query = try_parse_query(query_text);
    if (!query) throw std::invalid_argument("query does not parse: " + query_text);
    const Chain chain = load_chain(chain_path);
    if (auto errors = validate_chain(chain); !errors.empty()) {
      err << "invalid chain: " << errors.front().describe() << "\n";
      return kDomainFailure;
    }
    const ContractState state = ContractState::from_chain(chain);
    const Round now = round.value_or(chain.back().header.timestamp);
    const VsrcContract* vsrc = state.find_vsrc(veh, req);
    const AccessDecision d = vsrc ? vsrc_check_access(*vsrc, req, *query, now)
                                  : AccessDecision::deny(DenyReason::NotParty);
    Json j{{"decision", d.allowed ? "allow" : "deny"},
           {"query", query->to_string()},
           {"round", now},
           {"vsrc", vsrc ? vsrc->vsrc_id : ""}};
    if (!d.allowed) j["reason"] = to_string(d.reason);
    out << canonical_dump(j) << "\n";
    return kOk;
  });
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"V-CARE vehicle health record ledger", "vcare"};
  app.require_subcommand(1);

  std::string config, out_dir, chain, tx, address, requester, vehicle, query;
  std::string csv;
  std::size_t block = 0;
  std::uint64_t round = 0;
  bool state = false;

  auto* run = app.add_subcommand("run", "Run a scenario and write chain, events and report");
  run->add_option("--config", config, "Scenario JSON")->required();
  run->add_option("--out", out_dir, "Output directory")->required();

  auto* verify = app.add_subcommand("verify", "Validate a chain file block by block");
  verify->add_option("--chain", chain, "Chain file")->required();

  auto* inspect = app.add_subcommand("inspect", "Print a block, transaction or contract state");
  inspect->add_option("--chain", chain, "Chain file");
  auto* block_opt = inspect->add_option("--block", block, "Block index");
  auto* tx_opt = inspect->add_option("--tx", tx, "Transaction id (hex)");
  auto* state_opt = inspect->add_flag("--state", state, "Dump registry, VSRCs and activity contracts");
  auto* csv_opt = inspect->add_option("--csv", csv, "Check an OBD record CSV instead of a chain");
  block_opt->excludes(tx_opt)->excludes(state_opt)->excludes(csv_opt);
  tx_opt->excludes(state_opt)->excludes(csv_opt);
  state_opt->excludes(csv_opt);

  auto* qac = app.add_subcommand("query-ac", "Rebuild an entity's activity history from a chain");
  qac->add_option("--chain", chain, "Chain file")->required();
  qac->add_option("--address", address, "Entity address (hex)")->required();

  auto* acc = app.add_subcommand("access-check", "Dry-run an access decision against a chain");
  acc->add_option("--chain", chain, "Chain file")->required();
  acc->add_option("--requester", requester, "Requester address (hex)")->required();
  acc->add_option("--vehicle", vehicle, "Vehicle address (hex)")->required();
  acc->add_option("--query", query, "Query text")->required();
  auto* round_opt = acc->add_option("--round", round, "Evaluation round (default: tip timestamp)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kBadInput;
  }

  if (run->parsed()) return cmd_run(config, out_dir, out, err);
  if (verify->parsed()) return cmd_verify(chain, out, err);
  if (inspect->parsed()) {
    InspectTarget t;
    if (block_opt->count()) t.block = block;
    if (tx_opt->count()) t.tx = tx;
    t.state = state;
    if (csv_opt->count()) t.csv = csv;
    return cmd_inspect(chain.empty() ? std::nullopt : std::optional<fs::path>(chain), t, out, err);
  }
  if (qac->parsed()) return cmd_query_ac(chain, address, out, err);
  if (acc->parsed()) {
    return cmd_access_check(chain, requester, vehicle, query,
                            round_opt->count() ? std::optional<std::uint64_t>(round) : std::nullopt,
                            out, err);
  }
  err << app.help();
  return kBadInput;
}

}  // namespace vcare::cli
