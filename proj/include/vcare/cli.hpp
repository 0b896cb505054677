#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace vcare::cli {

enum ExitCode : int { kOk = 0, kDomainFailure = 1, kBadInput = 2, kIoFailure = 3 };

int cmd_run(const std::filesystem::path& config, const std::filesystem::path& out_dir,
            std::ostream& out, std::ostream& err);
int cmd_verify(const std::filesystem::path& chain, std::ostream& out, std::ostream& err);

struct InspectTarget {
  std::optional<std::size_t> block;
  std::optional<std::string> tx;  // hex id
  bool state = false;
  std::optional<std::filesystem::path> csv;  // OBD records to check and print
};
int cmd_inspect(const std::optional<std::filesystem::path>& chain, const InspectTarget& target,
                std::ostream& out, std::ostream& err);
int cmd_query_ac(const std::filesystem::path& chain, const std::string& address, std::ostream& out,
                 std::ostream& err);
// `round` defaults to the tip block's timestamp.
int cmd_access_check(const std::filesystem::path& chain, const std::string& requester,
                     const std::string& vehicle, const std::string& query,
                     std::optional<std::uint64_t> round, std::ostream& out, std::ostream& err);

// Parses argv and dispatches. Unknown verbs print usage and return kBadInput.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace vcare::cli
