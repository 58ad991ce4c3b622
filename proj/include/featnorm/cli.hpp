#pragma once

// Command-line surface: ingest, scree, oracle-fill, loo, sweep, synth.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "featnorm/error.hpp"

namespace featnorm::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitUsage = 2,
  kExitParse = 3,
  kExitNumeric = 4,
  kExitNetwork = 5,
  kExitConfig = 6,
  kExitIo = 7,
};

int exit_code_for(ErrorKind kind) noexcept;

struct InputDigest {
  std::filesystem::path path;
  std::string sha256;
};

/// Provenance record written next to a subcommand's outputs, before them.
struct RunManifest {
  std::string subcommand;
  std::string config_json;  // resolved option values, JSON object
  std::vector<InputDigest> inputs;
  std::vector<std::filesystem::path> outputs;
  std::uint64_t seed = 0;
  std::string created_at;  // the only field that varies between identical runs

  /// Hashes each input path and records it.
  void add_input(const std::filesystem::path& path);
  std::string to_json() const;
  void write(const std::filesystem::path& path) const;
};

/// "<output>.manifest.json"
std::filesystem::path manifest_path_for(const std::filesystem::path& output);

/// Parses and runs a command line (argv[0] is the program name). Returns the
/// process exit code; diagnostics go to `err`, summaries to `out`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace featnorm::cli
