#include <json.hpp>

#include <chrono>
#include <ctime>
#include <fstream>

#include "featnorm/cli.hpp"
#include "featnorm/digest.hpp"

namespace featnorm::cli {

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kPrecondition:
      return kExitUsage;
    case ErrorKind::kParse:
      return kExitParse;
    case ErrorKind::kNumeric:
      return kExitNumeric;
    case ErrorKind::kNetwork:
      return kExitNetwork;
    case ErrorKind::kConfig:
      return kExitConfig;
    case ErrorKind::kIo:
      return kExitIo;
  }
  return kExitInternal;
}

void RunManifest::add_input(const std::filesystem::path& path) {
  inputs.push_back({path, sha256_file(path)});
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["subcommand"] = subcommand;
  j["seed"] = seed;
  j["config"] = nlohmann::ordered_json::parse(config_json.empty() ? "{}" : config_json);
  auto ins = nlohmann::ordered_json::array();
  for (const auto& in : inputs) ins.push_back({{"path", in.path.string()}, {"sha256", in.sha256}});
  j["inputs"] = std::move(ins);
  auto outs = nlohmann::ordered_json::array();
  for (const auto& o : outputs) outs.push_back(o.string());
  j["outputs"] = std::move(outs);
  j["created_at"] = created_at;
  return j.dump(2);
}

void RunManifest::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << to_json() << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

std::filesystem::path manifest_path_for(const std::filesystem::path& output) {
  return std::filesystem::path(output.string() + ".manifest.json");
}

}  // namespace featnorm::cli
