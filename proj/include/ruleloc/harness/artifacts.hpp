#pragma once

// Artifact files under one run directory. Payloads are deterministic; wall
// clock data goes only to metadata.json.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ruleloc/error.hpp"
#include "ruleloc/manifest.hpp"

namespace ruleloc {

// Sorted-key rendering of any JSON value.
inline std::string canonical_dump(const nlohmann::ordered_json& j) { return nlohmann::json::parse(j.dump()).dump(2) + "\n"; }

class ArtifactStore {
 public:
  explicit ArtifactStore(std::filesystem::path root) : root_(std::move(root)) {
    std::error_code ec;
    std::filesystem::create_directories(root_, ec);
    if (ec) fail(ErrorCode::Io, "cannot create " + root_.string() + ": " + ec.message());
  }

  const std::filesystem::path& root() const { return root_; }

  // Returns the artifact's path relative to the root.
  std::string write_text(const std::string& rel, const std::string& text) {
    const auto path = root_ / rel;
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) fail(ErrorCode::Io, "cannot create " + path.parent_path().string() + ": " + ec.message());
    write_text_file(path.string(), text);
    written_.push_back(rel);
    return rel;
  }

  std::string write_json(const std::string& rel, const nlohmann::ordered_json& j) {
    return write_text(rel, canonical_dump(j));
  }

  const std::vector<std::string>& written() const { return written_; }

  void write_metadata(const nlohmann::ordered_json& extra = nlohmann::ordered_json::object()) {
    nlohmann::ordered_json m = extra;
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    m["finished_at"] = buf;
    m["artifacts"] = written_;
    write_text_file((root_ / "metadata.json").string(), m.dump(2) + "\n");
  }

 private:
  std::filesystem::path root_;
  std::vector<std::string> written_;
};

// Output root: RULELOC_OUTPUT_ROOT when set, joined with the relative dir.
inline std::filesystem::path resolve_output_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("RULELOC_OUTPUT_ROOT"); root && *root) return std::filesystem::path(root) / p;
  return p;
}

}  // namespace ruleloc
