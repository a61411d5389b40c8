#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "resflow/io/checksum.hpp"
#include "resflow/io/config.hpp"

#ifndef RESFLOW_VERSION
#define RESFLOW_VERSION "0.0.0"
#endif

namespace resflow::io {

/// Record of one experiment run: effective config, outputs and assumptions.
class RunManifest {
 public:
  RunManifest(std::string experiment, std::filesystem::path out_dir, std::uint64_t seed)
      : out_dir_(std::move(out_dir)) {
    doc_["experiment"] = std::move(experiment);
    doc_["library_version"] = RESFLOW_VERSION;
    doc_["seed"] = seed;
    doc_["files"] = nlohmann::json::array();
    doc_["assumptions"] = nlohmann::json::object();
    doc_["metadata"] = nlohmann::json::object();
  }

  void add_file(const std::string& name) {
    files_.push_back(name);
  }

  void assumption(const std::string& key, nlohmann::json value) {
    doc_["assumptions"][key] = std::move(value);
  }

  void metadata(const std::string& key, nlohmann::json value) {
    doc_["metadata"][key] = std::move(value);
  }

  void set_wall_clock(double seconds) { doc_["wall_clock_seconds"] = seconds; }

  /// Checksums every listed file and writes manifest.json next to them.
  nlohmann::json write(const Config& cfg, const std::string& name = "manifest.json") {
    nlohmann::json echo = nlohmann::json::object();
    for (const auto& [k, v] : cfg.used()) echo[k] = v;
    doc_["config"] = echo;
    nlohmann::json files = nlohmann::json::array();
    for (const auto& f : files_) {
      files.push_back({{"name", f}, {"sha256", sha256_file(out_dir_ / f)}});
    }
    doc_["files"] = files;
    std::ofstream out(out_dir_ / name, std::ios::binary);
    if (!out) throw ConfigurationError("cannot write manifest in " + out_dir_.string());
    out << doc_.dump(2) << '\n';
    return doc_;
  }

  const std::vector<std::string>& files() const noexcept { return files_; }
  const nlohmann::json& document() const noexcept { return doc_; }

 private:
  std::filesystem::path out_dir_;
  std::vector<std::string> files_;
  nlohmann::json doc_;
};

}  // namespace resflow::io
