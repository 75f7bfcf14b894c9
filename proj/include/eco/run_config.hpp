#pragma once

#include <filesystem>
#include <string>

#include "eco/io_formats.hpp"
#include "eco/pipeline.hpp"

namespace eco {

// Every tunable of a run. Defaults reproduce the full method: both filters
// on, weights 3.52:1, theta 0.39, keep half of the format survivors.
struct RunConfig {
  PipelineConfig pipeline;
  int threads = 1;
  Verbosity verbosity = Verbosity::minimal;

  void validate() const;

  // Pretty JSON with a fixed key order; from_json accepts any subset of keys
  // on top of the defaults and rejects unknown keys.
  std::string to_json() const;
  static RunConfig from_json(const std::string& text, const RunConfig& base);
  static RunConfig from_json(const std::string& text) { return from_json(text, RunConfig{}); }
  static RunConfig load(const std::filesystem::path& path, const RunConfig& base);
  void save(const std::filesystem::path& path) const;
};

// Thread count from ECO_THREADS when set and valid, else 1.
int default_thread_count();

}  // namespace eco
