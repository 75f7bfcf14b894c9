#include "eco/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "eco/error.hpp"

namespace eco {

using nlohmann::ordered_json;

void RunConfig::validate() const {
  pipeline.validate();
  if (threads < 1) throw ValidationError("threads must be >= 1");
}

std::string RunConfig::to_json() const {
  const PipelineConfig& p = pipeline;
  ordered_json j;
  j["lambda_ensemble"] = p.weights.lambda_ensemble;
  j["lambda_consensus"] = p.weights.lambda_consensus;
  j["theta"] = p.selection.theta;
  j["short_caption"] = p.selection.short_caption_enabled;
  j["select_from"] = std::string(to_string(p.selection.select_from));
  j["keep_fraction"] = p.filter.keep_fraction;
  j["format_filter"] = p.filter.format_filter;
  j["itm_filter"] = p.filter.itm_filter;
  j["n_max"] = p.consensus.n_max;
  j["sigma"] = p.consensus.sigma;
  j["scale"] = p.consensus.scale;
  j["idf_fallback_df"] = p.consensus.idf_fallback_df;
  j["normalization_scope"] = std::string(to_string(p.normalization));
  j["threads"] = threads;
  j["verbosity"] = verbosity == Verbosity::full ? "full" : "minimal";
  return j.dump(2) + "\n";
}

namespace {

template <typename T>
T typed(const ordered_json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError("config key '" + key + "' has the wrong type");
  }
}

}  // namespace

RunConfig RunConfig::from_json(const std::string& text, const RunConfig& base) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("malformed config: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  RunConfig c = base;
  PipelineConfig& p = c.pipeline;
  for (const auto& [key, v] : j.items()) {
    if (key == "lambda_ensemble") {
      p.weights.lambda_ensemble = typed<double>(v, key);
    } else if (key == "lambda_consensus") {
      p.weights.lambda_consensus = typed<double>(v, key);
    } else if (key == "theta") {
      p.selection.theta = typed<double>(v, key);
    } else if (key == "short_caption") {
      p.selection.short_caption_enabled = typed<bool>(v, key);
    } else if (key == "select_from") {
      const auto s = typed<std::string>(v, key);
      if (s == "all") {
        p.selection.select_from = SelectFrom::all;
      } else if (s == "filtered") {
        p.selection.select_from = SelectFrom::filtered;
      } else {
        throw ValidationError("select_from must be 'all' or 'filtered'");
      }
    } else if (key == "keep_fraction") {
      p.filter.keep_fraction = typed<double>(v, key);
    } else if (key == "format_filter") {
      p.filter.format_filter = typed<bool>(v, key);
    } else if (key == "itm_filter") {
      p.filter.itm_filter = typed<bool>(v, key);
    } else if (key == "n_max") {
      p.consensus.n_max = typed<int>(v, key);
    } else if (key == "sigma") {
      p.consensus.sigma = typed<double>(v, key);
    } else if (key == "scale") {
      p.consensus.scale = typed<double>(v, key);
    } else if (key == "idf_fallback_df") {
      p.consensus.idf_fallback_df = typed<int>(v, key);
    } else if (key == "normalization_scope") {
      const auto s = typed<std::string>(v, key);
      if (s == "per_image") {
        p.normalization = NormalizationScope::per_image;
      } else if (s == "dataset") {
        p.normalization = NormalizationScope::dataset;
      } else {
        throw ValidationError("normalization_scope must be 'per_image' or 'dataset'");
      }
    } else if (key == "threads") {
      c.threads = typed<int>(v, key);
    } else if (key == "verbosity") {
      const auto s = typed<std::string>(v, key);
      if (s == "minimal") {
        c.verbosity = Verbosity::minimal;
      } else if (s == "full") {
        c.verbosity = Verbosity::full;
      } else {
        throw ValidationError("verbosity must be 'minimal' or 'full'");
      }
    } else {
      throw ValidationError("unknown config key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str(), base);
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << to_json();
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

int default_thread_count() {
  if (const char* env = std::getenv("ECO_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n >= 1 && n <= 1024) return static_cast<int>(n);
  }
  return 1;
}

}  // namespace eco
