#include "eco/io_formats.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "eco/error.hpp"

namespace eco {

namespace {

using nlohmann::json;

std::string where(std::string_view source, std::size_t line) {
  return std::string(source) + ":" + std::to_string(line);
}

std::ifstream open_input(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_output(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

void finish_output(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

// Calls fn(parsed_object, line_number) for every non-blank line.
template <typename Fn>
void for_each_json_line(std::istream& in, std::string_view source, Fn fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(where(source, line_no) + ": malformed JSON: " + e.what());
    }
    if (!obj.is_object()) throw ValidationError(where(source, line_no) + ": expected a JSON object");
    try {
      fn(obj, line_no);
    } catch (const json::exception& e) {
      throw ValidationError(where(source, line_no) + ": " + e.what());
    }
  }
  if (in.bad()) throw IoError("read from '" + std::string(source) + "' failed");
}

std::string require_string(const json& obj, const char* key, std::string_view source, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw ValidationError(where(source, line) + ": field '" + key + "' must be a string");
  }
  return it->get<std::string>();
}

const json& require_array(const json& obj, const char* key, std::string_view source, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_array()) {
    throw ValidationError(where(source, line) + ": field '" + key + "' must be an array");
  }
  return *it;
}

std::vector<std::string> string_array(const json& arr, const char* key, std::string_view source, std::size_t line) {
  std::vector<std::string> out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_string()) throw ValidationError(where(source, line) + ": '" + key + "' must hold strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

template <typename T>
void put_le(std::string& buf, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
  }
}

template <typename T>
T get_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return static_cast<T>(v);
}

std::string quote(std::string_view s) { return json(std::string(s)).dump(); }

template <typename Seq, typename Fmt>
std::string join_array(const Seq& seq, Fmt fmt) {
  std::string out = "[";
  bool first = true;
  for (const auto& v : seq) {
    if (!first) out += ',';
    first = false;
    out += fmt(v);
  }
  out += ']';
  return out;
}

std::string verdicts_json(std::span<const FilterVerdict> verdicts) {
  return join_array(verdicts, [](const FilterVerdict& v) {
    std::string s = "{\"index\":" + std::to_string(v.index) + ",\"passed_format\":" +
                    (v.passed_format ? "true" : "false") + ",\"format_reasons\":" +
                    join_array(v.format_reasons, [](FormatViolation r) { return quote(to_string(r)); }) +
                    ",\"passed_itm\":";
    s += v.passed_itm ? (*v.passed_itm ? "true" : "false") : "null";
    s += '}';
    return s;
  });
}

std::string indices_json(std::span<const std::size_t> idx) {
  return join_array(idx, [](std::size_t i) { return std::to_string(i); });
}

}  // namespace

std::string format_real(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", value);
  return buf;
}

std::string format_real_exact(double value) {
  // "-0" would parse back as the integer 0 and lose the sign.
  if (value == 0.0 && std::signbit(value)) return "-0.0";
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) throw ValidationError("cannot format number");
  return std::string(buf, end);
}

// --------------------------------------------------------------------------- captions

std::vector<CandidateSet> parse_captions(std::istream& in, std::string_view source) {
  std::vector<CandidateSet> records;
  std::map<std::string, std::size_t> first_line;
  for_each_json_line(in, source, [&](const json& obj, std::size_t line) {
    CandidateSet rec;
    rec.image_id = require_string(obj, "image_id", source, line);
    if (rec.image_id.empty()) throw ValidationError(where(source, line) + ": empty image_id");
    rec.captions = string_array(require_array(obj, "captions", source, line), "captions", source, line);
    if (rec.captions.empty()) {
      throw ValidationError(where(source, line) + ": image '" + rec.image_id + "' has an empty captions array");
    }
    auto [it, inserted] = first_line.emplace(rec.image_id, line);
    if (!inserted) {
      throw ValidationError(std::string(source) + ": duplicate image_id '" + rec.image_id + "' on lines " +
                            std::to_string(it->second) + " and " + std::to_string(line));
    }
    records.push_back(std::move(rec));
  });
  return records;
}

std::vector<CandidateSet> read_captions(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_captions(in, path.string());
}

// --------------------------------------------------------------------------- embeddings

EmbeddingMatrix read_embedding_matrix(const std::filesystem::path& path) {
  auto in = open_input(path, std::ios::binary);
  const std::string name = path.string();
  std::error_code ec;
  const auto file_size = std::filesystem::file_size(path, ec);
  if (ec) throw IoError("cannot stat '" + name + "'");
  if (file_size < kEmbeddingHeaderBytes) throw ValidationError(name + ": truncated header");

  unsigned char header[kEmbeddingHeaderBytes];
  in.read(reinterpret_cast<char*>(header), kEmbeddingHeaderBytes);
  if (!in) throw IoError("read from '" + name + "' failed");
  if (std::memcmp(header, kEmbeddingMagic.data(), kEmbeddingMagic.size()) != 0) {
    throw ValidationError(name + ": bad magic (expected ECOEMB1)");
  }
  EmbeddingMatrix m;
  m.dim = get_le<std::uint32_t>(header + 8);
  const auto rows = get_le<std::uint64_t>(header + 12);
  if (m.dim == 0) throw ValidationError(name + ": dim must be >= 1");

  const std::uintmax_t payload = file_size - kEmbeddingHeaderBytes;
  if (rows > payload / 4 / m.dim || payload != rows * m.dim * 4) {
    throw ValidationError(name + ": file is " + std::to_string(file_size) + " bytes but header declares " +
                          std::to_string(rows) + " rows of dim " + std::to_string(m.dim) +
                          (payload < rows * 4ULL * m.dim ? " (truncated)" : " (trailing bytes)"));
  }
  const std::size_t count = static_cast<std::size_t>(rows) * m.dim;
  m.values.resize(count);
  in.read(reinterpret_cast<char*>(m.values.data()), static_cast<std::streamsize>(count * 4));
  if (!in) throw IoError("read from '" + name + "' failed");
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& v : m.values) v = std::bit_cast<float>(__builtin_bswap32(std::bit_cast<std::uint32_t>(v)));
  }
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::isfinite(m.values[i])) {
      throw ValidationError(name + ": non-finite value at row " + std::to_string(i / m.dim) + ", column " +
                            std::to_string(i % m.dim));
    }
  }
  return m;
}

std::vector<EmbeddingIndexEntry> read_embedding_index(const std::filesystem::path& path) {
  auto in = open_input(path);
  const std::string name = path.string();
  std::vector<EmbeddingIndexEntry> entries;
  for_each_json_line(in, name, [&](const json& obj, std::size_t line) {
    EmbeddingIndexEntry e;
    e.image_id = require_string(obj, "image_id", name, line);
    if (auto it = obj.find("caption_index"); it != obj.end()) {
      if (!it->is_number_unsigned()) {
        throw ValidationError(where(name, line) + ": caption_index must be a non-negative integer");
      }
      e.caption_index = it->get<std::uint32_t>();
    }
    if (auto it = obj.find("flagged"); it != obj.end()) e.flagged = it->is_boolean() && it->get<bool>();
    entries.push_back(std::move(e));
  });
  return entries;
}

EmbeddingStore read_embeddings(const std::filesystem::path& path, const std::filesystem::path& index_path) {
  EmbeddingStore store{read_embedding_matrix(path), read_embedding_index(index_path)};
  if (store.index.size() != store.matrix.rows()) {
    throw ValidationError(index_path.string() + ": " + std::to_string(store.index.size()) + " index lines for " +
                          std::to_string(store.matrix.rows()) + " rows in " + path.string());
  }
  return store;
}

void write_embeddings(const std::filesystem::path& path, const std::filesystem::path& index_path,
                      const EmbeddingMatrix& matrix, std::span<const EmbeddingIndexEntry> index) {
  if (matrix.dim == 0 || matrix.values.size() % matrix.dim != 0) throw ValidationError("malformed embedding matrix");
  if (index.size() != matrix.rows()) throw ValidationError("index length does not match matrix rows");
  std::string buf(kEmbeddingMagic);
  put_le<std::uint32_t>(buf, matrix.dim);
  put_le<std::uint64_t>(buf, matrix.rows());
  buf.reserve(buf.size() + matrix.values.size() * 4);
  for (float v : matrix.values) put_le<std::uint32_t>(buf, std::bit_cast<std::uint32_t>(v));
  {
    auto out = open_output(path, std::ios::binary);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    finish_output(out, path);
  }
  auto out = open_output(index_path);
  for (const auto& e : index) {
    out << "{\"image_id\":" << quote(e.image_id);
    if (e.caption_index) out << ",\"caption_index\":" << *e.caption_index;
    if (e.flagged) out << ",\"flagged\":true";
    out << "}\n";
  }
  finish_output(out, index_path);
}

// --------------------------------------------------------------------------- score tables

void ScoreTable::add(ScoreTableRecord record, std::string_view origin) {
  ChannelSet& set = by_image_[record.image_id];
  if (set.find(record.channel) != nullptr) {
    throw ValidationError(std::string(origin) + (origin.empty() ? "" : ": ") + "duplicate scores for image '" +
                          record.image_id + "' channel '" + record.channel + "'");
  }
  try {
    set.add(ScoreVector{record.channel, std::move(record.scores)});
  } catch (const ValidationError& e) {
    throw ValidationError(std::string(origin) + (origin.empty() ? "" : ": ") + "image '" + record.image_id +
                          "': " + e.what());
  }
}

const ChannelSet* ScoreTable::find(const std::string& image_id) const {
  auto it = by_image_.find(image_id);
  return it == by_image_.end() ? nullptr : &it->second;
}

void ScoreTable::validate_against(std::span<const CandidateSet> captions) const {
  std::map<std::string, std::size_t> sizes;
  for (const auto& c : captions) sizes.emplace(c.image_id, c.size());
  for (const auto& [image_id, set] : by_image_) {
    auto it = sizes.find(image_id);
    if (it == sizes.end()) throw ValidationError("score table references unknown image '" + image_id + "'");
    for (const auto& ch : set.channels()) {
      if (ch.size() != it->second) {
        throw ValidationError("image '" + image_id + "' channel '" + ch.channel + "' has " +
                              std::to_string(ch.size()) + " scores for " + std::to_string(it->second) + " captions");
      }
    }
  }
}

std::map<std::string, ScoreVector> ScoreTable::extract_channel(std::string_view channel) {
  std::map<std::string, ScoreVector> out;
  for (auto& [image_id, set] : by_image_) {
    ChannelSet rest;
    for (const auto& ch : set.channels()) {
      if (ch.channel == channel) {
        out.emplace(image_id, ch);
      } else {
        rest.add(ch);
      }
    }
    set = std::move(rest);
  }
  std::erase_if(by_image_, [](const auto& kv) { return kv.second.empty(); });
  return out;
}

void parse_score_table(std::istream& in, std::string_view source, ScoreTable& table) {
  for_each_json_line(in, source, [&](const json& obj, std::size_t line) {
    ScoreTableRecord rec;
    rec.image_id = require_string(obj, "image_id", source, line);
    rec.channel = require_string(obj, "channel", source, line);
    if (rec.channel.empty()) throw ValidationError(where(source, line) + ": empty channel name");
    for (const auto& v : require_array(obj, "scores", source, line)) {
      if (!v.is_number()) throw ValidationError(where(source, line) + ": 'scores' must hold numbers");
      const double d = v.get<double>();
      if (!std::isfinite(d)) throw ValidationError(where(source, line) + ": non-finite score");
      rec.scores.push_back(d);
    }
    table.add(std::move(rec), where(source, line));
  });
}

ScoreTable read_score_table(const std::filesystem::path& path) {
  ScoreTable table;
  auto in = open_input(path);
  parse_score_table(in, path.string(), table);
  return table;
}

ScoreTable read_score_tables(std::span<const std::filesystem::path> paths) {
  ScoreTable table;
  for (const auto& p : paths) {
    auto in = open_input(p);
    parse_score_table(in, p.string(), table);
  }
  return table;
}

std::string format_score_record(const ScoreTableRecord& record) {
  return "{\"image_id\":" + quote(record.image_id) + ",\"channel\":" + quote(record.channel) +
         ",\"scores\":" + join_array(record.scores, format_real_exact) + "}";
}

void write_score_table(const std::filesystem::path& path, std::span<const ScoreTableRecord> records) {
  auto out = open_output(path);
  for (const auto& r : records) out << format_score_record(r) << '\n';
  finish_output(out, path);
}

// --------------------------------------------------------------------------- pools

std::string format_pool_record(const std::string& image_id, const PoolSelection& pool,
                               std::span<const FilterVerdict> verdicts) {
  return "{\"image_id\":" + quote(image_id) + ",\"fallback_level\":" + quote(to_string(pool.fallback_level)) +
         ",\"reference_pool\":" + indices_json(pool.reference_pool) + ",\"verdicts\":" + verdicts_json(verdicts) +
         "}";
}

std::map<std::string, PoolSelection> read_pool_file(const std::filesystem::path& path) {
  auto in = open_input(path);
  const std::string name = path.string();
  std::map<std::string, PoolSelection> pools;
  for_each_json_line(in, name, [&](const json& obj, std::size_t line) {
    const std::string id = require_string(obj, "image_id", name, line);
    PoolSelection sel;
    const std::string level = require_string(obj, "fallback_level", name, line);
    if (level == "none") {
      sel.fallback_level = FallbackLevel::none;
    } else if (level == "format_only") {
      sel.fallback_level = FallbackLevel::format_only;
    } else if (level == "full_pool") {
      sel.fallback_level = FallbackLevel::full_pool;
    } else {
      throw ValidationError(where(name, line) + ": unknown fallback_level '" + level + "'");
    }
    for (const auto& v : require_array(obj, "reference_pool", name, line)) {
      if (!v.is_number_unsigned()) throw ValidationError(where(name, line) + ": bad reference_pool entry");
      const auto idx = v.get<std::size_t>();
      if (!sel.reference_pool.empty() && idx <= sel.reference_pool.back()) {
        throw ValidationError(where(name, line) + ": reference_pool must be strictly increasing");
      }
      sel.reference_pool.push_back(idx);
    }
    if (sel.reference_pool.empty()) throw ValidationError(where(name, line) + ": empty reference_pool");
    if (!pools.emplace(id, std::move(sel)).second) {
      throw ValidationError(where(name, line) + ": duplicate image_id '" + id + "'");
    }
  });
  return pools;
}

// --------------------------------------------------------------------------- results

std::string format_result(const RankResult& r, Verbosity verbosity) {
  std::string s = "{\"image_id\":" + quote(r.image_id) + ",\"caption\":" + quote(r.selected_caption) +
                  ",\"index\":" + std::to_string(r.selected_index);
  if (verbosity == Verbosity::full) {
    s += ",\"runner_up\":" + (r.runner_up_index ? std::to_string(*r.runner_up_index) : std::string("null"));
    s += ",\"reason\":" + quote(to_string(r.selection_reason));
    s += ",\"fallback_level\":" + quote(to_string(r.pool.fallback_level));
    s += ",\"reference_pool\":" + indices_json(r.pool.reference_pool);
    s += ",\"selection_pool\":" + indices_json(r.selection_pool);
    s += ",\"verdicts\":" + verdicts_json(r.verdicts);
    s += ",\"channels\":{";
    for (std::size_t i = 0; i < r.channels.size(); ++i) {
      if (i > 0) s += ',';
      s += quote(r.channels[i].channel) + ":" + join_array(r.channels[i].scores, format_real);
    }
    s += '}';
  }
  s += '}';
  return s;
}

void write_results(std::span<const RankResult> results, const std::filesystem::path& path, Verbosity verbosity) {
  auto out = open_output(path);
  for (const auto& r : results) out << format_result(r, verbosity) << '\n';
  finish_output(out, path);
}

// --------------------------------------------------------------------------- evaluation inputs

std::vector<SelectedCaption> read_selected(const std::filesystem::path& path) {
  auto in = open_input(path);
  const std::string name = path.string();
  std::vector<SelectedCaption> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    SelectedCaption sel;
    if (line.front() == '{') {
      std::istringstream one(line);
      for_each_json_line(one, name, [&](const json& obj, std::size_t) {
        sel.image_id = require_string(obj, "image_id", name, line_no);
        sel.caption = require_string(obj, "caption", name, line_no);
      });
    } else {
      const auto tab = line.find('\t');
      if (tab == std::string::npos) {
        throw ValidationError(where(name, line_no) + ": expected a JSON object or 'image_id<TAB>caption'");
      }
      sel.image_id = line.substr(0, tab);
      sel.caption = line.substr(tab + 1);
      if (!sel.caption.empty() && sel.caption.back() == '\r') sel.caption.pop_back();
    }
    if (!seen.insert(sel.image_id).second) {
      throw ValidationError(where(name, line_no) + ": duplicate image_id '" + sel.image_id + "'");
    }
    out.push_back(std::move(sel));
  }
  return out;
}

std::map<std::string, std::vector<std::string>> read_references(const std::filesystem::path& path) {
  auto in = open_input(path);
  const std::string name = path.string();
  std::map<std::string, std::vector<std::string>> refs;
  for_each_json_line(in, name, [&](const json& obj, std::size_t line) {
    const std::string id = require_string(obj, "image_id", name, line);
    auto list = string_array(require_array(obj, "references", name, line), "references", name, line);
    if (list.empty()) throw ValidationError(where(name, line) + ": image '" + id + "' has no references");
    if (!refs.emplace(id, std::move(list)).second) {
      throw ValidationError(where(name, line) + ": duplicate image_id '" + id + "'");
    }
  });
  return refs;
}

}  // namespace eco
