#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eco/candidate_set.hpp"
#include "eco/filtering.hpp"
#include "eco/metrics_eval.hpp"
#include "eco/pipeline.hpp"
#include "eco/similarity.hpp"

namespace eco {

// ---------------------------------------------------------------------------
// Captions: one JSON object per line, {"image_id": str, "captions": [str...]}.

std::vector<CandidateSet> parse_captions(std::istream& in, std::string_view source);
std::vector<CandidateSet> read_captions(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Embeddings: binary matrix plus a line-delimited index sidecar.
//
//   offset 0   8 bytes  magic "ECOEMB1\0"
//   offset 8   u32 LE   dim (>= 1)
//   offset 12  u64 LE   row_count
//   offset 20  row_count * dim IEEE-754 binary32 LE values, row-major
//
// Index line k describes row k: {"image_id": str} for image files,
// {"image_id": str, "caption_index": int} for caption files. An optional
// "flagged": true marks a row the producer could not compute.

inline constexpr std::string_view kEmbeddingMagic{"ECOEMB1\0", 8};
inline constexpr std::size_t kEmbeddingHeaderBytes = 20;

struct EmbeddingMatrix {
  std::uint32_t dim = 0;
  std::vector<float> values;  // row-major

  std::size_t rows() const { return dim == 0 ? 0 : values.size() / dim; }
  std::span<const float> row(std::size_t k) const { return std::span<const float>(values).subspan(k * dim, dim); }
};

struct EmbeddingIndexEntry {
  std::string image_id;
  std::optional<std::uint32_t> caption_index;
  bool flagged = false;
};

struct EmbeddingStore {
  EmbeddingMatrix matrix;
  std::vector<EmbeddingIndexEntry> index;
};

EmbeddingMatrix read_embedding_matrix(const std::filesystem::path& path);
std::vector<EmbeddingIndexEntry> read_embedding_index(const std::filesystem::path& path);

// Validates header, byte length, finite payload, and index/row agreement.
EmbeddingStore read_embeddings(const std::filesystem::path& path, const std::filesystem::path& index_path);

void write_embeddings(const std::filesystem::path& path, const std::filesystem::path& index_path,
                      const EmbeddingMatrix& matrix, std::span<const EmbeddingIndexEntry> index);

// ---------------------------------------------------------------------------
// Score tables: one JSON object per line,
// {"image_id": str, "channel": str, "scores": [number...]}. Numbers are
// written in shortest round-trip form so a table re-read is bit-exact.

struct ScoreTableRecord {
  std::string image_id;
  std::string channel;
  std::vector<double> scores;
};

class ScoreTable {
 public:
  // Throws ValidationError on a duplicate (image, channel) pair.
  void add(ScoreTableRecord record, std::string_view origin = {});

  const ChannelSet* find(const std::string& image_id) const;
  const std::map<std::string, ChannelSet>& images() const { return by_image_; }
  bool empty() const { return by_image_.empty(); }

  // Checks every record refers to a known image with a matching caption count.
  void validate_against(std::span<const CandidateSet> captions) const;

  // Removes and returns one named channel of every image.
  std::map<std::string, ScoreVector> extract_channel(std::string_view channel);

 private:
  std::map<std::string, ChannelSet> by_image_;
};

void parse_score_table(std::istream& in, std::string_view source, ScoreTable& table);
ScoreTable read_score_table(const std::filesystem::path& path);
// Reads several files into one table; duplicates across files are errors.
ScoreTable read_score_tables(std::span<const std::filesystem::path> paths);

std::string format_score_record(const ScoreTableRecord& record);
void write_score_table(const std::filesystem::path& path, std::span<const ScoreTableRecord> records);

// ---------------------------------------------------------------------------
// Filter stage output: one line per image with the reference pool and verdicts.

std::string format_pool_record(const std::string& image_id, const PoolSelection& pool,
                               std::span<const FilterVerdict> verdicts);
std::map<std::string, PoolSelection> read_pool_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Results: one JSON object per line. Minimal verbosity carries image_id,
// caption, index; full verbosity adds runner-up, reason, pools, verdicts,
// and every score channel. Reals use 9 significant digits.

enum class Verbosity { minimal, full };

std::string format_result(const RankResult& result, Verbosity verbosity);
void write_results(std::span<const RankResult> results, const std::filesystem::path& path, Verbosity verbosity);

// ---------------------------------------------------------------------------
// Evaluation inputs.

struct SelectedCaption {
  std::string image_id;
  std::string caption;
};

// Accepts results lines (JSON with image_id and caption) or plain
// "image_id<TAB>caption" lines.
std::vector<SelectedCaption> read_selected(const std::filesystem::path& path);

// {"image_id": str, "references": [str...]} per line.
std::map<std::string, std::vector<std::string>> read_references(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

std::string format_real(double value);         // 9 significant digits
std::string format_real_exact(double value);   // shortest round-trip

}  // namespace eco
