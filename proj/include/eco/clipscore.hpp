#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "eco/candidate_set.hpp"
#include "eco/io_formats.hpp"

namespace eco {

// File names of one model's embeddings inside an embeddings directory:
// <model>.images.bin / .images.idx and <model>.captions.bin / .captions.idx.
struct ModelEmbeddingFiles {
  std::string model;
  std::filesystem::path image_matrix;
  std::filesystem::path image_index;
  std::filesystem::path caption_matrix;
  std::filesystem::path caption_index;
};

// Every model found in `dir`, sorted by name. Throws IoError if the directory
// is unreadable or a model is missing one of its four files.
std::vector<ModelEmbeddingFiles> discover_models(const std::filesystem::path& dir);

struct ClipScoreOutput {
  std::vector<ScoreTableRecord> records;  // image order, then model name order
  std::size_t degenerate_pairs = 0;       // pairs with a zero-norm side
  std::size_t flagged_rows = 0;
};

// Cosine between each image embedding and each of its caption embeddings, one
// channel per model. Missing rows throw ValidationError listing the images.
ClipScoreOutput clip_scores(std::span<const CandidateSet> captions, const std::filesystem::path& embeddings_dir);

}  // namespace eco
