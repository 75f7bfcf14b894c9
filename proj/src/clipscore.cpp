#include "eco/clipscore.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <utility>

#include "eco/error.hpp"
#include "eco/similarity.hpp"

namespace eco {

namespace {

constexpr std::string_view kImageSuffix = ".images.bin";

std::string missing_list(const std::set<std::string>& ids) {
  std::string out;
  std::size_t shown = 0;
  for (const auto& id : ids) {
    if (shown++ == 20) {
      out += ", ... (" + std::to_string(ids.size()) + " total)";
      break;
    }
    if (!out.empty()) out += ", ";
    out += id;
  }
  return out;
}

}  // namespace

std::vector<ModelEmbeddingFiles> discover_models(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::directory_iterator it(dir, ec);
  if (ec) throw IoError("cannot read embeddings directory '" + dir.string() + "'");
  std::vector<ModelEmbeddingFiles> models;
  for (const auto& entry : it) {
    const std::string name = entry.path().filename().string();
    if (name.size() <= kImageSuffix.size() || !name.ends_with(kImageSuffix)) continue;
    const std::string model = name.substr(0, name.size() - kImageSuffix.size());
    ModelEmbeddingFiles f{model, dir / (model + ".images.bin"), dir / (model + ".images.idx"),
                          dir / (model + ".captions.bin"), dir / (model + ".captions.idx")};
    for (const auto* p : {&f.image_index, &f.caption_matrix, &f.caption_index}) {
      if (!std::filesystem::exists(*p)) throw IoError("model '" + model + "' is missing " + p->string());
    }
    models.push_back(std::move(f));
  }
  std::sort(models.begin(), models.end(), [](const auto& a, const auto& b) { return a.model < b.model; });
  if (models.empty()) throw ValidationError("no *.images.bin files in '" + dir.string() + "'");
  return models;
}

ClipScoreOutput clip_scores(std::span<const CandidateSet> captions, const std::filesystem::path& embeddings_dir) {
  const auto models = discover_models(embeddings_dir);
  std::vector<std::vector<ScoreTableRecord>> per_model;
  ClipScoreOutput out;

  for (const auto& files : models) {
    const EmbeddingStore images = read_embeddings(files.image_matrix, files.image_index);
    const EmbeddingStore texts = read_embeddings(files.caption_matrix, files.caption_index);
    if (images.matrix.dim != texts.matrix.dim) {
      throw ValidationError("model '" + files.model + "': image dim " + std::to_string(images.matrix.dim) +
                            " != caption dim " + std::to_string(texts.matrix.dim));
    }
    std::map<std::string, std::size_t> image_row;
    for (std::size_t k = 0; k < images.index.size(); ++k) {
      if (!image_row.emplace(images.index[k].image_id, k).second) {
        throw ValidationError(files.image_index.string() + ": duplicate image_id '" + images.index[k].image_id + "'");
      }
      if (images.index[k].flagged) ++out.flagged_rows;
    }
    std::map<std::pair<std::string, std::uint32_t>, std::size_t> caption_row;
    for (std::size_t k = 0; k < texts.index.size(); ++k) {
      const auto& e = texts.index[k];
      if (!e.caption_index) {
        throw ValidationError(files.caption_index.string() + ": line " + std::to_string(k + 1) +
                              " lacks caption_index");
      }
      if (!caption_row.emplace(std::make_pair(e.image_id, *e.caption_index), k).second) {
        throw ValidationError(files.caption_index.string() + ": duplicate entry for image '" + e.image_id +
                              "' caption " + std::to_string(*e.caption_index));
      }
      if (e.flagged) ++out.flagged_rows;
    }

    std::set<std::string> missing;
    auto& records = per_model.emplace_back();
    records.reserve(captions.size());
    for (const auto& cs : captions) {
      auto img = image_row.find(cs.image_id);
      if (img == image_row.end()) {
        missing.insert(cs.image_id);
        continue;
      }
      ScoreTableRecord rec{cs.image_id, files.model, {}};
      rec.scores.reserve(cs.size());
      for (std::uint32_t c = 0; c < cs.size(); ++c) {
        auto row = caption_row.find({cs.image_id, c});
        if (row == caption_row.end()) {
          missing.insert(cs.image_id);
          break;
        }
        const CosineResult r = cosine(images.matrix.row(img->second), texts.matrix.row(row->second));
        if (r.degenerate) ++out.degenerate_pairs;
        rec.scores.push_back(r.value);
      }
      if (rec.scores.size() == cs.size()) records.push_back(std::move(rec));
    }
    if (!missing.empty()) {
      throw ValidationError("model '" + files.model + "' has no embeddings for images: " + missing_list(missing));
    }
  }

  out.records.reserve(captions.size() * models.size());
  for (std::size_t i = 0; i < captions.size(); ++i) {
    for (auto& records : per_model) out.records.push_back(std::move(records[i]));
  }
  return out;
}

}  // namespace eco
