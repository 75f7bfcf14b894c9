#pragma once

#include <string>
#include <vector>

namespace eco {

// One image and its candidate captions. The position of a caption in
// `captions` is its candidate index everywhere downstream.
struct CandidateSet {
  std::string image_id;
  std::vector<std::string> captions;

  std::size_t size() const { return captions.size(); }
};

}  // namespace eco
