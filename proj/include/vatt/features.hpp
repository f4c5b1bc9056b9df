#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vatt/tensor.hpp"

namespace vatt {

// Precomputed image features: one row per item plus a verb-label index into
// `verbs`. Width F is whatever the feature extractor produced.
struct FeatureSet {
  std::size_t dim = 0;
  std::vector<std::string> verbs;
  std::vector<std::uint32_t> labels;  // index into verbs, one per item
  std::vector<Vec> features;          // each of length dim
  std::string split_tag;

  std::size_t size() const { return features.size(); }

  void validate() const {
    for (const Vec& f : features)
      if (f.size() != dim) fail("feature width mismatch");
    if (labels.size() != features.size()) fail("label/feature count mismatch");
    for (std::uint32_t l : labels)
      if (l >= verbs.size()) fail("feature label index out of range");
  }
};

}  // namespace vatt
