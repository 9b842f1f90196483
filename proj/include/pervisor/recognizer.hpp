#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "pervisor/featuredb.hpp"
#include "pervisor/match.hpp"

namespace pervisor {

struct RecognizerConfig {
  double threshold = kDefaultThreshold;
  double ratio = 0.7;
  std::optional<std::size_t> checks = kDefaultChecks;  // nullopt: exact search
  std::size_t min_matches = 4;
  bool sign_filter = true;
  bool linear_scan = false;
};

struct Recognition {
  std::optional<std::uint32_t> object_id;
  std::optional<std::string> object_name;
  std::size_t match_count = 0;  // votes of the best-voted object
  std::size_t total_query_features = 0;
  double score = 0.0;  // match_count / max(total_query_features, 1); 0 when unrecognized

  friend bool operator==(const Recognition&, const Recognition&) = default;
};

/// Database plus the forest built over it, shared read-only between callers.
struct RecognitionIndex {
  FeatureDb db;
  KdForest forest;

  static RecognitionIndex build(FeatureDb db, int num_trees = kDefaultTrees, std::uint64_t seed = 42);
};

/// Votes of the accepted ratio-test matches decide the object.
Recognition recognize_features(const RecognitionIndex& index, std::span<const Feature> features,
                               const RecognizerConfig& config = {});

Recognition recognize(const RecognitionIndex& index, const GrayImage& img, const RecognizerConfig& config = {});

}  // namespace pervisor
