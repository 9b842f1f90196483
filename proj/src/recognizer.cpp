#include "pervisor/recognizer.hpp"

#include <algorithm>
#include <map>
#include <vector>
#include <tuple>

namespace pervisor {

RecognitionIndex RecognitionIndex::build(FeatureDb db, int num_trees, std::uint64_t seed) {
  KdForest forest = build_index(db, num_trees, seed);
  return RecognitionIndex{std::move(db), std::move(forest)};
}

Recognition recognize_features(const RecognitionIndex& index, std::span<const Feature> features,
                               const RecognizerConfig& config) {
  Recognition out;
  out.total_query_features = features.size();
  if (features.empty()) return out;

  MatchOptions opts;
  opts.ratio = config.ratio;
  opts.search.checks = config.checks;
  opts.search.sign_filter = config.sign_filter;
  opts.linear_scan = config.linear_scan;

  struct Tally {
    std::size_t votes = 0;
    double distance_sum = 0.0;
  };
  std::map<std::uint32_t, std::vector<double>> distances;
  for (const auto& m : ratio_match(index.forest, features, opts)) {
    if (!m.best_index) continue;
    distances[index.db.records()[*m.best_index].object_id].push_back(m.best_distance);
  }
  if (distances.empty()) return out;

  // Summing in sorted order keeps the tie-break independent of feature order.
  std::map<std::uint32_t, Tally> tallies;
  for (auto& [id, d] : distances) {
    std::sort(d.begin(), d.end());
    auto& t = tallies[id];
    t.votes = d.size();
    for (double v : d) t.distance_sum += v;
  }

  // Most votes, then lower mean distance, then lower id (map order).
  auto best = tallies.begin();
  for (auto it = std::next(tallies.begin()); it != tallies.end(); ++it) {
    const auto& [id, t] = *it;
    const auto& bt = best->second;
    const double mean = t.distance_sum / static_cast<double>(t.votes);
    const double best_mean = bt.distance_sum / static_cast<double>(bt.votes);
    if (t.votes > bt.votes || (t.votes == bt.votes && mean < best_mean)) best = it;
  }

  out.match_count = best->second.votes;
  if (out.match_count < config.min_matches) return out;
  out.object_id = best->first;
  if (const auto* entry = index.db.find(best->first)) out.object_name = entry->name;
  out.score = static_cast<double>(out.match_count) / static_cast<double>(std::max<std::size_t>(features.size(), 1));
  return out;
}

Recognition recognize(const RecognitionIndex& index, const GrayImage& img, const RecognizerConfig& config) {
  const auto extracted = extract(img, config.threshold);
  return recognize_features(index, extracted.features, config);
}

}  // namespace pervisor
