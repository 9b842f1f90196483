#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "pervisor/surf.hpp"

namespace pervisor {

/// Squared Euclidean distance, accumulated in double.
template <typename DerivedA, typename DerivedB>
double squared_distance(const Eigen::MatrixBase<DerivedA>& p, const Eigen::MatrixBase<DerivedB>& q) {
  return (p.template cast<double>() - q.template cast<double>()).squaredNorm();
}

/// Euclidean distance between two descriptors.
template <typename DerivedA, typename DerivedB>
double distance(const Eigen::MatrixBase<DerivedA>& p, const Eigen::MatrixBase<DerivedB>& q) {
  return std::sqrt(squared_distance(p, q));
}

/// Column-per-point descriptor matrix with one Laplacian sign per column.
struct DescriptorSet {
  Eigen::Matrix<float, kDescriptorSize, Eigen::Dynamic> descriptors;
  std::vector<std::int8_t> signs;

  DescriptorSet() = default;
  explicit DescriptorSet(std::size_t n) : descriptors(kDescriptorSize, static_cast<Eigen::Index>(n)), signs(n, 1) {}

  std::size_t size() const { return signs.size(); }
  void assign(std::size_t i, const Descriptor& d, int sign) {
    descriptors.col(static_cast<Eigen::Index>(i)) = d;
    signs[i] = static_cast<std::int8_t>(sign < 0 ? -1 : 1);
  }
};

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

struct SearchOptions {
  /// Maximum number of distance evaluations; nullopt means exhaustive (exact) search.
  std::optional<std::size_t> checks = 32;
  /// Skip indexed points whose Laplacian sign differs from the query's.
  bool sign_filter = true;
};

inline constexpr std::size_t kDefaultChecks = 32;
inline constexpr int kDefaultTrees = 4;
inline constexpr std::size_t kLeafSize = 8;
inline constexpr int kSplitCandidates = 5;

/// Per-query instrumentation.
struct SearchStats {
  std::size_t distance_evaluations = 0;
  std::size_t sign_skips = 0;
};

/// Forest of randomized KD-trees over a fixed descriptor set. Immutable after build.
class KdForest {
 public:
  struct Node {
    int split_dim = -1;  // -1 marks a leaf
    float split_value = 0.0f;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::uint32_t begin = 0;  // leaf range into Tree::order
    std::uint32_t end = 0;

    bool is_leaf() const { return split_dim < 0; }
    friend bool operator==(const Node&, const Node&) = default;
  };

  struct Tree {
    std::vector<Node> nodes;  // nodes[0] is the root
    std::vector<std::uint32_t> order;

    friend bool operator==(const Tree&, const Tree&) = default;
  };

  /// Median-split trees; split dimension drawn from the top-variance dimensions
  /// with a per-tree std::mt19937_64 stream. Throws std::invalid_argument on an
  /// empty set or num_trees < 1.
  static KdForest build(DescriptorSet points, int num_trees, std::uint64_t seed);

  const DescriptorSet& points() const { return points_; }
  const std::vector<Tree>& trees() const { return trees_; }
  std::size_t size() const { return points_.size(); }

  /// Depth of a tree counted in nodes along the longest root-to-leaf path.
  std::size_t depth(std::size_t tree) const;

  friend bool operator==(const KdForest& a, const KdForest& b) {
    return a.points_.signs == b.points_.signs && a.points_.descriptors == b.points_.descriptors &&
           a.trees_ == b.trees_;
  }

 private:
  DescriptorSet points_;
  std::vector<Tree> trees_;
};

inline KdForest build_forest(DescriptorSet points, int num_trees = kDefaultTrees, std::uint64_t seed = 42) {
  return KdForest::build(std::move(points), num_trees, seed);
}

/// Best-first search over all trees with one shared branch queue. Results are
/// ascending by (distance, index).
std::vector<Neighbor> knn_search(const KdForest& forest, const Descriptor& query, int query_sign, std::size_t k,
                                 const SearchOptions& options = {}, SearchStats* stats = nullptr);

/// Exhaustive scan over the set, restricted to same-sign points when sign_filter is set.
std::vector<Neighbor> linear_knn(const DescriptorSet& points, const Descriptor& query, int query_sign, std::size_t k,
                                 bool sign_filter = true);

struct MatchResult {
  std::size_t query_index = 0;
  std::optional<std::size_t> best_index;
  double best_distance = std::numeric_limits<double>::infinity();
  std::optional<double> second_distance;
};

struct MatchOptions {
  double ratio = 0.7;
  SearchOptions search;
  /// Use linear_knn over the forest's points instead of the trees.
  bool linear_scan = false;
};

/// Nearest/second-nearest ratio test per query feature.
std::vector<MatchResult> ratio_match(const KdForest& forest, std::span<const Feature> queries,
                                     const MatchOptions& options = {});

}  // namespace pervisor
