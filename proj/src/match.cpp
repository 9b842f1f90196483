#include "pervisor/match.hpp"

#include <algorithm>
#include <numeric>
#include <queue>
#include <random>
#include <stdexcept>

namespace pervisor {

namespace {

class TreeBuilder {
 public:
  TreeBuilder(const DescriptorSet& points, std::uint64_t stream_seed, KdForest::Tree& tree)
      : points_(points), rng_(stream_seed), tree_(tree) {}

  std::int32_t build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::int32_t>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    if (end - begin <= kLeafSize || !split(id, begin, end)) {
      tree_.nodes[id].begin = begin;
      tree_.nodes[id].end = end;
    }
    return id;
  }

 private:
  // Returns false when no dimension separates the range.
  bool split(std::int32_t id, std::uint32_t begin, std::uint32_t end) {
    const auto dims = ranked_dimensions(begin, end);
    const auto pick = static_cast<std::size_t>(rng_() % static_cast<std::uint64_t>(kSplitCandidates));
    std::vector<int> attempt_order{dims[pick]};
    for (int d : dims) {
      if (d != dims[pick]) attempt_order.push_back(d);
    }

    auto* first = tree_.order.data() + begin;
    auto* last = tree_.order.data() + end;
    for (int dim : attempt_order) {
      std::sort(first, last, [&](std::uint32_t a, std::uint32_t b) {
        const float va = points_.descriptors(dim, a);
        const float vb = points_.descriptors(dim, b);
        return va < vb || (va == vb && a < b);
      });
      const std::uint32_t count = end - begin;
      const float median = points_.descriptors(dim, first[(count - 1) / 2]);
      // Everything equal to the median stays left.
      auto* mid = std::partition_point(first, last, [&](std::uint32_t i) {
        return points_.descriptors(dim, i) <= median;
      });
      if (mid == last) continue;
      const auto split_at = static_cast<std::uint32_t>(mid - tree_.order.data());
      const std::int32_t left = build(begin, split_at);
      const std::int32_t right = build(split_at, end);
      auto& node = tree_.nodes[id];
      node.split_dim = dim;
      node.split_value = median;
      node.left = left;
      node.right = right;
      return true;
    }
    return false;
  }

  // All dimensions sorted by descending variance over the range (ties: lower dimension first).
  std::vector<int> ranked_dimensions(std::uint32_t begin, std::uint32_t end) const {
    Eigen::Matrix<double, kDescriptorSize, 1> mean = Eigen::Matrix<double, kDescriptorSize, 1>::Zero();
    Eigen::Matrix<double, kDescriptorSize, 1> sq = Eigen::Matrix<double, kDescriptorSize, 1>::Zero();
    for (std::uint32_t i = begin; i < end; ++i) {
      const auto col = points_.descriptors.col(tree_.order[i]).cast<double>();
      mean += col;
      sq += col.cwiseProduct(col);
    }
    const double n = static_cast<double>(end - begin);
    mean /= n;
    const Eigen::Matrix<double, kDescriptorSize, 1> var = sq / n - mean.cwiseProduct(mean);
    std::vector<int> dims(kDescriptorSize);
    std::iota(dims.begin(), dims.end(), 0);
    std::stable_sort(dims.begin(), dims.end(), [&](int a, int b) { return var(a) > var(b); });
    return dims;
  }

  const DescriptorSet& points_;
  std::mt19937_64 rng_;
  KdForest::Tree& tree_;
};

std::size_t subtree_depth(const KdForest::Tree& tree, std::int32_t node) {
  const auto& n = tree.nodes[node];
  if (n.is_leaf()) return 1;
  return 1 + std::max(subtree_depth(tree, n.left), subtree_depth(tree, n.right));
}

// Keeps the k best (squared distance, index) pairs in ascending order.
class ResultSet {
 public:
  explicit ResultSet(std::size_t k) : k_(k) { items_.reserve(k + 1); }

  bool full() const { return items_.size() >= k_; }
  double worst() const { return full() ? items_.back().first : std::numeric_limits<double>::infinity(); }

  void add(double dist_sq, std::size_t index) {
    const std::pair<double, std::size_t> item{dist_sq, index};
    if (full() && !(item < items_.back())) return;
    items_.insert(std::upper_bound(items_.begin(), items_.end(), item), item);
    if (items_.size() > k_) items_.pop_back();
  }

  std::vector<Neighbor> finish() const {
    std::vector<Neighbor> out;
    out.reserve(items_.size());
    for (const auto& [d, i] : items_) out.push_back({i, std::sqrt(d)});
    return out;
  }

 private:
  std::size_t k_;
  std::vector<std::pair<double, std::size_t>> items_;
};

struct Branch {
  double priority;     // accumulated split distances, orders exploration
  double lower_bound;  // valid lower bound on squared distance to the cell
  std::uint32_t tree;
  std::int32_t node;

  bool operator>(const Branch& o) const {
    return std::tie(priority, lower_bound, tree, node) > std::tie(o.priority, o.lower_bound, o.tree, o.node);
  }
};

class ForestSearch {
 public:
  ForestSearch(const KdForest& forest, const Descriptor& query, int sign, std::size_t k, const SearchOptions& opts,
               SearchStats* stats)
      : forest_(forest),
        query_(query),
        sign_(sign < 0 ? -1 : 1),
        opts_(opts),
        stats_(stats),
        results_(k),
        visited_(forest.size(), false) {}

  std::vector<Neighbor> run() {
    for (std::uint32_t t = 0; t < forest_.trees().size() && !exhausted(); ++t) {
      descend(t, 0, 0.0, 0.0);
    }
    while (!queue_.empty() && !exhausted()) {
      const Branch b = queue_.top();
      queue_.pop();
      if (results_.full() && b.lower_bound > results_.worst()) continue;
      descend(b.tree, b.node, b.priority, b.lower_bound);
    }
    return results_.finish();
  }

 private:
  bool exhausted() const { return opts_.checks && evaluations_ >= *opts_.checks; }

  void descend(std::uint32_t t, std::int32_t node_id, double priority, double lower_bound) {
    const auto& tree = forest_.trees()[t];
    const KdForest::Node* node = &tree.nodes[node_id];
    while (!node->is_leaf()) {
      const double diff = static_cast<double>(query_(node->split_dim)) - node->split_value;
      const bool go_left = diff <= 0.0;
      const std::int32_t near = go_left ? node->left : node->right;
      const std::int32_t far = go_left ? node->right : node->left;
      const double d2 = diff * diff;
      queue_.push({priority + d2, std::max(lower_bound, d2), t, far});
      node = &tree.nodes[near];
    }
    const auto& pts = forest_.points();
    for (std::uint32_t i = node->begin; i < node->end; ++i) {
      const std::uint32_t idx = tree.order[i];
      if (visited_[idx]) continue;
      if (opts_.sign_filter && pts.signs[idx] != sign_) {
        visited_[idx] = true;
        if (stats_) ++stats_->sign_skips;
        continue;
      }
      if (exhausted()) return;
      visited_[idx] = true;
      ++evaluations_;
      if (stats_) ++stats_->distance_evaluations;
      results_.add(squared_distance(pts.descriptors.col(idx), query_), idx);
    }
  }

  const KdForest& forest_;
  const Descriptor& query_;
  std::int8_t sign_;
  const SearchOptions& opts_;
  SearchStats* stats_;
  ResultSet results_;
  std::vector<bool> visited_;
  std::size_t evaluations_ = 0;
  std::priority_queue<Branch, std::vector<Branch>, std::greater<>> queue_;
};

}  // namespace

KdForest KdForest::build(DescriptorSet points, int num_trees, std::uint64_t seed) {
  if (points.size() == 0) throw std::invalid_argument("build_forest: empty point set");
  if (num_trees < 1) throw std::invalid_argument("build_forest: num_trees must be >= 1");
  if (static_cast<std::size_t>(points.descriptors.cols()) != points.size()) {
    throw std::invalid_argument("build_forest: descriptor and sign counts differ");
  }
  KdForest forest;
  forest.points_ = std::move(points);
  forest.trees_.resize(static_cast<std::size_t>(num_trees));
  const auto n = static_cast<std::uint32_t>(forest.points_.size());
  for (int t = 0; t < num_trees; ++t) {
    auto& tree = forest.trees_[t];
    tree.order.resize(n);
    std::iota(tree.order.begin(), tree.order.end(), 0u);
    // Distinct stream per tree.
    const std::uint64_t stream = seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(t + 1));
    TreeBuilder(forest.points_, stream, tree).build(0, n);
  }
  return forest;
}

std::size_t KdForest::depth(std::size_t tree) const { return subtree_depth(trees_.at(tree), 0); }

std::vector<Neighbor> knn_search(const KdForest& forest, const Descriptor& query, int query_sign, std::size_t k,
                                 const SearchOptions& options, SearchStats* stats) {
  if (k == 0 || (options.checks && *options.checks == 0)) return {};
  return ForestSearch(forest, query, query_sign, k, options, stats).run();
}

std::vector<Neighbor> linear_knn(const DescriptorSet& points, const Descriptor& query, int query_sign, std::size_t k,
                                 bool sign_filter) {
  if (k == 0) return {};
  const std::int8_t sign = query_sign < 0 ? -1 : 1;
  ResultSet results(k);
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (sign_filter && points.signs[i] != sign) continue;
    results.add(squared_distance(points.descriptors.col(static_cast<Eigen::Index>(i)), query), i);
  }
  return results.finish();
}

std::vector<MatchResult> ratio_match(const KdForest& forest, std::span<const Feature> queries,
                                     const MatchOptions& options) {
  std::vector<MatchResult> out;
  out.reserve(queries.size());
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const auto& q = queries[qi];
    const auto neighbors =
        options.linear_scan
            ? linear_knn(forest.points(), q.descriptor, q.point.laplacian_sign, 2, options.search.sign_filter)
            : knn_search(forest, q.descriptor, q.point.laplacian_sign, 2, options.search);
    MatchResult r;
    r.query_index = qi;
    if (!neighbors.empty()) {
      r.best_distance = neighbors[0].distance;
      if (neighbors.size() == 1) {
        r.best_index = neighbors[0].index;
      } else {
        r.second_distance = neighbors[1].distance;
        if (neighbors[0].distance < options.ratio * neighbors[1].distance) r.best_index = neighbors[0].index;
      }
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace pervisor
