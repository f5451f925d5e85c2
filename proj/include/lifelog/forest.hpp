#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lifelog/features.hpp"

namespace lifelog {

struct ForestConfig {
  std::size_t n_trees = 500;
  std::size_t features_per_split = 0;  // 0 = ceil(sqrt(d))
  bool bootstrap = true;
  std::size_t min_leaf = 1;
  std::size_t max_depth = 0;  // 0 = unlimited
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0 = hardware concurrency; never affects the result

  bool operator==(const ForestConfig& o) const {
    return n_trees == o.n_trees && features_per_split == o.features_per_split &&
           bootstrap == o.bootstrap && min_leaf == o.min_leaf && max_depth == o.max_depth &&
           seed == o.seed;
  }
};

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // rows with value <= threshold go left
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  std::uint32_t counts_begin = 0;  // leaf class counts in DecisionTree::leaf_counts
  std::uint32_t counts_end = 0;
  std::uint32_t samples = 0;  // training rows reaching the node (with bootstrap repeats)
  double impurity = 0.0;      // Gini impurity of those rows

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct LeafCount {
  std::uint32_t cls = 0;
  std::uint32_t count = 0;
  bool operator==(const LeafCount&) const = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  std::vector<LeafCount> leaf_counts;

  const TreeNode& leaf_for(std::span<const double> row) const;
  // Adds the reached leaf's class frequencies (summing to 1) into out.
  void accumulate(std::span<const double> row, std::span<double> out) const;
  bool operator==(const DecisionTree&) const = default;
};

struct RandomForest {
  std::vector<DecisionTree> trees;
  ForestConfig config;
  std::size_t num_classes = 0;
  std::size_t dims = 0;

  bool operator==(const RandomForest&) const = default;
};

// CART trees on bootstrap samples with Gini splits over a random feature
// subset per node. Tree t draws all randomness from (config.seed, t), so the
// forest is identical for any thread count.
RandomForest forest_fit(std::span<const FeatureVector> rows, std::span<const std::size_t> labels,
                        std::size_t num_classes, const ForestConfig& config);

// Mean over trees of the leaf class-frequency vectors.
std::vector<double> forest_predict_proba(const RandomForest& forest, std::span<const double> row);

double gini_impurity(std::span<const std::size_t> class_counts);

std::string format_forest(const RandomForest& forest);
RandomForest parse_forest(std::string_view text);
void save_forest(const RandomForest& forest, const std::filesystem::path& path);
RandomForest load_forest(const std::filesystem::path& path);

}  // namespace lifelog
