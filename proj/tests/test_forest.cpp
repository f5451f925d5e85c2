#include <doctest.h>

#include <random>

#include "lifelog/error.hpp"
#include "lifelog/forest.hpp"
#include "test_util.hpp"

using namespace lifelog;

namespace {

struct Toy {
  std::vector<FeatureVector> rows;
  std::vector<std::size_t> labels;
};

Toy random_toy(std::uint64_t seed, std::size_t n, std::size_t d, std::size_t k) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0, 1);
  Toy t;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % k;
    FeatureVector r(d);
    for (std::size_t j = 0; j < d; ++j) r[j] = noise(rng) + (j % k == c ? 2.0 : 0.0);
    t.rows.push_back(r);
    t.labels.push_back(c);
  }
  return t;
}

}  // namespace

TEST_CASE("gini impurity") {
  const std::vector<std::size_t> pure{5, 0};
  const std::vector<std::size_t> even{2, 2};
  const std::vector<std::size_t> three{1, 1, 1};
  CHECK(gini_impurity(pure) == 0.0);
  CHECK(gini_impurity(even) == doctest::Approx(0.5));
  CHECK(gini_impurity(three) == doctest::Approx(2.0 / 3));
}

TEST_CASE("separable one-dimensional data") {
  const std::vector<FeatureVector> rows{{1}, {2}, {3}, {10}, {11}, {12}};
  const std::vector<std::size_t> labels{0, 0, 0, 1, 1, 1};
  ForestConfig cfg;
  cfg.n_trees = 1;
  cfg.bootstrap = false;
  const auto f = forest_fit(rows, labels, 2, cfg);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto p = forest_predict_proba(f, rows[i]);
    CHECK(p[labels[i]] == 1.0);
  }
  // Midpoint threshold between 3 and 10.
  REQUIRE(f.trees[0].nodes.size() == 3);
  CHECK(f.trees[0].nodes[0].threshold == 6.5);
}

TEST_CASE("XOR needs and gets a two-level tree") {
  const std::vector<FeatureVector> rows{{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  const std::vector<std::size_t> labels{0, 1, 1, 0};
  ForestConfig cfg;
  cfg.n_trees = 1;
  cfg.bootstrap = false;
  cfg.features_per_split = 2;
  const auto f = forest_fit(rows, labels, 2, cfg);
  for (std::size_t i = 0; i < 4; ++i) CHECK(forest_predict_proba(f, rows[i])[labels[i]] == 1.0);
  CHECK(f.trees[0].nodes.size() == 7);
}

TEST_CASE("tree structure invariants") {
  const Toy t = random_toy(4, 300, 6, 3);
  ForestConfig cfg;
  cfg.n_trees = 10;
  cfg.seed = 8;
  const auto f = forest_fit(t.rows, t.labels, 3, cfg);
  for (const auto& tree : f.trees) {
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
      const auto& n = tree.nodes[i];
      if (n.is_leaf()) {
        std::uint32_t total = 0;
        for (auto j = n.counts_begin; j < n.counts_end; ++j) total += tree.leaf_counts[j].count;
        CHECK(total == n.samples);
        continue;
      }
      const auto& l = tree.nodes[n.left];
      const auto& r = tree.nodes[n.right];
      CHECK(n.left > i);
      CHECK(l.samples + r.samples == n.samples);
      CHECK(l.samples >= 1);
      CHECK(r.samples >= 1);
      // Gini is concave, so a split never raises weighted impurity.
      const double weighted = (l.samples * l.impurity + r.samples * r.impurity) / n.samples;
      CHECK(weighted <= n.impurity + 1e-12);
    }
  }
}

TEST_CASE("min_leaf and max_depth are honoured") {
  const Toy t = random_toy(5, 200, 4, 2);
  ForestConfig cfg;
  cfg.n_trees = 3;
  cfg.min_leaf = 7;
  cfg.max_depth = 3;
  const auto f = forest_fit(t.rows, t.labels, 2, cfg);
  for (const auto& tree : f.trees) {
    std::vector<std::size_t> depth(tree.nodes.size(), 0);
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
      const auto& n = tree.nodes[i];
      if (n.is_leaf()) {
        CHECK(n.samples >= 7);
        CHECK(depth[i] <= 3);
      } else {
        depth[n.left] = depth[n.right] = depth[i] + 1;
      }
    }
  }
}

TEST_CASE("determinism across runs and thread counts") {
  const Toy t = random_toy(6, 400, 8, 4);
  ForestConfig cfg;
  cfg.n_trees = 24;
  cfg.seed = 99;
  cfg.threads = 1;
  const auto a = forest_fit(t.rows, t.labels, 4, cfg);
  const auto b = forest_fit(t.rows, t.labels, 4, cfg);
  cfg.threads = 4;
  const auto c = forest_fit(t.rows, t.labels, 4, cfg);
  CHECK(a == b);
  CHECK(a == c);
  CHECK(format_forest(a) == format_forest(c));
  const Toy probe = random_toy(7, 50, 8, 4);
  for (const auto& r : probe.rows) CHECK(forest_predict_proba(a, r) == forest_predict_proba(c, r));

  cfg.seed = 100;
  CHECK_FALSE(forest_fit(t.rows, t.labels, 4, cfg) == a);
}

TEST_CASE("prediction averages leaf distributions") {
  RandomForest f;
  f.num_classes = 2;
  f.dims = 1;
  f.config.n_trees = 2;
  DecisionTree pure;
  pure.nodes.push_back(TreeNode{});
  pure.nodes[0].counts_begin = 0;
  pure.nodes[0].counts_end = 1;
  pure.nodes[0].samples = 4;
  pure.leaf_counts = {{0, 4}};
  DecisionTree mixed = pure;
  mixed.nodes[0].counts_end = 2;
  mixed.leaf_counts = {{0, 2}, {1, 2}};
  f.trees = {pure, mixed};
  const auto p = forest_predict_proba(f, std::vector<double>{0.0});
  CHECK(p == std::vector<double>{0.75, 0.25});

  f.trees = {pure};
  CHECK(forest_predict_proba(f, std::vector<double>{3.0}) == std::vector<double>{1.0, 0.0});
  CHECK_THROWS_AS(forest_predict_proba(f, std::vector<double>{1, 2}), ValidationError);
}

TEST_CASE("probabilities lie on the simplex") {
  const Toy t = random_toy(10, 300, 5, 5);
  ForestConfig cfg;
  cfg.n_trees = 50;
  const auto f = forest_fit(t.rows, t.labels, 5, cfg);
  const Toy probe = random_toy(11, 200, 5, 5);
  for (const auto& r : probe.rows) {
    const auto p = forest_predict_proba(f, r);
    double s = 0;
    for (double v : p) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
}

TEST_CASE("fit preconditions") {
  const std::vector<FeatureVector> rows{{1, 2}, {3, 4}};
  const std::vector<std::size_t> labels{0, 1};
  ForestConfig cfg;
  cfg.features_per_split = 3;
  CHECK_THROWS_AS(forest_fit(rows, labels, 2, cfg), ValidationError);
  cfg.features_per_split = 0;
  cfg.n_trees = 0;
  CHECK_THROWS_AS(forest_fit(rows, labels, 2, cfg), ValidationError);
  cfg.n_trees = 1;
  const std::vector<std::size_t> bad{0, 2};
  CHECK_THROWS_AS(forest_fit(rows, bad, 2, cfg), ValidationError);
  CHECK_THROWS_AS(forest_fit(std::vector<FeatureVector>{}, std::vector<std::size_t>{}, 2, cfg), ValidationError);
  // Identical rows with different labels: no split exists, the root is a mixed leaf.
  const std::vector<FeatureVector> same{{1, 1}, {1, 1}};
  cfg.bootstrap = false;
  const auto f = forest_fit(same, labels, 2, cfg);
  CHECK(forest_predict_proba(f, same[0]) == std::vector<double>{0.5, 0.5});
}

TEST_CASE("forest file round trip") {
  const Toy t = random_toy(12, 150, 4, 3);
  ForestConfig cfg;
  cfg.n_trees = 7;
  cfg.seed = 18446744073709551557ull;
  const auto f = forest_fit(t.rows, t.labels, 3, cfg);
  TempDir dir("forest");
  save_forest(f, dir / "f.model");
  const auto back = load_forest(dir / "f.model");
  CHECK(back == f);
  CHECK(format_forest(back) == format_forest(f));

  std::string text = format_forest(f);
  CHECK_THROWS_AS(parse_forest(text.substr(0, text.size() / 2)), ValidationError);
  CHECK_THROWS_AS(parse_forest("lifelog-forest 2\n"), ValidationError);
  // A split pointing back at the root would loop forever at predict time.
  const std::string cyclic =
      "lifelog-forest 1\nclasses 2\ndims 1\nconfig 1 1 0 1 0 0\ntree 3\nS 2 0.5 0 0.5 0 2\nL 1 0 0:1\nL 1 0 1:1\n";
  CHECK_THROWS_AS(parse_forest(cyclic), ValidationError);
}
