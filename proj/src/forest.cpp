#include "lifelog/forest.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "lifelog/error.hpp"
#include "lifelog/rng.hpp"
#include "lifelog/text_io.hpp"

namespace lifelog {
namespace {

// Column-major copy of the training matrix.
struct TrainingData {
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t k = 0;
  std::vector<double> columns;
  std::vector<std::uint32_t> labels;

  double value(std::size_t row, std::size_t feature) const { return columns[feature * n + row]; }
};

struct SplitChoice {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double score = -1.0;  // sum over children of sum_c count_c^2 / n_child
};

class TreeBuilder {
 public:
  TreeBuilder(const TrainingData& data, const ForestConfig& config, std::size_t features_per_split)
      : data_(data), config_(config), mtry_(features_per_split) {}

  DecisionTree build(std::size_t tree_index) {
    auto rng = make_rng({config_.seed, tree_index});
    std::vector<std::uint32_t> sample(data_.n);
    if (config_.bootstrap) {
      std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(data_.n - 1));
      for (auto& s : sample) s = pick(rng);
    } else {
      std::iota(sample.begin(), sample.end(), 0u);
    }

    DecisionTree tree;
    struct Pending {
      std::uint32_t node;
      std::size_t begin, end, depth;
    };
    tree.nodes.emplace_back();
    std::vector<Pending> stack{{0, 0, sample.size(), 0}};
    std::vector<std::size_t> counts(data_.k);
    while (!stack.empty()) {
      auto job = stack.back();
      stack.pop_back();
      std::span<std::uint32_t> rows(sample.data() + job.begin, job.end - job.begin);

      std::fill(counts.begin(), counts.end(), 0);
      for (auto r : rows) ++counts[data_.labels[r]];
      auto& node = tree.nodes[job.node];
      node.samples = static_cast<std::uint32_t>(rows.size());
      node.impurity = gini_impurity(counts);

      const bool pure = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;
      const bool depth_capped = config_.max_depth > 0 && job.depth >= config_.max_depth;
      SplitChoice split;
      if (!pure && !depth_capped && rows.size() >= 2 * config_.min_leaf) {
        split = find_split(rows, counts, rng);
      }
      if (!split.found) {
        node.counts_begin = static_cast<std::uint32_t>(tree.leaf_counts.size());
        for (std::size_t c = 0; c < data_.k; ++c) {
          if (counts[c] > 0) {
            tree.leaf_counts.push_back(
                {static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(counts[c])});
          }
        }
        node.counts_end = static_cast<std::uint32_t>(tree.leaf_counts.size());
        continue;
      }

      auto mid = std::stable_partition(rows.begin(), rows.end(), [&](std::uint32_t r) {
        return data_.value(r, split.feature) <= split.threshold;
      });
      const std::size_t n_left = static_cast<std::size_t>(mid - rows.begin());
      const auto left = static_cast<std::uint32_t>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      auto& parent = tree.nodes[job.node];  // re-fetch: emplace_back may reallocate
      parent.feature = static_cast<std::int32_t>(split.feature);
      parent.threshold = split.threshold;
      parent.left = left;
      parent.right = left + 1;
      // Right pushed first so the left subtree is numbered first.
      stack.push_back({left + 1, job.begin + n_left, job.end, job.depth + 1});
      stack.push_back({left, job.begin, job.begin + n_left, job.depth + 1});
    }
    // Store leaf counts in node order, the order the text format reads them back.
    std::vector<LeafCount> ordered;
    ordered.reserve(tree.leaf_counts.size());
    for (auto& n : tree.nodes) {
      if (!n.is_leaf()) continue;
      const auto b = static_cast<std::uint32_t>(ordered.size());
      ordered.insert(ordered.end(), tree.leaf_counts.begin() + n.counts_begin,
                     tree.leaf_counts.begin() + n.counts_end);
      n.counts_begin = b;
      n.counts_end = static_cast<std::uint32_t>(ordered.size());
    }
    tree.leaf_counts = std::move(ordered);
    return tree;
  }

 private:
  SplitChoice find_split(std::span<const std::uint32_t> rows, const std::vector<std::size_t>& counts,
                         Rng& rng) {
    std::vector<std::size_t> order(data_.d);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> candidates(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(mtry_));
    std::sort(candidates.begin(), candidates.end());

    SplitChoice best;
    for (auto f : candidates) evaluate_feature(rows, counts, f, best);
    // All sampled features constant here: keep drawing until one can split.
    for (std::size_t i = mtry_; i < order.size() && !best.found; ++i) {
      evaluate_feature(rows, counts, order[i], best);
    }
    return best;
  }

  void evaluate_feature(std::span<const std::uint32_t> rows, const std::vector<std::size_t>& counts,
                        std::size_t feature, SplitChoice& best) {
    buffer_.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      buffer_[i] = {data_.value(rows[i], feature), data_.labels[rows[i]]};
    }
    std::sort(buffer_.begin(), buffer_.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    if (buffer_.front().first == buffer_.back().first) return;

    left_.assign(data_.k, 0);
    right_.assign(counts.begin(), counts.end());
    double left_sq = 0.0, right_sq = 0.0;
    for (auto c : counts) right_sq += static_cast<double>(c) * static_cast<double>(c);

    const std::size_t n = rows.size();
    const std::size_t min_leaf = std::max<std::size_t>(1, config_.min_leaf);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const auto c = buffer_[i].second;
      left_sq += 2.0 * static_cast<double>(left_[c]) + 1.0;
      right_sq -= 2.0 * static_cast<double>(right_[c]) - 1.0;
      ++left_[c];
      --right_[c];
      const std::size_t n_left = i + 1;
      if (buffer_[i].first == buffer_[i + 1].first) continue;
      if (n_left < min_leaf || n - n_left < min_leaf) continue;
      const double score = left_sq / static_cast<double>(n_left) +
                           right_sq / static_cast<double>(n - n_left);
      if (score > best.score) {
        const double lo = buffer_[i].first, hi = buffer_[i + 1].first;
        double threshold = lo + (hi - lo) / 2.0;
        if (!(threshold < hi)) threshold = lo;
        best = {true, feature, threshold, score};
      }
    }
  }

  const TrainingData& data_;
  const ForestConfig& config_;
  std::size_t mtry_;
  std::vector<std::pair<double, std::uint32_t>> buffer_;
  std::vector<std::size_t> left_, right_;
};

}  // namespace

double gini_impurity(std::span<const std::size_t> class_counts) {
  double total = 0.0, sq = 0.0;
  for (auto c : class_counts) {
    total += static_cast<double>(c);
    sq += static_cast<double>(c) * static_cast<double>(c);
  }
  return total > 0 ? 1.0 - sq / (total * total) : 0.0;
}

const TreeNode& DecisionTree::leaf_for(std::span<const double> row) const {
  const TreeNode* node = &nodes.front();
  while (!node->is_leaf()) {
    node = &nodes[row[static_cast<std::size_t>(node->feature)] <= node->threshold ? node->left
                                                                                   : node->right];
  }
  return *node;
}

void DecisionTree::accumulate(std::span<const double> row, std::span<double> out) const {
  const auto& leaf = leaf_for(row);
  double total = 0.0;
  for (auto i = leaf.counts_begin; i < leaf.counts_end; ++i) total += leaf_counts[i].count;
  for (auto i = leaf.counts_begin; i < leaf.counts_end; ++i) {
    out[leaf_counts[i].cls] += leaf_counts[i].count / total;
  }
}

RandomForest forest_fit(std::span<const FeatureVector> rows, std::span<const std::size_t> labels,
                        std::size_t num_classes, const ForestConfig& config) {
  if (rows.empty()) throw ValidationError("forest needs at least one training row");
  if (rows.size() != labels.size()) throw ValidationError("forest rows/labels length mismatch");
  if (num_classes < 1) throw ValidationError("forest needs at least one class");
  if (config.n_trees < 1) throw ValidationError("forest needs n_trees >= 1");
  const std::size_t d = rows.front().size();
  if (d == 0) throw ValidationError("forest rows have zero features");
  std::size_t mtry = config.features_per_split;
  if (mtry == 0) mtry = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d))));
  if (mtry > d) {
    throw ValidationError("features_per_split=" + std::to_string(mtry) + " exceeds " +
                          std::to_string(d) + " features");
  }

  TrainingData data;
  data.n = rows.size();
  data.d = d;
  data.k = num_classes;
  data.columns.resize(data.n * d);
  for (std::size_t i = 0; i < data.n; ++i) {
    if (rows[i].size() != d) throw ValidationError("ragged forest rows");
    for (std::size_t j = 0; j < d; ++j) data.columns[j * data.n + i] = rows[i][j];
    if (labels[i] >= num_classes) throw ValidationError("forest label index out of range");
    data.labels.push_back(static_cast<std::uint32_t>(labels[i]));
  }

  RandomForest forest;
  forest.config = config;
  forest.num_classes = num_classes;
  forest.dims = d;
  forest.trees.resize(config.n_trees);

  std::size_t threads = config.threads ? config.threads : std::thread::hardware_concurrency();
  threads = std::clamp<std::size_t>(threads, 1, config.n_trees);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    try {
      TreeBuilder builder(data, config, mtry);
      for (std::size_t t = next++; t < config.n_trees; t = next++) forest.trees[t] = builder.build(t);
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return forest;
}

std::vector<double> forest_predict_proba(const RandomForest& forest, std::span<const double> row) {
  if (row.size() != forest.dims) {
    throw ValidationError("forest expects " + std::to_string(forest.dims) + " features, got " +
                          std::to_string(row.size()));
  }
  std::vector<double> proba(forest.num_classes, 0.0);
  for (const auto& tree : forest.trees) tree.accumulate(row, proba);
  for (auto& p : proba) p /= static_cast<double>(forest.trees.size());
  return proba;
}

std::string format_forest(const RandomForest& forest) {
  const auto& c = forest.config;
  std::string out = "lifelog-forest 1\nclasses " + std::to_string(forest.num_classes) + "\ndims " +
                    std::to_string(forest.dims) + "\nconfig " + std::to_string(c.n_trees) + " " +
                    std::to_string(c.features_per_split) + " " + (c.bootstrap ? "1" : "0") + " " +
                    std::to_string(c.min_leaf) + " " + std::to_string(c.max_depth) + " " +
                    std::to_string(c.seed) + "\n";
  for (const auto& tree : forest.trees) {
    out += "tree " + std::to_string(tree.nodes.size()) + "\n";
    for (const auto& n : tree.nodes) {
      std::string stats = std::to_string(n.samples) + " " + format_double(n.impurity);
      if (n.is_leaf()) {
        out += "L " + stats;
        for (auto i = n.counts_begin; i < n.counts_end; ++i) {
          out += " " + std::to_string(tree.leaf_counts[i].cls) + ":" +
                 std::to_string(tree.leaf_counts[i].count);
        }
      } else {
        out += "S " + stats + " " + std::to_string(n.feature) + " " + format_double(n.threshold) +
               " " + std::to_string(n.left) + " " + std::to_string(n.right);
      }
      out += "\n";
    }
  }
  return out;
}

RandomForest parse_forest(std::string_view text) {
  auto lines = split(text, '\n');
  std::size_t pos = 0;
  auto next_fields = [&](std::string_view what) {
    if (pos >= lines.size()) throw ValidationError("truncated forest: expected " + std::string(what));
    return split(lines[pos++], ' ');
  };
  auto as_uint = [](std::string_view f) {
    std::uint64_t v = 0;
    const auto [end, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc() || end != f.data() + f.size() || f.empty())
      throw ValidationError("bad integer '" + std::string(f) + "' in forest");
    return v;
  };
  auto as_double = [](std::string_view f) {
    double v = 0;
    if (!parse_double(f, v)) throw ValidationError("bad number '" + std::string(f) + "' in forest");
    return v;
  };

  if (next_fields("header") != std::vector<std::string_view>{"lifelog-forest", "1"}) {
    throw ValidationError("not a forest model v1");
  }
  RandomForest forest;
  auto f = next_fields("classes");
  if (f.size() != 2 || f[0] != "classes") throw ValidationError("malformed forest classes line");
  forest.num_classes = as_uint(f[1]);
  f = next_fields("dims");
  if (f.size() != 2 || f[0] != "dims") throw ValidationError("malformed forest dims line");
  forest.dims = as_uint(f[1]);
  f = next_fields("config");
  if (f.size() != 7 || f[0] != "config") throw ValidationError("malformed forest config line");
  forest.config.n_trees = as_uint(f[1]);
  forest.config.features_per_split = as_uint(f[2]);
  forest.config.bootstrap = f[3] == "1";
  forest.config.min_leaf = as_uint(f[4]);
  forest.config.max_depth = as_uint(f[5]);
  forest.config.seed = as_uint(f[6]);

  for (std::size_t t = 0; t < forest.config.n_trees; ++t) {
    f = next_fields("tree");
    if (f.size() != 2 || f[0] != "tree") throw ValidationError("malformed tree header");
    DecisionTree tree;
    const auto n_nodes = as_uint(f[1]);
    for (std::uint64_t i = 0; i < n_nodes; ++i) {
      f = next_fields("node");
      TreeNode node;
      if (f.size() < 3) throw ValidationError("malformed tree node");
      node.samples = static_cast<std::uint32_t>(as_uint(f[1]));
      node.impurity = as_double(f[2]);
      if (f[0] == "L") {
        node.counts_begin = static_cast<std::uint32_t>(tree.leaf_counts.size());
        for (std::size_t j = 3; j < f.size(); ++j) {
          auto kv = split(f[j], ':');
          if (kv.size() != 2) throw ValidationError("malformed leaf count");
          auto cls = as_uint(kv[0]);
          if (cls >= forest.num_classes) throw ValidationError("leaf class out of range");
          tree.leaf_counts.push_back(
              {static_cast<std::uint32_t>(cls), static_cast<std::uint32_t>(as_uint(kv[1]))});
        }
        node.counts_end = static_cast<std::uint32_t>(tree.leaf_counts.size());
      } else if (f[0] == "S" && f.size() == 7) {
        node.feature = static_cast<std::int32_t>(as_uint(f[3]));
        node.threshold = as_double(f[4]);
        node.left = static_cast<std::uint32_t>(as_uint(f[5]));
        node.right = static_cast<std::uint32_t>(as_uint(f[6]));
        // Children always follow their parent, which rules out cycles.
        if (node.left <= i || node.right <= i || node.left >= n_nodes || node.right >= n_nodes ||
            static_cast<std::size_t>(node.feature) >= forest.dims) {
          throw ValidationError("tree node references out of range");
        }
      } else {
        throw ValidationError("malformed tree node");
      }
      tree.nodes.push_back(node);
    }
    if (tree.nodes.empty()) throw ValidationError("empty tree");
    forest.trees.push_back(std::move(tree));
  }
  return forest;
}

void save_forest(const RandomForest& forest, const std::filesystem::path& path) {
  write_file_atomic(path, format_forest(forest));
}

RandomForest load_forest(const std::filesystem::path& path) {
  return parse_forest(read_file(path));
}

}  // namespace lifelog
