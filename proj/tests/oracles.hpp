#pragma once

// Independent reference implementations used as test oracles. They share no
// code with the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

namespace oracle {

// All-pairs kNN: min-max scale with the training rows, squared Euclidean
// distance, stable sort of training indices so equal distances keep index order.
inline std::vector<double> knn(const std::vector<std::vector<double>>& train,
                               const std::vector<std::size_t>& labels, std::size_t num_classes,
                               std::size_t k, const std::vector<double>& query) {
  const std::size_t d = query.size();
  std::vector<double> lo(d), hi(d);
  for (std::size_t j = 0; j < d; ++j) {
    lo[j] = hi[j] = train[0][j];
    for (const auto& r : train) {
      lo[j] = std::min(lo[j], r[j]);
      hi[j] = std::max(hi[j], r[j]);
    }
  }
  auto scale = [&](const std::vector<double>& r) {
    std::vector<double> s(d);
    for (std::size_t j = 0; j < d; ++j) {
      if (hi[j] == lo[j]) {
        s[j] = 0.0;
        continue;
      }
      s[j] = std::clamp((r[j] - lo[j]) / (hi[j] - lo[j]), 0.0, 1.0);
    }
    return s;
  };
  const auto q = scale(query);
  std::vector<double> dist(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto s = scale(train[i]);
    double acc = 0;
    for (std::size_t j = 0; j < d; ++j) acc += (s[j] - q[j]) * (s[j] - q[j]);
    dist[i] = acc;
  }
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  std::vector<double> p(num_classes, 0.0);
  for (std::size_t j = 0; j < k; ++j) p[labels[order[j]]] += 1.0;
  for (auto& v : p) v /= static_cast<double>(k);
  return p;
}

// Percent of correct predictions per class, from raw label sequences.
inline std::vector<double> recalls(const std::vector<std::size_t>& predicted,
                                   const std::vector<std::size_t>& truth, std::size_t k) {
  std::vector<double> hit(k, 0), n(k, 0), out(k, -1);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    n[truth[i]] += 1;
    if (predicted[i] == truth[i]) hit[truth[i]] += 1;
  }
  for (std::size_t c = 0; c < k; ++c)
    if (n[c] > 0) out[c] = 100.0 * hit[c] / n[c];
  return out;
}

}  // namespace oracle
