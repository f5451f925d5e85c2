#include "lifelog/knn.hpp"

#include <algorithm>
#include <numeric>

#include "lifelog/error.hpp"
#include "lifelog/text_io.hpp"

namespace lifelog {

KnnModel knn_fit(std::span<const FeatureVector> rows, std::span<const std::size_t> labels,
                 std::size_t num_classes, std::size_t k) {
  if (rows.empty()) throw ValidationError("kNN needs at least one training row");
  if (rows.size() != labels.size()) throw ValidationError("kNN rows/labels length mismatch");
  if (k < 1) throw ValidationError("kNN k must be >= 1");
  if (k > rows.size()) {
    throw ValidationError("kNN k=" + std::to_string(k) + " exceeds " +
                          std::to_string(rows.size()) + " training rows");
  }
  KnnModel m;
  m.k = k;
  m.num_classes = num_classes;
  m.scaler = fit_minmax_scaler(rows);
  m.dims = m.scaler.dimension();
  m.rows.reserve(rows.size() * m.dims);
  for (const auto& r : rows) {
    auto s = m.scaler.apply(r);
    m.rows.insert(m.rows.end(), s.begin(), s.end());
  }
  for (auto l : labels) {
    if (l >= num_classes) throw ValidationError("kNN label index out of range");
  }
  m.labels.assign(labels.begin(), labels.end());
  return m;
}

std::vector<double> knn_predict_proba(const KnnModel& model, std::span<const double> row) {
  if (row.size() != model.dims) {
    throw ValidationError("kNN query has " + std::to_string(row.size()) + " dims, model has " +
                          std::to_string(model.dims));
  }
  const auto query = model.scaler.apply(row);
  const std::size_t n = model.size();
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = model.rows.data() + i * model.dims;
    double d2 = 0.0;
    for (std::size_t j = 0; j < model.dims; ++j) {
      const double diff = r[j] - query[j];
      d2 += diff * diff;
    }
    dist[i] = {d2, i};
  }
  // Lexicographic pair order is exactly (distance, training index).
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(model.k), dist.end());
  std::vector<double> proba(model.num_classes, 0.0);
  for (std::size_t j = 0; j < model.k; ++j) proba[model.labels[dist[j].second]] += 1.0;
  for (auto& p : proba) p /= static_cast<double>(model.k);
  return proba;
}

std::string format_knn(const KnnModel& model) {
  std::string out = "lifelog-knn 1\nk\t" + std::to_string(model.k) + "\nclasses\t" +
                    std::to_string(model.num_classes) + "\ndims\t" + std::to_string(model.dims) +
                    "\nrows\t" + std::to_string(model.size()) + "\n" + format_scaler(model.scaler);
  for (std::size_t i = 0; i < model.size(); ++i) {
    out += std::to_string(model.labels[i]);
    for (double v : model.row(i)) out += '\t' + format_double(v);
    out += '\n';
  }
  return out;
}

KnnModel parse_knn(std::string_view text) {
  auto lines = split(text, '\n');
  auto field = [&](std::size_t idx, std::string_view key) {
    long long v = 0;
    if (idx >= lines.size()) throw ValidationError("truncated kNN model");
    auto f = split(lines[idx], '\t');
    if (f.size() != 2 || f[0] != key || !parse_int(f[1], v) || v < 0) {
      throw ValidationError("malformed kNN model field '" + std::string(key) + "'");
    }
    return static_cast<std::size_t>(v);
  };
  if (lines.empty() || lines[0] != "lifelog-knn 1") throw ValidationError("not a kNN model v1");
  KnnModel m;
  m.k = field(1, "k");
  m.num_classes = field(2, "classes");
  m.dims = field(3, "dims");
  const std::size_t n = field(4, "rows");
  if (lines.size() < 7 + n) throw ValidationError("truncated kNN model");
  m.scaler = parse_scaler(lines[5], lines[6]);
  for (std::size_t i = 0; i < n; ++i) {
    auto f = split(lines[7 + i], '\t');
    long long label = 0;
    if (f.size() != m.dims + 1 || !parse_int(f[0], label)) {
      throw ValidationError("malformed kNN row " + std::to_string(i));
    }
    m.labels.push_back(static_cast<std::size_t>(label));
    for (std::size_t j = 1; j < f.size(); ++j) {
      double v = 0;
      if (!parse_double(f[j], v)) throw ValidationError("malformed kNN value");
      m.rows.push_back(v);
    }
  }
  return m;
}

}  // namespace lifelog
