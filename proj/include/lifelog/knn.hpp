#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lifelog/features.hpp"

namespace lifelog {

// Brute-force k-nearest-neighbours over min-max scaled rows.
struct KnnModel {
  std::size_t k = 3;
  std::size_t num_classes = 0;
  std::size_t dims = 0;
  std::vector<double> rows;  // scaled, row-major, size() / dims rows
  std::vector<std::size_t> labels;
  FeatureScaler scaler;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return {rows.data() + i * dims, dims}; }
  bool operator==(const KnnModel&) const = default;
};

KnnModel knn_fit(std::span<const FeatureVector> rows, std::span<const std::size_t> labels,
                 std::size_t num_classes, std::size_t k = 3);

// P(c) = (# of the k nearest rows labelled c) / k. Distance ties go to the
// lower training index.
std::vector<double> knn_predict_proba(const KnnModel& model, std::span<const double> row);

std::string format_knn(const KnnModel& model);
KnnModel parse_knn(std::string_view text);

}  // namespace lifelog
