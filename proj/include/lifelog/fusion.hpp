#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lifelog/dataset.hpp"
#include "lifelog/features.hpp"
#include "lifelog/forest.hpp"
#include "lifelog/probability_table.hpp"

namespace lifelog {

// Equal-weight average of two class distributions.
std::vector<double> classic_combine(std::span<const double> a, std::span<const double> b);

struct FusionBlocks {
  bool probabilities = true;
  bool metadata = true;
  bool histogram = true;

  bool any() const { return probabilities || metadata || histogram; }
  bool operator==(const FusionBlocks&) const = default;
};

// Per-record inputs for fitting the fusion forest, aligned by position.
struct FusionTrainingSet {
  std::vector<std::string> ids;
  std::vector<std::size_t> labels;
  std::vector<MetadataFeatures> metadata;  // required when the metadata block is on
  std::vector<ColorHistogram> histograms;  // required when the histogram block is on
};

// Random forest over [probabilities | metadata | histogram], min-max scaled.
struct LateFusionModel {
  RandomForest forest;
  FeatureLayout layout;
  ActivityLabelSet label_set;
  FeatureScaler scaler;

  FusionBlocks blocks() const;
  bool operator==(const LateFusionModel&) const = default;
};

// Throws ValidationError naming the ids missing from the probability table.
LateFusionModel late_fusion_fit(const ActivityLabelSet& label_set,
                                const ProbabilityTable* probabilities,
                                const FusionTrainingSet& training, const FusionBlocks& blocks,
                                const ForestConfig& config);

// Absent blocks are passed as an empty span / nullptr and must match the layout.
std::vector<double> late_fusion_predict(const LateFusionModel& model,
                                        std::span<const double> probabilities,
                                        const MetadataFeatures* metadata,
                                        const ColorHistogram* histogram);

struct LabelAlignment {
  std::vector<std::optional<std::size_t>> source_to_target;  // nullopt: unmapped source class
  std::vector<std::size_t> novel;  // target indices with no source counterpart
};

LabelAlignment align_labels(const ActivityLabelSet& source, const ActivityLabelSet& target);

std::string format_late_fusion(const LateFusionModel& model);
LateFusionModel parse_late_fusion(std::string_view text);
void save_late_fusion(const LateFusionModel& model, const std::filesystem::path& path);
LateFusionModel load_late_fusion(const std::filesystem::path& path);

}  // namespace lifelog
