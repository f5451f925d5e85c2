#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lifelog/pipeline.hpp"

namespace lifelog {

struct CurvePoint {
  std::size_t weeks = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> absent_classes;  // reported as N/A
  MetricsReport report;
};

struct LearningCurve {
  std::vector<std::string> test_ids;  // fixed across prefixes
  std::vector<CurvePoint> points;
};

// Trains on the first `weeks` weeks of the training partition (anchored at the
// earliest usable record) and evaluates every prefix on the same test partition.
LearningCurve learning_curve(const Dataset& dataset, const ImageSource& images,
                             const PipelineConfig& config, const SplitAssignment& split,
                             std::span<const std::size_t> week_prefixes,
                             const ProbabilityTable* probabilities = nullptr);

std::string format_learning_curve_csv(const LearningCurve& curve);

// One dataset per calendar day, in date order.
std::vector<Dataset> split_by_day(const Dataset& dataset);

struct FinetuneResult {
  ActivityLabelSet label_set;  // base labels, then labels new to the base model
  std::vector<std::size_t> novel;
  MetricsReport before;
  MetricsReport after;
  TrainedPipeline tuned;
};

// Evaluates `base` on day 2, fine-tunes it on day 1 and evaluates again. Classes
// the model cannot emit (new labels before fine-tuning) are reported as N/A.
FinetuneResult finetune_experiment(const TrainedPipeline& base, const Dataset& day1,
                                   const ImageSource& images1, const Dataset& day2,
                                   const ImageSource& images2, const FinetuneOptions& options);

std::string format_finetune_csv(const FinetuneResult& result);

}  // namespace lifelog
