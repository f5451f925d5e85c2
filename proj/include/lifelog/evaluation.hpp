#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lifelog/dataset.hpp"

namespace lifelog {

// Index of the largest entry; ties go to the lower index.
std::size_t argmax(std::span<const double> p);

// Rows are actual classes, columns predicted classes.
struct ConfusionMatrix {
  std::size_t k = 0;
  std::vector<std::size_t> counts;  // k x k, row-major

  std::size_t at(std::size_t actual, std::size_t predicted) const { return counts[actual * k + predicted]; }
  std::size_t row_sum(std::size_t actual) const;
  std::size_t trace() const;
  std::size_t total() const;
};

ConfusionMatrix confusion(std::span<const std::size_t> predicted, std::span<const std::size_t> truth,
                          std::size_t num_classes);
ConfusionMatrix confusion(std::span<const std::string> predicted, std::span<const std::string> truth,
                          const ActivityLabelSet& label_set);

// All accuracies are percentages. A recall of nullopt is N/A: the class had no
// test support, or the evaluated model cannot emit it.
struct MetricsReport {
  ActivityLabelSet label_set;
  double total_accuracy = 0.0;
  double avg_class_accuracy = 0.0;
  std::vector<std::optional<double>> per_class_recall;
  std::vector<std::size_t> supports;
};

// Unweighted mean over the classes whose recall is available.
double mean_class_accuracy(std::span<const std::optional<double>> recalls);
// Sum of weight_c * recall_c over sum of weight_c; N/A recalls count as 0.
double support_weighted_accuracy(std::span<const std::optional<double>> recalls,
                                 std::span<const double> weights);

// `unavailable[c]` marks classes the model cannot predict: their recall is
// N/A and their records still count as errors in the total.
MetricsReport evaluate(std::span<const std::size_t> predicted, std::span<const std::size_t> truth,
                       const ActivityLabelSet& label_set, const std::vector<bool>& unavailable = {});
MetricsReport evaluate(std::span<const std::string> predicted, std::span<const std::string> truth,
                       const ActivityLabelSet& label_set);
MetricsReport metrics_from_confusion(const ConfusionMatrix& matrix, const ActivityLabelSet& label_set,
                                     const std::vector<bool>& unavailable = {});

// Class,Support,Accuracy rows followed by the two summary rows; 2 decimals.
std::string format_metrics_csv(const MetricsReport& report);
std::string format_confusion_csv(const ConfusionMatrix& matrix, const ActivityLabelSet& label_set);

struct TimelineEntry {
  std::string id;
  Timestamp timestamp;
  std::size_t predicted = 0;
  std::vector<double> probabilities;
};

struct TimelineSegment {
  Timestamp start;
  Timestamp end;
  std::size_t label = 0;
  std::size_t count = 0;
  bool operator==(const TimelineSegment&) const = default;
};

struct Timeline {
  Date date;
  ActivityLabelSet label_set;
  std::vector<TimelineEntry> entries;
  std::vector<TimelineSegment> segments;  // adjacent equal predictions merged
};

// Records must come from one calendar day in chronological order.
Timeline build_timeline(std::span<const ImageRecord> records,
                        std::span<const std::vector<double>> probabilities,
                        const ActivityLabelSet& label_set);

// Segments go to `path` as "start<TAB>end<TAB>label" lines; per-record
// predictions go to `path` with ".records" appended.
void timeline_export(const Timeline& timeline, const std::filesystem::path& path);
std::vector<TimelineSegment> load_timeline_segments(const std::filesystem::path& path,
                                                    const ActivityLabelSet& label_set);

}  // namespace lifelog
