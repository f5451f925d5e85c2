#include "lifelog/experiments.hpp"

#include <algorithm>
#include <map>

#include "lifelog/error.hpp"
#include "lifelog/text_io.hpp"

namespace lifelog {

namespace {

std::string cell(const std::optional<double>& v) {
  if (!v) return "N/A";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v);
  return buf;
}

std::string cell(double v) { return cell(std::optional<double>(v)); }

// Re-expresses labels of `features` (indices into `from`) as indices into `to`.
void relabel(RecordFeatures& features, const ActivityLabelSet& from, const ActivityLabelSet& to) {
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (!features.labels[i]) continue;
    const std::size_t l = to.index_of(from.name(*features.labels[i]));
    features.labels[i] = l;
    if (features.pixels.dims) features.pixels.labels[i] = l;
  }
}

}  // namespace

LearningCurve learning_curve(const Dataset& dataset, const ImageSource& images,
                             const PipelineConfig& config, const SplitAssignment& split,
                             std::span<const std::size_t> week_prefixes,
                             const ProbabilityTable* probabilities) {
  if (week_prefixes.empty()) throw ValidationError("learning curve needs at least one prefix");
  const auto usable = dataset.usable_indices();
  if (usable.empty()) throw ValidationError("dataset has no usable records");
  std::int64_t anchor = dataset.records[usable.front()].timestamp.date.serial();
  for (auto i : usable) anchor = std::min(anchor, dataset.records[i].timestamp.date.serial());

  std::vector<std::size_t> train_idx, test_idx;
  for (auto i : usable) {
    const auto it = split.partition_of.find(dataset.records[i].id);
    if (it == split.partition_of.end()) continue;
    if (it->second == Partition::train) train_idx.push_back(i);
    if (it->second == Partition::test) test_idx.push_back(i);
  }
  if (test_idx.empty()) throw ValidationError("split has no usable test records");

  const auto opts = config.feature_options(probabilities != nullptr);
  auto train_all = extract_features(dataset, train_idx, images, opts);
  auto test = extract_features(dataset, test_idx, images, opts);
  if (probabilities && config.uses_probabilities()) {
    attach_probabilities(train_all, *probabilities);
    attach_probabilities(test, *probabilities);
  }
  const auto truth = test.label_indices();

  LearningCurve curve;
  curve.test_ids = test.ids;
  for (std::size_t weeks : week_prefixes) {
    if (weeks == 0) throw ValidationError("learning-curve prefixes must be >= 1 week");
    const std::int64_t limit = anchor + 7 * static_cast<std::int64_t>(weeks);
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < train_all.size(); ++r) {
      if (train_all.timestamps[r].date.serial() < limit) rows.push_back(r);
    }
    if (rows.empty()) throw ValidationError("prefix of " + std::to_string(weeks) + " weeks has no training records");
    const auto train = train_all.subset(rows);

    CurvePoint point;
    point.weeks = weeks;
    point.train_ids = train.ids;
    std::vector<bool> unavailable(dataset.label_set.size(), true);
    for (auto l : train.label_indices()) unavailable[l] = false;
    for (std::size_t c = 0; c < unavailable.size(); ++c) {
      if (unavailable[c]) point.absent_classes.push_back(dataset.label_set.name(c));
    }
    const auto pipeline = train_pipeline(config, dataset.label_set, train);
    const auto predicted = pipeline.predict(test);
    point.report = evaluate(predicted, truth, dataset.label_set, unavailable);
    curve.points.push_back(std::move(point));
  }
  return curve;
}

std::string format_learning_curve_csv(const LearningCurve& curve) {
  std::string out = "Weeks,Train Records,Test Records,Total Accuracy,Avg. Class Accuracy,Absent Classes\n";
  for (const auto& p : curve.points) {
    out += std::to_string(p.weeks) + "," + std::to_string(p.train_ids.size()) + "," +
           std::to_string(curve.test_ids.size()) + "," + cell(p.report.total_accuracy) + "," +
           cell(p.report.avg_class_accuracy) + "," + join(p.absent_classes, ';') + "\n";
  }
  return out;
}

std::vector<Dataset> split_by_day(const Dataset& dataset) {
  std::map<Date, Dataset> days;
  for (const auto& r : dataset.records) {
    auto& d = days[r.timestamp.date];
    d.label_set = dataset.label_set;
    d.user_id = dataset.user_id;
    d.records.push_back(r);
  }
  std::vector<Dataset> out;
  for (auto& [date, d] : days) {
    d.sort_chronologically();
    out.push_back(std::move(d));
  }
  return out;
}

FinetuneResult finetune_experiment(const TrainedPipeline& base, const Dataset& day1,
                                   const ImageSource& images1, const Dataset& day2,
                                   const ImageSource& images2, const FinetuneOptions& options) {
  std::vector<std::string> names = base.label_set.names();
  FinetuneResult res;
  for (const auto* set : {&day1.label_set, &day2.label_set}) {
    for (const auto& n : set->names()) {
      if (std::find(names.begin(), names.end(), n) == names.end()) {
        res.novel.push_back(names.size());
        names.push_back(n);
      }
    }
  }
  res.label_set = ActivityLabelSet(names);
  const std::size_t k = res.label_set.size();

  const auto opts = base.config.feature_options(false);
  auto f1 = extract_features(day1, day1.usable_indices(), images1, opts);
  auto f2 = extract_features(day2, day2.usable_indices(), images2, opts);
  if (f1.size() == 0) throw ValidationError("fine-tuning day has no labelled records");
  if (f2.size() == 0) throw ValidationError("evaluation day has no labelled records");
  relabel(f1, day1.label_set, res.label_set);
  relabel(f2, day2.label_set, res.label_set);
  const auto truth = f2.label_indices();

  // Before: base predictions are base-label indices, which lead the extended set.
  std::vector<bool> unavailable_before(k, false);
  for (auto c : res.novel) unavailable_before[c] = true;
  res.before = evaluate(base.predict(f2), truth, res.label_set, unavailable_before);

  res.tuned = finetune_pipeline(base, res.label_set, f1, options);
  std::vector<bool> unavailable_after(k, false);
  std::vector<bool> seen(k, false);
  for (auto l : f1.label_indices()) seen[l] = true;
  for (auto c : res.novel) unavailable_after[c] = !seen[c];
  res.after = evaluate(res.tuned.predict(f2), truth, res.label_set, unavailable_after);
  return res;
}

std::string format_finetune_csv(const FinetuneResult& r) {
  std::string out = "Class,Support,Before,After\n";
  for (std::size_t c = 0; c < r.label_set.size(); ++c) {
    out += r.label_set.name(c) + "," + std::to_string(r.after.supports[c]) + "," +
           cell(r.before.per_class_recall[c]) + "," + cell(r.after.per_class_recall[c]) + "\n";
  }
  out += "Avg. Class Accuracy,," + cell(r.before.avg_class_accuracy) + "," + cell(r.after.avg_class_accuracy) + "\n";
  out += "Total Accuracy,," + cell(r.before.total_accuracy) + "," + cell(r.after.total_accuracy) + "\n";
  return out;
}

}  // namespace lifelog
