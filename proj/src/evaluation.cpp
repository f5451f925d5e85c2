#include "lifelog/evaluation.hpp"

#include <algorithm>
#include <cstdio>

#include "lifelog/error.hpp"
#include "lifelog/text_io.hpp"

namespace lifelog {
namespace {

std::vector<std::size_t> to_indices(std::span<const std::string> names,
                                    const ActivityLabelSet& label_set) {
  std::vector<std::size_t> out;
  out.reserve(names.size());
  for (const auto& n : names) out.push_back(label_set.index_of(n));
  return out;
}

std::string two_decimals(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::size_t argmax(std::span<const double> p) {
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

std::size_t ConfusionMatrix::row_sum(std::size_t actual) const {
  std::size_t s = 0;
  for (std::size_t j = 0; j < k; ++j) s += at(actual, j);
  return s;
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t s = 0;
  for (std::size_t i = 0; i < k; ++i) s += at(i, i);
  return s;
}

std::size_t ConfusionMatrix::total() const {
  std::size_t s = 0;
  for (auto c : counts) s += c;
  return s;
}

ConfusionMatrix confusion(std::span<const std::size_t> predicted, std::span<const std::size_t> truth,
                          std::size_t num_classes) {
  if (predicted.size() != truth.size()) {
    throw ValidationError("predicted and true label sequences differ in length");
  }
  if (predicted.empty()) throw ValidationError("cannot evaluate zero predictions");
  ConfusionMatrix m{num_classes, std::vector<std::size_t>(num_classes * num_classes, 0)};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= num_classes || predicted[i] >= num_classes) {
      throw ValidationError("label index outside the label set");
    }
    ++m.counts[truth[i] * num_classes + predicted[i]];
  }
  return m;
}

ConfusionMatrix confusion(std::span<const std::string> predicted, std::span<const std::string> truth,
                          const ActivityLabelSet& label_set) {
  if (predicted.size() != truth.size()) {
    throw ValidationError("predicted and true label sequences differ in length");
  }
  auto p = to_indices(predicted, label_set);
  auto t = to_indices(truth, label_set);
  return confusion(p, t, label_set.size());
}

double mean_class_accuracy(std::span<const std::optional<double>> recalls) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : recalls) {
    if (r) {
      sum += *r;
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

double support_weighted_accuracy(std::span<const std::optional<double>> recalls,
                                 std::span<const double> weights) {
  if (recalls.size() != weights.size()) throw ValidationError("recall/weight length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t c = 0; c < recalls.size(); ++c) {
    num += weights[c] * recalls[c].value_or(0.0);
    den += weights[c];
  }
  return den > 0 ? num / den : 0.0;
}

MetricsReport metrics_from_confusion(const ConfusionMatrix& matrix, const ActivityLabelSet& label_set,
                                     const std::vector<bool>& unavailable) {
  if (matrix.k != label_set.size()) throw ValidationError("confusion matrix size != label set size");
  if (!unavailable.empty() && unavailable.size() != matrix.k) {
    throw ValidationError("unavailable-class mask length != label set size");
  }
  MetricsReport r;
  r.label_set = label_set;
  for (std::size_t c = 0; c < matrix.k; ++c) {
    const auto support = matrix.row_sum(c);
    r.supports.push_back(support);
    const bool na = support == 0 || (!unavailable.empty() && unavailable[c]);
    r.per_class_recall.push_back(
        na ? std::nullopt
           : std::optional<double>(100.0 * static_cast<double>(matrix.at(c, c)) /
                                   static_cast<double>(support)));
  }
  const auto total = matrix.total();
  r.total_accuracy = total ? 100.0 * static_cast<double>(matrix.trace()) / static_cast<double>(total) : 0.0;
  r.avg_class_accuracy = mean_class_accuracy(r.per_class_recall);
  return r;
}

MetricsReport evaluate(std::span<const std::size_t> predicted, std::span<const std::size_t> truth,
                       const ActivityLabelSet& label_set, const std::vector<bool>& unavailable) {
  return metrics_from_confusion(confusion(predicted, truth, label_set.size()), label_set, unavailable);
}

MetricsReport evaluate(std::span<const std::string> predicted, std::span<const std::string> truth,
                       const ActivityLabelSet& label_set) {
  return metrics_from_confusion(confusion(predicted, truth, label_set), label_set);
}

std::string format_metrics_csv(const MetricsReport& report) {
  std::string out = "Class,Support,Accuracy\n";
  for (std::size_t c = 0; c < report.label_set.size(); ++c) {
    const auto& r = report.per_class_recall[c];
    out += report.label_set.name(c) + "," + std::to_string(report.supports[c]) + "," +
           (r ? two_decimals(*r) : "N/A") + "\n";
  }
  out += "Avg. Class Accuracy,," + two_decimals(report.avg_class_accuracy) + "\n";
  out += "Total Accuracy,," + two_decimals(report.total_accuracy) + "\n";
  return out;
}

std::string format_confusion_csv(const ConfusionMatrix& matrix, const ActivityLabelSet& label_set) {
  std::string out = "actual\\predicted";
  for (const auto& n : label_set.names()) out += "," + n;
  out += "\n";
  for (std::size_t i = 0; i < matrix.k; ++i) {
    out += label_set.name(i);
    for (std::size_t j = 0; j < matrix.k; ++j) out += "," + std::to_string(matrix.at(i, j));
    out += "\n";
  }
  return out;
}

Timeline build_timeline(std::span<const ImageRecord> records,
                        std::span<const std::vector<double>> probabilities,
                        const ActivityLabelSet& label_set) {
  if (records.size() != probabilities.size()) {
    throw ValidationError("timeline needs one prediction per record");
  }
  Timeline t;
  t.label_set = label_set;
  if (records.empty()) return t;
  t.date = records.front().timestamp.date;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.timestamp.date != t.date) {
      throw ValidationError("timeline records span more than one day (" + t.date.to_string() +
                            " and " + r.timestamp.date.to_string() + ")");
    }
    if (i > 0 && r.timestamp < records[i - 1].timestamp) {
      throw ValidationError("timeline records are not in chronological order");
    }
    if (probabilities[i].size() != label_set.size()) {
      throw ValidationError("timeline prediction length != label set size");
    }
    const auto label = argmax(probabilities[i]);
    t.entries.push_back({r.id, r.timestamp, label, probabilities[i]});
    if (!t.segments.empty() && t.segments.back().label == label) {
      t.segments.back().end = r.timestamp;
      ++t.segments.back().count;
    } else {
      t.segments.push_back({r.timestamp, r.timestamp, label, 1});
    }
  }
  return t;
}

void timeline_export(const Timeline& timeline, const std::filesystem::path& path) {
  std::string seg;
  for (const auto& s : timeline.segments) {
    seg += s.start.to_string() + '\t' + s.end.to_string() + '\t' + timeline.label_set.name(s.label) +
           '\n';
  }
  write_file_atomic(path, seg);

  std::string rec = timeline.label_set.header() + "\n";
  for (const auto& e : timeline.entries) {
    rec += e.id + '\t' + e.timestamp.to_string() + '\t' + timeline.label_set.name(e.predicted);
    for (double p : e.probabilities) rec += '\t' + format_double(p);
    rec += '\n';
  }
  auto rec_path = path;
  rec_path += ".records";
  write_file_atomic(rec_path, rec);
}

std::vector<TimelineSegment> load_timeline_segments(const std::filesystem::path& path,
                                                    const ActivityLabelSet& label_set) {
  std::vector<TimelineSegment> out;
  std::size_t n = 0;
  for (const auto& line : read_lines(path)) {
    ++n;
    if (line.empty()) continue;
    auto f = split(line, '\t');
    if (f.size() != 3) {
      throw ValidationError(path.string() + ":" + std::to_string(n) + ": malformed segment");
    }
    out.push_back({Timestamp::parse(f[0]), Timestamp::parse(f[1]), label_set.index_of(f[2]), 0});
  }
  return out;
}

}  // namespace lifelog
