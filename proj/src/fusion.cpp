#include "lifelog/fusion.hpp"

#include "lifelog/error.hpp"
#include "lifelog/text_io.hpp"

namespace lifelog {

std::vector<double> classic_combine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ValidationError("classic ensemble inputs differ in length (" + std::to_string(a.size()) +
                          " vs " + std::to_string(b.size()) + ")");
  }
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = 0.5 * (a[i] + b[i]);
  return out;
}

FusionBlocks LateFusionModel::blocks() const {
  return {layout.find(FeatureBlock::probabilities) != nullptr,
          layout.find(FeatureBlock::metadata) != nullptr,
          layout.find(FeatureBlock::histogram) != nullptr};
}

LateFusionModel late_fusion_fit(const ActivityLabelSet& label_set,
                                const ProbabilityTable* probabilities,
                                const FusionTrainingSet& training, const FusionBlocks& blocks,
                                const ForestConfig& config) {
  if (!blocks.any()) throw ValidationError("late fusion needs at least one feature block");
  const std::size_t n = training.ids.size();
  if (n == 0) throw ValidationError("late fusion training set is empty");
  if (training.labels.size() != n) throw ValidationError("late fusion ids/labels length mismatch");
  if (blocks.metadata && training.metadata.size() != n) {
    throw ValidationError("late fusion metadata rows do not cover the training ids");
  }
  if (blocks.histogram && training.histograms.size() != n) {
    throw ValidationError("late fusion histogram rows do not cover the training ids");
  }
  if (blocks.probabilities) {
    if (!probabilities) throw ValidationError("late fusion probability block needs a table");
    if (probabilities->label_set != label_set) {
      throw ValidationError("probability table label set differs from the fusion label set");
    }
    std::vector<std::string> missing;
    for (const auto& id : training.ids) {
      if (!probabilities->find(id)) missing.push_back(id);
    }
    if (!missing.empty()) {
      std::string msg = "probability table is missing " + std::to_string(missing.size()) + " ids:";
      for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
      if (missing.size() > 20) msg += " ...";
      throw ValidationError(msg);
    }
  }

  std::vector<FeatureVector> rows;
  rows.reserve(n);
  FeatureLayout layout;
  for (std::size_t i = 0; i < n; ++i) {
    std::span<const double> p;
    if (blocks.probabilities) p = *probabilities->find(training.ids[i]);
    auto assembled = assemble_features(p, blocks.metadata ? &training.metadata[i] : nullptr,
                                       blocks.histogram ? &training.histograms[i] : nullptr);
    if (i == 0) {
      layout = assembled.layout;
    } else if (assembled.layout != layout) {
      throw ValidationError("inconsistent feature layout at id '" + training.ids[i] + "'");
    }
    rows.push_back(std::move(assembled.values));
  }

  LateFusionModel model;
  model.layout = layout;
  model.label_set = label_set;
  model.scaler = fit_minmax_scaler(rows);
  for (auto& r : rows) r = model.scaler.apply(r);
  model.forest = forest_fit(rows, training.labels, label_set.size(), config);
  return model;
}

std::vector<double> late_fusion_predict(const LateFusionModel& model,
                                        std::span<const double> probabilities,
                                        const MetadataFeatures* metadata,
                                        const ColorHistogram* histogram) {
  auto assembled = assemble_features(probabilities, metadata, histogram);
  if (assembled.layout != model.layout) {
    throw ValidationError("late fusion input layout '" + assembled.layout.to_string() +
                          "' does not match model layout '" + model.layout.to_string() + "'");
  }
  return forest_predict_proba(model.forest, model.scaler.apply(assembled.values));
}

LabelAlignment align_labels(const ActivityLabelSet& source, const ActivityLabelSet& target) {
  LabelAlignment a;
  for (const auto& name : source.names()) a.source_to_target.push_back(target.find(name));
  for (std::size_t t = 0; t < target.size(); ++t) {
    if (!source.contains(target.name(t))) a.novel.push_back(t);
  }
  return a;
}

std::string format_late_fusion(const LateFusionModel& model) {
  return "lifelog-fusion 1\n" + model.label_set.header() + "\nlayout " + model.layout.to_string() +
         "\n" + format_scaler(model.scaler) + format_forest(model.forest);
}

LateFusionModel parse_late_fusion(std::string_view text) {
  auto lines = split(text, '\n');
  if (lines.size() < 6 || lines[0] != "lifelog-fusion 1" || !lines[2].starts_with("layout ")) {
    throw ValidationError("not a late fusion model v1");
  }
  LateFusionModel model;
  model.label_set = ActivityLabelSet::parse_header(lines[1]);
  model.layout = FeatureLayout::parse(lines[2].substr(7));
  model.scaler = parse_scaler(lines[3], lines[4]);
  auto forest_start = static_cast<std::size_t>(lines[5].data() - text.data());
  model.forest = parse_forest(text.substr(forest_start));
  if (model.forest.dims != model.layout.total() || model.scaler.dimension() != model.layout.total() ||
      model.forest.num_classes != model.label_set.size()) {
    throw ValidationError("late fusion model parts disagree on dimensions");
  }
  return model;
}

void save_late_fusion(const LateFusionModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, format_late_fusion(model));
}

LateFusionModel load_late_fusion(const std::filesystem::path& path) {
  return parse_late_fusion(read_file(path));
}

}  // namespace lifelog
