#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lifelog/dataset.hpp"
#include "lifelog/evaluation.hpp"
#include "lifelog/features.hpp"
#include "lifelog/forest.hpp"
#include "lifelog/fusion.hpp"
#include "lifelog/knn.hpp"
#include "lifelog/probability_table.hpp"
#include "lifelog/softmax.hpp"
#include "lifelog/synth.hpp"

namespace lifelog {

class ImageSource {
 public:
  virtual ~ImageSource() = default;
  virtual RgbImage load(const ImageRecord& record) const = 0;
};

// Images on disk, record paths relative to `root`.
class DirectoryImageSource final : public ImageSource {
 public:
  explicit DirectoryImageSource(std::filesystem::path root) : root_(std::move(root)) {}
  RgbImage load(const ImageRecord& record) const override;

 private:
  std::filesystem::path root_;
};

// Renders synthetic images on demand instead of reading them back.
class SyntheticImageSource final : public ImageSource {
 public:
  explicit SyntheticImageSource(SynthConfig config) : config_(std::move(config)) {}
  RgbImage load(const ImageRecord& record) const override { return render_image(config_, record); }

 private:
  SynthConfig config_;
};

// Everything the classifiers consume, extracted once per record.
struct RecordFeatures {
  std::vector<std::string> ids;
  std::vector<Timestamp> timestamps;
  std::vector<std::optional<std::size_t>> labels;
  std::vector<MetadataFeatures> metadata;
  std::vector<ColorHistogram> histograms;
  PixelSamples pixels;  // dims == 0 when pixels were not extracted
  // Pixel-model probabilities supplied from a table; empty when absent.
  std::vector<std::vector<double>> probabilities;

  std::size_t size() const { return ids.size(); }
  RecordFeatures subset(std::span<const std::size_t> rows) const;
  std::vector<std::size_t> label_indices() const;  // throws on unlabeled rows
};

struct FeatureOptions {
  int histogram_bins = 10;
  int pixel_size = 32;  // 0 skips pixel inputs
  std::size_t threads = 0;
};

RecordFeatures extract_features(const Dataset& dataset, std::span<const std::size_t> record_indices,
                                const ImageSource& images, const FeatureOptions& options);

// Copies table rows onto the records; throws ValidationError listing missing ids.
void attach_probabilities(RecordFeatures& features, const ProbabilityTable& table);

enum class ClassifierKind { knn, rdf, softmax, classic_ensemble, late_fusion };
std::string_view to_string(ClassifierKind kind);
ClassifierKind parse_classifier_kind(std::string_view text);

// Where the fusion forest's training-time probability inputs come from.
enum class ProbabilitySource {
  same_split,   // the pixel model's outputs on its own training rows
  out_of_fold,  // K-fold: each row scored by a model that did not see it
};
std::string_view to_string(ProbabilitySource source);
ProbabilitySource parse_probability_source(std::string_view text);

struct PipelineConfig {
  ClassifierKind classifier = ClassifierKind::late_fusion;
  FusionBlocks blocks;  // tabular inputs for knn, rdf and late fusion
  std::size_t knn_k = 3;
  ForestConfig forest;
  SgdConfig sgd;
  int histogram_bins = 10;
  int pixel_size = 32;
  ProbabilitySource probability_source = ProbabilitySource::same_split;
  std::size_t folds = 5;
  std::size_t threads = 0;  // feature extraction workers, 0 = hardware

  bool uses_probabilities() const;
  FeatureOptions feature_options(bool external_probabilities) const;
  void validate() const;
};

// "key=value" lines for every pipeline setting.
std::string format_pipeline_config(const PipelineConfig& config);
// Returns false when `key` is not a pipeline setting; throws on a bad value.
bool apply_pipeline_setting(PipelineConfig& config, std::string_view key, std::string_view value);

struct TrainedPipeline {
  PipelineConfig config;
  ActivityLabelSet label_set;
  bool external_probabilities = false;
  std::optional<SoftmaxModel> softmax;
  std::optional<LateFusionModel> forest;  // rdf, classic-ensemble partner or late fusion
  std::optional<KnnModel> knn;

  std::vector<std::vector<double>> predict_proba(const RecordFeatures& features) const;
  std::vector<std::size_t> predict(const RecordFeatures& features) const;
};

TrainedPipeline train_pipeline(const PipelineConfig& config, const ActivityLabelSet& label_set,
                               const RecordFeatures& training);

struct FinetuneOptions {
  std::size_t iterations = 1000;
  std::optional<double> learning_rate;  // default: the base SGD rate
};

// Adapts a trained pipeline to `extended` (base labels first, then new ones)
// using `day` labelled in extended indices. The pixel model continues SGD with
// rows of classes absent from `day` frozen; forests and kNN are refit on `day`.
TrainedPipeline finetune_pipeline(const TrainedPipeline& base, const ActivityLabelSet& extended,
                                  const RecordFeatures& day, const FinetuneOptions& options);

void save_pipeline(const TrainedPipeline& pipeline, const std::filesystem::path& directory);
TrainedPipeline load_pipeline(const std::filesystem::path& directory);

struct ExperimentConfig {
  std::filesystem::path manifest;
  std::filesystem::path image_root;         // empty: the manifest's directory
  std::filesystem::path split_file;         // empty: stratified split from the seed
  std::filesystem::path probability_table;  // empty: train the pixel model
  std::filesystem::path output_dir;         // empty: write nothing
  SplitRatios ratios;
  SplitMode split_mode = SplitMode::per_class;
  std::optional<std::uint64_t> seed;
  PipelineConfig pipeline;

  // Requires a seed; propagates it to the forest and SGD.
  void resolve();
};

// "key=value" lines; '#' starts a comment. Unknown keys are errors.
ExperimentConfig parse_experiment_config(std::string_view text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
void apply_experiment_setting(ExperimentConfig& config, std::string_view key, std::string_view value);
std::string format_experiment_config(const ExperimentConfig& config);

struct ExperimentResult {
  SplitAssignment split;
  TrainedPipeline pipeline;
  MetricsReport report;
  ConfusionMatrix confusion;
  std::vector<std::string> test_ids;
  std::vector<std::vector<double>> test_probabilities;
};

// Classes without training records are reported as N/A.
ExperimentResult run_experiment(const Dataset& dataset, const ImageSource& images,
                                const PipelineConfig& config, const SplitAssignment& split,
                                const ProbabilityTable* probabilities = nullptr);

// Loads inputs from disk and, when output_dir is set, writes metrics.csv,
// confusion.csv, predictions.tsv, config.resolved, run_manifest.txt and model/.
ExperimentResult run_experiment(ExperimentConfig config);

// Fingerprint of a dataset's manifest contents.
std::uint64_t dataset_fingerprint(const Dataset& dataset);

}  // namespace lifelog
