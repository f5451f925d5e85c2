#include "lifelog/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <mutex>
#include <set>
#include <thread>

#include "lifelog/error.hpp"
#include "lifelog/rng.hpp"
#include "lifelog/text_io.hpp"

namespace lifelog {

namespace {

std::size_t worker_count(std::size_t requested, std::size_t jobs) {
  std::size_t n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  return std::max<std::size_t>(1, std::min(n, jobs));
}

// Runs fn(i) for i in [0, n) on a pool of workers.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
  const std::size_t workers = worker_count(threads, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next = n;
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

std::uint64_t parse_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ValidationError("setting " + std::string(key) + ": expected a non-negative integer, got '" +
                          std::string(v) + "'");
  return out;
}

double parse_real(std::string_view key, std::string_view v) {
  double out = 0;
  if (!parse_double(v, out))
    throw ValidationError("setting " + std::string(key) + ": expected a number, got '" + std::string(v) + "'");
  return out;
}

bool parse_flag(std::string_view key, std::string_view v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ValidationError("setting " + std::string(key) + ": expected 0 or 1, got '" + std::string(v) + "'");
}

std::string_view split_mode_name(SplitMode m) { return m == SplitMode::per_class ? "per-class" : "chunked"; }

SplitMode parse_split_mode(std::string_view v) {
  if (v == "per-class") return SplitMode::per_class;
  if (v == "chunked") return SplitMode::chunked;
  throw ValidationError("unknown split mode '" + std::string(v) + "' (per-class, chunked)");
}

std::string blocks_text(const FusionBlocks& b) {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  add(b.probabilities, "probabilities");
  add(b.metadata, "metadata");
  add(b.histogram, "histogram");
  return out.empty() ? "none" : out;
}

FusionBlocks parse_blocks(std::string_view v) {
  FusionBlocks b{false, false, false};
  if (v == "none") return b;
  for (auto part : split(v, ',')) {
    switch (parse_feature_block(trim(part))) {
      case FeatureBlock::probabilities: b.probabilities = true; break;
      case FeatureBlock::metadata: b.metadata = true; break;
      case FeatureBlock::histogram: b.histogram = true; break;
    }
  }
  return b;
}

struct KeyValue {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

std::vector<KeyValue> parse_key_values(std::string_view text, std::string_view source) {
  std::vector<KeyValue> out;
  std::size_t line_no = 0;
  for (auto raw : split(text, '\n')) {
    ++line_no;
    std::string line = trim(raw);
    if (const auto hash = line.find('#'); hash != std::string::npos) line = trim(line.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError(std::string(source) + ":" + std::to_string(line_no) + ": expected key=value");
    out.push_back({trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no});
  }
  return out;
}

ProbabilityTable table_from(const ActivityLabelSet& labels, const std::vector<std::string>& ids,
                            const std::vector<std::vector<double>>& rows) {
  ProbabilityTable t;
  t.label_set = labels;
  for (std::size_t i = 0; i < ids.size(); ++i) t.rows.emplace(ids[i], rows[i]);
  return t;
}

FusionTrainingSet fusion_set(const RecordFeatures& f) {
  FusionTrainingSet s;
  s.ids = f.ids;
  s.labels = f.label_indices();
  s.metadata = f.metadata;
  s.histograms = f.histograms;
  return s;
}

std::vector<FeatureVector> tabular_rows(const RecordFeatures& f,
                                        const std::vector<std::vector<double>>* probs,
                                        const FusionBlocks& blocks) {
  std::vector<FeatureVector> rows;
  rows.reserve(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    std::span<const double> p;
    if (blocks.probabilities) p = (*probs)[i];
    rows.push_back(assemble_features(p, blocks.metadata ? &f.metadata[i] : nullptr,
                                     blocks.histogram ? &f.histograms[i] : nullptr)
                       .values);
  }
  return rows;
}

std::vector<std::vector<double>> softmax_outputs(const SoftmaxModel& model, const PixelSamples& px,
                                                 std::size_t threads) {
  std::vector<std::vector<double>> out(px.size());
  parallel_for(px.size(), threads, [&](std::size_t i) { out[i] = softmax_predict_proba(model, px.row(i)); });
  return out;
}

PixelSamples pixel_subset(const PixelSamples& px, std::span<const std::size_t> rows) {
  PixelSamples out;
  out.dims = px.dims;
  out.values.reserve(rows.size() * px.dims);
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) out.add(px.row(r), px.labels[r]);
  return out;
}

// Pixel-model probabilities for the training rows that the fusion forest sees.
std::vector<std::vector<double>> fusion_training_probabilities(const PipelineConfig& config,
                                                               std::size_t num_classes,
                                                               const RecordFeatures& training,
                                                               const SoftmaxModel& full_model) {
  if (config.probability_source == ProbabilitySource::same_split)
    return softmax_outputs(full_model, training.pixels, config.threads);

  const std::size_t n = training.size();
  const std::size_t k = config.folds;
  if (k < 2 || k > n) throw ValidationError("out-of-fold probabilities need 2 <= folds <= training rows");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = make_rng({config.sgd.seed, 0xf01du});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<double>> out(n);
  for (std::size_t fold = 0; fold < k; ++fold) {
    std::vector<std::size_t> fit_rows, held_rows;
    for (std::size_t pos = 0; pos < n; ++pos) (pos % k == fold ? held_rows : fit_rows).push_back(order[pos]);
    SgdConfig sgd = config.sgd;
    sgd.seed = config.sgd.seed + 1 + fold;
    const auto model = train_softmax(pixel_subset(training.pixels, fit_rows), num_classes,
                                     config.pixel_size, sgd).model;
    for (std::size_t r : held_rows) out[r] = softmax_predict_proba(model, training.pixels.row(r));
  }
  return out;
}

}  // namespace

// --- features ---------------------------------------------------------------

RgbImage DirectoryImageSource::load(const ImageRecord& record) const { return read_image(root_ / record.path); }

RecordFeatures RecordFeatures::subset(std::span<const std::size_t> rows) const {
  RecordFeatures out;
  out.pixels.dims = pixels.dims;
  for (std::size_t r : rows) {
    if (r >= size()) throw ValidationError("feature subset row out of range");
    out.ids.push_back(ids[r]);
    out.timestamps.push_back(timestamps[r]);
    out.labels.push_back(labels[r]);
    out.metadata.push_back(metadata[r]);
    out.histograms.push_back(histograms[r]);
    if (pixels.dims) out.pixels.add(pixels.row(r), pixels.labels[r]);
    if (!probabilities.empty()) out.probabilities.push_back(probabilities[r]);
  }
  return out;
}

std::vector<std::size_t> RecordFeatures::label_indices() const {
  std::vector<std::size_t> out;
  out.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) {
    if (!labels[i]) throw ValidationError("record " + ids[i] + " has no label");
    out.push_back(*labels[i]);
  }
  return out;
}

RecordFeatures extract_features(const Dataset& dataset, std::span<const std::size_t> record_indices,
                                const ImageSource& images, const FeatureOptions& options) {
  const std::size_t n = record_indices.size();
  RecordFeatures out;
  out.ids.resize(n);
  out.timestamps.resize(n);
  out.labels.resize(n);
  out.metadata.resize(n);
  out.histograms.resize(n);
  const int s = options.pixel_size;
  if (s < 0) throw ValidationError("pixel size must be >= 0");
  if (s > 0) {
    out.pixels.dims = 3 * static_cast<std::size_t>(s) * s;
    out.pixels.values.resize(n * out.pixels.dims);
    out.pixels.labels.resize(n);
  }
  parallel_for(n, options.threads, [&](std::size_t i) {
    const ImageRecord& r = dataset.records.at(record_indices[i]);
    out.ids[i] = r.id;
    out.timestamps[i] = r.timestamp;
    if (r.label) out.labels[i] = dataset.label_set.index_of(*r.label);
    out.metadata[i] = extract_metadata(r.timestamp);
    const RgbImage img = images.load(r);
    out.histograms[i] = color_histogram(img, options.histogram_bins);
    if (s > 0) {
      const auto x = pixel_input(img, s);
      std::copy(x.begin(), x.end(), out.pixels.values.begin() + i * out.pixels.dims);
      out.pixels.labels[i] = out.labels[i].value_or(0);
    }
  });
  return out;
}

void attach_probabilities(RecordFeatures& features, const ProbabilityTable& table) {
  std::vector<std::vector<double>> rows;
  std::vector<std::string> missing;
  rows.reserve(features.size());
  for (const auto& id : features.ids) {
    const auto* p = table.find(id);
    if (!p) {
      missing.push_back(id);
      rows.emplace_back();
    } else {
      rows.push_back(*p);
    }
  }
  if (!missing.empty()) {
    std::string msg = "probability table is missing " + std::to_string(missing.size()) + " ids:";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
    if (missing.size() > 20) msg += " ...";
    throw ValidationError(msg);
  }
  features.probabilities = std::move(rows);
}

// --- configuration ------------------------------------------------------------

std::string_view to_string(ClassifierKind kind) {
  switch (kind) {
    case ClassifierKind::knn: return "knn";
    case ClassifierKind::rdf: return "rdf";
    case ClassifierKind::softmax: return "softmax";
    case ClassifierKind::classic_ensemble: return "classic-ensemble";
    case ClassifierKind::late_fusion: return "late-fusion";
  }
  return "?";
}

ClassifierKind parse_classifier_kind(std::string_view text) {
  for (auto k : {ClassifierKind::knn, ClassifierKind::rdf, ClassifierKind::softmax,
                 ClassifierKind::classic_ensemble, ClassifierKind::late_fusion}) {
    if (text == to_string(k)) return k;
  }
  throw ValidationError("unknown classifier '" + std::string(text) +
                        "' (knn, rdf, softmax, classic-ensemble, late-fusion)");
}

std::string_view to_string(ProbabilitySource source) {
  return source == ProbabilitySource::same_split ? "same-split" : "out-of-fold";
}

ProbabilitySource parse_probability_source(std::string_view text) {
  if (text == "same-split") return ProbabilitySource::same_split;
  if (text == "out-of-fold") return ProbabilitySource::out_of_fold;
  throw ValidationError("unknown probability source '" + std::string(text) + "' (same-split, out-of-fold)");
}

bool PipelineConfig::uses_probabilities() const {
  switch (classifier) {
    case ClassifierKind::softmax:
    case ClassifierKind::classic_ensemble: return true;
    default: return blocks.probabilities;
  }
}

FeatureOptions PipelineConfig::feature_options(bool external_probabilities) const {
  FeatureOptions o;
  o.histogram_bins = histogram_bins;
  o.pixel_size = uses_probabilities() && !external_probabilities ? pixel_size : 0;
  o.threads = threads;
  return o;
}

void PipelineConfig::validate() const {
  sgd.validate();
  if (histogram_bins < 1) throw ValidationError("histogram.bins must be >= 1");
  if (pixel_size < 1) throw ValidationError("pixels.size must be >= 1");
  if (knn_k < 1) throw ValidationError("knn.k must be >= 1");
  if (forest.n_trees < 1) throw ValidationError("forest.trees must be >= 1");
  if ((classifier == ClassifierKind::knn || classifier == ClassifierKind::rdf ||
       classifier == ClassifierKind::late_fusion) && !blocks.any())
    throw ValidationError("classifier " + std::string(to_string(classifier)) + " needs at least one feature block");
  if (classifier == ClassifierKind::classic_ensemble && !blocks.metadata && !blocks.histogram)
    throw ValidationError("classic-ensemble needs the metadata or histogram block for its forest");
  if (probability_source == ProbabilitySource::out_of_fold && folds < 2)
    throw ValidationError("fusion.folds must be >= 2");
}

std::string format_pipeline_config(const PipelineConfig& c) {
  std::string o;
  auto kv = [&](std::string_view k, std::string_view v) { o.append(k).append("=").append(v).append("\n"); };
  auto num = [](auto v) { return std::to_string(v); };
  kv("classifier", to_string(c.classifier));
  kv("blocks", blocks_text(c.blocks));
  kv("knn.k", num(c.knn_k));
  kv("forest.trees", num(c.forest.n_trees));
  kv("forest.features_per_split", num(c.forest.features_per_split));
  kv("forest.bootstrap", c.forest.bootstrap ? "1" : "0");
  kv("forest.min_leaf", num(c.forest.min_leaf));
  kv("forest.max_depth", num(c.forest.max_depth));
  kv("forest.seed", num(c.forest.seed));
  kv("sgd.learning_rate", format_double(c.sgd.learning_rate));
  kv("sgd.momentum", format_double(c.sgd.momentum));
  kv("sgd.weight_decay", format_double(c.sgd.weight_decay));
  kv("sgd.iterations", num(c.sgd.iterations));
  kv("sgd.batch_size", num(c.sgd.batch_size));
  kv("sgd.monotone", c.sgd.monotone ? "1" : "0");
  kv("sgd.seed", num(c.sgd.seed));
  kv("histogram.bins", num(c.histogram_bins));
  kv("pixels.size", num(c.pixel_size));
  kv("fusion.probabilities", to_string(c.probability_source));
  kv("fusion.folds", num(c.folds));
  return o;
}

bool apply_pipeline_setting(PipelineConfig& c, std::string_view key, std::string_view v) {
  if (key == "classifier") c.classifier = parse_classifier_kind(v);
  else if (key == "blocks") c.blocks = parse_blocks(v);
  else if (key == "knn.k") c.knn_k = parse_u64(key, v);
  else if (key == "forest.trees") c.forest.n_trees = parse_u64(key, v);
  else if (key == "forest.features_per_split") c.forest.features_per_split = parse_u64(key, v);
  else if (key == "forest.bootstrap") c.forest.bootstrap = parse_flag(key, v);
  else if (key == "forest.min_leaf") c.forest.min_leaf = parse_u64(key, v);
  else if (key == "forest.max_depth") c.forest.max_depth = parse_u64(key, v);
  else if (key == "forest.seed") c.forest.seed = parse_u64(key, v);
  else if (key == "forest.threads") c.forest.threads = parse_u64(key, v);
  else if (key == "sgd.learning_rate") c.sgd.learning_rate = parse_real(key, v);
  else if (key == "sgd.momentum") c.sgd.momentum = parse_real(key, v);
  else if (key == "sgd.weight_decay") c.sgd.weight_decay = parse_real(key, v);
  else if (key == "sgd.iterations") c.sgd.iterations = parse_u64(key, v);
  else if (key == "sgd.batch_size") c.sgd.batch_size = parse_u64(key, v);
  else if (key == "sgd.monotone") c.sgd.monotone = parse_flag(key, v);
  else if (key == "sgd.seed") c.sgd.seed = parse_u64(key, v);
  else if (key == "histogram.bins") c.histogram_bins = static_cast<int>(parse_u64(key, v));
  else if (key == "pixels.size") c.pixel_size = static_cast<int>(parse_u64(key, v));
  else if (key == "fusion.probabilities") c.probability_source = parse_probability_source(v);
  else if (key == "fusion.folds") c.folds = parse_u64(key, v);
  else if (key == "threads") {
    c.threads = parse_u64(key, v);
    c.forest.threads = c.threads;
  } else return false;
  return true;
}

// --- training and prediction ------------------------------------------------

TrainedPipeline train_pipeline(const PipelineConfig& config, const ActivityLabelSet& label_set,
                               const RecordFeatures& training) {
  config.validate();
  if (training.size() == 0) throw ValidationError("training set is empty");
  const auto labels = training.label_indices();
  const std::size_t k = label_set.size();

  TrainedPipeline tp;
  tp.config = config;
  tp.label_set = label_set;

  std::vector<std::vector<double>> probs;
  if (config.uses_probabilities()) {
    if (!training.probabilities.empty()) {
      tp.external_probabilities = true;
      probs = training.probabilities;
    } else {
      if (training.pixels.dims == 0) throw ValidationError("pixel inputs were not extracted");
      tp.softmax = train_softmax(training.pixels, k, config.pixel_size, config.sgd).model;
      const bool fusion_needs_probs = config.classifier != ClassifierKind::softmax &&
                                      config.classifier != ClassifierKind::classic_ensemble;
      if (fusion_needs_probs) probs = fusion_training_probabilities(config, k, training, *tp.softmax);
    }
  }

  switch (config.classifier) {
    case ClassifierKind::softmax: break;
    case ClassifierKind::classic_ensemble: {
      FusionBlocks b = config.blocks;
      b.probabilities = false;
      tp.forest = late_fusion_fit(label_set, nullptr, fusion_set(training), b, config.forest);
      break;
    }
    case ClassifierKind::rdf:
    case ClassifierKind::late_fusion: {
      ProbabilityTable table;
      if (config.blocks.probabilities) table = table_from(label_set, training.ids, probs);
      tp.forest = late_fusion_fit(label_set, config.blocks.probabilities ? &table : nullptr,
                                  fusion_set(training), config.blocks, config.forest);
      break;
    }
    case ClassifierKind::knn: {
      const auto rows = tabular_rows(training, &probs, config.blocks);
      tp.knn = knn_fit(rows, labels, k, std::min(config.knn_k, rows.size()));
      break;
    }
  }
  return tp;
}

std::vector<std::vector<double>> TrainedPipeline::predict_proba(const RecordFeatures& f) const {
  std::vector<std::vector<double>> probs;
  if (config.uses_probabilities()) {
    if (external_probabilities) {
      if (f.probabilities.size() != f.size())
        throw ValidationError("pipeline was trained on a probability table; attach one before predicting");
      probs = f.probabilities;
    } else {
      if (!softmax) throw ValidationError("pipeline has no pixel model");
      if (f.pixels.dims != softmax->dims()) throw ValidationError("pixel inputs were not extracted");
      probs = softmax_outputs(*softmax, f.pixels, config.threads);
    }
  }
  const std::size_t n = f.size();
  std::vector<std::vector<double>> out(n);
  switch (config.classifier) {
    case ClassifierKind::softmax: return probs;
    case ClassifierKind::classic_ensemble:
      parallel_for(n, config.threads, [&](std::size_t i) {
        const auto b = forest->blocks();
        out[i] = classic_combine(probs[i], late_fusion_predict(*forest, {}, b.metadata ? &f.metadata[i] : nullptr,
                                                               b.histogram ? &f.histograms[i] : nullptr));
      });
      return out;
    case ClassifierKind::rdf:
    case ClassifierKind::late_fusion:
      parallel_for(n, config.threads, [&](std::size_t i) {
        const auto b = forest->blocks();
        std::span<const double> p;
        if (b.probabilities) p = probs[i];
        out[i] = late_fusion_predict(*forest, p, b.metadata ? &f.metadata[i] : nullptr,
                                     b.histogram ? &f.histograms[i] : nullptr);
      });
      return out;
    case ClassifierKind::knn: {
      const auto rows = tabular_rows(f, &probs, config.blocks);
      parallel_for(n, config.threads, [&](std::size_t i) { out[i] = knn_predict_proba(*knn, rows[i]); });
      return out;
    }
  }
  return out;
}

std::vector<std::size_t> TrainedPipeline::predict(const RecordFeatures& f) const {
  std::vector<std::size_t> out;
  for (const auto& p : predict_proba(f)) out.push_back(argmax(p));
  return out;
}

TrainedPipeline finetune_pipeline(const TrainedPipeline& base, const ActivityLabelSet& extended,
                                  const RecordFeatures& day, const FinetuneOptions& options) {
  const std::size_t kb = base.label_set.size();
  if (extended.size() < kb) throw ValidationError("extended label set is smaller than the base set");
  for (std::size_t c = 0; c < kb; ++c) {
    if (extended.name(c) != base.label_set.name(c))
      throw ValidationError("extended label set must start with the base labels in order");
  }
  if (base.external_probabilities)
    throw ValidationError("a pipeline trained on an external probability table cannot be fine-tuned");
  if (day.size() == 0) throw ValidationError("fine-tuning day is empty");
  const auto labels = day.label_indices();

  TrainedPipeline tp;
  tp.config = base.config;
  tp.label_set = extended;
  const std::size_t k = extended.size();

  std::vector<std::vector<double>> probs;
  if (base.softmax) {
    std::vector<bool> trainable(k, false);
    for (auto l : labels) trainable.at(l) = true;
    SgdConfig sgd = base.config.sgd;
    sgd.iterations = options.iterations;
    if (options.learning_rate) sgd.learning_rate = *options.learning_rate;
    tp.softmax = continue_softmax(extend_classes(*base.softmax, k), day.pixels, sgd, trainable).model;
    const auto& c = tp.config.classifier;
    if (c != ClassifierKind::softmax && c != ClassifierKind::classic_ensemble)
      probs = softmax_outputs(*tp.softmax, day.pixels, tp.config.threads);
  }

  if (base.forest) {
    const FusionBlocks b = base.forest->blocks();
    ProbabilityTable table;
    if (b.probabilities) table = table_from(extended, day.ids, probs);
    tp.forest = late_fusion_fit(extended, b.probabilities ? &table : nullptr, fusion_set(day), b,
                                base.config.forest);
  }
  if (base.knn) {
    const auto rows = tabular_rows(day, &probs, base.config.blocks);
    tp.knn = knn_fit(rows, labels, k, std::min(base.config.knn_k, rows.size()));
  }
  return tp;
}

// --- persistence ----------------------------------------------------------------

void save_pipeline(const TrainedPipeline& p, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string cfg = "format=lifelog-pipeline 1\n";
  cfg += "labels=" + join(p.label_set.names(), ',') + "\n";
  cfg += std::string("external_probabilities=") + (p.external_probabilities ? "1" : "0") + "\n";
  cfg += format_pipeline_config(p.config);
  write_file_atomic(dir / "pipeline.cfg", cfg);
  if (p.softmax) save_softmax(*p.softmax, dir / "softmax.model");
  if (p.forest) save_late_fusion(*p.forest, dir / "forest.model");
  if (p.knn) write_file_atomic(dir / "knn.model", format_knn(*p.knn));
}

TrainedPipeline load_pipeline(const std::filesystem::path& dir) {
  const auto cfg_path = dir / "pipeline.cfg";
  if (!std::filesystem::exists(cfg_path)) throw ValidationError("not a model bundle: " + dir.string());
  TrainedPipeline p;
  bool format_ok = false;
  for (const auto& kv : parse_key_values(read_file(cfg_path), cfg_path.string())) {
    if (kv.key == "format") {
      format_ok = kv.value == "lifelog-pipeline 1";
    } else if (kv.key == "labels") {
      std::vector<std::string> names;
      for (auto n : split(kv.value, ',')) names.emplace_back(n);
      p.label_set = ActivityLabelSet(std::move(names));
    } else if (kv.key == "external_probabilities") {
      p.external_probabilities = parse_flag(kv.key, kv.value);
    } else if (!apply_pipeline_setting(p.config, kv.key, kv.value)) {
      throw ValidationError(cfg_path.string() + ":" + std::to_string(kv.line) + ": unknown key " + kv.key);
    }
  }
  if (!format_ok) throw ValidationError("unsupported model bundle format in " + cfg_path.string());
  if (std::filesystem::exists(dir / "softmax.model")) p.softmax = load_softmax(dir / "softmax.model");
  if (std::filesystem::exists(dir / "forest.model")) p.forest = load_late_fusion(dir / "forest.model");
  if (std::filesystem::exists(dir / "knn.model")) p.knn = parse_knn(read_file(dir / "knn.model"));

  const auto k = p.config.classifier;
  const bool needs_forest = k == ClassifierKind::rdf || k == ClassifierKind::late_fusion ||
                            k == ClassifierKind::classic_ensemble;
  if (needs_forest && !p.forest) throw ValidationError("model bundle is missing forest.model");
  if (k == ClassifierKind::knn && !p.knn) throw ValidationError("model bundle is missing knn.model");
  if (p.config.uses_probabilities() && !p.external_probabilities && !p.softmax)
    throw ValidationError("model bundle is missing softmax.model");
  if (p.forest && p.forest->label_set != p.label_set)
    throw ValidationError("forest.model label set differs from the bundle's");
  if (p.softmax && p.softmax->num_classes != p.label_set.size())
    throw ValidationError("softmax.model class count differs from the bundle's label set");
  return p;
}

// --- experiments ----------------------------------------------------------------

void ExperimentConfig::resolve() {
  if (!seed) throw ValidationError("a seed is required (seed=N or --seed N)");
  pipeline.forest.seed = *seed;
  pipeline.sgd.seed = *seed;
  ratios.validate();
  pipeline.validate();
}

void apply_experiment_setting(ExperimentConfig& c, std::string_view key, std::string_view v) {
  if (key == "manifest") c.manifest = std::string(v);
  else if (key == "image_root") c.image_root = std::string(v);
  else if (key == "split_file") c.split_file = std::string(v);
  else if (key == "probability_table") c.probability_table = std::string(v);
  else if (key == "output_dir") c.output_dir = std::string(v);
  else if (key == "split.mode") c.split_mode = parse_split_mode(v);
  else if (key == "seed") c.seed = parse_u64(key, v);
  else if (key == "split.ratios") {
    const auto parts = split(v, ',');
    if (parts.size() != 3) throw ValidationError("split.ratios needs three comma-separated values");
    c.ratios = {parse_real(key, parts[0]), parse_real(key, parts[1]), parse_real(key, parts[2])};
    c.ratios.validate();
  } else if (!apply_pipeline_setting(c.pipeline, key, v)) {
    throw ValidationError("unknown setting '" + std::string(key) + "'");
  }
}

ExperimentConfig parse_experiment_config(std::string_view text) {
  ExperimentConfig c;
  for (const auto& kv : parse_key_values(text, "config")) {
    try {
      apply_experiment_setting(c, kv.key, kv.value);
    } catch (const ValidationError& e) {
      throw ValidationError("config line " + std::to_string(kv.line) + ": " + e.what());
    }
  }
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(read_file(path));
}

std::string format_experiment_config(const ExperimentConfig& c) {
  std::string o;
  o += "manifest=" + c.manifest.string() + "\n";
  o += "image_root=" + c.image_root.string() + "\n";
  o += "split_file=" + c.split_file.string() + "\n";
  o += "probability_table=" + c.probability_table.string() + "\n";
  o += "output_dir=" + c.output_dir.string() + "\n";
  o += "split.ratios=" + format_double(c.ratios.train) + "," + format_double(c.ratios.validation) + "," +
       format_double(c.ratios.test) + "\n";
  o += "split.mode=" + std::string(split_mode_name(c.split_mode)) + "\n";
  if (c.seed) o += "seed=" + std::to_string(*c.seed) + "\n";
  o += format_pipeline_config(c.pipeline);
  return o;
}

std::uint64_t dataset_fingerprint(const Dataset& dataset) { return stable_hash(format_manifest(dataset)); }

ExperimentResult run_experiment(const Dataset& dataset, const ImageSource& images,
                                const PipelineConfig& config, const SplitAssignment& split,
                                const ProbabilityTable* probabilities) {
  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const auto& r = dataset.records[i];
    if (!r.usable()) continue;
    const auto it = split.partition_of.find(r.id);
    if (it == split.partition_of.end()) continue;
    if (it->second == Partition::train) train_idx.push_back(i);
    if (it->second == Partition::test) test_idx.push_back(i);
  }
  if (train_idx.empty()) throw ValidationError("split has no usable training records");
  if (test_idx.empty()) throw ValidationError("split has no usable test records");

  const auto opts = config.feature_options(probabilities != nullptr);
  auto train = extract_features(dataset, train_idx, images, opts);
  auto test = extract_features(dataset, test_idx, images, opts);
  if (probabilities && config.uses_probabilities()) {
    attach_probabilities(train, *probabilities);
    attach_probabilities(test, *probabilities);
  }

  ExperimentResult res;
  res.split = split;
  res.pipeline = train_pipeline(config, dataset.label_set, train);
  res.test_ids = test.ids;
  res.test_probabilities = res.pipeline.predict_proba(test);

  std::vector<std::size_t> predicted;
  for (const auto& p : res.test_probabilities) predicted.push_back(argmax(p));
  const auto truth = test.label_indices();
  std::vector<bool> unavailable(dataset.label_set.size(), true);
  for (auto l : train.label_indices()) unavailable[l] = false;
  res.confusion = confusion(predicted, truth, dataset.label_set.size());
  res.report = metrics_from_confusion(res.confusion, dataset.label_set, unavailable);
  return res;
}

ExperimentResult run_experiment(ExperimentConfig config) {
  config.resolve();
  if (config.manifest.empty()) throw ValidationError("manifest is required");
  const Dataset dataset = load_manifest(config.manifest);
  const auto root = config.image_root.empty() ? config.manifest.parent_path() : config.image_root;
  DirectoryImageSource images(root);

  SplitAssignment split = config.split_file.empty()
                              ? stratified_split(dataset, config.ratios, *config.seed, config.split_mode)
                              : load_split(config.split_file);
  std::optional<ProbabilityTable> table;
  if (!config.probability_table.empty()) {
    std::set<std::string> known;
    for (const auto& r : dataset.records) known.insert(r.id);
    table = load_probability_table(config.probability_table, dataset.label_set, &known);
  }
  auto res = run_experiment(dataset, images, config.pipeline, split, table ? &*table : nullptr);

  if (!config.output_dir.empty()) {
    const auto& out = config.output_dir;
    std::filesystem::create_directories(out);
    const std::string resolved = format_experiment_config(config);
    write_file_atomic(out / "config.resolved", resolved);
    write_file_atomic(out / "metrics.csv", format_metrics_csv(res.report));
    write_file_atomic(out / "confusion.csv", format_confusion_csv(res.confusion, dataset.label_set));
    if (config.split_file.empty()) save_split(split, out / "split.tsv");
    ProbabilityTable preds = table_from(dataset.label_set, res.test_ids, res.test_probabilities);
    save_probability_table(preds, out / "predictions.tsv");
    save_pipeline(res.pipeline, out / "model");
    std::string manifest;
    // Where the outputs land does not change the run, so it stays out of the hash.
    ExperimentConfig hashed = config;
    hashed.output_dir.clear();
    manifest += "config_hash=" + std::to_string(stable_hash(format_experiment_config(hashed))) + "\n";
    manifest += "seed=" + std::to_string(*config.seed) + "\n";
    manifest += "dataset_fingerprint=" + std::to_string(dataset_fingerprint(dataset)) + "\n";
    manifest += "train=" + std::to_string(split.count(Partition::train)) + "\n";
    manifest += "validation=" + std::to_string(split.count(Partition::validation)) + "\n";
    manifest += "test=" + std::to_string(split.count(Partition::test)) + "\n";
    manifest += "total_accuracy=" + format_double(res.report.total_accuracy) + "\n";
    manifest += "avg_class_accuracy=" + format_double(res.report.avg_class_accuracy) + "\n";
    write_file_atomic(out / "run_manifest.txt", manifest);
  }
  return res;
}

}  // namespace lifelog
