// lifelog: dataset, training and annotation commands.
//
// Exit codes: 0 success, 1 invalid input, 2 runtime failure.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <set>

#include <CLI11.hpp>

#include "lifelog/annotation.hpp"
#include "lifelog/error.hpp"
#include "lifelog/experiments.hpp"
#include "lifelog/text_io.hpp"

using namespace lifelog;
namespace fs = std::filesystem;

namespace {

std::vector<std::pair<std::string, std::string>> parse_settings(const std::vector<std::string>& items) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& s : items) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + s + "'");
    out.emplace_back(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
  return out;
}

SplitRatios parse_ratios(const std::string& text) {
  const auto parts = split(text, ',');
  if (parts.size() != 3) throw ValidationError("--ratios needs three comma-separated values");
  double v[3];
  for (int i = 0; i < 3; ++i)
    if (!parse_double(parts[i], v[i])) throw ValidationError("bad ratio '" + std::string(parts[i]) + "'");
  SplitRatios r{v[0], v[1], v[2]};
  r.validate();
  return r;
}

SynthConfig preset(const std::string& name, std::uint64_t seed) {
  if (name == "standard") return standard_config(seed);
  if (name == "metadata-only") return metadata_only_config(seed);
  if (name == "learning-curve") return learning_curve_config(seed);
  if (name == "volunteer") return volunteer_config(seed);
  throw ValidationError("unknown preset '" + name + "'");
}

// Loads a config file (optional), then applies --set overrides and --seed.
ExperimentConfig experiment_config(const std::string& path, const std::vector<std::string>& sets,
                                   std::optional<std::uint64_t> seed) {
  ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : load_experiment_config(path);
  for (const auto& [k, v] : parse_settings(sets)) apply_experiment_setting(cfg, k, v);
  if (seed) cfg.seed = seed;
  return cfg;
}

void print_report(const MetricsReport& r) {
  std::printf("total accuracy %.2f  avg class accuracy %.2f\n", r.total_accuracy, r.avg_class_accuracy);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lifelog activity recognition: datasets, classifiers, fusion and annotation"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic lifelog (manifest + PPM images)");
  std::string synth_preset = "standard", synth_out;
  std::uint64_t synth_seed = 0;
  int synth_days = 0, synth_interval = 0, synth_size = 0;
  synth->add_option("--preset", synth_preset, "standard | metadata-only | learning-curve | volunteer");
  synth->add_option("--seed", synth_seed, "Generator seed")->required();
  synth->add_option("--days", synth_days, "Number of days (default: preset)");
  synth->add_option("--interval", synth_interval, "Capture interval in minutes (default: preset)");
  synth->add_option("--image-size", synth_size, "Image side in pixels (default: preset)");
  synth->add_option("--out", synth_out, "Output directory")->required();

  // stats
  auto* stats = app.add_subcommand("stats", "Class distribution and majority-class baseline");
  std::string stats_manifest;
  stats->add_option("--manifest", stats_manifest)->required();

  // split
  auto* split_cmd = app.add_subcommand("split", "Stratified train/validation/test split");
  std::string split_manifest, split_out, split_ratios = "0.75,0.05,0.2", split_mode = "per-class";
  std::uint64_t split_seed = 0;
  split_cmd->add_option("--manifest", split_manifest)->required();
  split_cmd->add_option("--seed", split_seed)->required();
  split_cmd->add_option("--ratios", split_ratios, "train,validation,test");
  split_cmd->add_option("--mode", split_mode, "per-class | chunked");
  split_cmd->add_option("--out", split_out)->required();

  // features
  auto* features = app.add_subcommand("features", "Extract metadata and color-histogram features to a cache");
  std::string feat_manifest, feat_out, feat_blocks = "metadata,histogram";
  int feat_bins = 10;
  features->add_option("--manifest", feat_manifest)->required();
  features->add_option("--blocks", feat_blocks, "metadata and/or histogram");
  features->add_option("--bins", feat_bins, "Histogram bins per channel");
  features->add_option("--out", feat_out)->required();

  // train
  auto* train = app.add_subcommand("train", "Train a pipeline, evaluate it on the test split, save everything");
  std::string train_config;
  std::vector<std::string> train_sets;
  std::optional<std::uint64_t> train_seed;
  train->add_option("--config", train_config, "key=value experiment config");
  train->add_option("--set", train_sets, "Override a config key (key=value), repeatable");
  train->add_option("--seed", train_seed, "Master seed (required here or in the config)");

  // predict
  auto* predict = app.add_subcommand("predict", "Score records with a saved model bundle");
  std::string pred_model, pred_manifest, pred_out, pred_table, pred_image_root;
  predict->add_option("--model", pred_model, "Model bundle directory")->required();
  predict->add_option("--manifest", pred_manifest)->required();
  predict->add_option("--image-root", pred_image_root, "Default: the manifest's directory");
  predict->add_option("--probabilities", pred_table, "Pixel probability table, for bundles trained on one");
  predict->add_option("--out", pred_out, "Probability table output")->required();

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Score a prediction table against manifest labels");
  std::string eval_pred, eval_manifest, eval_out;
  eval->add_option("--predictions", eval_pred)->required();
  eval->add_option("--manifest", eval_manifest)->required();
  eval->add_option("--out", eval_out, "Directory for metrics.csv and confusion.csv");

  // curve
  auto* curve = app.add_subcommand("curve", "Learning curve over training prefixes in weeks");
  std::string curve_config, curve_weeks = "2,4,6,8", curve_out;
  std::vector<std::string> curve_sets;
  std::optional<std::uint64_t> curve_seed;
  curve->add_option("--config", curve_config);
  curve->add_option("--set", curve_sets);
  curve->add_option("--seed", curve_seed);
  curve->add_option("--weeks", curve_weeks, "Comma-separated prefixes");
  curve->add_option("--out", curve_out, "CSV output");

  // finetune
  auto* finetune = app.add_subcommand("finetune", "Fine-tune a model on one day of a new user, evaluate on the next");
  std::string ft_model, ft_manifest, ft_out, ft_day1, ft_day2, ft_image_root;
  std::optional<std::uint64_t> ft_seed;
  std::size_t ft_iterations = 1000;
  finetune->add_option("--model", ft_model)->required();
  finetune->add_option("--manifest", ft_manifest, "New user's manifest")->required();
  finetune->add_option("--image-root", ft_image_root);
  finetune->add_option("--day1", ft_day1, "Fine-tuning date (default: first day)");
  finetune->add_option("--day2", ft_day2, "Evaluation date (default: second day)");
  finetune->add_option("--iterations", ft_iterations, "SGD iterations for the pixel model");
  finetune->add_option("--seed", ft_seed)->required();
  finetune->add_option("--out", ft_out, "Directory for before/after report and the tuned bundle");

  // timeline
  auto* timeline = app.add_subcommand("timeline", "Daily activity timeline from a model bundle");
  std::string tl_model, tl_manifest, tl_date, tl_out, tl_image_root;
  timeline->add_option("--model", tl_model)->required();
  timeline->add_option("--manifest", tl_manifest)->required();
  timeline->add_option("--image-root", tl_image_root);
  timeline->add_option("--date", tl_date)->required();
  timeline->add_option("--out", tl_out)->required();

  // serve
  auto* serve = app.add_subcommand("serve", "Run the annotation HTTP service");
  std::string sv_manifest, sv_host = "127.0.0.1", sv_image_root;
  int sv_port = 8080;
  serve->add_option("--manifest", sv_manifest)->required();
  serve->add_option("--image-root", sv_image_root);
  serve->add_option("--host", sv_host);
  serve->add_option("--port", sv_port);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  auto root_of = [](const std::string& manifest, const std::string& override_root) {
    return override_root.empty() ? fs::path(manifest).parent_path() : fs::path(override_root);
  };

  try {
    if (*synth) {
      SynthConfig cfg = preset(synth_preset, synth_seed);
      if (synth_days) cfg.days = synth_days;
      if (synth_interval) cfg.interval_minutes = synth_interval;
      if (synth_size) cfg.image_size = synth_size;
      const auto lifelog = generate_lifelog(cfg);
      write_lifelog(lifelog, synth_out);
      std::printf("wrote %zu records to %s\n", lifelog.dataset.records.size(), synth_out.c_str());
    } else if (*stats) {
      const Dataset d = load_manifest(stats_manifest);
      std::printf("Class,Count,Percent\n");
      for (const auto& s : class_distribution(d)) std::printf("%s,%zu,%.2f\n", s.label.c_str(), s.count, s.percent);
      std::printf("majority baseline %.4f\n", majority_class_baseline(d));
    } else if (*split_cmd) {
      const Dataset d = load_manifest(split_manifest);
      const SplitMode mode = split_mode == "chunked" ? SplitMode::chunked
                             : split_mode == "per-class"
                                 ? SplitMode::per_class
                                 : throw ValidationError("unknown split mode '" + split_mode + "'");
      const auto s = stratified_split(d, parse_ratios(split_ratios), split_seed, mode);
      save_split(s, split_out);
      std::printf("train %zu  validation %zu  test %zu\n", s.count(Partition::train),
                  s.count(Partition::validation), s.count(Partition::test));
    } else if (*features) {
      const Dataset d = load_manifest(feat_manifest);
      DirectoryImageSource images(fs::path(feat_manifest).parent_path());
      bool meta = false, hist = false;
      for (auto b : split(feat_blocks, ',')) {
        const auto block = parse_feature_block(trim(b));
        if (block == FeatureBlock::metadata) meta = true;
        else if (block == FeatureBlock::histogram) hist = true;
        else throw ValidationError("features: only metadata and histogram blocks are cached");
      }
      std::vector<std::size_t> all(d.records.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      const auto f = extract_features(d, all, images, {feat_bins, 0, 0});
      FeatureCache cache;
      for (std::size_t i = 0; i < f.size(); ++i) {
        auto a = assemble_features({}, meta ? &f.metadata[i] : nullptr, hist ? &f.histograms[i] : nullptr);
        cache.layout = a.layout;
        cache.ids.push_back(f.ids[i]);
        cache.rows.push_back(std::move(a.values));
      }
      save_feature_cache(cache, feat_out);
      std::printf("wrote %zu rows (%s)\n", cache.rows.size(), cache.layout.to_string().c_str());
    } else if (*train) {
      const auto cfg = experiment_config(train_config, train_sets, train_seed);
      const auto res = run_experiment(cfg);
      std::fputs(format_metrics_csv(res.report).c_str(), stdout);
      print_report(res.report);
    } else if (*predict) {
      const auto pipeline = load_pipeline(pred_model);
      const Dataset d = load_manifest(pred_manifest);
      DirectoryImageSource images(root_of(pred_manifest, pred_image_root));
      std::vector<std::size_t> live;
      for (std::size_t i = 0; i < d.records.size(); ++i)
        if (!d.records[i].deleted) live.push_back(i);
      auto f = extract_features(d, live, images, pipeline.config.feature_options(pipeline.external_probabilities));
      if (pipeline.external_probabilities) {
        if (pred_table.empty()) throw ValidationError("this bundle needs --probabilities");
        attach_probabilities(f, load_probability_table(pred_table, pipeline.label_set));
      }
      ProbabilityTable out;
      out.label_set = pipeline.label_set;
      const auto probs = pipeline.predict_proba(f);
      for (std::size_t i = 0; i < f.size(); ++i) out.rows.emplace(f.ids[i], probs[i]);
      save_probability_table(out, pred_out);
      std::printf("scored %zu records\n", f.size());
    } else if (*eval) {
      const Dataset d = load_manifest(eval_manifest);
      std::set<std::string> known;
      for (const auto& r : d.records) known.insert(r.id);
      const auto table = load_probability_table(eval_pred, d.label_set, &known);
      if (!table.unknown_ids.empty())
        throw ValidationError("predictions contain " + std::to_string(table.unknown_ids.size()) +
                              " ids not in the manifest, e.g. " + table.unknown_ids.front());
      std::vector<std::size_t> predicted, truth;
      for (const auto& [id, p] : table.rows) {
        const auto* r = d.find(id);
        if (!r->usable()) continue;
        predicted.push_back(argmax(p));
        truth.push_back(d.class_of(*r));
      }
      if (truth.empty()) throw ValidationError("no labelled records among the predictions");
      const auto cm = confusion(predicted, truth, d.label_set.size());
      const auto report = metrics_from_confusion(cm, d.label_set);
      std::fputs(format_metrics_csv(report).c_str(), stdout);
      if (!eval_out.empty()) {
        fs::create_directories(eval_out);
        write_file_atomic(fs::path(eval_out) / "metrics.csv", format_metrics_csv(report));
        write_file_atomic(fs::path(eval_out) / "confusion.csv", format_confusion_csv(cm, d.label_set));
      }
    } else if (*curve) {
      auto cfg = experiment_config(curve_config, curve_sets, curve_seed);
      cfg.resolve();
      if (cfg.manifest.empty()) throw ValidationError("manifest is required");
      std::vector<std::size_t> weeks;
      for (auto w : split(curve_weeks, ',')) {
        long long v = 0;
        if (!parse_int(trim(w), v) || v < 1) throw ValidationError("bad week prefix '" + std::string(w) + "'");
        weeks.push_back(static_cast<std::size_t>(v));
      }
      const Dataset d = load_manifest(cfg.manifest);
      DirectoryImageSource images(root_of(cfg.manifest.string(), cfg.image_root.string()));
      const auto s = cfg.split_file.empty() ? stratified_split(d, cfg.ratios, *cfg.seed, cfg.split_mode)
                                            : load_split(cfg.split_file);
      const auto lc = learning_curve(d, images, cfg.pipeline, s, weeks);
      const auto csv = format_learning_curve_csv(lc);
      std::fputs(csv.c_str(), stdout);
      if (!curve_out.empty()) write_file_atomic(curve_out, csv);
    } else if (*finetune) {
      const auto base = load_pipeline(ft_model);
      const Dataset d = load_manifest(ft_manifest);
      DirectoryImageSource images(root_of(ft_manifest, ft_image_root));
      const auto days = split_by_day(d);
      auto pick = [&](const std::string& date, std::size_t fallback) -> const Dataset& {
        if (date.empty()) {
          if (days.size() <= fallback) throw ValidationError("manifest needs at least two days");
          return days[fallback];
        }
        const Date want = Date::parse(date);
        for (const auto& day : days)
          if (day.records.front().timestamp.date == want) return day;
        throw ValidationError("no records on " + date);
      };
      const Dataset& day1 = pick(ft_day1, 0);
      const Dataset& day2 = pick(ft_day2, 1);
      TrainedPipeline seeded = base;
      seeded.config.sgd.seed = *ft_seed;
      seeded.config.forest.seed = *ft_seed;
      FinetuneOptions opts;
      opts.iterations = ft_iterations;
      const auto res = finetune_experiment(seeded, day1, images, day2, images, opts);
      const auto csv = format_finetune_csv(res);
      std::fputs(csv.c_str(), stdout);
      if (!ft_out.empty()) {
        fs::create_directories(ft_out);
        write_file_atomic(fs::path(ft_out) / "finetune.csv", csv);
        save_pipeline(res.tuned, fs::path(ft_out) / "model");
      }
    } else if (*timeline) {
      const auto pipeline = load_pipeline(tl_model);
      if (pipeline.external_probabilities) throw ValidationError("timeline needs a bundle with its own pixel model");
      const Dataset d = load_manifest(tl_manifest);
      DirectoryImageSource images(root_of(tl_manifest, tl_image_root));
      const Date date = Date::parse(tl_date);
      std::vector<std::size_t> rows;
      for (std::size_t i = 0; i < d.records.size(); ++i) {
        const auto& r = d.records[i];
        if (!r.deleted && r.timestamp.date == date) rows.push_back(i);
      }
      if (rows.empty()) throw ValidationError("no records on " + tl_date);
      std::sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
        return std::tie(d.records[a].timestamp, d.records[a].id) < std::tie(d.records[b].timestamp, d.records[b].id);
      });
      const auto f = extract_features(d, rows, images, pipeline.config.feature_options(false));
      std::vector<ImageRecord> recs;
      for (auto i : rows) recs.push_back(d.records[i]);
      const auto tl = build_timeline(recs, pipeline.predict_proba(f), pipeline.label_set);
      timeline_export(tl, tl_out);
      for (const auto& s : tl.segments)
        std::printf("%s\t%s\t%s\n", s.start.to_string().c_str(), s.end.to_string().c_str(),
                    pipeline.label_set.name(s.label).c_str());
    } else if (*serve) {
      auto session = AnnotationSession::open(sv_manifest);
      DirectoryImageSource images(root_of(sv_manifest, sv_image_root));
      AnnotationServer server(*session, images, {sv_host, sv_port, 96});
      const int port = server.bind();
      std::printf("serving %s on http://%s:%d\n", sv_manifest.c_str(), sv_host.c_str(), port);
      std::fflush(stdout);
      server.serve();
    }
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const RuntimeFailure& e) {
    std::fprintf(stderr, "failure: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "failure: %s\n", e.what());
    return 2;
  }
  return 0;
}
