#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lifelog/dataset.hpp"
#include "lifelog/image.hpp"

namespace lifelog {

enum class PalettePattern {
  flat,       // one base color
  quadrants,  // 2x2 blocks: color top-left/bottom-right, alt_color elsewhere
};

struct Palette {
  std::array<int, 3> color{128, 128, 128};
  std::array<int, 3> alt_color{128, 128, 128};
  int noise = 10;   // per-pixel uniform offset in [-noise, noise]
  int jitter = 0;   // per-image, per-channel uniform offset in [-jitter, jitter]
  PalettePattern pattern = PalettePattern::flat;
};

struct ClassProfile {
  std::string label;
  int window_start = 0;     // minute of day, inclusive
  int window_end = 24 * 60; // exclusive
  std::uint8_t weekdays = 0x7f;  // bit i set: active on weekday i (Monday = 0)
  // Fixed classes: probability of occurring on an eligible day, and they then
  // occupy their whole window. Flexible classes: relative weight when a new
  // activity block is drawn.
  double frequency = 1.0;
  bool fixed = false;
  int first_day = 0;  // first day index on which the class can occur
  // Uninformative classes borrow a random informative class's palette per
  // image, so only the timestamp identifies them.
  bool informative_palette = true;
  Palette palette;
};

struct SynthConfig {
  std::vector<ClassProfile> classes;  // order defines the label set
  Date start_date{2024, 1, 1};
  int days = 7;
  int capture_start = 8 * 60;  // minute of day
  int capture_end = 20 * 60;
  int interval_minutes = 1;
  int image_size = 64;
  int block_min = 10;  // flexible activity block length range, minutes
  int block_max = 45;
  Palette shared_palette;  // used by uninformative classes when no informative class exists
  std::string user_id = "user";
  std::uint64_t seed = 0;

  // Throws ValidationError; overlapping fixed windows on a shared weekday are
  // an unsatisfiable schedule.
  void validate() const;
  ActivityLabelSet label_set() const;
};

struct SyntheticLifelog {
  SynthConfig config;
  Dataset dataset;  // paths point at images/<id>.ppm
};

SyntheticLifelog generate_lifelog(const SynthConfig& config);

// Image bytes depend only on (config.seed, record id) and the record's class palette.
RgbImage render_image(const SynthConfig& config, const ImageRecord& record);

// Writes manifest.tsv and images/<id>.ppm under `directory`.
void write_lifelog(const SyntheticLifelog& lifelog, const std::filesystem::path& directory);

// 19 classes shaped like the original class distribution. Roughly half the
// classes are fixed-window and palette-uninformative (metadata decides them);
// the rest are palette-informative, including a spatial-pattern pair that
// histograms cannot separate and a texture pair that mean colors cannot.
SynthConfig standard_config(std::uint64_t seed, int days = 42);

// Standard classes over `weeks` weeks at a 2-minute interval, with some
// routines only starting in week 3 so short training prefixes miss them.
SynthConfig learning_curve_config(std::uint64_t seed, int weeks = 8);

// Every class owns an exclusive time window and all images share one palette.
SynthConfig metadata_only_config(std::uint64_t seed, int days = 28);

// A second user: different routine, different scenes, one extra "Walking" class.
SynthConfig volunteer_config(std::uint64_t seed, int days = 2);

}  // namespace lifelog
