#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lifelog/image.hpp"
#include "lifelog/timestamp.hpp"

namespace lifelog {

using FeatureVector = std::vector<double>;

// Day of week (Monday = 0), hour and minute as three separate scalars.
struct MetadataFeatures {
  static constexpr std::size_t kDims = 3;

  int day_of_week = 0;
  int hour = 0;
  int minute = 0;

  std::array<double, kDims> values() const {
    return {static_cast<double>(day_of_week), static_cast<double>(hour),
            static_cast<double>(minute)};
  }
  bool operator==(const MetadataFeatures&) const = default;
};

MetadataFeatures extract_metadata(const Timestamp& timestamp);

// Per-channel marginal histograms, channel-major (R bins, G bins, B bins),
// each channel normalized by the pixel count.
struct ColorHistogram {
  int bins_per_channel = 10;
  std::vector<double> values;
};

ColorHistogram color_histogram(const RgbImage& image, int bins_per_channel = 10);

enum class FeatureBlock { probabilities, metadata, histogram };
std::string_view to_string(FeatureBlock block);
FeatureBlock parse_feature_block(std::string_view text);

struct BlockSpan {
  FeatureBlock block;
  std::size_t offset = 0;
  std::size_t length = 0;
  bool operator==(const BlockSpan&) const = default;
};

struct FeatureLayout {
  std::vector<BlockSpan> blocks;

  std::size_t total() const;
  const BlockSpan* find(FeatureBlock block) const;
  // "probabilities:0:19,metadata:19:3,histogram:22:30"
  std::string to_string() const;
  static FeatureLayout parse(std::string_view text);
  bool operator==(const FeatureLayout&) const = default;
};

struct AssembledFeatures {
  FeatureVector values;
  FeatureLayout layout;
};

// Concatenates the present blocks in the fixed order
// [probabilities | metadata | histogram]. An empty probability span or a null
// pointer means the block is absent; at least one must be present.
AssembledFeatures assemble_features(std::span<const double> probabilities,
                                    const MetadataFeatures* metadata,
                                    const ColorHistogram* histogram);

// Per-dimension min/max learned from training rows.
class FeatureScaler {
 public:
  FeatureScaler() = default;
  FeatureScaler(std::vector<double> mins, std::vector<double> maxs);

  std::size_t dimension() const { return mins_.size(); }
  const std::vector<double>& mins() const { return mins_; }
  const std::vector<double>& maxs() const { return maxs_; }

  // (v - min) / (max - min) clipped to [0, 1]; constant dimensions map to 0.
  FeatureVector apply(std::span<const double> row) const;

  bool operator==(const FeatureScaler&) const = default;

 private:
  std::vector<double> mins_;
  std::vector<double> maxs_;
};

FeatureScaler fit_minmax_scaler(std::span<const FeatureVector> rows);
FeatureVector apply_scaler(const FeatureScaler& scaler, std::span<const double> row);

std::string format_scaler(const FeatureScaler& scaler);
FeatureScaler parse_scaler(std::string_view mins_line, std::string_view maxs_line);

// Feature cache: "#layout:" header, then one "id<TAB>f1<TAB>f2..." line per record.
struct FeatureCache {
  FeatureLayout layout;
  std::vector<std::string> ids;
  std::vector<FeatureVector> rows;
};

void save_feature_cache(const FeatureCache& cache, const std::filesystem::path& path);
FeatureCache load_feature_cache(const std::filesystem::path& path);

}  // namespace lifelog
