#include "lifelog/features.hpp"

#include <algorithm>

#include "lifelog/error.hpp"
#include "lifelog/text_io.hpp"

namespace lifelog {

MetadataFeatures extract_metadata(const Timestamp& timestamp) {
  return {timestamp.date.weekday(), timestamp.hour, timestamp.minute};
}

ColorHistogram color_histogram(const RgbImage& image, int bins_per_channel) {
  if (image.pixel_count() == 0) throw ValidationError("color histogram of a zero-size image");
  if (bins_per_channel < 1) throw ValidationError("bins_per_channel must be >= 1");
  const auto bins = static_cast<std::size_t>(bins_per_channel);
  std::vector<std::size_t> counts(3 * bins, 0);
  for (std::size_t i = 0; i < image.pixel_count(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      std::size_t v = image.pixels[3 * i + c];
      std::size_t b = std::min(v * bins / 256, bins - 1);
      ++counts[c * bins + b];
    }
  }
  ColorHistogram h{bins_per_channel, std::vector<double>(3 * bins)};
  const double n = static_cast<double>(image.pixel_count());
  for (std::size_t j = 0; j < counts.size(); ++j) h.values[j] = static_cast<double>(counts[j]) / n;
  return h;
}

std::string_view to_string(FeatureBlock block) {
  switch (block) {
    case FeatureBlock::probabilities: return "probabilities";
    case FeatureBlock::metadata: return "metadata";
    case FeatureBlock::histogram: return "histogram";
  }
  return "?";
}

FeatureBlock parse_feature_block(std::string_view text) {
  if (text == "probabilities") return FeatureBlock::probabilities;
  if (text == "metadata") return FeatureBlock::metadata;
  if (text == "histogram") return FeatureBlock::histogram;
  throw ValidationError("unknown feature block '" + std::string(text) + "'");
}

std::size_t FeatureLayout::total() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.length;
  return n;
}

const BlockSpan* FeatureLayout::find(FeatureBlock block) const {
  for (const auto& b : blocks) {
    if (b.block == block) return &b;
  }
  return nullptr;
}

std::string FeatureLayout::to_string() const {
  std::string out;
  for (const auto& b : blocks) {
    if (!out.empty()) out += ',';
    out += std::string(lifelog::to_string(b.block)) + ":" + std::to_string(b.offset) + ":" +
           std::to_string(b.length);
  }
  return out;
}

FeatureLayout FeatureLayout::parse(std::string_view text) {
  FeatureLayout layout;
  if (text.empty()) return layout;
  std::size_t expected_offset = 0;
  for (auto part : split(text, ',')) {
    auto f = split(part, ':');
    long long off = 0, len = 0;
    if (f.size() != 3 || !parse_int(f[1], off) || !parse_int(f[2], len) || off < 0 || len <= 0) {
      throw ValidationError("malformed layout '" + std::string(text) + "'");
    }
    if (static_cast<std::size_t>(off) != expected_offset) {
      throw ValidationError("layout blocks must be contiguous: '" + std::string(text) + "'");
    }
    layout.blocks.push_back({parse_feature_block(f[0]), static_cast<std::size_t>(off),
                             static_cast<std::size_t>(len)});
    expected_offset += static_cast<std::size_t>(len);
  }
  return layout;
}

AssembledFeatures assemble_features(std::span<const double> probabilities,
                                    const MetadataFeatures* metadata,
                                    const ColorHistogram* histogram) {
  AssembledFeatures out;
  auto append = [&out](FeatureBlock block, std::span<const double> values) {
    out.layout.blocks.push_back({block, out.values.size(), values.size()});
    out.values.insert(out.values.end(), values.begin(), values.end());
  };
  if (!probabilities.empty()) append(FeatureBlock::probabilities, probabilities);
  if (metadata) {
    auto v = metadata->values();
    append(FeatureBlock::metadata, v);
  }
  if (histogram) append(FeatureBlock::histogram, histogram->values);
  if (out.layout.blocks.empty()) throw ValidationError("no feature blocks to assemble");
  return out;
}

FeatureScaler::FeatureScaler(std::vector<double> mins, std::vector<double> maxs)
    : mins_(std::move(mins)), maxs_(std::move(maxs)) {
  if (mins_.size() != maxs_.size()) throw ValidationError("scaler min/max length mismatch");
  for (std::size_t j = 0; j < mins_.size(); ++j) {
    if (!(maxs_[j] >= mins_[j])) throw ValidationError("scaler max < min");
  }
}

FeatureVector FeatureScaler::apply(std::span<const double> row) const {
  if (row.size() != mins_.size()) {
    throw ValidationError("scaler expects " + std::to_string(mins_.size()) + " dims, got " +
                          std::to_string(row.size()));
  }
  FeatureVector out(row.size());
  for (std::size_t j = 0; j < row.size(); ++j) {
    const double range = maxs_[j] - mins_[j];
    out[j] = range > 0 ? std::clamp((row[j] - mins_[j]) / range, 0.0, 1.0) : 0.0;
  }
  return out;
}

FeatureScaler fit_minmax_scaler(std::span<const FeatureVector> rows) {
  if (rows.empty()) throw ValidationError("cannot fit a scaler on zero rows");
  const std::size_t d = rows.front().size();
  std::vector<double> mins(rows.front()), maxs(rows.front());
  for (const auto& row : rows) {
    if (row.size() != d) throw ValidationError("ragged feature rows");
    for (std::size_t j = 0; j < d; ++j) {
      mins[j] = std::min(mins[j], row[j]);
      maxs[j] = std::max(maxs[j], row[j]);
    }
  }
  return FeatureScaler(std::move(mins), std::move(maxs));
}

FeatureVector apply_scaler(const FeatureScaler& scaler, std::span<const double> row) {
  return scaler.apply(row);
}

namespace {

std::string join_doubles(std::span<const double> values, char sep) {
  std::string out;
  for (std::size_t j = 0; j < values.size(); ++j) {
    if (j) out += sep;
    out += format_double(values[j]);
  }
  return out;
}

std::vector<double> parse_doubles(std::string_view text, char sep) {
  std::vector<double> out;
  if (text.empty()) return out;
  for (auto f : split(text, sep)) {
    double v = 0;
    if (!parse_double(f, v)) throw ValidationError("bad number '" + std::string(f) + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace

std::string format_scaler(const FeatureScaler& scaler) {
  return "mins\t" + join_doubles(scaler.mins(), '\t') + "\nmaxs\t" +
         join_doubles(scaler.maxs(), '\t') + "\n";
}

FeatureScaler parse_scaler(std::string_view mins_line, std::string_view maxs_line) {
  if (!mins_line.starts_with("mins") || !maxs_line.starts_with("maxs")) {
    throw ValidationError("malformed scaler block");
  }
  auto strip = [](std::string_view l) {
    return l.size() > 5 ? l.substr(5) : std::string_view{};
  };
  return FeatureScaler(parse_doubles(strip(mins_line), '\t'), parse_doubles(strip(maxs_line), '\t'));
}

void save_feature_cache(const FeatureCache& cache, const std::filesystem::path& path) {
  if (cache.ids.size() != cache.rows.size()) throw ValidationError("feature cache id/row mismatch");
  std::string out = "#layout:" + cache.layout.to_string() + "\n";
  for (std::size_t i = 0; i < cache.ids.size(); ++i) {
    out += cache.ids[i] + '\t' + join_doubles(cache.rows[i], '\t') + '\n';
  }
  write_file_atomic(path, out);
}

FeatureCache load_feature_cache(const std::filesystem::path& path) {
  FeatureCache cache;
  auto lines = read_lines(path);
  if (lines.empty() || !lines.front().starts_with("#layout:")) {
    throw ValidationError(path.string() + ": missing '#layout:' header");
  }
  cache.layout = FeatureLayout::parse(std::string_view(lines.front()).substr(8));
  for (std::size_t n = 1; n < lines.size(); ++n) {
    if (lines[n].empty()) continue;
    auto tab = lines[n].find('\t');
    if (tab == std::string::npos) {
      throw ValidationError(path.string() + ":" + std::to_string(n + 1) + ": malformed row");
    }
    auto row = parse_doubles(std::string_view(lines[n]).substr(tab + 1), '\t');
    if (row.size() != cache.layout.total()) {
      throw ValidationError(path.string() + ":" + std::to_string(n + 1) +
                            ": row length does not match layout");
    }
    cache.ids.push_back(lines[n].substr(0, tab));
    cache.rows.push_back(std::move(row));
  }
  return cache;
}

}  // namespace lifelog
