#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lifelog/timestamp.hpp"

namespace lifelog {

// Ordered, duplicate-free list of activity names. The position of a name is
// its class index in every probability vector.
class ActivityLabelSet {
 public:
  ActivityLabelSet() = default;
  explicit ActivityLabelSet(std::vector<std::string> labels);

  // The 19 activity classes of the original lifelog, in table order.
  static ActivityLabelSet canonical();

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  const std::string& name(std::size_t index) const { return labels_.at(index); }
  const std::vector<std::string>& names() const { return labels_; }
  std::optional<std::size_t> find(std::string_view label) const;
  std::size_t index_of(std::string_view label) const;  // throws ValidationError
  bool contains(std::string_view label) const { return find(label).has_value(); }

  // "#labels:" header line used by manifests and probability tables.
  std::string header() const;
  static ActivityLabelSet parse_header(std::string_view line);

  bool operator==(const ActivityLabelSet&) const = default;

 private:
  std::vector<std::string> labels_;
};

struct ImageRecord {
  std::string id;
  std::string path;  // relative to the dataset root
  Timestamp timestamp;
  std::optional<std::string> label;
  std::string user_id;
  bool deleted = false;

  // Only non-deleted labeled records take part in training and evaluation.
  bool usable() const { return !deleted && label.has_value(); }
  bool operator==(const ImageRecord&) const = default;
};

struct Dataset {
  std::vector<ImageRecord> records;
  ActivityLabelSet label_set;
  std::string user_id;

  void sort_chronologically();
  std::vector<std::size_t> usable_indices() const;
  std::size_t class_of(const ImageRecord& record) const { return label_set.index_of(*record.label); }
  const ImageRecord* find(std::string_view id) const;
};

Dataset parse_manifest(std::string_view text, std::string_view source = "manifest");
Dataset load_manifest(const std::filesystem::path& path);
std::string format_manifest(const Dataset& dataset);
void save_manifest(const Dataset& dataset, const std::filesystem::path& path);

struct ClassShare {
  std::string label;
  std::size_t count = 0;
  double percent = 0.0;
};

std::vector<ClassShare> class_distribution(const Dataset& dataset);
double majority_class_baseline(const Dataset& dataset);

enum class Partition { train = 0, validation = 1, test = 2 };
std::string_view to_string(Partition p);
Partition parse_partition(std::string_view text);

struct SplitRatios {
  double train = 0.75;
  double validation = 0.05;
  double test = 0.20;

  void validate() const;
  std::array<double, 3> as_array() const { return {train, validation, test}; }
};

// Largest-remainder apportionment of n items; leftover units go to the
// largest fractional parts, earlier partitions winning ties.
std::array<std::size_t, 3> apportion(std::size_t n, const SplitRatios& ratios);

enum class SplitMode {
  per_class,  // records shuffled individually within each class
  chunked,    // contiguous 10-minute runs of a class stay together
};

struct SplitAssignment {
  std::map<std::string, Partition> partition_of;
  std::uint64_t seed = 0;
  SplitRatios ratios;

  std::vector<std::string> ids(Partition p) const;
  std::size_t count(Partition p) const;
};

SplitAssignment stratified_split(const Dataset& dataset, const SplitRatios& ratios,
                                 std::uint64_t seed, SplitMode mode = SplitMode::per_class);

std::string format_split(const SplitAssignment& split);
SplitAssignment parse_split(std::string_view text);
void save_split(const SplitAssignment& split, const std::filesystem::path& path);
SplitAssignment load_split(const std::filesystem::path& path);

struct Fortnight {
  Date first_day;
  Date last_day;  // inclusive
  std::size_t count = 0;
};

// Consecutive 14-day bins anchored at the earliest usable record's date.
std::vector<Fortnight> biweekly_partitions(const Dataset& dataset);

}  // namespace lifelog
