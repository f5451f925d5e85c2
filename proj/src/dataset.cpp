#include "lifelog/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>

#include "lifelog/error.hpp"
#include "lifelog/rng.hpp"
#include "lifelog/text_io.hpp"

namespace lifelog {
namespace {

constexpr std::string_view kLabelsHeader = "#labels:";

}  // namespace

ActivityLabelSet::ActivityLabelSet(std::vector<std::string> labels) : labels_(std::move(labels)) {
  std::set<std::string_view> seen;
  for (const auto& l : labels_) {
    if (l.empty() || l.find_first_of(",\t\n\r") != std::string::npos) {
      throw ValidationError("invalid label name '" + l + "'");
    }
    if (!seen.insert(l).second) throw ValidationError("duplicate label '" + l + "'");
  }
}

ActivityLabelSet ActivityLabelSet::canonical() {
  return ActivityLabelSet({"Chores", "Driving", "Cooking", "Exercising", "Reading", "Presentation",
                           "Dogs", "Resting", "Eating", "Working", "Chatting", "TV", "Meeting",
                           "Cleaning", "Socializing", "Shopping", "Biking", "Family", "Hygiene"});
}

std::optional<std::size_t> ActivityLabelSet::find(std::string_view label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - labels_.begin());
}

std::size_t ActivityLabelSet::index_of(std::string_view label) const {
  if (auto i = find(label)) return *i;
  throw ValidationError("label '" + std::string(label) + "' is not in the label set");
}

std::string ActivityLabelSet::header() const {
  return std::string(kLabelsHeader) + join(labels_, ',');
}

ActivityLabelSet ActivityLabelSet::parse_header(std::string_view line) {
  if (!line.starts_with(kLabelsHeader)) {
    throw ValidationError("expected '#labels:' header, got '" + std::string(line) + "'");
  }
  auto body = line.substr(kLabelsHeader.size());
  std::vector<std::string> labels;
  if (!body.empty()) {
    for (auto part : split(body, ',')) labels.push_back(trim(part));
  }
  return ActivityLabelSet(std::move(labels));
}

void Dataset::sort_chronologically() {
  std::stable_sort(records.begin(), records.end(), [](const ImageRecord& a, const ImageRecord& b) {
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    return a.id < b.id;
  });
}

std::vector<std::size_t> Dataset::usable_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].usable()) out.push_back(i);
  }
  return out;
}

const ImageRecord* Dataset::find(std::string_view id) const {
  for (const auto& r : records) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

Dataset parse_manifest(std::string_view text, std::string_view source) {
  Dataset ds;
  bool have_header = false;
  std::set<std::string> ids;
  std::vector<std::string> unknown;
  std::size_t line_no = 0;
  for (auto raw : split(text, '\n')) {
    ++line_no;
    std::string_view line = raw;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto where = [&] { return std::string(source) + ":" + std::to_string(line_no); };
    if (line.starts_with(kLabelsHeader)) {
      if (have_header) throw ValidationError(where() + ": second '#labels:' header");
      ds.label_set = ActivityLabelSet::parse_header(line);
      have_header = true;
      continue;
    }
    if (line.front() == '#') continue;
    if (!have_header) throw ValidationError(where() + ": record before '#labels:' header");

    auto f = split(line, '\t');
    if (f.size() != 6 || f[0].empty() || (f[5] != "0" && f[5] != "1")) {
      throw ValidationError(where() + ": malformed manifest line");
    }
    ImageRecord r;
    r.id = std::string(f[0]);
    r.path = std::string(f[1]);
    try {
      r.timestamp = Timestamp::parse(f[2]);
    } catch (const ValidationError& e) {
      throw ValidationError(where() + ": " + e.what());
    }
    if (!f[3].empty()) {
      r.label = std::string(f[3]);
      if (!ds.label_set.contains(f[3])) {
        unknown.push_back(where() + " label '" + std::string(f[3]) + "'");
      }
    }
    r.user_id = std::string(f[4]);
    r.deleted = f[5] == "1";
    if (!ids.insert(r.id).second) throw ValidationError(where() + ": duplicate id '" + r.id + "'");
    ds.records.push_back(std::move(r));
  }
  if (!have_header) throw ValidationError(std::string(source) + ": missing '#labels:' header");
  if (!unknown.empty()) {
    std::string msg = "unknown labels:";
    for (const auto& u : unknown) msg += "\n  " + u;
    throw ValidationError(msg);
  }
  ds.sort_chronologically();
  if (!ds.records.empty()) ds.user_id = ds.records.front().user_id;
  return ds;
}

Dataset load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file(path), path.string());
}

std::string format_manifest(const Dataset& dataset) {
  std::string out = dataset.label_set.header() + "\n";
  for (const auto& r : dataset.records) {
    out += r.id + '\t' + r.path + '\t' + r.timestamp.to_string() + '\t' + r.label.value_or("") +
           '\t' + r.user_id + '\t' + (r.deleted ? "1" : "0") + '\n';
  }
  return out;
}

void save_manifest(const Dataset& dataset, const std::filesystem::path& path) {
  write_file_atomic(path, format_manifest(dataset));
}

std::vector<ClassShare> class_distribution(const Dataset& dataset) {
  std::vector<ClassShare> out;
  for (const auto& name : dataset.label_set.names()) out.push_back({name, 0, 0.0});
  std::size_t total = 0;
  for (const auto& r : dataset.records) {
    if (!r.usable()) continue;
    ++out[dataset.class_of(r)].count;
    ++total;
  }
  if (total > 0) {
    for (auto& s : out) s.percent = 100.0 * static_cast<double>(s.count) / static_cast<double>(total);
  }
  return out;
}

double majority_class_baseline(const Dataset& dataset) {
  auto dist = class_distribution(dataset);
  std::size_t total = 0, best = 0;
  for (const auto& s : dist) {
    total += s.count;
    best = std::max(best, s.count);
  }
  if (total == 0) throw ValidationError("majority baseline needs at least one labeled record");
  return static_cast<double>(best) / static_cast<double>(total);
}

std::string_view to_string(Partition p) {
  switch (p) {
    case Partition::train: return "train";
    case Partition::validation: return "validation";
    case Partition::test: return "test";
  }
  return "?";
}

Partition parse_partition(std::string_view text) {
  if (text == "train") return Partition::train;
  if (text == "validation") return Partition::validation;
  if (text == "test") return Partition::test;
  throw ValidationError("unknown partition '" + std::string(text) + "'");
}

void SplitRatios::validate() const {
  if (!(train > 0 && validation > 0 && test > 0)) {
    throw ValidationError("split ratios must be positive");
  }
  if (std::abs(train + validation + test - 1.0) > 1e-9) {
    throw ValidationError("split ratios must sum to 1");
  }
}

std::array<std::size_t, 3> apportion(std::size_t n, const SplitRatios& ratios) {
  auto r = ratios.as_array();
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainders{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double quota = static_cast<double>(n) * r[i];
    // Guard against quotas like 4.9999999999 that are exact in decimal.
    double whole = std::floor(quota + 1e-9);
    counts[i] = static_cast<std::size_t>(whole);
    remainders[i] = std::max(0.0, quota - whole);
    assigned += counts[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainders[a] > remainders[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % 3]];
  while (assigned > n) {
    // Only reachable when ratios overshoot 1 by the floor guard; trim from the end.
    for (int i = 2; i >= 0 && assigned > n; --i) {
      if (counts[i] > 0) {
        --counts[i];
        --assigned;
      }
    }
  }
  return counts;
}

std::vector<std::string> SplitAssignment::ids(Partition p) const {
  std::vector<std::string> out;
  for (const auto& [id, part] : partition_of) {
    if (part == p) out.push_back(id);
  }
  return out;
}

std::size_t SplitAssignment::count(Partition p) const {
  return static_cast<std::size_t>(std::count_if(partition_of.begin(), partition_of.end(),
                                                [p](const auto& kv) { return kv.second == p; }));
}

SplitAssignment stratified_split(const Dataset& dataset, const SplitRatios& ratios,
                                 std::uint64_t seed, SplitMode mode) {
  ratios.validate();
  const std::size_t k = dataset.label_set.size();
  std::vector<std::vector<std::size_t>> by_class(k);
  for (std::size_t i : dataset.usable_indices()) {
    by_class[dataset.class_of(dataset.records[i])].push_back(i);
  }

  SplitAssignment split;
  split.seed = seed;
  split.ratios = ratios;
  for (std::size_t c = 0; c < k; ++c) {
    auto& members = by_class[c];
    if (members.empty()) {
      throw ValidationError("class '" + dataset.label_set.name(c) + "' has no records to split");
    }
    auto rng = make_rng({seed, c});
    auto quota = apportion(members.size(), ratios);

    if (mode == SplitMode::per_class) {
      std::shuffle(members.begin(), members.end(), rng);
      std::size_t pos = 0;
      for (int p = 0; p < 3; ++p) {
        for (std::size_t j = 0; j < quota[p]; ++j, ++pos) {
          split.partition_of[dataset.records[members[pos]].id] = static_cast<Partition>(p);
        }
      }
      continue;
    }

    // Chunked: group records sharing a date and a 10-minute bucket.
    std::vector<std::vector<std::size_t>> chunks;
    std::pair<std::int64_t, int> last_key{-1, -1};
    for (std::size_t i : members) {
      const auto& ts = dataset.records[i].timestamp;
      std::pair<std::int64_t, int> key{ts.date.serial(), (ts.hour * 60 + ts.minute) / 10};
      if (chunks.empty() || key != last_key) chunks.emplace_back();
      chunks.back().push_back(i);
      last_key = key;
    }
    std::shuffle(chunks.begin(), chunks.end(), rng);
    std::array<std::size_t, 3> filled{};
    for (const auto& chunk : chunks) {
      int target = -1;
      for (int p = 0; p < 3 && target < 0; ++p) {
        if (filled[p] + chunk.size() <= quota[p]) target = p;
      }
      if (target < 0) {
        long best = 0;
        target = 0;
        for (int p = 0; p < 3; ++p) {
          long deficit = static_cast<long>(quota[p]) - static_cast<long>(filled[p]);
          if (deficit > best) {
            best = deficit;
            target = p;
          }
        }
      }
      filled[target] += chunk.size();
      for (std::size_t i : chunk) {
        split.partition_of[dataset.records[i].id] = static_cast<Partition>(target);
      }
    }
  }
  return split;
}

std::string format_split(const SplitAssignment& split) {
  std::string out = "#seed:" + std::to_string(split.seed) + "\n#ratios:" +
                    format_double(split.ratios.train) + "," +
                    format_double(split.ratios.validation) + "," +
                    format_double(split.ratios.test) + "\n";
  for (const auto& [id, p] : split.partition_of) {
    out += id + '\t' + std::string(to_string(p)) + '\n';
  }
  return out;
}

SplitAssignment parse_split(std::string_view text) {
  SplitAssignment split;
  std::size_t line_no = 0;
  for (auto raw : lifelog::split(text, '\n')) {
    ++line_no;
    std::string_view line = raw;
    if (line.empty()) continue;
    if (line.starts_with("#seed:")) {
      const auto digits = line.substr(6);
      const auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), split.seed);
      if (ec != std::errc() || end != digits.data() + digits.size()) throw ValidationError("bad split seed line");
      continue;
    }
    if (line.starts_with("#ratios:")) {
      auto parts = lifelog::split(line.substr(8), ',');
      if (parts.size() != 3 || !parse_double(parts[0], split.ratios.train) ||
          !parse_double(parts[1], split.ratios.validation) ||
          !parse_double(parts[2], split.ratios.test)) {
        throw ValidationError("bad split ratios line");
      }
      continue;
    }
    if (line.front() == '#') continue;
    auto f = lifelog::split(line, '\t');
    if (f.size() != 2) {
      throw ValidationError("split file line " + std::to_string(line_no) + ": malformed");
    }
    split.partition_of[std::string(f[0])] = parse_partition(f[1]);
  }
  return split;
}

void save_split(const SplitAssignment& split, const std::filesystem::path& path) {
  write_file_atomic(path, format_split(split));
}

SplitAssignment load_split(const std::filesystem::path& path) {
  return parse_split(read_file(path));
}

std::vector<Fortnight> biweekly_partitions(const Dataset& dataset) {
  auto usable = dataset.usable_indices();
  std::vector<Fortnight> bins;
  if (usable.empty()) return bins;
  std::int64_t first = dataset.records[usable.front()].timestamp.date.serial();
  std::int64_t last = first;
  for (std::size_t i : usable) {
    auto d = dataset.records[i].timestamp.date.serial();
    first = std::min(first, d);
    last = std::max(last, d);
  }
  std::size_t n_bins = static_cast<std::size_t>((last - first) / 14 + 1);
  for (std::size_t b = 0; b < n_bins; ++b) {
    auto start = first + static_cast<std::int64_t>(b) * 14;
    bins.push_back({Date::from_serial(start), Date::from_serial(start + 13), 0});
  }
  for (std::size_t i : usable) {
    ++bins[static_cast<std::size_t>((dataset.records[i].timestamp.date.serial() - first) / 14)]
          .count;
  }
  return bins;
}

}  // namespace lifelog
