#include "lifelog/probability_table.hpp"

#include <cmath>

#include "lifelog/error.hpp"
#include "lifelog/text_io.hpp"

namespace lifelog {

const std::vector<double>* ProbabilityTable::find(std::string_view id) const {
  auto it = rows.find(std::string(id));
  return it == rows.end() ? nullptr : &it->second;
}

std::string simplex_violation(std::span<const double> p, std::size_t expected_length,
                              double tolerance) {
  if (p.size() != expected_length) {
    return "expected " + std::to_string(expected_length) + " entries, got " +
           std::to_string(p.size());
  }
  double sum = 0.0;
  for (double v : p) {
    if (!std::isfinite(v)) return "non-finite entry";
    if (v < 0) return "negative entry " + format_double(v);
    sum += v;
  }
  if (std::abs(sum - 1.0) > tolerance) return "entries sum to " + format_double(sum);
  return {};
}

ProbabilityTable parse_probability_table(std::string_view text, const ActivityLabelSet& label_set,
                                         const std::set<std::string>* known_ids) {
  ProbabilityTable table;
  table.label_set = label_set;
  bool have_header = false;
  std::vector<std::string> problems;
  std::size_t line_no = 0;
  for (auto raw : split(text, '\n')) {
    ++line_no;
    std::string_view line = raw;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const std::string where = "row " + std::to_string(line_no);
    if (line.starts_with("#labels:")) {
      if (ActivityLabelSet::parse_header(line) != label_set) {
        throw ValidationError("probability table labels do not match the dataset label set");
      }
      have_header = true;
      continue;
    }
    if (line.front() == '#') continue;
    if (!have_header) throw ValidationError("probability table is missing its '#labels:' header");
    auto f = split(line, '\t');
    std::vector<double> p;
    bool numeric = true;
    for (std::size_t j = 1; j < f.size(); ++j) {
      double v = 0;
      numeric = numeric && parse_double(f[j], v);
      p.push_back(v);
    }
    if (f[0].empty() || !numeric) {
      problems.push_back(where + ": malformed");
      continue;
    }
    if (auto why = simplex_violation(p, label_set.size(), ProbabilityTable::kSumTolerance);
        !why.empty()) {
      problems.push_back(where + " (" + std::string(f[0]) + "): " + why);
      continue;
    }
    std::string id(f[0]);
    if (table.rows.contains(id)) {
      problems.push_back(where + ": duplicate id '" + id + "'");
      continue;
    }
    if (known_ids && !known_ids->contains(id)) table.unknown_ids.push_back(id);
    table.rows.emplace(std::move(id), std::move(p));
  }
  if (!have_header) throw ValidationError("probability table is missing its '#labels:' header");
  if (!problems.empty()) {
    std::string msg = "invalid probability rows:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ValidationError(msg);
  }
  return table;
}

ProbabilityTable load_probability_table(const std::filesystem::path& path,
                                        const ActivityLabelSet& label_set,
                                        const std::set<std::string>* known_ids) {
  return parse_probability_table(read_file(path), label_set, known_ids);
}

std::string format_probability_table(const ProbabilityTable& table) {
  std::string out = table.label_set.header() + "\n";
  for (const auto& [id, p] : table.rows) {
    out += id;
    for (double v : p) out += '\t' + format_double(v);
    out += '\n';
  }
  return out;
}

void save_probability_table(const ProbabilityTable& table, const std::filesystem::path& path) {
  write_file_atomic(path, format_probability_table(table));
}

}  // namespace lifelog
