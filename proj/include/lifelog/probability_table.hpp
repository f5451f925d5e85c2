#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lifelog/dataset.hpp"

namespace lifelog {

// Per-image class-probability vectors from any external model, keyed by id.
struct ProbabilityTable {
  static constexpr double kSumTolerance = 1e-6;

  ActivityLabelSet label_set;
  std::map<std::string, std::vector<double>> rows;
  std::vector<std::string> unknown_ids;  // ids absent from the dataset, when one was given

  const std::vector<double>* find(std::string_view id) const;
  bool operator==(const ProbabilityTable& o) const {
    return label_set == o.label_set && rows == o.rows;
  }
};

// Empty string when the vector is on the simplex within tolerance, else the reason.
std::string simplex_violation(std::span<const double> p, std::size_t expected_length,
                              double tolerance);

// Every bad row is reported with its line number in one ValidationError.
ProbabilityTable parse_probability_table(std::string_view text, const ActivityLabelSet& label_set,
                                         const std::set<std::string>* known_ids = nullptr);
ProbabilityTable load_probability_table(const std::filesystem::path& path,
                                        const ActivityLabelSet& label_set,
                                        const std::set<std::string>* known_ids = nullptr);
std::string format_probability_table(const ProbabilityTable& table);
void save_probability_table(const ProbabilityTable& table, const std::filesystem::path& path);

}  // namespace lifelog
