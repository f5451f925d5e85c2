#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lifelog/dataset.hpp"
#include "lifelog/error.hpp"
#include "lifelog/text_io.hpp"
#include "test_util.hpp"

using namespace lifelog;

namespace {

// Published class counts, in table order.
const std::vector<std::pair<std::string, std::size_t>> kTable1 = {
    {"Chores", 725},    {"Driving", 1031},      {"Cooking", 759},   {"Exercising", 502},
    {"Reading", 1414},  {"Presentation", 848},  {"Dogs", 1149},     {"Resting", 106},
    {"Eating", 4699},   {"Working", 13895},     {"Chatting", 113},  {"TV", 1584},
    {"Meeting", 1312},  {"Cleaning", 642},      {"Socializing", 970}, {"Shopping", 606},
    {"Biking", 696},    {"Family", 8267},       {"Hygiene", 1266}};

ImageRecord rec(std::string id, std::string ts, std::optional<std::string> label, bool deleted = false) {
  ImageRecord r;
  r.id = std::move(id);
  r.path = "images/" + r.id + ".ppm";
  r.timestamp = Timestamp::parse(ts);
  r.label = std::move(label);
  r.user_id = "u";
  r.deleted = deleted;
  return r;
}

Dataset counts_dataset(const std::vector<std::pair<std::string, std::size_t>>& counts) {
  std::vector<std::string> names;
  for (const auto& [n, c] : counts) names.push_back(n);
  Dataset d;
  d.label_set = ActivityLabelSet(names);
  std::size_t id = 0;
  for (const auto& [n, c] : counts) {
    for (std::size_t i = 0; i < c; ++i, ++id) {
      ImageRecord r;
      r.id = "r" + std::to_string(id);
      r.label = n;
      d.records.push_back(std::move(r));
    }
  }
  return d;
}

}  // namespace

TEST_CASE("dates and timestamps") {
  CHECK(Date{2024, 1, 1}.weekday() == 0);  // Monday
  CHECK(Date{2024, 1, 7}.weekday() == 6);
  CHECK(Date{1970, 1, 1}.serial() == 0);
  CHECK(Date::from_serial(Date{2024, 2, 29}.serial()) == Date{2024, 2, 29});
  CHECK(Date::parse("2024-02-29").to_string() == "2024-02-29");
  CHECK_THROWS_AS(Date::parse("2023-02-29"), ValidationError);
  CHECK_THROWS_AS(Date::parse("2024-1-01"), ValidationError);

  const auto t = Timestamp::parse("2024-03-05T07:30:15");
  CHECK(t.hour == 7);
  CHECK(t.minute == 30);
  CHECK(t.to_string() == "2024-03-05T07:30:15");
  CHECK(Timestamp::from_seconds(t.seconds_since_epoch()) == t);
  CHECK_THROWS_AS(Timestamp::parse("2024-03-05 07:30:15"), ValidationError);
  CHECK_THROWS_AS(Timestamp::parse("2024-03-05T24:00:00"), ValidationError);
}

TEST_CASE("text helpers") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456.789, -2.5}) {
    double back = 0;
    REQUIRE(parse_double(format_double(v), back));
    CHECK(back == v);
  }
  double x = 0;
  CHECK_FALSE(parse_double("1.5x", x));
  CHECK_FALSE(parse_double("", x));
  long long n = 0;
  CHECK(parse_int("-42", n));
  CHECK(n == -42);
  CHECK_FALSE(parse_int("4 2", n));
  CHECK(split("a\tb\t", '\t').size() == 3);
  CHECK(trim("  x y \r\n") == "x y");
}

TEST_CASE("label sets") {
  const auto c = ActivityLabelSet::canonical();
  REQUIRE(c.size() == 19);
  for (std::size_t i = 0; i < kTable1.size(); ++i) CHECK(c.name(i) == kTable1[i].first);
  CHECK(c.contains("Working"));
  CHECK_FALSE(c.contains("Sleeping"));
  CHECK(ActivityLabelSet::parse_header(c.header()) == c);
  CHECK_THROWS_AS(ActivityLabelSet({"A", "A"}), ValidationError);
  CHECK_THROWS_AS(ActivityLabelSet({"A", ""}), ValidationError);
}

TEST_CASE("manifest loading") {
  const std::string header = ActivityLabelSet::canonical().header() + "\n";
  SUBCASE("three valid lines come back sorted by timestamp") {
    const std::string text = header +
                             "c\timages/c.ppm\t2024-01-01T09:00:00\tWorking\tu\t0\n"
                             "a\timages/a.ppm\t2024-01-01T08:00:00\tEating\tu\t0\n"
                             "b\timages/b.ppm\t2024-01-01T08:30:00\t\tu\t1\n";
    const Dataset d = parse_manifest(text);
    REQUIRE(d.records.size() == 3);
    CHECK(d.records[0].id == "a");
    CHECK(d.records[1].id == "b");
    CHECK(d.records[2].id == "c");
    CHECK_FALSE(d.records[1].label.has_value());
    CHECK(d.records[1].deleted);
    CHECK(d.usable_indices() == std::vector<std::size_t>{0, 2});
  }
  SUBCASE("unknown label names its line and label") {
    const std::string text = header + "a\timages/a.ppm\t2024-01-01T08:00:00\tWorking\tu\t0\n" +
                             "b\timages/b.ppm\t2024-01-01T08:01:00\tSleeping\tu\t0\n";
    try {
      parse_manifest(text, "m.tsv");
      FAIL("expected an error");
    } catch (const ValidationError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("Sleeping") != std::string::npos);
      CHECK(msg.find(":3") != std::string::npos);
    }
  }
  SUBCASE("malformed input") {
    CHECK_THROWS_AS(parse_manifest("a\tp\t2024-01-01T08:00:00\tWorking\tu\t0\n"), ValidationError);
    CHECK_THROWS_AS(parse_manifest(header + "a\tp\t2024-01-01T08:00:00\tWorking\tu\n"), ValidationError);
    CHECK_THROWS_AS(parse_manifest(header + "a\tp\t2024-01-01T08:00\tWorking\tu\t0\n"), ValidationError);
    CHECK_THROWS_AS(parse_manifest(header + "a\tp\t2024-01-01T08:00:00\tWorking\tu\t2\n"), ValidationError);
    CHECK_THROWS_AS(parse_manifest(header + "a\tp\t2024-01-01T08:00:00\tWorking\tu\t0\n" +
                                   "a\tq\t2024-01-01T08:01:00\tWorking\tu\t0\n"),
                    ValidationError);
  }
  SUBCASE("file round trip is exact") {
    TempDir dir("manifest");
    Dataset d;
    d.label_set = ActivityLabelSet::canonical();
    d.records = {rec("x1", "2024-01-02T10:00:00", "Working"), rec("x2", "2024-01-02T10:01:00", std::nullopt),
                 rec("x3", "2024-01-02T10:02:00", "Family", true)};
    save_manifest(d, dir / "m.tsv");
    const Dataset back = load_manifest(dir / "m.tsv");
    CHECK(back.records == d.records);
    CHECK(back.label_set == d.label_set);
    CHECK(format_manifest(back) == read_file(dir / "m.tsv"));
  }
  CHECK_THROWS_AS(load_manifest("/nonexistent/manifest.tsv"), RuntimeFailure);
}

TEST_CASE("class distribution against the published table") {
  const Dataset d = counts_dataset(kTable1);
  const auto dist = class_distribution(d);
  const std::size_t total = std::accumulate(kTable1.begin(), kTable1.end(), std::size_t{0},
                                            [](std::size_t s, const auto& kv) { return s + kv.second; });
  CHECK(total == 40584);
  auto pct = [&](const char* name) {
    for (const auto& s : dist)
      if (s.label == name) return s.percent;
    return -1.0;
  };
  CHECK(std::abs(pct("Working") - 34.24) < 0.005);
  CHECK(std::abs(pct("Family") - 20.37) < 0.005);
  CHECK(std::abs(majority_class_baseline(d) - 0.3424) < 0.0001);

  const Dataset one = counts_dataset({{"A", 1}});
  const auto single = class_distribution(one);
  REQUIRE(single.size() == 1);
  CHECK(single[0].count == 1);
  CHECK(single[0].percent == 100.0);

  CHECK(majority_class_baseline(counts_dataset({{"A", 5}, {"B", 5}})) == 0.5);
  CHECK(majority_class_baseline(counts_dataset({{"A", 3}, {"B", 1}})) == 0.75);
}

TEST_CASE("largest-remainder apportionment") {
  const SplitRatios r;
  CHECK(apportion(20, r) == std::array<std::size_t, 3>{15, 1, 4});
  // 106 * (0.75, 0.05, 0.20) = (79.5, 5.3, 21.2): floors 79+5+21 = 105, the
  // one leftover unit goes to the largest remainder (train, 0.5).
  CHECK(apportion(106, r) == std::array<std::size_t, 3>{80, 5, 21});
  for (std::size_t n = 0; n < 500; ++n) {
    const auto a = apportion(n, r);
    CHECK(a[0] + a[1] + a[2] == n);
  }
  CHECK_THROWS_AS((SplitRatios{0.5, 0.5, 0.5}.validate()), ValidationError);
  CHECK_THROWS_AS((SplitRatios{1.0, 0.0, 0.0}.validate()), ValidationError);
}

TEST_CASE("stratified split") {
  Dataset d = counts_dataset({{"Resting", 106}, {"Working", 20}});
  const auto s = stratified_split(d, {}, 99);
  std::map<std::pair<std::string, Partition>, std::size_t> tally;
  for (const auto& r : d.records) ++tally[{*r.label, s.partition_of.at(r.id)}];
  CHECK(tally[{"Resting", Partition::train}] == 80);
  CHECK(tally[{"Resting", Partition::validation}] == 5);
  CHECK(tally[{"Resting", Partition::test}] == 21);
  CHECK(tally[{"Working", Partition::train}] == 15);
  CHECK(tally[{"Working", Partition::validation}] == 1);
  CHECK(tally[{"Working", Partition::test}] == 4);

  CHECK(format_split(stratified_split(d, {}, 99)) == format_split(s));
  CHECK(format_split(stratified_split(d, {}, 100)) != format_split(s));
  CHECK(parse_split(format_split(s)).partition_of == s.partition_of);

  d.label_set = ActivityLabelSet({"Resting", "Working", "Empty"});
  CHECK_THROWS_AS(stratified_split(d, {}, 1), ValidationError);
}

TEST_CASE("chunked split keeps 10-minute runs together") {
  Dataset d;
  d.label_set = ActivityLabelSet({"A"});
  for (int m = 0; m < 200; ++m) {
    char ts[32];
    std::snprintf(ts, sizeof ts, "2024-01-01T%02d:%02d:00", 8 + m / 60, m % 60);
    d.records.push_back(rec("r" + std::to_string(m), ts, "A"));
  }
  const auto s = stratified_split(d, {}, 5, SplitMode::chunked);
  for (int m = 0; m < 200; m += 10) {
    const auto p = s.partition_of.at("r" + std::to_string(m));
    for (int j = 1; j < 10; ++j) CHECK(s.partition_of.at("r" + std::to_string(m + j)) == p);
  }
  CHECK(s.count(Partition::train) + s.count(Partition::validation) + s.count(Partition::test) == 200);
}

TEST_CASE("bi-weekly partitions") {
  Dataset d;
  d.label_set = ActivityLabelSet({"A"});
  SUBCASE("one fortnight") {
    d.records = {rec("a", "2024-01-01T08:00:00", "A"), rec("b", "2024-01-10T08:00:00", "A")};
    const auto bins = biweekly_partitions(d);
    REQUIRE(bins.size() == 1);
    CHECK(bins[0].count == 2);
  }
  SUBCASE("26 weeks give 13 bins, empty ones kept") {
    d.records = {rec("a", "2024-01-01T08:00:00", "A"), rec("z", "2024-06-29T08:00:00", "A")};
    const auto bins = biweekly_partitions(d);
    REQUIRE(bins.size() == 13);
    CHECK(bins.front().count == 1);
    CHECK(bins.back().count == 1);
    for (std::size_t i = 1; i + 1 < bins.size(); ++i) CHECK(bins[i].count == 0);
    CHECK(bins[1].first_day == Date{2024, 1, 15});
  }
  SUBCASE("unusable records are ignored") {
    d.records = {rec("a", "2024-01-01T08:00:00", std::nullopt), rec("b", "2024-01-20T08:00:00", "A")};
    const auto bins = biweekly_partitions(d);
    REQUIRE(bins.size() == 1);
    CHECK(bins[0].first_day == Date{2024, 1, 20});
  }
}
