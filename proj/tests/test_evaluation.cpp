#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "lifelog/error.hpp"
#include "lifelog/evaluation.hpp"
#include "lifelog/text_io.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace lifelog;

namespace {

// CNN+LF recalls and class percentages as published, in canonical order.
const std::vector<double> kLateFusionRecalls = {
    20.00, 96.62, 60.53, 73.00, 53.36, 87.06, 66.09, 45.45, 83.12, 95.19,
    17.39, 81.75, 81.47, 46.09, 45.08, 64.75, 81.88, 90.15, 62.60};
const std::vector<double> kClassPercents = {
    1.79, 2.54, 1.87, 1.24, 3.48, 2.09, 2.83, 0.26, 11.58, 34.24,
    0.28, 3.90, 3.23, 1.59, 2.39, 1.49, 1.71, 20.37, 3.12};

ImageRecord at(const std::string& id, const std::string& ts) {
  ImageRecord r;
  r.id = id;
  r.timestamp = Timestamp::parse(ts);
  return r;
}

}  // namespace

TEST_CASE("published summary rows follow from the per-class recalls") {
  std::vector<std::optional<double>> r(kLateFusionRecalls.begin(), kLateFusionRecalls.end());
  CHECK(std::abs(mean_class_accuracy(r) - 65.87) < 0.005);
  const double weighted = support_weighted_accuracy(r, kClassPercents);
  CHECK(std::abs(weighted - 83.1) <= 0.15);
  CHECK(std::abs(weighted - 83.07) <= 0.15);
}

TEST_CASE("argmax takes the first maximum") {
  const std::vector<double> p{0.2, 0.4, 0.4};
  CHECK(argmax(p) == 1);
}

TEST_CASE("confusion by hand") {
  const ActivityLabelSet ab({"A", "B"});
  const std::vector<std::string> truth{"A", "A", "B"}, pred{"A", "B", "B"};
  const auto m = confusion(pred, truth, ab);
  CHECK(m.counts == std::vector<std::size_t>{1, 1, 0, 1});
  const auto r = evaluate(pred, truth, ab);
  CHECK(*r.per_class_recall[0] == doctest::Approx(50.0));
  CHECK(*r.per_class_recall[1] == doctest::Approx(100.0));
  CHECK(r.total_accuracy == doctest::Approx(200.0 / 3));
  CHECK(r.avg_class_accuracy == doctest::Approx(75.0));

  CHECK_THROWS_AS(evaluate(std::vector<std::string>{"A"}, truth, ab), ValidationError);
  CHECK_THROWS_AS(evaluate(std::vector<std::string>{"A", "C", "B"}, truth, ab), ValidationError);
  CHECK_THROWS_AS(evaluate(std::vector<std::string>{}, std::vector<std::string>{}, ab), ValidationError);
}

TEST_CASE("perfect predictions") {
  const auto canon = ActivityLabelSet::canonical();
  std::vector<std::size_t> y;
  for (std::size_t c = 0; c < canon.size(); ++c)
    for (std::size_t i = 0; i <= c; ++i) y.push_back(c);
  const auto m = confusion(y, y, canon.size());
  for (std::size_t i = 0; i < canon.size(); ++i)
    for (std::size_t j = 0; j < canon.size(); ++j) CHECK(m.at(i, j) == (i == j ? i + 1 : 0));
  const auto r = evaluate(y, y, canon);
  CHECK(r.total_accuracy == 100.0);
  CHECK(r.avg_class_accuracy == 100.0);
}

TEST_CASE("random sequences agree with the recall oracle") {
  std::mt19937_64 rng(11);
  const ActivityLabelSet labels({"a", "b", "c", "d", "e"});
  for (int t = 0; t < 50; ++t) {
    std::uniform_int_distribution<std::size_t> cls(0, 3);  // "e" never appears
    std::vector<std::size_t> truth(60), pred(60);
    for (auto& v : truth) v = cls(rng);
    for (auto& v : pred) v = cls(rng);
    const auto m = confusion(pred, truth, 5);
    const auto r = evaluate(pred, truth, labels);
    const auto expected = oracle::recalls(pred, truth, 5);
    for (std::size_t c = 0; c < 5; ++c) {
      CHECK(m.row_sum(c) == r.supports[c]);
      CHECK(r.per_class_recall[c].has_value() == (expected[c] >= 0));
      if (expected[c] >= 0) CHECK(*r.per_class_recall[c] == doctest::Approx(expected[c]));
    }
    CHECK_FALSE(r.per_class_recall[4].has_value());
    std::vector<double> support(r.supports.begin(), r.supports.end());
    CHECK(std::abs(support_weighted_accuracy(r.per_class_recall, support) - r.total_accuracy) < 1e-9);
    CHECK(r.total_accuracy ==
          doctest::Approx(100.0 * static_cast<double>(m.trace()) / static_cast<double>(m.total())));
  }
}

TEST_CASE("unavailable classes count as errors but report N/A") {
  const ActivityLabelSet abc({"A", "B", "Walking"});
  const std::vector<std::size_t> truth{0, 0, 1, 2, 2}, pred{0, 0, 1, 0, 1};
  const auto r = evaluate(pred, truth, abc, {false, false, true});
  CHECK_FALSE(r.per_class_recall[2].has_value());
  CHECK(r.supports[2] == 2);
  CHECK(r.total_accuracy == doctest::Approx(60.0));
  CHECK(r.avg_class_accuracy == doctest::Approx(100.0));
  const auto csv = format_metrics_csv(r);
  CHECK(csv ==
        "Class,Support,Accuracy\nA,2,100.00\nB,1,100.00\nWalking,2,N/A\n"
        "Avg. Class Accuracy,,100.00\nTotal Accuracy,,60.00\n");
  CHECK_THROWS_AS(evaluate(pred, truth, abc, {true}), ValidationError);
}

TEST_CASE("confusion csv layout") {
  const ActivityLabelSet ab({"A", "B"});
  const std::vector<std::size_t> truth{0, 0, 1}, pred{0, 1, 1};
  CHECK(format_confusion_csv(confusion(pred, truth, 2), ab) == "actual\\predicted,A,B\nA,1,1\nB,0,1\n");
}

TEST_CASE("timeline segments") {
  const ActivityLabelSet ab({"A", "B"});
  const std::vector<ImageRecord> recs{at("1", "2024-01-01T08:00:00"), at("2", "2024-01-01T08:01:00"),
                                      at("3", "2024-01-01T08:02:00"), at("4", "2024-01-01T08:03:00")};
  const std::vector<double> A{0.9, 0.1}, B{0.3, 0.7};

  SUBCASE("run-length merge") {
    const std::vector<std::vector<double>> p{A, A, B, A};
    const auto t = build_timeline(recs, p, ab);
    REQUIRE(t.segments.size() == 3);
    CHECK(t.segments[0] == TimelineSegment{recs[0].timestamp, recs[1].timestamp, 0, 2});
    CHECK(t.segments[1] == TimelineSegment{recs[2].timestamp, recs[2].timestamp, 1, 1});
    CHECK(t.segments[2] == TimelineSegment{recs[3].timestamp, recs[3].timestamp, 0, 1});
  }
  SUBCASE("uniform predictions make one segment") {
    const std::vector<std::vector<double>> p(4, B);
    CHECK(build_timeline(recs, p, ab).segments.size() == 1);
  }
  SUBCASE("errors") {
    auto two_days = recs;
    two_days[3].timestamp = Timestamp::parse("2024-01-02T08:00:00");
    const std::vector<std::vector<double>> p(4, A);
    CHECK_THROWS_AS(build_timeline(two_days, p, ab), ValidationError);
    auto shuffled = recs;
    std::swap(shuffled[0], shuffled[1]);
    CHECK_THROWS_AS(build_timeline(shuffled, p, ab), ValidationError);
    CHECK_THROWS_AS(build_timeline(recs, std::vector<std::vector<double>>(3, A), ab), ValidationError);
  }
  SUBCASE("export re-expands to the records") {
    std::mt19937_64 rng(12);
    std::vector<ImageRecord> day;
    std::vector<std::vector<double>> p;
    std::bernoulli_distribution flip(0.3);
    bool cur = false;
    for (int i = 0; i < 200; ++i) {
      const int minute = 8 * 60 + i;
      char ts[32];
      std::snprintf(ts, sizeof ts, "2024-02-03T%02d:%02d:00", minute / 60, minute % 60);
      day.push_back(at("r" + std::to_string(i), ts));
      if (flip(rng)) cur = !cur;
      p.push_back(cur ? B : A);
    }
    const auto t = build_timeline(day, p, ab);
    TempDir dir("timeline");
    timeline_export(t, dir / "day.tsv");
    const auto segs = load_timeline_segments(dir / "day.tsv", ab);
    REQUIRE(segs.size() == t.segments.size());
    std::size_t covered = 0;
    for (std::size_t s = 0; s < segs.size(); ++s) {
      for (std::size_t i = 0; i < day.size(); ++i) {
        if (day[i].timestamp >= segs[s].start && day[i].timestamp <= segs[s].end) {
          ++covered;
          CHECK(argmax(p[i]) == segs[s].label);
        }
      }
    }
    CHECK(covered == day.size());
    const auto rec_lines = read_lines(dir / "day.tsv.records");
    CHECK(rec_lines.front() == ab.header());
    CHECK(rec_lines[1].starts_with("r0\t2024-02-03T08:00:00\t"));
  }
}
