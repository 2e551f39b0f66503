#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "emocolor/error.hpp"
#include "emocolor/human_data.hpp"
#include "emocolor/random.hpp"
#include "test_support.hpp"

using namespace emocolor;

namespace {

TrialRecord trial(std::string participant, std::string image, Color chosen, std::int64_t ts = 0) {
  TrialRecord t;
  t.session_id = "sess-" + participant;
  t.participant_id = std::move(participant);
  t.image_id = std::move(image);
  t.chosen = chosen;
  t.timestamp = ts;
  t.response_time = 900.0;
  return t;
}

ResponseHistogram hist(std::array<std::size_t, kNumColors> counts) {
  ResponseHistogram h;
  h.image_id = "img";
  h.counts = counts;
  for (auto c : counts) h.total += c;
  return h;
}

}  // namespace

TEST_CASE("aggregate tallies one response per participant and image") {
  CHECK(aggregate(std::vector<TrialRecord>{}).histograms.empty());

  std::vector<TrialRecord> red;
  for (int p = 0; p < 3; ++p) red.push_back(trial("p" + std::to_string(p), "a", Color::kRed));
  const auto r = aggregate(red);
  REQUIRE(r.histograms.size() == 1);
  CHECK(r.histograms[0].counts == std::array<std::size_t, 5>{3, 0, 0, 0, 0});

  std::vector<TrialRecord> mixed;
  for (int p = 0; p < 10; ++p) {
    const Color c = p < 4 ? Color::kRed : p < 7 ? Color::kBlue : Color::kBlack;
    mixed.push_back(trial("p" + std::to_string(p), "a", c));
  }
  const auto m = aggregate(mixed);
  CHECK(m.histograms[0].counts == std::array<std::size_t, 5>{4, 0, 3, 3, 0});
  CHECK(m.histograms[0].total == 10);
}

TEST_CASE("duplicates keep the earliest response") {
  std::vector<TrialRecord> t = {trial("p", "a", Color::kYellow, 200), trial("p", "a", Color::kGreen, 100),
                                trial("q", "a", Color::kGreen, 150)};
  const auto r = aggregate(t);
  CHECK(r.histograms[0].counts == std::array<std::size_t, 5>{0, 2, 0, 0, 0});
  REQUIRE(r.duplicates.size() == 1);
  CHECK(r.duplicates[0].chosen == Color::kYellow);
}

TEST_CASE("aggregate is order independent") {
  Rng rng(71);
  std::vector<TrialRecord> trials;
  for (int p = 0; p < 20; ++p) {
    for (int i = 0; i < 6; ++i) {
      trials.push_back(trial("p" + std::to_string(p), "img" + std::to_string(i),
                             color_from_index(rng.below(5)), rng.below(1000)));
    }
  }
  for (int d = 0; d < 15; ++d) {
    auto dup = trials[rng.below(trials.size())];
    dup.chosen = color_from_index(rng.below(5));
    dup.timestamp = static_cast<std::int64_t>(rng.below(2000));
    dup.session_id += "-retry";
    trials.push_back(dup);
  }
  const auto base = aggregate(trials);
  for (int t = 0; t < 10; ++t) {
    rng.shuffle(trials);
    const auto again = aggregate(trials);
    REQUIRE(again.histograms.size() == base.histograms.size());
    for (std::size_t i = 0; i < base.histograms.size(); ++i) {
      CHECK(again.histograms[i].image_id == base.histograms[i].image_id);
      CHECK(again.histograms[i].counts == base.histograms[i].counts);
    }
  }
}

TEST_CASE("aggregate validates ids against the manifest order") {
  const std::vector<std::string> ids = {"b", "a", "c"};
  const std::vector<TrialRecord> t = {trial("p", "a", Color::kRed), trial("p", "b", Color::kRed)};
  const auto r = aggregate(t, std::span<const std::string>(ids));
  REQUIRE(r.histograms.size() == 2);
  CHECK(r.histograms[0].image_id == "b");
  CHECK(r.histograms[1].image_id == "a");
  const std::vector<TrialRecord> bad = {trial("p", "zzz", Color::kRed)};
  CHECK_THROWS_AS(aggregate(bad, std::span<const std::string>(ids)), Error);
}

TEST_CASE("to_probabilities") {
  CHECK(to_probabilities(hist({10, 0, 0, 0, 0})) == ColorRow{1, 0, 0, 0, 0});
  CHECK(to_probabilities(hist({2, 2, 2, 2, 2})) == ColorRow{0.2, 0.2, 0.2, 0.2, 0.2});
  CHECK(to_probabilities(hist({4, 0, 3, 3, 0})) == ColorRow{0.4, 0, 0.3, 0.3, 0});
  CHECK_THROWS_AS(to_probabilities(hist({0, 0, 0, 0, 0})), Error);

  Rng rng(72);
  for (int t = 0; t < 500; ++t) {
    std::array<std::size_t, kNumColors> c{};
    for (auto& x : c) x = rng.below(60);
    c[rng.below(5)] += 1;
    const auto h = hist(c);
    const auto p = to_probabilities(h);
    double sum = 0.0;
    for (double x : p) sum += x;
    CHECK(std::abs(sum - 1.0) <= 1e-12);
    CHECK(index_of(majority_label(h).color) ==
          static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin()));
  }
}

TEST_CASE("majority_label") {
  CHECK(majority_label(hist({4, 0, 3, 3, 0})).color == Color::kRed);
  CHECK_FALSE(majority_label(hist({4, 0, 3, 3, 0})).tie);
  CHECK(majority_label(hist({5, 5, 0, 0, 0})).color == Color::kRed);
  CHECK(majority_label(hist({5, 5, 0, 0, 0})).tie);
  CHECK(majority_label(hist({0, 0, 0, 0, 9})).color == Color::kYellow);
}

TEST_CASE("trial JSON accepts names and indices and rejects bad fields") {
  auto t = trial("p1", "img_001", Color::kBlack, 1700000000123);
  t.presented_order = {Color::kYellow, Color::kRed, Color::kBlue, Color::kGreen, Color::kBlack};
  t.response_time = 1234.5;
  const std::string line = to_json_line(t);
  CHECK(line.find("\"black\"") != std::string::npos);
  CHECK(parse_trial(line) == t);

  const std::string by_index =
      R"({"session_id":"s","participant_id":"p","image_id":"i","chosen":3,)"
      R"("presented_order":[0,1,2,3,4],"timestamp":5,"response_time":10})";
  CHECK(parse_trial(by_index).chosen == Color::kBlack);

  CHECK_THROWS_AS(parse_trial("{"), Error);
  CHECK_THROWS_AS(parse_trial(R"({"session_id":"s"})"), Error);
  std::string bad_order = by_index;
  bad_order.replace(bad_order.find("[0,1,2,3,4]"), 11, "[0,0,2,3,4]");
  CHECK_THROWS_AS(parse_trial(bad_order), Error);
  std::string bad_color = by_index;
  bad_color.replace(bad_color.find("\"chosen\":3"), 10, "\"chosen\":\"purple\"");
  CHECK_THROWS_AS(parse_trial(bad_color), Error);
  std::string empty_id = by_index;
  empty_id.replace(empty_id.find("\"s\""), 3, "\"\"");
  CHECK_THROWS_AS(parse_trial(empty_id), Error);
}

TEST_CASE("JSONL round trip and line-numbered errors") {
  TempDir dir;
  std::vector<TrialRecord> t = {trial("a", "x", Color::kRed, 1), trial("b", "y", Color::kGreen, 2)};
  write_trials_jsonl(dir / "t.jsonl", t);
  CHECK(read_trials_jsonl(dir / "t.jsonl") == t);

  std::istringstream in(to_json_line(t[0]) + "\n\nnot json\n");
  try {
    read_trials_jsonl(in, "upload");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("upload:3") != std::string::npos);
  }
}

TEST_CASE("histogram CSV round trip") {
  TempDir dir;
  auto a = hist({4, 0, 3, 3, 0});
  a.image_id = "a";
  auto b = hist({1, 1, 1, 1, 1});
  b.image_id = "b";
  const std::vector<ResponseHistogram> h = {a, b};
  write_histogram_csv(dir / "h.csv", h);
  const auto back = read_histogram_csv(dir / "h.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[0].counts == a.counts);
  CHECK(back[1].total == 5);
  CHECK(back[1].low_data());
  CHECK_FALSE(hist({10, 0, 0, 0, 0}).low_data());

  const auto table = to_decision_table(h);
  CHECK(table.stimulus_ids == std::vector<std::string>{"a", "b"});
  CHECK(table.rows[0] == ColorRow{0.4, 0, 0.3, 0.3, 0});
}

TEST_CASE("filter_trials") {
  std::vector<TrialRecord> t;
  for (int i = 0; i < 3; ++i) t.push_back(trial("full", "img" + std::to_string(i), Color::kRed));
  t.push_back(trial("partial", "img0", Color::kRed));
  t[0].response_time = 50;
  TrialFilter f;
  f.min_response_time = 100;
  CHECK(filter_trials(t, f).size() == 3);
  f = {};
  f.complete_session_size = 3;
  CHECK(filter_trials(t, f).size() == 3);
  f = {};
  f.exclude_sessions = {"sess-full"};
  CHECK(filter_trials(t, f).size() == 1);
  f = {};
  f.max_response_time = 100;
  CHECK(filter_trials(t, f).size() == 1);
}
