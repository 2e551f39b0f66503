#include <doctest.h>

#include <numeric>

#include "emocolor/decision.hpp"
#include "emocolor/error.hpp"
#include "emocolor/random.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace emocolor;

namespace {

FeatureVector fv(std::string id, std::vector<float> v) {
  FeatureVector f;
  f.values = std::move(v);
  f.source_id = std::move(id);
  f.model_id = "m";
  f.layer_name = "l";
  return f;
}

void check_simplex(const ColorRow& p) {
  double sum = 0.0;
  for (double x : p) {
    CHECK(x >= 0.0);
    sum += x;
  }
  CHECK(std::abs(sum - 1.0) <= 1e-9);
}

}  // namespace

TEST_CASE("cosine examples and properties") {
  CHECK(cosine(std::vector<double>{1, 0}, std::vector<double>{1, 0}) == 1.0);
  CHECK(cosine(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
  CHECK(cosine(std::vector<double>{1, 2, 3}, std::vector<double>{4, 5, 6}) ==
        doctest::Approx(0.974632).epsilon(1e-6));
  CHECK_THROWS_AS(cosine(std::vector<double>{0, 0}, std::vector<double>{1, 0}), Error);

  Rng rng(21);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> a(6), b(6);
    for (auto& x : a) x = rng.normal();
    for (auto& x : b) x = rng.normal();
    CHECK(cosine(a, b) == doctest::Approx(cosine(b, a)).epsilon(1e-15));
    std::vector<double> scaled = a;
    const double lambda = rng.uniform(0.01, 100.0);
    for (auto& x : scaled) x *= lambda;
    CHECK(cosine(a, scaled) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("similarity matrix") {
  const std::vector<FeatureVector> colors = {fv("red", {1, 0, 0, 0, 0}), fv("green", {0, 1, 0, 0, 0}),
                                             fv("blue", {0, 0, 1, 0, 0}), fv("black", {0, 0, 0, 1, 0}),
                                             fv("yellow", {0, 0, 0, 0, 1})};
  SUBCASE("stimulus equal to the red patch") {
    const auto m = similarity_matrix(std::vector{fv("s", {1, 0, 0, 0, 0})}, colors);
    CHECK(m.row(0) == ColorRow{1, 0, 0, 0, 0});
    CHECK(m.stimulus_ids == std::vector<std::string>{"s"});
  }
  SUBCASE("orthogonal vectors give a zero matrix") {
    const std::vector<FeatureVector> c6 = {fv("red", {1, 0, 0, 0, 0, 0}), fv("green", {0, 1, 0, 0, 0, 0}),
                                           fv("blue", {0, 0, 1, 0, 0, 0}), fv("black", {0, 0, 0, 1, 0, 0}),
                                           fv("yellow", {0, 0, 0, 0, 1, 0})};
    const auto m = similarity_matrix(std::vector{fv("s", {0, 0, 0, 0, 0, 1})}, c6);
    CHECK(m.row(0) == ColorRow{0, 0, 0, 0, 0});
  }
  SUBCASE("brute-force oracle") {
    Rng rng(22);
    std::vector<FeatureVector> stim, col;
    for (int i = 0; i < 3; ++i) {
      std::vector<float> v(8);
      for (auto& x : v) x = static_cast<float>(rng.normal());
      stim.push_back(fv("s" + std::to_string(i), v));
    }
    for (int j = 0; j < 5; ++j) {
      std::vector<float> v(8);
      for (auto& x : v) x = static_cast<float>(rng.normal());
      col.push_back(fv(std::string(name_of(color_from_index(j))), v));
    }
    const auto m = similarity_matrix(stim, col);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 5; ++j) {
        const oracle::Vec a(stim[i].values.begin(), stim[i].values.end());
        const oracle::Vec b(col[j].values.begin(), col[j].values.end());
        CHECK(m.values(i, j) == doctest::Approx(oracle::cosine(a, b)).epsilon(1e-12));
      }
    }
  }
  SUBCASE("zero stimulus vectors are rejected") {
    CHECK_THROWS_AS(similarity_matrix(std::vector{fv("z", {0, 0, 0, 0, 0})}, colors), Error);
  }
}

TEST_CASE("decision probabilities") {
  const auto a = decision_probabilities({0.5, 0.3, 0.2, 0.6, 0.4});
  const ColorRow want{0.25, 0.15, 0.10, 0.30, 0.20};
  for (std::size_t j = 0; j < kNumColors; ++j) CHECK(a.probs[j] == doctest::Approx(want[j]).epsilon(1e-12));
  CHECK_FALSE(a.clamped);
  CHECK(decision_probabilities({1, 0, 0, 0, 0}).probs == ColorRow{1, 0, 0, 0, 0});
  const auto neg = decision_probabilities({-0.1, -0.2, -0.3, -0.4, -0.5});
  CHECK(neg.probs == ColorRow{0.2, 0.2, 0.2, 0.2, 0.2});
  CHECK(neg.degenerate);
  CHECK(neg.clamped);
  const auto mixed = decision_probabilities({-0.5, 0.5, 0.5, 0, 0});
  CHECK(mixed.clamped);
  CHECK(mixed.probs == ColorRow{0, 0.5, 0.5, 0, 0});
}

TEST_CASE("decision probabilities: simplex, scale invariance, argmax preservation") {
  Rng rng(23);
  for (int t = 0; t < 500; ++t) {
    ColorRow row;
    for (auto& x : row) x = rng.uniform(-1.0, 1.0);
    if (t % 7 == 0) row = {0, 0, 0, 0, 0};
    const auto p = decision_probabilities(row);
    check_simplex(p.probs);

    ColorRow pos;
    for (std::size_t j = 0; j < kNumColors; ++j) pos[j] = std::abs(row[j]) + 1e-3;
    const double lambda = rng.uniform(0.1, 10.0);
    ColorRow scaled = pos;
    for (auto& x : scaled) x *= lambda;
    const auto p1 = decision_probabilities(pos).probs;
    const auto p2 = decision_probabilities(scaled).probs;
    for (std::size_t j = 0; j < kNumColors; ++j) CHECK(p1[j] == doctest::Approx(p2[j]).epsilon(1e-12));
    CHECK(std::max_element(p1.begin(), p1.end()) - p1.begin() ==
          std::max_element(pos.begin(), pos.end()) - pos.begin());
  }
}

TEST_CASE("decision table counts clamped and degenerate rows") {
  SimilarityMatrix m;
  m.values = Matrix(3, kNumColors);
  m.stimulus_ids = {"a", "b", "c"};
  const double rows[3][5] = {{0.5, 0.3, 0.2, 0.6, 0.4}, {-0.1, 0.2, 0.2, 0.1, 0.0}, {-1, -1, -1, -1, -1}};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 5; ++j) m.values(i, j) = rows[i][j];
  }
  const auto s = decision_table(m);
  CHECK(s.clamped_rows == 2);
  CHECK(s.degenerate_rows == 1);
  CHECK(s.table.stimulus_ids == m.stimulus_ids);
  for (const auto& r : s.table.rows) check_simplex(r);
  CHECK(s.table.find("b") == 1);
  CHECK(s.table.find("zz") == DecisionTable::npos);
}

TEST_CASE("CSV round trips") {
  TempDir dir;
  SimilarityMatrix m;
  m.values = Matrix(2, kNumColors);
  m.stimulus_ids = {"x", "y"};
  m.model_id = "model";
  m.layer_name = "layer";
  Rng rng(24);
  for (auto& v : m.values.values()) v = rng.normal();
  write_similarity_csv(dir / "sim.csv", m);
  const auto back = read_similarity_csv(dir / "sim.csv");
  CHECK(back.stimulus_ids == m.stimulus_ids);
  CHECK(back.values == m.values);

  const std::vector<ColorRow> rows = {{0.2, 0.2, 0.2, 0.2, 0.2}, {1, 0, 0, 0, 0}};
  write_color_table_csv(dir / "p.csv", "image_id", {"x", "y"}, rows);
  const auto t = read_color_table_csv(dir / "p.csv");
  CHECK(t.rows == rows);
  CHECK(t.stimulus_ids == std::vector<std::string>{"x", "y"});
}
